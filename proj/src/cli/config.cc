// Copyright 2026 The nanodp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nanodp/config.h"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "nanodp/errors.h"
#include "nanodp/model.h"

namespace nanodp {
namespace {

std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\f\v";
  const std::size_t b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const std::size_t e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

bool valid_key(std::string_view key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  char prev = 0;
  for (char c : key) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '.';
    if (!ok || (c == '.' && prev == '.')) return false;
    prev = c;
  }
  return true;
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = value.find(',', start);
    out.emplace_back(trim(value.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Typed, consuming view over the raw pairs. Anything left unconsumed at the
// end is an unknown key.
class Reader {
 public:
  explicit Reader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  bool has_prefix(const std::string& prefix) const {
    auto it = kv_.lower_bound(prefix);
    return it != kv_.end() && it->first.compare(0, prefix.size(), prefix) == 0;
  }

  std::optional<std::string> str(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return std::nullopt;
    used_.insert(key);
    if (it->second.empty()) throw ConfigError(key, "value is empty");
    return it->second;
  }

  std::optional<double> real(const std::string& key) {
    auto s = str(key);
    if (!s) return std::nullopt;
    return to_real(key, *s);
  }

  std::optional<std::uint64_t> uint(const std::string& key) {
    auto s = str(key);
    if (!s) return std::nullopt;
    return to_uint(key, *s);
  }

  std::optional<bool> boolean(const std::string& key) {
    auto s = str(key);
    if (!s) return std::nullopt;
    if (*s == "true" || *s == "on") return true;
    if (*s == "false" || *s == "off") return false;
    throw ConfigError(key, "expected true/false, got '" + *s + "'");
  }

  std::optional<std::vector<double>> reals(const std::string& key) {
    auto s = str(key);
    if (!s) return std::nullopt;
    std::vector<double> out;
    for (const std::string& item : split_list(*s)) out.push_back(to_real(key, item));
    return out;
  }

  std::optional<std::vector<std::uint64_t>> uints(const std::string& key) {
    auto s = str(key);
    if (!s) return std::nullopt;
    std::vector<std::uint64_t> out;
    for (const std::string& item : split_list(*s)) out.push_back(to_uint(key, item));
    return out;
  }

  void reject_unused() const {
    for (const auto& [key, value] : kv_) {
      if (used_.count(key) == 0) throw ConfigError(key, "unknown key");
    }
  }

 private:
  static double to_real(const std::string& key, const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE ||
        !std::isfinite(v)) {
      throw ConfigError(key, "expected a finite number, got '" + s + "'");
    }
    return v;
  }

  static std::uint64_t to_uint(const std::string& key, const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError(key, "expected a non-negative integer, got '" + s + "'");
    }
    errno = 0;
    const unsigned long long v = std::strtoull(s.c_str(), nullptr, 10);
    if (errno == ERANGE) throw ConfigError(key, "integer out of range");
    return v;
  }

  std::map<std::string, std::string> kv_;
  std::set<std::string> used_;
};

std::size_t as_size(const std::string& key, std::uint64_t v,
                    std::uint64_t max = std::uint64_t{1} << 40) {
  if (v > max) {
    throw ConfigError(key, "value " + std::to_string(v) + " is too large");
  }
  return static_cast<std::size_t>(v);
}

std::size_t positive(const std::string& key, std::uint64_t v) {
  if (v == 0) throw ConfigError(key, "must be >= 1");
  return as_size(key, v);
}

Shape parse_shape(const std::string& key, const std::string& text) {
  Shape shape;
  std::size_t start = 0;
  while (true) {
    const std::size_t x = text.find('x', start);
    const std::string part(trim(std::string_view(text).substr(start, x - start)));
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos ||
        part.size() > 9) {
      throw ConfigError(key, "expected a shape like 32 or 1x28x28, got '" +
                                 text + "'");
    }
    const std::size_t extent = std::stoul(part);
    if (extent == 0) throw ConfigError(key, "shape extents must be >= 1");
    shape.push_back(extent);
    if (x == std::string::npos) break;
    start = x + 1;
  }
  if (shape.size() > 3) throw ConfigError(key, "at most 3 dimensions");
  std::size_t numel = 1;
  for (std::size_t e : shape) {
    numel *= e;
    if (numel > (std::size_t{1} << 24)) throw ConfigError(key, "shape is too large");
  }
  return shape;
}

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

void read_data(Reader& r, DataSource& d, const std::filesystem::path& base) {
  const bool synth = r.has_prefix("data.synth.");
  const bool idx = r.has_prefix("data.idx.");
  const bool csv = r.has_prefix("data.csv.");
  const int sources = int{synth} + int{idx} + int{csv};
  if (sources != 1) {
    throw ConfigError("data", sources == 0
                                  ? "no dataset source; configure one of "
                                    "data.synth.*, data.idx.*, data.csv.*"
                                  : "more than one dataset source configured");
  }
  if (synth) {
    d.kind = DataKind::kSynth;
    if (auto v = r.uint("data.synth.classes")) {
      d.blobs.num_classes = as_size("data.synth.classes", *v, 1u << 16);
      if (d.blobs.num_classes < 2) {
        throw ConfigError("data.synth.classes", "must be >= 2");
      }
    }
    if (auto v = r.uint("data.synth.per_class")) {
      d.blobs.per_class = as_size("data.synth.per_class", *v, 1u << 24);
      if (d.blobs.per_class == 0) {
        throw ConfigError("data.synth.per_class", "must be >= 1");
      }
    }
    if (auto v = r.uint("data.synth.eval_per_class")) {
      d.eval_per_class = positive("data.synth.eval_per_class", *v);
    }
    if (auto v = r.str("data.synth.shape")) {
      d.blobs.example_shape = parse_shape("data.synth.shape", *v);
    }
    if (auto v = r.real("data.synth.spread")) {
      if (*v < 0) throw ConfigError("data.synth.spread", "must be >= 0");
      d.blobs.spread = *v;
    }
    if (auto v = r.uint("data.synth.seed")) d.blobs.seed = *v;
  } else if (idx) {
    d.kind = DataKind::kIdx;
    auto images = r.str("data.idx.train_images");
    auto labels = r.str("data.idx.train_labels");
    if (!images) throw ConfigError("data.idx.train_images", "is required");
    if (!labels) throw ConfigError("data.idx.train_labels", "is required");
    d.train_images = resolve(base, *images);
    d.train_labels = resolve(base, *labels);
    auto eval_images = r.str("data.idx.eval_images");
    auto eval_labels = r.str("data.idx.eval_labels");
    if (bool{eval_images} != bool{eval_labels}) {
      throw ConfigError(eval_images ? "data.idx.eval_labels"
                                    : "data.idx.eval_images",
                        "eval images and labels must be given together");
    }
    if (eval_images) {
      d.eval_images = resolve(base, *eval_images);
      d.eval_labels = resolve(base, *eval_labels);
    }
  } else {
    d.kind = DataKind::kCsv;
    auto train = r.str("data.csv.train");
    if (!train) throw ConfigError("data.csv.train", "is required");
    d.train_csv = resolve(base, *train);
    if (auto eval = r.str("data.csv.eval")) d.eval_csv = resolve(base, *eval);
  }
}

void read_model(Reader& r, ModelChoice& m) {
  if (auto v = r.str("model.arch")) {
    if (*v != "mlp" && *v != "cnn" && *v != "layers") {
      throw ConfigError("model.arch", "expected mlp, cnn or layers, got '" +
                                          *v + "'");
    }
    m.arch = *v;
  }
  if (auto v = r.uints("model.hidden")) {
    if (m.arch != "mlp") throw ConfigError("model.hidden", "only applies to mlp");
    m.hidden.clear();
    for (std::uint64_t h : *v) m.hidden.push_back(positive("model.hidden", h));
  }
  if (auto v = r.str("model.layers")) {
    if (m.arch != "layers") {
      throw ConfigError("model.layers", "requires model.arch = layers");
    }
    // Token syntax and the batch-coupling ban are checked now; shapes wait
    // until the data is loaded.
    const ModelSpec spec = parse_model_spec(*v, {}, 0);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      if (spec.layers[i].type == LayerType::kBatchNorm) {
        throw PrivacyViolationError(
            "model.layers[" + std::to_string(i) + "]",
            "batch_norm couples the examples of a batch; use group_norm");
      }
    }
    m.layers = *v;
  } else if (m.arch == "layers") {
    throw ConfigError("model.layers", "is required when model.arch = layers");
  }
  if (auto v = r.uint("model.classes")) {
    m.classes = as_size("model.classes", *v, 1u << 16);
    if (*m.classes < 2) throw ConfigError("model.classes", "must be >= 2");
  }
}

void read_dp(Reader& r, TrainConfig& t) {
  DpConfig& dp = t.dp;
  if (auto v = r.boolean("dp.enabled")) t.private_training = *v;
  if (auto v = r.real("dp.clip")) dp.clip_norm = *v;
  if (auto v = r.real("dp.sigma")) dp.noise_multiplier = *v;
  if (auto v = r.str("dp.mode")) dp.mode = parse_clip_mode(*v);
  if (auto v = r.uint("dp.stages")) dp.num_stages = positive("dp.stages", *v);
  if (auto v = r.uints("dp.stage_layers")) {
    for (std::uint64_t n : *v) {
      dp.stage_layers.push_back(positive("dp.stage_layers", n));
    }
  }
  if (auto v = r.str("dp.noise")) dp.noise = parse_noise_placement(*v);
  if (auto v = r.uint("dp.replicas")) {
    dp.replicas = as_size("dp.replicas", *v, 1u << 20);
  }
  if (auto v = r.uint("dp.grad_acc")) {
    dp.grad_acc = as_size("dp.grad_acc", *v, 1u << 20);
  }
  if (dp.mode != ClipMode::kPerStage &&
      (r.has("dp.stages") || !dp.stage_layers.empty())) {
    throw ConfigError(r.has("dp.stages") ? "dp.stages" : "dp.stage_layers",
                      "only applies when dp.mode = per_stage");
  }
}

void read_optim(Reader& r, TrainConfig& t) {
  if (auto v = r.real("optim.lr")) t.lr.base_lr = *v;
  if (auto v = r.boolean("optim.lr_scaling")) t.lr.scale_by_grad_acc = *v;
  if (auto v = r.real("optim.momentum")) t.momentum = *v;
  if (auto v = r.uints("optim.decay_epochs")) {
    for (std::uint64_t e : *v) {
      t.lr.decay_epochs.push_back(
          static_cast<int>(as_size("optim.decay_epochs", e, 1u << 20)));
    }
  }
  if (auto v = r.real("optim.decay_factor")) t.lr.decay_factor = *v;
}

void read_train(Reader& r, ExperimentConfig& c) {
  TrainConfig& t = c.train;
  if (auto v = r.uint("train.epochs")) {
    t.epochs = static_cast<int>(as_size("train.epochs", *v, 1u << 20));
  }
  if (auto v = r.uint("train.seed")) t.seed = *v;
  if (auto v = r.uint("train.workers")) {
    t.workers = as_size("train.workers", *v, 1024);
  }
  if (auto v = r.str("train.precision")) {
    if (*v == "f32") {
      c.precision = Precision::kFloat32;
    } else if (*v == "f64") {
      c.precision = Precision::kFloat64;
    } else {
      throw ConfigError("train.precision", "expected f32 or f64, got '" + *v +
                                               "'");
    }
  }
  if (auto v = r.real("privacy.delta")) t.delta = *v;
  t.dp.seed = t.seed;
}

void read_output(Reader& r, ExperimentConfig& c,
                 const std::filesystem::path& base) {
  if (auto v = r.str("output.dir")) c.output_dir = resolve(base, *v);
  if (auto v = r.str("output.run_id")) {
    for (char ch : *v) {
      const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                      (ch >= '0' && ch <= '9') || ch == '_' || ch == '-' ||
                      ch == '.';
      if (!ok) {
        throw ConfigError("output.run_id",
                          "may only contain letters, digits, '_', '-', '.'");
      }
    }
    if (*v == "." || *v == ".." || v->front() == '.') {
      throw ConfigError("output.run_id", "may not start with '.'");
    }
    c.run_id = *v;
  }
}

void read_sweep(Reader& r, SweepAxes& s) {
  if (auto v = r.uints("sweep.grad_acc")) {
    for (std::uint64_t g : *v) {
      s.grad_acc.push_back(as_size("sweep.grad_acc", g, 1u << 20));
      if (g == 0) throw ConfigError("sweep.grad_acc", "entries must be >= 1");
    }
  }
  if (auto v = r.reals("sweep.sigma")) {
    for (double x : *v) {
      if (x < 0) throw ConfigError("sweep.sigma", "entries must be >= 0");
    }
    s.sigma = *v;
  }
  if (auto v = r.reals("sweep.clip")) {
    for (double x : *v) {
      if (!(x > 0)) throw ConfigError("sweep.clip", "entries must be > 0");
    }
    s.clip = *v;
  }
  if (auto v = r.real("sweep.epsilon_cap")) {
    if (!(*v > 0)) throw ConfigError("sweep.epsilon_cap", "must be > 0");
    s.epsilon_cap = *v;
  }
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(where, "expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (!valid_key(key)) {
      throw ConfigError(where, "invalid key '" + key + "'");
    }
    if (!kv.emplace(key, value).second) {
      throw ConfigError(key, "duplicate key");
    }
  }
  return kv;
}

ExperimentConfig parse_experiment_config(std::string_view text,
                                         const std::filesystem::path& base_dir) {
  Reader r(parse_key_values(text));
  ExperimentConfig c;
  read_data(r, c.data, base_dir);
  read_model(r, c.model);
  read_dp(r, c.train);
  read_optim(r, c.train);
  read_train(r, c);
  read_output(r, c, base_dir);
  read_sweep(r, c.sweep);
  r.reject_unused();
  c.train.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), path.parent_path());
}

}  // namespace nanodp
