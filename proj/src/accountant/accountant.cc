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

#include "nanodp/accountant.h"

#include <cmath>
#include <limits>
#include <string>

#include "nanodp/errors.h"

namespace nanodp {
namespace {

// log(exp(x) - 1) for x > 0 without overflow or cancellation.
double log_expm1(double x) {
  if (x > 50.0) return x + std::log1p(-std::exp(-x));
  return std::log(std::expm1(x));
}

// log(exp(a) + exp(b)).
double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::fmax(a, b), lo = std::fmin(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("delta", "must lie in (0, 1), got " +
                                   std::to_string(delta));
  }
}

}  // namespace

std::vector<int> default_orders() {
  std::vector<int> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  orders.push_back(128);
  orders.push_back(256);
  orders.push_back(512);
  return orders;
}

double rdp_subsampled_gaussian(double q, double sigma, int alpha) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw ConfigError("q", "sampling ratio must lie in (0, 1], got " +
                               std::to_string(q));
  }
  if (!(sigma > 0.0) || std::isinf(sigma)) {
    throw ConfigError("sigma", "noise multiplier must be finite and > 0");
  }
  if (alpha < 2) {
    throw ConfigError("order", "Renyi order must be an integer >= 2, got " +
                                   std::to_string(alpha));
  }
  const double two_var = 2.0 * sigma * sigma;
  double rdp;
  if (q == 1.0) {
    rdp = static_cast<double>(alpha) / two_var;
  } else {
    // The binomial weights sum to one, so the sum equals
    //   1 + sum_{k>=2} C(alpha,k) (1-q)^(alpha-k) q^k expm1(k(k-1)/(2 sigma^2))
    // and every remaining term is positive. Working with the excess over one
    // keeps full relative precision when the RDP is tiny.
    const double log_q = std::log(q);
    const double log_1mq = std::log1p(-q);
    double log_binom = 0.0;  // log C(alpha, k), built up incrementally
    double log_excess = -std::numeric_limits<double>::infinity();
    for (int k = 1; k <= alpha; ++k) {
      log_binom += std::log(static_cast<double>(alpha - k + 1) /
                            static_cast<double>(k));
      if (k < 2) continue;
      const double exponent =
          static_cast<double>(k) * static_cast<double>(k - 1) / two_var;
      const double term = log_binom + static_cast<double>(alpha - k) * log_1mq +
                          static_cast<double>(k) * log_q + log_expm1(exponent);
      log_excess = log_add(log_excess, term);
    }
    const double log_a = log_excess > 700.0
                             ? log_excess + std::log1p(std::exp(-log_excess))
                             : std::log1p(std::exp(log_excess));
    rdp = log_a / static_cast<double>(alpha - 1);
  }
  if (!std::isfinite(rdp)) {
    throw AccountingError("RDP at order " + std::to_string(alpha) +
                          " is not finite for q=" + std::to_string(q) +
                          ", sigma=" + std::to_string(sigma));
  }
  return rdp;
}

RdpCurve RdpCurve::zeros(std::vector<int> orders) {
  RdpCurve c;
  c.values.assign(orders.size(), 0.0);
  c.orders = std::move(orders);
  return c;
}

RdpCurve rdp_per_step(double q, double sigma, std::span<const int> orders) {
  RdpCurve c;
  c.orders.assign(orders.begin(), orders.end());
  for (int a : orders) c.values.push_back(rdp_subsampled_gaussian(q, sigma, a));
  return c;
}

RdpCurve compose(const RdpCurve& curve, const RdpCurve& per_step,
                 std::int64_t steps) {
  if (curve.orders != per_step.orders ||
      curve.values.size() != curve.orders.size() ||
      per_step.values.size() != per_step.orders.size()) {
    throw ConfigError("orders", "cannot compose curves over different order "
                                "grids");
  }
  if (steps < 0) throw ConfigError("steps", "must be >= 0");
  RdpCurve out = curve;
  const double t = static_cast<double>(steps);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] += t * per_step.values[i];
  }
  return out;
}

EpsilonResult to_epsilon(const RdpCurve& curve, double delta) {
  if (curve.orders.empty() || curve.values.size() != curve.orders.size()) {
    throw ConfigError("orders", "order grid is empty");
  }
  check_delta(delta);
  const double log_inv_delta = -std::log(delta);
  EpsilonResult best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i < curve.orders.size(); ++i) {
    const int a = curve.orders[i];
    if (a < 2) throw ConfigError("orders", "orders must be >= 2");
    const double eps = curve.values[i] + log_inv_delta / (a - 1.0);
    if (eps < best.epsilon) best = {eps, a};
  }
  if (!std::isfinite(best.epsilon)) {
    throw AccountingError("epsilon is not finite at any order");
  }
  best.epsilon = std::fmax(best.epsilon, 0.0);
  return best;
}

double PrivacySpec::sampling_ratio() const {
  return static_cast<double>(batch_size) / static_cast<double>(dataset_size);
}

std::int64_t PrivacySpec::steps() const {
  return epochs * (dataset_size / batch_size);
}

void PrivacySpec::validate() const {
  if (dataset_size < 1) throw ConfigError("n", "dataset size must be >= 1");
  if (batch_size < 1 || batch_size > dataset_size) {
    throw ConfigError("batch", "batch size must lie in [1, " +
                                   std::to_string(dataset_size) + "]");
  }
  if (!(noise_multiplier > 0.0) || std::isinf(noise_multiplier)) {
    throw ConfigError("sigma", "noise multiplier must be finite and > 0");
  }
  if (epochs < 0) throw ConfigError("epochs", "must be >= 0");
  check_delta(delta);
  if (orders.empty()) throw ConfigError("orders", "order grid is empty");
}

PrivacyReport epsilon_for_training(const PrivacySpec& spec) {
  spec.validate();
  PrivacyReport report;
  report.q = spec.sampling_ratio();
  report.steps = spec.steps();
  if (report.steps == 0) return report;
  const RdpCurve per_step =
      rdp_per_step(report.q, spec.noise_multiplier, spec.orders);
  const RdpCurve total =
      compose(RdpCurve::zeros(spec.orders), per_step, report.steps);
  const EpsilonResult eps = to_epsilon(total, spec.delta);
  report.epsilon = eps.epsilon;
  report.best_order = eps.order;
  return report;
}

PrivacyReport epsilon_for_training(std::int64_t n, std::int64_t batch,
                                   double sigma, std::int64_t epochs,
                                   double delta) {
  PrivacySpec spec;
  spec.dataset_size = n;
  spec.batch_size = batch;
  spec.noise_multiplier = sigma;
  spec.epochs = epochs;
  spec.delta = delta;
  return epsilon_for_training(spec);
}

PrivacyLedger::PrivacyLedger(double q, double sigma, double delta,
                             std::vector<int> orders)
    : sigma_(sigma), delta_(delta) {
  check_delta(delta);
  if (orders.empty()) throw ConfigError("orders", "order grid is empty");
  curve_ = RdpCurve::zeros(orders);
  per_step_ = sigma > 0.0 ? rdp_per_step(q, sigma, orders)
                          : RdpCurve::zeros(std::move(orders));
}

void PrivacyLedger::step() {
  ++steps_;
  if (sigma_ > 0.0) curve_ = compose(RdpCurve::zeros(curve_.orders), per_step_, steps_);
}

double PrivacyLedger::epsilon() const {
  if (steps_ == 0) return 0.0;
  if (!(sigma_ > 0.0)) return std::numeric_limits<double>::infinity();
  return to_epsilon(curve_, delta_).epsilon;
}

}  // namespace nanodp
