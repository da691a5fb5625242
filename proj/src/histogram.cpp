#include "tfe/histogram.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tfe/common.hpp"

namespace tfe {

DistanceHistogram DistanceHistogram::uniform(int support_size) {
  return DistanceHistogram(std::vector<double>(support_size, 1.0 / support_size));
}

DistanceHistogram DistanceHistogram::point_mass(int support_size, int distance) {
  DistanceHistogram h(support_size);
  h[std::min(distance, support_size) - 1] = 1.0;
  return h;
}

DistanceHistogram DistanceHistogram::overflow(int support_size) {
  DistanceHistogram h(support_size);
  h[support_size - 1] = 1.0;
  return h;
}

double DistanceHistogram::total() const {
  double s = 0.0;
  for (double p : probs_) s += p;
  return s;
}

bool DistanceHistogram::is_normalized(double tol) const {
  if (probs_.empty()) return false;
  for (double p : probs_) {
    if (!(p >= 0.0)) return false;
  }
  return std::abs(total() - 1.0) <= tol;
}

double DistanceHistogram::expected_distance() const {
  double e = 0.0;
  for (int k = 0; k < support_size(); ++k) e += (k + 1) * probs_[k];
  return e;
}

double tau_feasibility(const DistanceHistogram& hist, int tau) {
  if (tau < 1 || tau > hist.support_size() - 1) {
    throw Error(ErrorCode::InvalidArgument, "tau must lie in [1, T-1]");
  }
  double p = 0.0;
  for (int t = 1; t <= tau; ++t) p += hist.at_distance(t);
  return p;
}

double expected_discount(const DistanceHistogram& hist, double gamma, int tau) {
  if (tau < 1 || tau > hist.support_size() - 1) {
    throw Error(ErrorCode::InvalidArgument, "tau must lie in [1, T-1]");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "gamma must lie in (0, 1]");
  }
  const double capped = std::pow(gamma, tau);
  double out = 0.0;
  for (int t = 1; t < hist.support_size(); ++t) {
    out += hist.at_distance(t) * (t < tau ? std::pow(gamma, t) : capped);
  }
  return out + hist.overflow_mass() * capped;
}

bool reject(const DistanceHistogram& hist, int tau, double threshold) {
  return tau_feasibility(hist, tau) < threshold;
}

DistanceHistogram shift_by_one(const DistanceHistogram& successor) {
  const int T = successor.support_size();
  DistanceHistogram out(T);
  for (int k = 1; k < T - 1; ++k) out[k] = successor[k - 1];
  out[T - 1] = successor[T - 2] + successor[T - 1];
  return out;
}

DistanceHistogram backup_target(bool hit, bool terminal,
                                const DistanceHistogram& successor) {
  const int T = successor.support_size();
  if (hit) return DistanceHistogram::point_mass(T, 1);
  if (terminal) return DistanceHistogram::overflow(T);
  return shift_by_one(successor);
}

double cross_entropy(const DistanceHistogram& target,
                     const DistanceHistogram& predicted) {
  constexpr double kFloor = std::numeric_limits<double>::min();
  double ce = 0.0;
  for (int k = 0; k < target.support_size(); ++k) {
    if (target[k] > 0.0) ce -= target[k] * std::log(std::max(predicted[k], kFloor));
  }
  return ce;
}

double l1_distance(const DistanceHistogram& a, const DistanceHistogram& b) {
  double d = 0.0;
  for (int k = 0; k < a.support_size(); ++k) d += std::abs(a[k] - b[k]);
  return d;
}

}  // namespace tfe
