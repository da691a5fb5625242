#ifndef TFE_HISTOGRAM_HPP
#define TFE_HISTOGRAM_HPP

#include <span>
#include <vector>

namespace tfe {

// Probability mass over first-hit distances {1, ..., T-1} plus a final
// overflow bin that holds both D >= T and D = infinity. Bin k (0-based)
// carries distance k+1; bin T-1 is the overflow.
class DistanceHistogram {
 public:
  DistanceHistogram() = default;
  explicit DistanceHistogram(int support_size) : probs_(support_size, 0.0) {}
  explicit DistanceHistogram(std::vector<double> probs) : probs_(std::move(probs)) {}

  static DistanceHistogram uniform(int support_size);
  static DistanceHistogram point_mass(int support_size, int distance);
  static DistanceHistogram overflow(int support_size);

  int support_size() const { return static_cast<int>(probs_.size()); }
  int overflow_bin() const { return support_size() - 1; }

  double at_distance(int t) const { return probs_[t - 1]; }
  double overflow_mass() const { return probs_.back(); }

  double& operator[](int bin) { return probs_[bin]; }
  double operator[](int bin) const { return probs_[bin]; }
  std::span<const double> probs() const { return probs_; }
  std::span<double> probs() { return probs_; }

  double total() const;
  bool is_normalized(double tol) const;

  // E[D] with the overflow bin valued at T (clipped distance).
  double expected_distance() const;

  friend bool operator==(const DistanceHistogram&, const DistanceHistogram&) = default;

 private:
  std::vector<double> probs_;
};

// p(D <= tau), 1 <= tau <= T-1.
double tau_feasibility(const DistanceHistogram& hist, int tau);

// Histogram re-read on the discount supports gamma^min(t, tau); the overflow
// bin contributes gamma^tau.
double expected_discount(const DistanceHistogram& hist, double gamma, int tau);

// True iff p(D <= tau) < threshold. A threshold of 0 never rejects.
bool reject(const DistanceHistogram& hist, int tau, double threshold);

// D(s) = 1 + D(s'): moves every bin one step further; mass leaving bin T-1
// folds into the overflow bin.
DistanceHistogram shift_by_one(const DistanceHistogram& successor);

// Backup target for one transition. A hit on s' gives a point mass at 1; a
// non-matching terminal s' gives all mass to overflow; otherwise the successor
// estimate shifted by one.
DistanceHistogram backup_target(bool hit, bool terminal,
                                const DistanceHistogram& successor);

double cross_entropy(const DistanceHistogram& target,
                     const DistanceHistogram& predicted);
double l1_distance(const DistanceHistogram& a, const DistanceHistogram& b);

}  // namespace tfe

#endif  // TFE_HISTOGRAM_HPP
