#include <doctest.h>

#include <cmath>
#include <vector>

#include "tfe/common.hpp"
#include "tfe/histogram.hpp"

using namespace tfe;

namespace {

DistanceHistogram random_hist(Rng& rng, int T) {
  std::vector<double> p(T);
  double total = 0.0;
  for (double& v : p) total += (v = uniform01(rng));
  for (double& v : p) v /= total;
  return DistanceHistogram(p);
}

}  // namespace

TEST_SUITE("histogram") {

TEST_CASE("tau feasibility sums the first tau bins") {
  const DistanceHistogram h(std::vector<double>{0.1, 0.2, 0.3, 0.4});
  CHECK(tau_feasibility(h, 1) == doctest::Approx(0.1));
  CHECK(tau_feasibility(h, 2) == doctest::Approx(0.3));
  CHECK(tau_feasibility(h, 3) == doctest::Approx(0.6));
  CHECK(h.expected_distance() == doctest::Approx(0.1 + 0.4 + 0.9 + 1.6));
}

TEST_CASE("reject is strict and a zero threshold never rejects") {
  const DistanceHistogram h(std::vector<double>{0.05, 0.0, 0.0, 0.95});
  CHECK_FALSE(reject(h, 1, 0.05));
  CHECK(reject(h, 1, 0.050001));
  CHECK_FALSE(reject(DistanceHistogram::overflow(4), 1, 0.0));
  CHECK(reject(DistanceHistogram::overflow(4), 3, 1e-9));
}

TEST_CASE("expected discount re-reads bins on the discount support") {
  const double g = 0.9;
  const DistanceHistogram h(std::vector<double>{0.5, 0.25, 0.125, 0.125});
  // tau = 2: distances 1, 2, 3 and overflow read as g, g^2, g^2, g^2.
  CHECK(expected_discount(h, g, 2) == doctest::Approx(0.5 * g + 0.5 * g * g).epsilon(1e-14));
  CHECK(expected_discount(h, g, 3) ==
        doctest::Approx(0.5 * g + 0.25 * g * g + 0.25 * g * g * g).epsilon(1e-14));
}

TEST_CASE("backup branches") {
  Rng rng(3);
  const auto succ = random_hist(rng, 6);
  CHECK(backup_target(true, false, succ) == DistanceHistogram::point_mass(6, 1));
  CHECK(backup_target(true, true, succ) == DistanceHistogram::point_mass(6, 1));
  CHECK(backup_target(false, true, succ) == DistanceHistogram::overflow(6));
  const auto s = backup_target(false, false, succ);
  CHECK(s[0] == 0.0);
  for (int k = 1; k < 5; ++k) CHECK(s[k] == succ[k - 1]);
  CHECK(s[5] == succ[4] + succ[5]);
}

TEST_CASE("shift preserves mass and never lowers expected distance") {
  Rng rng(11);
  for (int n = 0; n < 2000; ++n) {
    const int T = 2 + static_cast<int>(uniform_index(rng, 30));
    const auto h = random_hist(rng, T);
    const auto s = shift_by_one(h);
    CHECK(s.total() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.expected_distance() >= h.expected_distance() - 1e-12);
    // Feasibility at tau+1 after the shift equals feasibility at tau before.
    for (int tau = 1; tau + 1 <= T - 1; ++tau) {
      CHECK(tau_feasibility(s, tau + 1) == doctest::Approx(tau_feasibility(h, tau)).epsilon(1e-12));
    }
  }
}

TEST_CASE("cross entropy and L1") {
  const DistanceHistogram a(std::vector<double>{0.5, 0.5, 0.0});
  const DistanceHistogram b(std::vector<double>{0.25, 0.25, 0.5});
  CHECK(cross_entropy(a, b) == doctest::Approx(std::log(4.0)));
  CHECK(l1_distance(a, b) == doctest::Approx(1.0));
  CHECK(l1_distance(a, a) == 0.0);
}

}  // TEST_SUITE
