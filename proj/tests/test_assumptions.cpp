#include <doctest.h>

#include <cmath>
#include <vector>

#include "fk/assumptions.hpp"
#include "fk/model.hpp"

using namespace fk;
using namespace fk::assumptions;

namespace {

std::vector<std::vector<double>> obs_rows(std::initializer_list<double> ys) {
  std::vector<std::vector<double>> rows;
  for (double y : ys) rows.push_back({y});
  return rows;
}

GaussianRwHmm walk(double sigma_y2, double delta0, double delta,
                   ObsMap map = ObsMap::Identity) {
  return make_gaussian_rw_hmm(1, delta0, sigma_y2, map,
                              obs_rows({-2.46, 2.95, 2.06, 0.13, 2.11, 0.94}),
                              delta);
}

}  // namespace

TEST_CASE("grid spec: values, refinement, extension") {
  GridSpec g{-2.0, 2.0, 5};
  auto v = g.values();
  REQUIRE(v.size() == 5);
  CHECK(v.front() == -2.0);
  CHECK(v.back() == 2.0);
  CHECK(v[2] == doctest::Approx(0.0).epsilon(1e-15));

  auto r = g.refined();
  CHECK(r.points == 9);
  CHECK(r.lo == g.lo);
  CHECK(r.hi == g.hi);
  CHECK(r.spacing() == doctest::Approx(0.5 * g.spacing()).epsilon(1e-15));

  auto e = g.extended();
  CHECK(e.lo == -4.0);
  CHECK(e.hi == 4.0);
  CHECK(e.spacing() == doctest::Approx(g.spacing()).epsilon(1e-15));

  CHECK_THROWS_AS((GridSpec{1.0, -1.0, 5}.validate()), ValidationError);
  CHECK_THROWS_AS((GridSpec{-1.0, 1.0, 2}.validate()), ValidationError);
}

TEST_CASE("gaussian e^V moment quadrature agrees with the closed form") {
  for (double mean : {0.0, 1.3, -4.0}) {
    for (double var : {0.5, 1.0, 2.0}) {
      for (double scale : {2.05, 2.5, 5.0}) {
        if (!(var < scale)) continue;
        double got = log_gaussian_expv_integral(mean, var, scale, 2049);
        double want = log_gaussian_expv_closed(mean, var, scale);
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
      }
    }
  }
  // divergent when the kernel variance swallows the Lyapunov scale
  CHECK(log_gaussian_expv_integral(0.0, 3.0, 2.05, 513) == kInf);
  CHECK(log_gaussian_expv_closed(0.0, 3.0, 2.05) == kInf);
}

TEST_CASE("drift on a bounded space with unit potentials gives b_d = delta") {
  // G identically one and V identically one: the one-step moment is e^1,
  // the bound needs e^{(1-delta) + b}, so the fitted b is exactly delta
  auto m = make_finite_hmm(2, {0.5, 0.5}, {{0.5, 0.5}, {0.4, 0.6}},
                           {{1.0, 1.0}, {1.0, 1.0}});
  auto rep = check_drift(m, 1.0, GridSpec{});
  CHECK(rep.verdict == Verdict::Pass);
  CHECK(rep.holds);
  CHECK(rep.b_d == doctest::Approx(kDefaultDelta).epsilon(1e-12));
  CHECK(rep.worst_margin == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep.outside_points == 0);
}

TEST_CASE("drift passes for the identity-observation walk at a high level") {
  auto m = walk(5.0, 1.05, 0.9);
  auto rep = check_drift(m, 100.0, GridSpec{});
  CHECK(rep.verdict == Verdict::Pass);
  CHECK(rep.holds);
  CHECK(rep.quadrature.reliable);
  CHECK(rep.quadrature.closed_form_diff < 1e-8);
  CHECK(rep.refinement_stable);
  CHECK(rep.b_d > 0.0);
}

TEST_CASE("drift closed form cross-checks the quadrature at delta0 = 1.5") {
  auto m = walk(5.0, 1.5, 0.5);
  auto rep = check_drift(m, 100.0, GridSpec{});
  CHECK(rep.verdict == Verdict::Pass);
  CHECK(rep.quadrature.closed_form_diff < 1e-8);
  CHECK(rep.quadrature.refinement_diff < 1e-9);
}

TEST_CASE("drift fails for a diffuse signal at a small level") {
  // variance-2 random walk observed in noise: outside the level set the
  // one-step moment overwhelms (1-delta)V and no b can absorb it
  auto m = make_linear_gaussian_hmm(1.0, 2.0, 1.0, 1.0,
                                    {0.4, -0.1, 0.9}, 0.0, 1.0);
  auto rep = check_drift(m, 3.0, GridSpec{});
  CHECK(rep.verdict == Verdict::Fail);
  CHECK_FALSE(rep.holds);
  CHECK(rep.worst_margin > 0.0);
  CHECK(std::abs(rep.witness_x) > 2.8);
  CHECK(rep.outside_points > 0);
}

TEST_CASE("drift fails outright when the moment integral diverges") {
  // kernel variance 3 exceeds the Lyapunov scale 2(1+delta0)/2 = 2.05
  auto m = make_linear_gaussian_hmm(1.0, 3.0, 1.0, 1.0,
                                    {0.4, -0.1, 0.9}, 0.0, 1.0);
  auto rep = check_drift(m, 3.0, GridSpec{});
  CHECK(rep.verdict == Verdict::Fail);
  CHECK_FALSE(rep.holds);
  CHECK(rep.worst_margin == kInf);
}

TEST_CASE("drift validates its level argument") {
  auto m = walk(5.0, 1.05, 0.9);
  CHECK_THROWS_AS(check_drift(m, 0.5, GridSpec{}), ValidationError);
}

TEST_CASE("finite minorization matches a direct scan") {
  auto m = make_finite_hmm(2, {0.6, 0.4}, {{0.7, 0.3}, {0.2, 0.8}},
                           {{0.9, 0.5}, {0.4, 1.0}, {0.8, 0.3}});
  auto rep = check_minorization(m, 1.0, GridSpec{});
  CHECK(rep.verdict == Verdict::Pass);

  double lo = kInf, hi = kNegInf;
  for (int x = 0; x < 2; ++x) {
    double gmin = kInf, gmax = kNegInf;
    for (long p = 0; p < 3; ++p) {
      gmin = std::min(gmin, m.log_potential_state(p, x));
      gmax = std::max(gmax, m.log_potential_state(p, x));
    }
    for (int y = 0; y < 2; ++y) {
      lo = std::min(lo, gmin + m.log_transition(x, y));
      hi = std::max(hi, gmax + m.log_transition(x, y));
    }
  }
  CHECK(rep.log_eps_lower == doctest::Approx(lo).epsilon(1e-12));
  CHECK(rep.log_eps_upper == doctest::Approx(hi).epsilon(1e-12));
  double rho = -std::expm1(2.0 * (lo - hi));
  CHECK(rep.contraction == doctest::Approx(rho).epsilon(1e-12));
  CHECK(rep.contraction > 0.0);
  CHECK(rep.contraction < 1.0);
  CHECK(rep.level_set_points == 2);
}

TEST_CASE("grid minorization produces a usable contraction") {
  auto m = walk(5.0, 1.05, 0.9);
  // tight level set so the eps ratio stays representable on linear scale
  auto rep = check_minorization(m, 1.5, GridSpec{});
  CHECK(rep.verdict == Verdict::Pass);
  CHECK(rep.log_eps_lower > kNegInf);
  CHECK(rep.log_eps_upper < kInf);
  CHECK(rep.log_eps_lower < rep.log_eps_upper);
  CHECK(rep.contraction > 0.0);
  CHECK(rep.contraction < 1.0);
  CHECK(rep.refinement_stable);
  // level set {1 + x^2/4.1 <= 1.5} = [-1.44, 1.44]
  CHECK(std::abs(rep.lower_x) < 1.45);
  CHECK(std::abs(rep.lower_y) < 1.45);
  CHECK(std::isfinite(rep.log_reference_moment));

  // a wide level set drives the ratio below resolution: the contraction
  // saturates at 1 on linear scale while the log gap stays informative
  auto wide = check_minorization(m, 3.0, GridSpec{});
  CHECK(wide.verdict == Verdict::Pass);
  CHECK(wide.contraction <= 1.0);
  CHECK(wide.log_eps_lower < rep.log_eps_lower);
  CHECK(wide.log_eps_lower > kNegInf);
}

TEST_CASE("minorization demands a populated level set") {
  auto m = walk(5.0, 1.05, 0.9);
  CHECK_THROWS_AS(check_minorization(m, 0.99, GridSpec{}), ValidationError);
}

TEST_CASE("initial moment matches the closed form for a standard gaussian") {
  auto m = walk(5.0, 1.05, 0.9);
  auto rep = check_initial_moment(m);
  CHECK(rep.verdict == Verdict::Pass);
  // E exp(1 + X^2/(2s)) with X ~ N(0,1): 1 + 0.5 log(s/(s-1)), s = 2.05
  double want = 1.0 + 0.5 * std::log(2.05 / 1.05);
  CHECK(rep.log_moment == doctest::Approx(want).epsilon(1e-6));
  CHECK(rep.quadrature.reliable);
}

TEST_CASE("potential bound passes for gaussian observations") {
  auto m = walk(5.0, 1.05, 0.9);
  auto rep = check_potential_bound(m, GridSpec{});
  CHECK(rep.verdict == Verdict::Pass);
  CHECK(rep.log_sup < 0.0);  // density bounded by (2 pi sigma^2)^{-1/2}
  CHECK(rep.extension_stable);
  CHECK(rep.refinement_stable);
  // the sup sits at an observation, well inside the window
  CHECK(std::abs(rep.witness_x) < 3.5);
}

TEST_CASE("potential tail: integrable at a strong rate, divergent at a weak one") {
  auto m = walk(5.0, 1.05, 0.9);
  // exponent delta/2 = 0.45: quadratic decay wins, maximizer near -30
  auto good = check_potential_tail(m, 0.45, GridSpec{});
  CHECK(good.verdict == Verdict::Pass);
  CHECK(good.extension_stable);
  CHECK(good.refinement_stable);
  CHECK(std::abs(good.witness_x) > 20.0);
  CHECK(std::isfinite(good.log_sup));

  // exponent 0.25: 1/G grows faster than v^0.25 along the grid extensions
  auto bad = check_potential_tail(m, 0.25, GridSpec{});
  CHECK(bad.verdict == Verdict::Fail);
  CHECK_FALSE(bad.extension_stable);
}

TEST_CASE("ratio condition on finite models computes an exact supremum") {
  auto m = make_finite_hmm(2, {0.6, 0.4}, {{0.7, 0.3}, {0.2, 0.8}},
                           {{0.9, 0.5}, {0.4, 1.0}, {0.8, 0.3}});
  auto rep = check_ratio_condition(m, 1.0, 0.25, GridSpec{});
  CHECK(rep.verdict == Verdict::Pass);
  CHECK(std::isfinite(rep.exact_sup));
  CHECK(rep.exact_sup > 0.0);
  CHECK(rep.witness_p >= 1);

  // unreachable mass: state 1 contributes weight toward y = 1 while the
  // flow assigns it probability zero, so the ratio is unbounded
  auto broken = make_finite_hmm(2, {1.0, 0.0}, {{1.0, 0.0}, {0.5, 0.5}},
                                {{1.0, 0.5}, {1.0, 0.5}, {1.0, 0.5}});
  auto rep2 = check_ratio_condition(broken, 1.0, 0.25, GridSpec{});
  CHECK(rep2.verdict == Verdict::Fail);
  CHECK(rep2.exact_sup == kInf);
}

TEST_CASE("ratio condition keys on the observation noise margin") {
  auto good = walk(5.0, 1.05, 0.9);
  auto rep = check_ratio_condition(good, 100.0, 0.25, GridSpec{});
  CHECK(rep.verdict == Verdict::Pass);
  CHECK(rep.noise_margin == doctest::Approx(5.0 - 4.1).epsilon(1e-12));
  CHECK(std::isfinite(rep.cert_min_log));
  CHECK(rep.refinement_stable);

  auto bad = walk(1.0, 1.05, 0.9);
  auto rep2 = check_ratio_condition(bad, 100.0, 0.25, GridSpec{});
  CHECK(rep2.verdict == Verdict::Fail);
  CHECK(rep2.noise_margin < 0.0);

  // bounded observation map: margin is never binding
  auto tanh_obs = walk(1.0, 1.05, 0.9, ObsMap::Tanh);
  auto rep3 = check_ratio_condition(tanh_obs, 100.0, 0.25, GridSpec{});
  CHECK(rep3.verdict == Verdict::Pass);
  CHECK(rep3.noise_margin == kInf);
}

TEST_CASE("ratio condition validates alpha") {
  auto m = walk(5.0, 1.05, 0.9);
  CHECK_THROWS_AS(check_ratio_condition(m, 100.0, 0.5, GridSpec{}),
                  ValidationError);
  CHECK_THROWS_AS(check_ratio_condition(m, 100.0, 0.0, GridSpec{}),
                  ValidationError);
  CHECK_THROWS_AS(check_ratio_condition(m, 100.0, -0.1, GridSpec{}),
                  ValidationError);
}

TEST_CASE("check_all aggregates verdicts") {
  auto good = walk(5.0, 1.05, 0.9);
  auto rep = check_all(good, 100.0, 0.25, GridSpec{});
  CHECK(rep.drift.verdict == Verdict::Pass);
  CHECK(rep.initial_moment.verdict == Verdict::Pass);
  CHECK(rep.ratio.verdict == Verdict::Pass);
  CHECK(rep.minorization.verdict == Verdict::Pass);
  CHECK(rep.potential_bound.verdict == Verdict::Pass);
  CHECK(rep.potential_tail.verdict == Verdict::Pass);
  CHECK(rep.overall == Verdict::Pass);

  auto bad = walk(1.0, 1.05, 0.9);
  auto rep2 = check_all(bad, 100.0, 0.25, GridSpec{});
  CHECK(rep2.ratio.verdict == Verdict::Fail);
  CHECK(rep2.overall == Verdict::Fail);
}

TEST_CASE("tail exponent override replaces the delta/2 default") {
  auto m = walk(5.0, 1.05, 0.9);
  auto with_default = check_all(m, 100.0, 0.25, GridSpec{});
  CHECK(with_default.potential_tail.exponent ==
        doctest::Approx(0.45).epsilon(1e-15));
  auto with_override = check_all(m, 100.0, 0.25, GridSpec{}, 0.3);
  CHECK(with_override.potential_tail.exponent ==
        doctest::Approx(0.3).epsilon(1e-15));
}
