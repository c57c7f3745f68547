#include "fk/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "fk/common.hpp"
#include "fk/oracle.hpp"
#include "fk/rng.hpp"
#include "fk/smc.hpp"
#include "fk/smoothers.hpp"

namespace fk::experiments {

namespace {

struct SampleMoments {
  double mean{0.0};
  double var{0.0};    // unbiased
  double var_se{0.0};
  double m3{0.0};     // standardized central moments
  double m4{0.0};
};

SampleMoments sample_moments(const std::vector<double>& xs) {
  const double r = static_cast<double>(xs.size());
  if (xs.size() < 4) throw ValidationError("need at least 4 replicates");
  SampleMoments out;
  for (double x : xs) out.mean += x;
  out.mean /= r;
  double c2 = 0.0, c3 = 0.0, c4 = 0.0;
  for (double x : xs) {
    const double d = x - out.mean;
    c2 += d * d;
    c3 += d * d * d;
    c4 += d * d * d * d;
  }
  out.var = c2 / (r - 1.0);
  c2 /= r;
  c3 /= r;
  c4 /= r;
  const double sd = std::sqrt(out.var);
  out.m3 = c3 / (sd * sd * sd);
  out.m4 = c4 / (out.var * out.var);
  // large-sample variance of the sample variance
  const double v = (c4 - (r - 3.0) / (r - 1.0) * out.var * out.var) / r;
  out.var_se = v > 0.0 ? std::sqrt(v) : 0.0;
  return out;
}

void check_horizons(const Model& model, const std::vector<long>& horizons) {
  if (horizons.empty()) throw ValidationError("no horizons given");
  long prev = -1;
  for (long h : horizons) {
    if (h <= prev) throw ValidationError("horizons must be strictly increasing");
    prev = h;
  }
  if (horizons.back() > model.horizon() - 1)
    throw ValidationError("horizon " + format_int(horizons.back()) +
                          " beyond the data (max " +
                          format_int(model.horizon() - 1) + ")");
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

bool in_band(double x, double lo, double hi) { return x >= lo && x <= hi; }

}  // namespace

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  if (x.size() != y.size() || x.size() < 2)
    throw ValidationError("slope needs matching samples of size >= 2");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw ValidationError("slope undefined: no spread in x");
  return sxy / sxx;
}

ReplicateResult run_replicate(const Model& model, const AdditiveFunctional& f,
                              long particles, const std::vector<long>& horizons,
                              std::uint64_t seed, std::uint64_t replicate,
                              bool want_genealogy, int threads) {
  check_horizons(model, horizons);
  const RngPolicy policy{seed};

  smc::Ensemble ens = smc::init(model, particles, policy, replicate, threads);
  smoothers::SmoothingStatistics stats = smoothers::init_statistics(f, ens);
  smoothers::Genealogy gen;
  if (want_genealogy) gen.push(ens);

  ReplicateResult out;
  std::size_t next = 0;
  auto snapshot = [&](long t) {
    if (next < horizons.size() && horizons[next] == t) {
      out.backward.push_back(smoothers::smooth_estimate(stats, ens));
      if (want_genealogy)
        out.genealogy.push_back(smoothers::genealogy_estimate(gen, f));
      ++next;
    }
  };
  snapshot(0);

  for (long t = 1; t <= horizons.back(); ++t) {
    smc::Ensemble prev = ens;
    smc::step(ens, model, policy, replicate, threads);
    smoothers::backward_update(stats, model, f, prev, ens, threads);
    if (want_genealogy) gen.push(ens);
    snapshot(t);
  }
  return out;
}

CltStudyResult run_clt_study(const FiniteHmm& model,
                             const AdditiveFunctional& f,
                             const CltStudySpec& spec) {
  if (spec.replicates < 4) throw ValidationError("need at least 4 replicates");
  // validate here: an exception escaping the replicate workers would abort
  check_horizons(model, {spec.horizon});
  if (spec.particles < 1) throw ValidationError("clt study needs particles");
  const oracle::Flow flow = oracle::forward_flow(model, spec.horizon);
  const oracle::SmootherResult exact =
      oracle::smoother_expectation(model, flow, f, spec.horizon);
  const oracle::VarianceBreakdown vb =
      oracle::asymptotic_variance(model, f, spec.horizon);

  CltStudyResult out;
  out.oracle_mean = exact.value;
  out.oracle_sigma2 = vb.sigma2;
  out.estimates.resize(spec.replicates);

  const std::vector<long> horizons{spec.horizon};
  parallel_for(spec.replicates, spec.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      const ReplicateResult rr = run_replicate(
          model, f, spec.particles, horizons, spec.seed, r, false, 1);
      out.estimates[r] = rr.backward[0];
    }
  });

  const SampleMoments mom = sample_moments(out.estimates);
  out.mean = mom.mean;
  out.var = mom.var;
  out.n_var = static_cast<double>(spec.particles) * mom.var;
  out.var_se = mom.var_se;
  out.m3 = mom.m3;
  out.m4 = mom.m4;
  out.ratio = out.n_var / out.oracle_sigma2;
  out.ratio_ok = in_band(out.ratio, 1.0 - kVarianceRatioBand,
                         1.0 + kVarianceRatioBand);
  out.m3_ok = std::abs(out.m3) <= kSkewnessBand;
  out.m4_ok = std::abs(out.m4 - 3.0) <= kKurtosisBand;
  out.passed = out.ratio_ok && out.m3_ok && out.m4_ok;
  return out;
}

GrowthStudyResult run_growth_study(const Model& model,
                                   const AdditiveFunctional& f,
                                   const GrowthStudySpec& spec) {
  if (spec.replicates < 4) throw ValidationError("need at least 4 replicates");
  check_horizons(model, spec.horizons);
  if (spec.particles < 1) throw ValidationError("growth study needs particles");
  const std::size_t h_count = spec.horizons.size();

  std::vector<std::vector<double>> bw(h_count), gn(h_count);
  for (auto& v : bw) v.resize(spec.replicates);
  for (auto& v : gn) v.resize(spec.replicates);

  parallel_for(spec.replicates, spec.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      const ReplicateResult rr = run_replicate(
          model, f, spec.particles, spec.horizons, spec.seed, r, true, 1);
      for (std::size_t h = 0; h < h_count; ++h) {
        bw[h][r] = rr.backward[h];
        gn[h][r] = rr.genealogy[h];
      }
    }
  });

  GrowthStudyResult out;
  std::vector<double> log_n, log_var_bw, log_var_gn;
  for (std::size_t h = 0; h < h_count; ++h) {
    const SampleMoments mb = sample_moments(bw[h]);
    const SampleMoments mg = sample_moments(gn[h]);
    const double np = static_cast<double>(spec.particles);
    GrowthRow row_b{"backward", spec.horizons[h], mb.mean, mb.var,
                    np * mb.var, mb.var_se, mb.var_se > kLowPowerThreshold * mb.var};
    GrowthRow row_g{"genealogy", spec.horizons[h], mg.mean, mg.var,
                    np * mg.var, mg.var_se, mg.var_se > kLowPowerThreshold * mg.var};
    out.rows.push_back(row_b);
    out.rows.push_back(row_g);
    out.low_power = out.low_power || row_b.low_power || row_g.low_power;
    log_n.push_back(portable_log(static_cast<double>(spec.horizons[h])));
    log_var_bw.push_back(portable_log(mb.var));
    log_var_gn.push_back(portable_log(mg.var));
    if (h > 0) {
      out.backward_ratios.push_back(portable_exp(log_var_bw[h] - log_var_bw[h - 1]));
      out.genealogy_ratios.push_back(portable_exp(log_var_gn[h] - log_var_gn[h - 1]));
    }
  }
  out.backward_slope = ols_slope(log_n, log_var_bw);
  out.genealogy_slope = ols_slope(log_n, log_var_gn);
  out.backward_slope_ok =
      in_band(out.backward_slope, kBackwardSlopeLo, kBackwardSlopeHi);
  out.genealogy_slope_ok =
      in_band(out.genealogy_slope, kGenealogySlopeLo, kGenealogySlopeHi);
  out.ratios_ordered =
      *std::max_element(out.backward_ratios.begin(), out.backward_ratios.end()) <
      *std::min_element(out.genealogy_ratios.begin(), out.genealogy_ratios.end());
  out.passed = out.backward_slope_ok && out.genealogy_slope_ok &&
               out.ratios_ordered;
  return out;
}

CostStudyResult run_cost_study(const Model& model, const AdditiveFunctional& f,
                               const CostStudySpec& spec) {
  if (spec.steps < 1) throw ValidationError("cost study needs steps >= 1");
  if (spec.steps > model.horizon() - 1)
    throw ValidationError("cost study steps exceed the data horizon");
  using clock = std::chrono::steady_clock;
  const RngPolicy policy{spec.seed};

  CostStudyResult out;
  for (long n_particles : spec.particle_counts) {
    std::vector<double> filter_times, backward_times;
    std::uint64_t evals = 0;
    for (int rep = 0; rep < spec.repeats; ++rep) {
      smc::Ensemble ens =
          smc::init(model, n_particles, policy, static_cast<std::uint64_t>(rep));
      smoothers::SmoothingStatistics stats = smoothers::init_statistics(f, ens);
      double ft = 0.0, bt = 0.0;
      for (long t = 1; t <= spec.steps; ++t) {
        smc::Ensemble prev = ens;
        const auto t0 = clock::now();
        smc::step(ens, model, policy, static_cast<std::uint64_t>(rep));
        const auto t1 = clock::now();
        smoothers::backward_update(stats, model, f, prev, ens);
        const auto t2 = clock::now();
        ft += std::chrono::duration<double>(t1 - t0).count();
        bt += std::chrono::duration<double>(t2 - t1).count();
      }
      filter_times.push_back(ft);
      backward_times.push_back(bt);
      evals = stats.kernel_evals;
    }
    CostRow row;
    row.particles = n_particles;
    row.filter_seconds = median(filter_times);
    row.backward_seconds = median(backward_times);
    row.kernel_evals = evals;
    row.kernel_evals_expected = static_cast<std::uint64_t>(spec.steps) *
                                static_cast<std::uint64_t>(n_particles) *
                                static_cast<std::uint64_t>(n_particles);
    out.rows.push_back(row);
  }

  out.evals_exact = true;
  for (const CostRow& row : out.rows)
    out.evals_exact = out.evals_exact &&
                      row.kernel_evals == row.kernel_evals_expected;
  out.filter_band_ok = true;
  out.backward_band_ok = true;
  for (std::size_t i = 1; i < out.rows.size(); ++i) {
    const double fr = out.rows[i].filter_seconds / out.rows[i - 1].filter_seconds;
    const double br =
        out.rows[i].backward_seconds / out.rows[i - 1].backward_seconds;
    out.filter_ratios.push_back(fr);
    out.backward_ratios.push_back(br);
    out.filter_band_ok =
        out.filter_band_ok && in_band(fr, kFilterCostLo, kFilterCostHi);
    out.backward_band_ok =
        out.backward_band_ok && in_band(br, kBackwardCostLo, kBackwardCostHi);
  }
  out.passed = out.evals_exact && out.filter_band_ok && out.backward_band_ok;
  return out;
}

}  // namespace fk::experiments
