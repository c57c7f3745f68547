#include "fk/smc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fk/common.hpp"

namespace fk::smc {

namespace {

void check_count(long n) {
  if (n < 1) throw ValidationError("particle count must be >= 1, got " + format_int(n));
}

}  // namespace

Ensemble init(const Model& model, long n_particles, const RngPolicy& policy,
              std::uint64_t replicate, int threads) {
  check_count(n_particles);
  Ensemble ens;
  ens.time = 0;
  ens.count = n_particles;
  ens.dim = model.state_dim();
  ens.states.resize(static_cast<std::size_t>(n_particles) * ens.dim);
  const int dim = ens.dim;
  parallel_for(n_particles, threads, [&](long b, long e) {
    for (long i = b; i < e; ++i) {
      auto rng = policy.stream(replicate, 0, static_cast<std::uint64_t>(i),
                               RngPhase::Init);
      model.sample_initial(rng, {ens.states.data() + i * dim,
                                 static_cast<std::size_t>(dim)});
    }
  });
  return ens;
}

void multinomial_assign(std::span<const double> weights,
                        std::span<const double> uniforms,
                        std::span<std::int64_t> out) {
  const long n = static_cast<long>(weights.size());
  const long m = static_cast<long>(uniforms.size());
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (long i = 0; i < n; ++i) {
    acc += weights[i];
    cdf[i] = acc;
  }
  const double total = acc;
  if (!(total > 0.0)) throw SingularityError("multinomial: total weight is zero");

  std::vector<long> order(m);
  std::iota(order.begin(), order.end(), 0L);
  std::sort(order.begin(), order.end(), [&](long a, long b) {
    return uniforms[a] < uniforms[b];
  });

  long k = 0;
  for (long j = 0; j < m; ++j) {
    const double target = uniforms[order[j]] * total;
    while (k < n - 1 && !(target < cdf[k])) ++k;
    out[order[j]] = k;
  }
}

void step(Ensemble& ens, const Model& model, const RngPolicy& policy,
          std::uint64_t replicate, int threads) {
  const long n = ens.count;
  const int dim = ens.dim;
  const long p = ens.time;  // weighting time; the new generation lives at p+1

  std::vector<double> logg(n);
  parallel_for(n, threads, [&](long b, long e) {
    for (long i = b; i < e; ++i) logg[i] = model.log_potential(p, ens.particle(i));
  });
  for (long i = 0; i < n; ++i) {
    if (std::isnan(logg[i]))
      throw SingularityError("potential returned NaN at p=" + format_int(p) +
                             ", particle " + format_int(i));
  }

  const double shift = striped_max(logg.data(), n);
  if (shift == kNegInf)
    throw SingularityError("all particle potentials vanished at p=" + format_int(p));

  std::vector<double> w(n);
  exp_batch_shift(logg.data(), w.data(), n, -shift);
  const double wsum = striped_sum(w.data(), n);
  ens.log_mean_potential_history.push_back(
      shift + portable_log(wsum / static_cast<double>(n)));

  // One uniform per offspring slot, drawn from the resample phase at the
  // *parent* time so the stream layout is stable across implementations.
  std::vector<double> u(n);
  for (long i = 0; i < n; ++i) {
    auto rng = policy.stream(replicate, static_cast<std::uint64_t>(p),
                             static_cast<std::uint64_t>(i), RngPhase::Resample);
    u[i] = rng.next_unit();
  }
  std::vector<std::int64_t> anc(n);
  multinomial_assign(w, u, anc);

  std::vector<double> next(static_cast<std::size_t>(n) * dim);
  parallel_for(n, threads, [&](long b, long e) {
    for (long i = b; i < e; ++i) {
      auto rng = policy.stream(replicate, static_cast<std::uint64_t>(p + 1),
                               static_cast<std::uint64_t>(i), RngPhase::Mutate);
      model.sample_transition(p + 1, ens.particle(anc[i]), rng,
                              {next.data() + i * dim, static_cast<std::size_t>(dim)});
    }
  });

  ens.states = std::move(next);
  ens.ancestors = std::move(anc);
  ens.time = p + 1;
}

double eta_estimate(const Ensemble& ens,
                    const std::function<double(std::span<const double>)>& f) {
  std::vector<double> vals(ens.count);
  for (long i = 0; i < ens.count; ++i) vals[i] = f(ens.particle(i));
  return striped_sum(vals.data(), ens.count) / static_cast<double>(ens.count);
}

LogEstimate gamma_log_estimate(
    const Ensemble& ens,
    const std::function<double(std::span<const double>)>& f) {
  double log_prod = 0.0;
  for (double v : ens.log_mean_potential_history) log_prod += v;
  const double mean = eta_estimate(ens, f);
  LogEstimate out;
  if (mean == 0.0) {
    out.log_abs = kNegInf;
    out.sign = 0;
  } else {
    out.log_abs = log_prod + portable_log(std::abs(mean));
    out.sign = mean > 0.0 ? 1 : -1;
  }
  return out;
}

}  // namespace fk::smc
