#include "fk/smoothers.hpp"

#include <cmath>
#include <string>

#include "fk/common.hpp"

namespace fk::smoothers {

namespace {

void check_alignment(const SmoothingStatistics& stats,
                     const smc::Ensemble& prev, const smc::Ensemble& cur) {
  if (stats.time != prev.time)
    throw ValidationError("smoother stats at time " + format_int(stats.time) +
                          " but previous ensemble at " + format_int(prev.time));
  if (cur.time != prev.time + 1)
    throw ValidationError("ensembles not consecutive: " + format_int(prev.time) +
                          " then " + format_int(cur.time));
  if (static_cast<long>(stats.values.size()) != prev.count)
    throw ValidationError("smoother stats sized for " +
                          format_int(static_cast<long>(stats.values.size())) +
                          " particles, ensemble has " + format_int(prev.count));
  if (prev.count != cur.count)
    throw ValidationError("ensemble size changed between steps");
}

// Dense-table path for finite state spaces: the backward weight depends on
// the particles only through their state labels, so exponentials are taken
// once per (state, state) pair and each particle row becomes a plain dot
// product over precomputed entries.
void update_finite(SmoothingStatistics& stats, const FiniteHmm& fh,
                   const AdditiveFunctional& f, const smc::Ensemble& prev,
                   const smc::Ensemble& cur, int threads) {
  const long n = prev.count;
  const long q = cur.time;
  const int s_count = fh.size();

  std::vector<int> src(n), tgt(n);
  for (long i = 0; i < n; ++i) {
    src[i] = fh.state_index(prev.particle(i));
    tgt[i] = fh.state_index(cur.particle(i));
  }
  std::vector<char> present(s_count, 0);
  for (long i = 0; i < n; ++i) present[src[i]] = 1;

  // K[s][t] = log G_{q-1}(s) + log H_q(s, t), shifted per target column.
  std::vector<double> kmat(static_cast<std::size_t>(s_count) * s_count, kNegInf);
  for (int s = 0; s < s_count; ++s) {
    if (!present[s]) continue;
    const double g = fh.log_potential_state(q - 1, s);
    for (int t = 0; t < s_count; ++t)
      kmat[static_cast<std::size_t>(s) * s_count + t] = g + fh.log_transition(s, t);
  }
  std::vector<double> col_max(s_count, kNegInf);
  for (int t = 0; t < s_count; ++t)
    for (int s = 0; s < s_count; ++s)
      col_max[t] = std::max(col_max[t], kmat[static_cast<std::size_t>(s) * s_count + t]);

  std::vector<char> tgt_present(s_count, 0);
  for (long i = 0; i < n; ++i) tgt_present[tgt[i]] = 1;
  for (int t = 0; t < s_count; ++t) {
    if (tgt_present[t] && col_max[t] == kNegInf)
      throw SingularityError("backward weights vanished at p=" + format_int(q) +
                             " for state " + format_int(t));
  }

  std::vector<double> e_state(static_cast<std::size_t>(s_count) * s_count, 0.0);
  for (int s = 0; s < s_count; ++s) {
    if (!present[s]) continue;
    for (int t = 0; t < s_count; ++t) {
      if (!tgt_present[t]) continue;
      e_state[static_cast<std::size_t>(s) * s_count + t] =
          portable_exp(kmat[static_cast<std::size_t>(s) * s_count + t] - col_max[t]);
    }
  }

  // One expanded row per occupied target state. Particles sharing a target
  // state see the same row and the same previous totals, so the two N-term
  // sums are computed once per state and reused; the recursion still
  // aggregates every source/target pair and is accounted as such.
  std::vector<double> rows(static_cast<std::size_t>(s_count) * n, 0.0);
  std::vector<double> num_t(s_count, 0.0), den_t(s_count, 0.0);
  const double* f_prev = stats.values.data();
  for (int t = 0; t < s_count; ++t) {
    if (!tgt_present[t]) continue;
    double* row = rows.data() + static_cast<std::size_t>(t) * n;
    for (long i = 0; i < n; ++i)
      row[i] = e_state[static_cast<std::size_t>(src[i]) * s_count + t];
    striped_dot2(row, f_prev, n, num_t[t], den_t[t]);
  }

  std::vector<double> next(n);
  parallel_for(n, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t j = b; j < e; ++j) {
      const int t = tgt[j];
      next[j] = f.term(q, cur.particle(static_cast<long>(j))) + num_t[t] / den_t[t];
    }
  });

  stats.values = std::move(next);
  stats.kernel_evals += static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n);
  stats.time = q;
}

void update_generic(SmoothingStatistics& stats, const Model& model,
                    const AdditiveFunctional& f, const smc::Ensemble& prev,
                    const smc::Ensemble& cur, int threads) {
  const long n = prev.count;
  const long q = cur.time;

  std::vector<double> glog(n);
  for (long i = 0; i < n; ++i)
    glog[i] = model.log_potential(q - 1, prev.particle(i));

  const double* f_prev = stats.values.data();
  std::vector<double> next(n);
  std::atomic<std::uint64_t> evals{0};
  parallel_for(n, threads, [&](std::size_t b, std::size_t e) {
    std::vector<double> logw(n), w(n);
    std::uint64_t local = 0;
    for (std::size_t j = b; j < e; ++j) {
      const auto target = cur.particle(static_cast<long>(j));
      model.backward_log_weights(q, prev.states.data(),
                                 static_cast<std::size_t>(n), glog, target,
                                 logw.data());
      const double m = striped_max(logw.data(), n);
      if (m == kNegInf)
        throw SingularityError("backward weights vanished at p=" + format_int(q) +
                               ", particle " + format_int(static_cast<long>(j)));
      exp_batch_shift(logw.data(), w.data(), n, -m);
      double num = 0.0, den = 0.0;
      striped_dot2(w.data(), f_prev, n, num, den);
      next[j] = f.term(q, target) + num / den;
      local += static_cast<std::uint64_t>(n);
    }
    evals.fetch_add(local, std::memory_order_relaxed);
  });

  stats.values = std::move(next);
  stats.kernel_evals += evals.load();
  stats.time = q;
}

}  // namespace

SmoothingStatistics init_statistics(const AdditiveFunctional& f,
                                    const smc::Ensemble& ens0) {
  if (ens0.time != 0)
    throw ValidationError("smoother must start from a time-0 ensemble");
  SmoothingStatistics stats;
  stats.time = 0;
  stats.values.resize(ens0.count);
  for (long i = 0; i < ens0.count; ++i)
    stats.values[i] = f.term(0, ens0.particle(i));
  return stats;
}

void backward_update(SmoothingStatistics& stats, const Model& model,
                     const AdditiveFunctional& f, const smc::Ensemble& prev,
                     const smc::Ensemble& cur, int threads) {
  check_alignment(stats, prev, cur);
  if (const FiniteHmm* fh = model.finite(); fh != nullptr)
    update_finite(stats, *fh, f, prev, cur, threads);
  else
    update_generic(stats, model, f, prev, cur, threads);
}

double smooth_estimate(const SmoothingStatistics& stats,
                       const smc::Ensemble& ens) {
  if (stats.time != ens.time)
    throw ValidationError("smoother stats at time " + format_int(stats.time) +
                          " but ensemble at " + format_int(ens.time));
  return striped_sum(stats.values.data(), stats.values.size()) /
         static_cast<double>(ens.count);
}

void Genealogy::push(const smc::Ensemble& ens) {
  if (states.empty()) {
    dim = ens.dim;
    count = ens.count;
  } else {
    if (ens.time != static_cast<long>(states.size()))
      throw ValidationError("genealogy expects consecutive generations");
    ancestors.push_back(ens.ancestors);
  }
  states.push_back(ens.states);
}

double genealogy_estimate(const Genealogy& g, const AdditiveFunctional& f) {
  if (g.states.empty()) throw ValidationError("genealogy is empty");
  const long n_last = static_cast<long>(g.states.size()) - 1;
  const long n = g.count;
  const int dim = g.dim;

  std::vector<long> idx(n);
  for (long i = 0; i < n; ++i) idx[i] = i;
  std::vector<double> acc(n, 0.0);
  for (long p = n_last; p >= 0; --p) {
    const std::vector<double>& st = g.states[p];
    for (long i = 0; i < n; ++i) {
      acc[i] += f.term(p, {st.data() + idx[i] * dim, static_cast<std::size_t>(dim)});
      if (p > 0) idx[i] = g.ancestors[p - 1][idx[i]];
    }
  }
  return striped_sum(acc.data(), n) / static_cast<double>(n);
}

}  // namespace fk::smoothers
