#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "fk/model.hpp"
#include "fk/smc.hpp"

namespace fk::smoothers {

// Running per-particle totals F_p^N for the forward-only smoother of an
// additive functional. values[i] is the conditional expectation of the
// accumulated sum given the current particle i. kernel_evals counts the
// source/target particle pairs the backward recursion aggregates, N*N per
// step; the finite-state path shares terms between particles on the same
// state but accounts the same pairs.
struct SmoothingStatistics {
  long time{0};
  std::vector<double> values;
  std::uint64_t kernel_evals{0};
};

SmoothingStatistics init_statistics(const AdditiveFunctional& f,
                                    const smc::Ensemble& ens0);

// Folds one step of the backward decomposition into the running totals:
// F_p(x) = f_p(x) + sum_i w_i(x) F_{p-1}(x_{p-1}^i) with weights
// proportional to G_{p-1}(x_{p-1}^i) H_p(x_{p-1}^i, x). Cost is O(N^2).
// `prev` must be the generation the update reads from (time p-1, matching
// stats.time) and `cur` the freshly mutated generation at p.
void backward_update(SmoothingStatistics& stats, const Model& model,
                     const AdditiveFunctional& f, const smc::Ensemble& prev,
                     const smc::Ensemble& cur, int threads = 1);

// Smoothed estimate of the accumulated functional: particle average of the
// running totals. Requires stats and ens to sit at the same time index.
double smooth_estimate(const SmoothingStatistics& stats,
                       const smc::Ensemble& ens);

// Stored particle history for the path-space (genealogy) estimator: keeps
// every generation plus ancestor links so surviving paths can be traced
// back. Memory is O(n N), estimate cost O(n N).
struct Genealogy {
  int dim{1};
  long count{0};
  std::vector<std::vector<double>> states;
  std::vector<std::vector<std::int64_t>> ancestors;

  void push(const smc::Ensemble& ens);
};

// Averages the additive functional along the N surviving ancestral paths
// of the final generation. This is the estimator whose variance degrades
// with the horizon; it serves as the comparison baseline.
double genealogy_estimate(const Genealogy& g, const AdditiveFunctional& f);

}  // namespace fk::smoothers
