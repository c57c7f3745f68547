#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fk/model.hpp"
#include "fk/rng.hpp"

namespace fk::smc {

// Particle ensemble at a single time index. States are stored flat,
// row-major (particle i occupies [i*dim, (i+1)*dim)). `ancestors` holds the
// resampling indices that produced this generation (empty at time 0).
// `log_mean_potential_history[q]` records log of the particle average of
// G_q, for q < time; their sum is the log normalizing-constant estimate.
struct Ensemble {
  long time{0};
  long count{0};
  int dim{1};
  std::vector<double> states;
  std::vector<std::int64_t> ancestors;
  std::vector<double> log_mean_potential_history;

  std::span<const double> particle(long i) const {
    return {states.data() + i * dim, static_cast<std::size_t>(dim)};
  }
};

// Draws N particles from the initial distribution. Each particle uses its
// own counter-derived stream, so results do not depend on thread count.
Ensemble init(const Model& model, long n_particles, const RngPolicy& policy,
              std::uint64_t replicate = 0, int threads = 1);

// Advances the ensemble one step: weight by G_{time}, resample
// multinomially, mutate through the transition kernel, and append the
// weight average to the history. Throws SingularityError if every
// particle potential vanishes.
void step(Ensemble& ens, const Model& model, const RngPolicy& policy,
          std::uint64_t replicate = 0, int threads = 1);

// Particle average of f under the current generation (estimates eta_n(f)).
double eta_estimate(const Ensemble& ens,
                    const std::function<double(std::span<const double>)>& f);

struct LogEstimate {
  double log_abs{0.0};
  int sign{0};
};

// Unnormalized-measure estimate gamma_n(f) in log form:
// sum of logged weight averages plus log of the particle average of f.
LogEstimate gamma_log_estimate(
    const Ensemble& ens,
    const std::function<double(std::span<const double>)>& f);

// Multinomial assignment by inverted CDF over unsorted weights.
// Uniforms are sorted once and swept against the running prefix sum. A draw
// landing exactly on a bin boundary resolves to the next bin up, which also
// guarantees zero-weight bins are never selected for any u in [0, 1).
// Exposed for direct testing.
void multinomial_assign(std::span<const double> weights,
                        std::span<const double> uniforms,
                        std::span<std::int64_t> out);

}  // namespace fk::smc
