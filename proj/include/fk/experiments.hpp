#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fk/model.hpp"

namespace fk::experiments {

// Acceptance bands for the replicated studies.
inline constexpr double kVarianceRatioBand = 0.2;   // N*var vs predicted
inline constexpr double kSkewnessBand = 0.25;       // |m3| of standardized
inline constexpr double kKurtosisBand = 0.6;        // |m4 - 3|
inline constexpr double kBackwardSlopeLo = 0.6;     // log-log variance slope
inline constexpr double kBackwardSlopeHi = 1.4;
inline constexpr double kGenealogySlopeLo = 1.5;
inline constexpr double kGenealogySlopeHi = 2.5;
inline constexpr double kBackwardCostLo = 3.0;      // time ratio on N doubling
inline constexpr double kBackwardCostHi = 6.0;
inline constexpr double kFilterCostLo = 1.5;
inline constexpr double kFilterCostHi = 3.0;
inline constexpr double kLowPowerThreshold = 0.3;   // var_se / var

// Verifies the normal limit of the smoother error at a fixed horizon:
// replicated runs against the exact finite-state value, scaled variance
// compared to the predicted asymptotic variance, and third/fourth moments
// of the standardized errors against their Gaussian values.
struct CltStudySpec {
  long horizon{5};
  long particles{10000};
  long replicates{500};
  std::uint64_t seed{1};
  int threads{1};
};

struct CltStudyResult {
  double oracle_mean{0.0};
  double oracle_sigma2{0.0};
  double mean{0.0};
  double var{0.0};
  double n_var{0.0};     // particles * sample variance
  double var_se{0.0};    // standard error of the sample variance
  double ratio{0.0};     // n_var / oracle_sigma2
  double m3{0.0};        // standardized skewness
  double m4{0.0};        // standardized kurtosis
  std::vector<double> estimates;
  bool ratio_ok{false};
  bool m3_ok{false};
  bool m4_ok{false};
  bool passed{false};
};

CltStudyResult run_clt_study(const FiniteHmm& model,
                             const AdditiveFunctional& f,
                             const CltStudySpec& spec);

// Contrasts how the two smoothing estimators degrade with the horizon:
// the per-particle running totals should give variance growing about
// linearly in n, the ancestral-path average about quadratically. Both
// estimators read the same particle runs, so the comparison is paired.
struct GrowthStudySpec {
  std::vector<long> horizons{10, 20, 40, 80};
  long particles{2000};
  long replicates{400};
  std::uint64_t seed{1};
  int threads{1};
};

struct GrowthRow {
  std::string estimator;
  long horizon{0};
  double mean{0.0};
  double var{0.0};
  double n_var{0.0};
  double var_se{0.0};
  bool low_power{false};
};

struct GrowthStudyResult {
  std::vector<GrowthRow> rows;
  double backward_slope{0.0};
  double genealogy_slope{0.0};
  std::vector<double> backward_ratios;   // var(2n)/var(n) down the doublings
  std::vector<double> genealogy_ratios;
  bool backward_slope_ok{false};
  bool genealogy_slope_ok{false};
  bool ratios_ordered{false};
  bool low_power{false};
  bool passed{false};
};

GrowthStudyResult run_growth_study(const Model& model,
                                   const AdditiveFunctional& f,
                                   const GrowthStudySpec& spec);

// Measures the computational profile: the backward updates must consume
// exactly N^2 kernel evaluations per step, and wall time must scale about
// quadratically for the smoother and linearly for the filter.
struct CostStudySpec {
  std::vector<long> particle_counts{4096, 8192};
  long steps{3};
  int repeats{5};
  std::uint64_t seed{1};
};

struct CostRow {
  long particles{0};
  double filter_seconds{0.0};
  double backward_seconds{0.0};
  std::uint64_t kernel_evals{0};
  std::uint64_t kernel_evals_expected{0};
};

struct CostStudyResult {
  std::vector<CostRow> rows;
  std::vector<double> filter_ratios;
  std::vector<double> backward_ratios;
  bool evals_exact{false};
  bool filter_band_ok{false};
  bool backward_band_ok{false};
  bool passed{false};
};

CostStudyResult run_cost_study(const Model& model, const AdditiveFunctional& f,
                               const CostStudySpec& spec);

// One filter sweep with smoother snapshots at the requested horizons;
// shared by the studies and the CLI. Horizons must be ascending and within
// the model's data. Genealogy snapshots are optional (they cost O(n N)
// each and the full history is kept in memory).
struct ReplicateResult {
  std::vector<double> backward;
  std::vector<double> genealogy;  // empty unless requested
};

ReplicateResult run_replicate(const Model& model, const AdditiveFunctional& f,
                              long particles, const std::vector<long>& horizons,
                              std::uint64_t seed, std::uint64_t replicate,
                              bool want_genealogy, int threads = 1);

double ols_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace fk::experiments
