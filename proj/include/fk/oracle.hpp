#pragma once

// Exact computations on finite-state models: the normalized flow, brute-force
// path enumeration, backward kernels, the additive-functional smoother, the
// log-rescaled semigroup, and the asymptotic variance of the backward
// smoother computed in two independent forms.

#include <functional>
#include <span>
#include <vector>

#include "fk/model.hpp"

namespace fk::oracle {

struct Flow {
  // eta[p] = predictor at time p (eta[0] = mu), p = 0..n, each a probability
  // vector over states
  std::vector<std::vector<double>> eta;
  // lambda[p] = eta_p(G_p) for p = 0..n-1
  std::vector<double> lambda;
  // log gamma_n(1) = sum_p log lambda_p
  double log_gamma_n{0.0};
};

Flow forward_flow(const FiniteHmm& model, long n);

struct PathExpectation {
  double normalized{0.0};    // expectation under the normalized path law
  double unnormalized{0.0};  // gamma_n-weighted sum
  double normalizer{0.0};    // gamma_n(1)
};

// Sums over all S^(n+1) paths; guarded at 1e7 paths.
PathExpectation enumerate_paths(
    const FiniteHmm& model, long n,
    const std::function<double(std::span<const int>)>& path_functional);
PathExpectation enumerate_paths(const FiniteHmm& model, long n,
                                const AdditiveFunctional& f);

// kernels[q] for q = 1..n (entry 0 unused), row-major S x S: row x_q, column
// x_{q-1}; each row is a probability vector.
std::vector<std::vector<double>> backward_kernels(const FiniteHmm& model,
                                                  const Flow& flow, long n);

struct SmootherResult {
  double value{0.0};  // Q_n(F_n)
  // cumulative[p][x] = expected sum of f_0..f_{p-1} backward from state x
  std::vector<std::vector<double>> cumulative;
};

SmootherResult smoother_expectation(const FiniteHmm& model, const Flow& flow,
                                    const AdditiveFunctional& f, long n);

struct SemigroupCache {
  // Q_{p,n}(1)(x) = exp(log_scale[p]) * u_hat[p][x], max_x u_hat[p][x] = 1
  std::vector<std::vector<double>> u_hat;
  std::vector<double> log_scale;   // p = 0..n
  std::vector<double> step_scale;  // divisor applied at p = 0..n-1
  std::vector<double> log_eta_u;   // log eta_p(Q_{p,n}(1)), p = 0..n
};

SemigroupCache semigroup_cache(const FiniteHmm& model, const Flow& flow, long n);

struct VarianceBreakdown {
  double sigma2{0.0};           // sum over p of eta_p([h(P - R)]^2)
  double sigma2_var_form{0.0};  // sum of Var_{eta_p} of the centered D ratio
  std::vector<double> per_p_terms;
  double smoother_value{0.0};  // Q_n(F_n), the centering constant
};

// Computes both variance forms and asserts their agreement at 1e-9.
VarianceBreakdown asymptotic_variance(const FiniteHmm& model,
                                      const AdditiveFunctional& f, long n);

}  // namespace fk::oracle
