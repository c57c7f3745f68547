#pragma once

// Feynman-Kac model interface and the model zoo.
//
// A model is the triplet (mu, M_p, G_p): an initial law, Markov transitions
// with densities H_p(x, y) w.r.t. a fixed dominating measure, and bounded
// nonnegative potentials. States are flat double spans (finite-state models
// store the state index in x[0]).

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fk/common.hpp"
#include "fk/rng.hpp"

namespace fk {

inline constexpr double kDefaultDelta0 = 1.05;
inline constexpr double kDefaultDelta = 0.5;

// Lyapunov data attached by builders; consumed by the assumptions checker.
struct DriftSpec {
  std::function<double(std::span<const double>)> V;  // >= 1 everywhere
  double delta{kDefaultDelta};                       // drift rate in (0, 1)
  double delta0{kDefaultDelta0};                     // scale parameter of V
  double d_lower{1.0};  // smallest level with nonempty {V <= d}
  std::function<double(double)> b_of_d;  // optional analytic b_d
};

// Transition profile for kernels that factorize over axes as
// y_k ~ N(scale * x_k, var). The assumptions checker uses it for
// closed-form and quadrature moment integrals.
struct AxisGaussian {
  double scale{1.0};
  double var{1.0};
};

class FiniteHmm;

class Model {
 public:
  virtual ~Model() = default;

  virtual int state_dim() const = 0;
  // number of time steps with defined potentials: log_potential(p, .) is
  // valid for p in [0, horizon())
  virtual long horizon() const = 0;
  virtual std::string name() const = 0;

  virtual void sample_initial(RngStream& rng, std::span<double> out) const = 0;
  virtual double initial_log_density(std::span<const double> x) const = 0;
  // log G_p(x), may be -inf where the potential vanishes
  virtual double log_potential(long p, std::span<const double> x) const = 0;
  // draw from M_p(prev, .), p >= 1
  virtual void sample_transition(long p, std::span<const double> prev,
                                 RngStream& rng, std::span<double> out) const = 0;
  // log H_p(prev, cur)
  virtual double transition_log_density(long p, std::span<const double> prev,
                                        std::span<const double> cur) const = 0;

  // Fills logw[i] = glog[i] + log H_p(prev_i, target) for i in [0, n).
  // prev is row-major n x dim. Models override with vectorizable loops; the
  // default calls transition_log_density per source.
  virtual void backward_log_weights(long p, const double* prev, std::size_t n,
                                    std::span<const double> glog,
                                    std::span<const double> target,
                                    double* logw) const;

  virtual const FiniteHmm* finite() const { return nullptr; }
  virtual const DriftSpec* drift() const { return nullptr; }
  virtual std::optional<AxisGaussian> axis_transition() const {
    return std::nullopt;
  }

 protected:
  void check_time(long p) const {
    if (p < 0 || p >= horizon()) {
      throw ValidationError("potential index p=" + std::to_string(p) +
                            " outside data horizon T=" +
                            std::to_string(horizon()) + " for model " + name());
    }
  }
};

// ---- finite-state HMM ----

class FiniteHmm final : public Model {
 public:
  FiniteHmm(int states, std::vector<double> initial,
            std::vector<double> transition_row_major,
            std::vector<std::vector<double>> potentials);
  FiniteHmm(int states, std::vector<double> initial,
            std::vector<double> transition_row_major,
            std::function<double(long, int)> log_potential_fn, long horizon);

  int state_dim() const override { return 1; }
  long horizon() const override { return horizon_; }
  std::string name() const override { return "finite"; }

  void sample_initial(RngStream& rng, std::span<double> out) const override;
  double initial_log_density(std::span<const double> x) const override;
  double log_potential(long p, std::span<const double> x) const override;
  void sample_transition(long p, std::span<const double> prev, RngStream& rng,
                         std::span<double> out) const override;
  double transition_log_density(long p, std::span<const double> prev,
                                std::span<const double> cur) const override;
  const FiniteHmm* finite() const override { return this; }
  const DriftSpec* drift() const override { return &drift_; }

  int size() const { return states_; }
  const std::vector<double>& initial() const { return initial_; }
  // row-major S x S, rows sum to one
  const std::vector<double>& transition() const { return trans_; }
  double transition_prob(int from, int to) const {
    return trans_[static_cast<std::size_t>(from) * states_ + to];
  }
  double log_transition(int from, int to) const {
    return log_trans_[static_cast<std::size_t>(from) * states_ + to];
  }
  double potential_state(long p, int s) const {
    return portable_exp(log_potential_state(p, s));
  }
  double log_potential_state(long p, int s) const;

  int state_index(std::span<const double> x) const;

 private:
  void init_common();

  int states_;
  long horizon_;
  std::vector<double> initial_;
  std::vector<double> trans_;
  std::vector<double> log_trans_;
  std::vector<double> init_cdf_;
  std::vector<double> trans_cdf_;  // row-major cumulative rows
  std::vector<std::vector<double>> pot_;  // time-major, empty if fn-backed
  std::function<double(long, int)> log_pot_fn_;
  DriftSpec drift_;
};

// ---- continuous zoo ----

enum class ObsMap { Tanh, Identity, Zero };

// X_{p+1} = X_p + W_p, W ~ N(0, I_dx); X_0 ~ N(0, I_dx);
// G_p(x) = N(y_p; h(x), sigma_y2 * I_dy).
class GaussianRwHmm final : public Model {
 public:
  GaussianRwHmm(int d_x, double delta0, double sigma_y2, ObsMap h_obs,
                std::vector<std::vector<double>> observations, double delta);

  int state_dim() const override { return d_x_; }
  long horizon() const override { return static_cast<long>(obs_.size()); }
  std::string name() const override { return "gaussian_rw"; }

  void sample_initial(RngStream& rng, std::span<double> out) const override;
  double initial_log_density(std::span<const double> x) const override;
  double log_potential(long p, std::span<const double> x) const override;
  void sample_transition(long p, std::span<const double> prev, RngStream& rng,
                         std::span<double> out) const override;
  double transition_log_density(long p, std::span<const double> prev,
                                std::span<const double> cur) const override;
  void backward_log_weights(long p, const double* prev, std::size_t n,
                            std::span<const double> glog,
                            std::span<const double> target,
                            double* logw) const override;
  const DriftSpec* drift() const override { return &drift_; }
  std::optional<AxisGaussian> axis_transition() const override {
    return AxisGaussian{1.0, 1.0};
  }

  double sigma_y2() const { return sigma_y2_; }
  double delta0() const { return delta0_; }
  ObsMap obs_map() const { return h_obs_; }
  const std::vector<std::vector<double>>& observations() const { return obs_; }
  void apply_obs_map(std::span<const double> x, std::span<double> out) const;

 private:
  int d_x_;
  double delta0_;
  double sigma_y2_;
  ObsMap h_obs_;
  std::vector<std::vector<double>> obs_;
  double log_norm_g_;  // -0.5 * d_y * log(2 pi sigma_y2)
  DriftSpec drift_;
};

// Same signal as GaussianRwHmm; y_{p,k} ~ Bernoulli(1/(1+e^{-x_k})).
class BernoulliHmm final : public Model {
 public:
  BernoulliHmm(int d_x, std::vector<std::vector<double>> observations,
               double delta0, double delta);

  int state_dim() const override { return d_x_; }
  long horizon() const override { return static_cast<long>(obs_.size()); }
  std::string name() const override { return "bernoulli"; }

  void sample_initial(RngStream& rng, std::span<double> out) const override;
  double initial_log_density(std::span<const double> x) const override;
  double log_potential(long p, std::span<const double> x) const override;
  void sample_transition(long p, std::span<const double> prev, RngStream& rng,
                         std::span<double> out) const override;
  double transition_log_density(long p, std::span<const double> prev,
                                std::span<const double> cur) const override;
  void backward_log_weights(long p, const double* prev, std::size_t n,
                            std::span<const double> glog,
                            std::span<const double> target,
                            double* logw) const override;
  const DriftSpec* drift() const override { return &drift_; }
  std::optional<AxisGaussian> axis_transition() const override {
    return AxisGaussian{1.0, 1.0};
  }

  double delta0() const { return delta0_; }
  const std::vector<std::vector<double>>& observations() const { return obs_; }

 private:
  int d_x_;
  double delta0_;
  std::vector<std::vector<double>> obs_;  // entries in {0, 1}
  DriftSpec drift_;
};

// X_{p+1} = a X_p + W, W ~ N(0, sigma_x2); Y_p = c X_p + V, V ~ N(0, sigma_y2);
// X_0 ~ N(m0, p0). Scalar state.
class LinearGaussianHmm final : public Model {
 public:
  LinearGaussianHmm(double a, double sigma_x2, double c, double sigma_y2,
                    std::vector<double> observations, double m0, double p0,
                    double delta0, double delta);

  int state_dim() const override { return 1; }
  long horizon() const override { return static_cast<long>(obs_.size()); }
  std::string name() const override { return "linear_gaussian"; }

  void sample_initial(RngStream& rng, std::span<double> out) const override;
  double initial_log_density(std::span<const double> x) const override;
  double log_potential(long p, std::span<const double> x) const override;
  void sample_transition(long p, std::span<const double> prev, RngStream& rng,
                         std::span<double> out) const override;
  double transition_log_density(long p, std::span<const double> prev,
                                std::span<const double> cur) const override;
  void backward_log_weights(long p, const double* prev, std::size_t n,
                            std::span<const double> glog,
                            std::span<const double> target,
                            double* logw) const override;
  const DriftSpec* drift() const override { return &drift_; }
  std::optional<AxisGaussian> axis_transition() const override {
    return AxisGaussian{a_, sigma_x2_};
  }

  double a() const { return a_; }
  double sigma_x2() const { return sigma_x2_; }
  double c() const { return c_; }
  double sigma_y2() const { return sigma_y2_; }
  double m0() const { return m0_; }
  double p0() const { return p0_; }
  const std::vector<double>& observations() const { return obs_; }

 private:
  double a_, sigma_x2_, c_, sigma_y2_, m0_, p0_;
  std::vector<double> obs_;
  double log_norm_x_, log_norm_y_, log_norm_0_;
  DriftSpec drift_;
};

// ---- builders ----

FiniteHmm make_finite_hmm(int states, std::vector<double> initial,
                          std::vector<std::vector<double>> transition,
                          std::vector<std::vector<double>> potentials);
FiniteHmm make_finite_hmm(int states, std::vector<double> initial,
                          std::vector<std::vector<double>> transition,
                          std::function<double(long, int)> log_potential_fn,
                          long horizon);
GaussianRwHmm make_gaussian_rw_hmm(int d_x, double delta0, double sigma_y2,
                                   ObsMap h_obs,
                                   std::vector<std::vector<double>> observations,
                                   double delta = kDefaultDelta);
BernoulliHmm make_bernoulli_hmm(int d_x,
                                std::vector<std::vector<double>> observations,
                                double delta0 = kDefaultDelta0,
                                double delta = kDefaultDelta);
LinearGaussianHmm make_linear_gaussian_hmm(double a, double sigma_x2, double c,
                                           double sigma_y2,
                                           std::vector<double> observations,
                                           double m0 = 0.0, double p0 = 1.0,
                                           double delta0 = kDefaultDelta0,
                                           double delta = kDefaultDelta);

// ---- data simulation (for the simulate-data CLI path) ----

struct SimulatedData {
  std::vector<std::vector<double>> states;        // T x d_x
  std::vector<std::vector<double>> observations;  // T x d_y
};

SimulatedData simulate_gaussian_rw(int d_x, double sigma_y2, ObsMap h_obs,
                                   long n, std::uint64_t seed);
SimulatedData simulate_bernoulli(int d_x, long n, std::uint64_t seed);
SimulatedData simulate_linear_gaussian(double a, double sigma_x2, double c,
                                       double sigma_y2, double m0, double p0,
                                       long n, std::uint64_t seed);

// ---- additive functionals ----

// F_n(x_{0:n}) = sum_{p=0}^n f_p(x_p). alpha is the reporting exponent for
// sup-norm diagnostics (paper regime alpha in (0, 1/6]).
struct AdditiveFunctional {
  std::function<double(long, std::span<const double>)> term;
  double alpha{0.1};
  std::string name{"probe"};

  double operator()(long p, std::span<const double> x) const {
    return term(p, x);
  }
};

AdditiveFunctional make_coordinate_probe(int index = 0, double center = 0.0);
AdditiveFunctional make_indicator_probe(int state = 1, double center = 0.0);
AdditiveFunctional make_tanh_probe(int index = 0, double scale = 1.0);
AdditiveFunctional make_table_probe(std::vector<double> xs,
                                    std::vector<double> ys);
AdditiveFunctional make_constant_probe(double value);

// sup over the grid and p <= n of |f_p(x)| / v(x)^alpha, v = e^V; reporting
// only (no verdict).
double sup_norm_report(const AdditiveFunctional& f, const Model& model, long n,
                       const std::vector<double>& grid);

// ---- Kalman/RTS companion for the linear-Gaussian model ----
//
// Conventions match the flow: eta_p = law(X_p | y_{0:p-1}), and the smoothing
// target at horizon n is law(X_{0:n} | y_{0:n-1}) (potentials G_0..G_{n-1};
// the last state is a one-step prediction).
struct KalmanRtsMoments {
  std::vector<double> pred_mean, pred_var;      // p = 0..n
  std::vector<double> filt_mean, filt_var;      // p = 0..n-1
  std::vector<double> smooth_mean, smooth_var;  // p = 0..n
  double log_likelihood{0.0};                   // log p(y_{0:n-1})
};

KalmanRtsMoments kalman_rts_moments(const LinearGaussianHmm& model, long n);

}  // namespace fk
