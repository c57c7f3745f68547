#include "fk/model.hpp"

#include <algorithm>
#include <cmath>

namespace fk {

namespace {

double sq(double x) { return x * x; }

// quadratic Lyapunov from the verification setup: V(x) = 1 + |x|^2/(2(1+d0))
DriftSpec quadratic_drift(double delta0, double delta) {
  DriftSpec d;
  d.delta = delta;
  d.delta0 = delta0;
  d.d_lower = 1.0;
  double scale = 2.0 * (1.0 + delta0);
  d.V = [scale](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return 1.0 + s / scale;
  };
  return d;
}

int cdf_draw(const double* cdf, int n, double u) {
  // smallest k with u < cdf[k]; ties resolve to the lowest admissible index
  int k = 0;
  while (k < n - 1 && u >= cdf[k]) ++k;
  return k;
}

}  // namespace

void Model::backward_log_weights(long p, const double* prev, std::size_t n,
                                 std::span<const double> glog,
                                 std::span<const double> target,
                                 double* logw) const {
  const int d = state_dim();
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> xi(prev + i * d, static_cast<std::size_t>(d));
    logw[i] = glog[i] + transition_log_density(p, xi, target);
  }
}

// ---- FiniteHmm ----

FiniteHmm::FiniteHmm(int states, std::vector<double> initial,
                     std::vector<double> transition_row_major,
                     std::vector<std::vector<double>> potentials)
    : states_(states),
      horizon_(static_cast<long>(potentials.size())),
      initial_(std::move(initial)),
      trans_(std::move(transition_row_major)),
      pot_(std::move(potentials)) {
  init_common();
  for (std::size_t p = 0; p < pot_.size(); ++p) {
    if (static_cast<int>(pot_[p].size()) != states_) {
      throw ValidationError("potential row p=" + std::to_string(p) + " has " +
                            std::to_string(pot_[p].size()) + " entries, expected " +
                            std::to_string(states_));
    }
    for (int s = 0; s < states_; ++s) {
      double g = pot_[p][s];
      if (!(g >= 0.0) || !std::isfinite(g)) {
        throw ValidationError("potential G_" + std::to_string(p) + "(" +
                              std::to_string(s) + ") = " + format_double(g) +
                              " must be finite and nonnegative");
      }
    }
  }
}

FiniteHmm::FiniteHmm(int states, std::vector<double> initial,
                     std::vector<double> transition_row_major,
                     std::function<double(long, int)> log_potential_fn,
                     long horizon)
    : states_(states),
      horizon_(horizon),
      initial_(std::move(initial)),
      trans_(std::move(transition_row_major)),
      log_pot_fn_(std::move(log_potential_fn)) {
  if (horizon_ <= 0) throw ValidationError("finite model horizon must be positive");
  if (!log_pot_fn_) throw ValidationError("finite model needs a potential function");
  init_common();
}

void FiniteHmm::init_common() {
  if (states_ < 1) throw ValidationError("finite model needs at least one state");
  const auto S = static_cast<std::size_t>(states_);
  if (initial_.size() != S) {
    throw ValidationError("initial distribution has " +
                          std::to_string(initial_.size()) + " entries, expected " +
                          std::to_string(states_));
  }
  double tot = 0.0;
  for (int s = 0; s < states_; ++s) {
    if (!(initial_[s] >= 0.0)) {
      throw ValidationError("initial probability of state " + std::to_string(s) +
                            " is negative");
    }
    tot += initial_[s];
  }
  if (std::abs(tot - 1.0) > 1e-12) {
    throw ValidationError("initial distribution sums to " + format_double(tot) +
                          ", expected 1 within 1e-12");
  }
  if (trans_.size() != S * S) {
    throw ValidationError("transition matrix has " + std::to_string(trans_.size()) +
                          " entries, expected " + std::to_string(S * S));
  }
  for (int r = 0; r < states_; ++r) {
    double rs = 0.0;
    for (int c = 0; c < states_; ++c) {
      double v = trans_[static_cast<std::size_t>(r) * S + c];
      if (!(v >= 0.0)) {
        throw ValidationError("transition row " + std::to_string(r) +
                              " has a negative entry");
      }
      rs += v;
    }
    if (std::abs(rs - 1.0) > 1e-12) {
      throw ValidationError("transition row " + std::to_string(r) + " sums to " +
                            format_double(rs) + ", expected 1 within 1e-12");
    }
  }
  log_trans_.resize(S * S);
  for (std::size_t k = 0; k < S * S; ++k) log_trans_[k] = portable_log(trans_[k]);
  init_cdf_.resize(S);
  double c = 0.0;
  for (int s = 0; s < states_; ++s) {
    c += initial_[s];
    init_cdf_[s] = c;
  }
  init_cdf_[S - 1] = 1.0;
  trans_cdf_.resize(S * S);
  for (int r = 0; r < states_; ++r) {
    double rc = 0.0;
    for (int cc = 0; cc < states_; ++cc) {
      rc += trans_[static_cast<std::size_t>(r) * S + cc];
      trans_cdf_[static_cast<std::size_t>(r) * S + cc] = rc;
    }
    trans_cdf_[static_cast<std::size_t>(r) * S + S - 1] = 1.0;
  }
  // bounded space: the quadratic-drift machinery is trivial here
  drift_ = DriftSpec{};
  drift_.V = [](std::span<const double>) { return 1.0; };
  drift_.d_lower = 1.0;
}

int FiniteHmm::state_index(std::span<const double> x) const {
  if (x.empty()) throw ValidationError("empty state passed to finite model");
  double v = x[0];
  int s = static_cast<int>(v >= 0 ? v + 0.5 : v - 0.5);
  if (s < 0 || s >= states_ || std::abs(v - s) > 1e-9) {
    throw ValidationError("state value " + format_double(v) +
                          " is not a valid index in [0," +
                          std::to_string(states_) + ")");
  }
  return s;
}

double FiniteHmm::log_potential_state(long p, int s) const {
  if (p < 0 || p >= horizon_) {
    throw ValidationError("potential index p=" + std::to_string(p) +
                          " outside data horizon T=" + std::to_string(horizon_) +
                          " for model finite");
  }
  if (log_pot_fn_) return log_pot_fn_(p, s);
  return portable_log(pot_[static_cast<std::size_t>(p)][s]);
}

void FiniteHmm::sample_initial(RngStream& rng, std::span<double> out) const {
  out[0] = cdf_draw(init_cdf_.data(), states_, rng.next_unit());
}

double FiniteHmm::initial_log_density(std::span<const double> x) const {
  return portable_log(initial_[state_index(x)]);
}

double FiniteHmm::log_potential(long p, std::span<const double> x) const {
  return log_potential_state(p, state_index(x));
}

void FiniteHmm::sample_transition(long p, std::span<const double> prev,
                                  RngStream& rng, std::span<double> out) const {
  (void)p;
  int s = state_index(prev);
  const double* row = trans_cdf_.data() + static_cast<std::size_t>(s) * states_;
  out[0] = cdf_draw(row, states_, rng.next_unit());
}

double FiniteHmm::transition_log_density(long p, std::span<const double> prev,
                                         std::span<const double> cur) const {
  (void)p;
  return log_transition(state_index(prev), state_index(cur));
}

// ---- GaussianRwHmm ----

GaussianRwHmm::GaussianRwHmm(int d_x, double delta0, double sigma_y2,
                             ObsMap h_obs,
                             std::vector<std::vector<double>> observations,
                             double delta)
    : d_x_(d_x),
      delta0_(delta0),
      sigma_y2_(sigma_y2),
      h_obs_(h_obs),
      obs_(std::move(observations)) {
  if (d_x_ < 1) throw ValidationError("gaussian_rw: d_x must be >= 1");
  if (!(delta0_ > 1.0)) {
    throw ValidationError("gaussian_rw: delta0 = " + format_double(delta0_) +
                          " rejected, the drift scale requires delta0 > 1");
  }
  if (!(sigma_y2_ > 0.0)) throw ValidationError("gaussian_rw: sigma_y2 must be > 0");
  if (obs_.empty()) throw ValidationError("gaussian_rw: empty observations");
  const std::size_t d_y = obs_[0].size();
  if (d_y == 0) throw ValidationError("gaussian_rw: empty observation rows");
  if (d_y > 64) throw ValidationError("gaussian_rw: d_y > 64 not supported");
  if (h_obs_ != ObsMap::Zero && d_y != static_cast<std::size_t>(d_x_)) {
    throw ValidationError("gaussian_rw: componentwise observation map needs d_y = d_x");
  }
  for (std::size_t p = 0; p < obs_.size(); ++p) {
    if (obs_[p].size() != d_y) {
      throw ValidationError("gaussian_rw: observation row " + std::to_string(p) +
                            " has inconsistent dimension");
    }
  }
  log_norm_g_ = -0.5 * static_cast<double>(d_y) * (kLog2Pi + portable_log(sigma_y2_));
  drift_ = quadratic_drift(delta0_, delta);
}

void GaussianRwHmm::apply_obs_map(std::span<const double> x,
                                  std::span<double> out) const {
  switch (h_obs_) {
    case ObsMap::Tanh:
      for (std::size_t k = 0; k < out.size(); ++k) out[k] = portable_tanh(x[k]);
      break;
    case ObsMap::Identity:
      for (std::size_t k = 0; k < out.size(); ++k) out[k] = x[k];
      break;
    case ObsMap::Zero:
      for (std::size_t k = 0; k < out.size(); ++k) out[k] = 0.0;
      break;
  }
}

void GaussianRwHmm::sample_initial(RngStream& rng, std::span<double> out) const {
  rng.fill_gaussian(out.data(), out.size());
}

double GaussianRwHmm::initial_log_density(std::span<const double> x) const {
  double s = 0.0;
  for (double v : x) s += v * v;
  return -0.5 * d_x_ * kLog2Pi - 0.5 * s;
}

double GaussianRwHmm::log_potential(long p, std::span<const double> x) const {
  check_time(p);
  const auto& y = obs_[static_cast<std::size_t>(p)];
  double h[64];
  std::span<double> hs(h, y.size());
  apply_obs_map(x, hs);
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) s += sq(y[k] - h[k]);
  return log_norm_g_ - 0.5 * s / sigma_y2_;
}

void GaussianRwHmm::sample_transition(long p, std::span<const double> prev,
                                      RngStream& rng,
                                      std::span<double> out) const {
  (void)p;
  rng.fill_gaussian(out.data(), out.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += prev[k];
}

double GaussianRwHmm::transition_log_density(long p, std::span<const double> prev,
                                             std::span<const double> cur) const {
  (void)p;
  double s = 0.0;
  for (std::size_t k = 0; k < cur.size(); ++k) s += sq(cur[k] - prev[k]);
  return -0.5 * d_x_ * kLog2Pi - 0.5 * s;
}

void GaussianRwHmm::backward_log_weights(long p, const double* prev,
                                         std::size_t n,
                                         std::span<const double> glog,
                                         std::span<const double> target,
                                         double* logw) const {
  (void)p;
  const double c = -0.5 * d_x_ * kLog2Pi;
  if (d_x_ == 1) {
    const double t = target[0];
    for (std::size_t i = 0; i < n; ++i) {
      double dx = prev[i] - t;
      logw[i] = glog[i] + c - 0.5 * dx * dx;
    }
    return;
  }
  const int d = d_x_;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    const double* xi = prev + i * d;
    for (int k = 0; k < d; ++k) s += sq(xi[k] - target[k]);
    logw[i] = glog[i] + c - 0.5 * s;
  }
}

// ---- BernoulliHmm ----

BernoulliHmm::BernoulliHmm(int d_x, std::vector<std::vector<double>> observations,
                           double delta0, double delta)
    : d_x_(d_x), delta0_(delta0), obs_(std::move(observations)) {
  if (d_x_ < 1) throw ValidationError("bernoulli: d_x must be >= 1");
  if (!(delta0_ > 1.0)) throw ValidationError("bernoulli: delta0 must be > 1");
  if (obs_.empty()) throw ValidationError("bernoulli: empty observations");
  for (std::size_t p = 0; p < obs_.size(); ++p) {
    if (obs_[p].size() != static_cast<std::size_t>(d_x_)) {
      throw ValidationError("bernoulli: observation row " + std::to_string(p) +
                            " has dimension " + std::to_string(obs_[p].size()) +
                            ", expected " + std::to_string(d_x_));
    }
    for (double v : obs_[p]) {
      if (v != 0.0 && v != 1.0) {
        throw ValidationError("bernoulli: observations must be 0/1, got " +
                              format_double(v) + " at p=" + std::to_string(p));
      }
    }
  }
  drift_ = quadratic_drift(delta0_, delta);
}

void BernoulliHmm::sample_initial(RngStream& rng, std::span<double> out) const {
  rng.fill_gaussian(out.data(), out.size());
}

double BernoulliHmm::initial_log_density(std::span<const double> x) const {
  double s = 0.0;
  for (double v : x) s += v * v;
  return -0.5 * d_x_ * kLog2Pi - 0.5 * s;
}

double BernoulliHmm::log_potential(long p, std::span<const double> x) const {
  check_time(p);
  const auto& y = obs_[static_cast<std::size_t>(p)];
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    // log sigma(x) = -softplus(-x); log(1 - sigma(x)) = -softplus(x)
    s -= portable_softplus(y[k] == 1.0 ? -x[k] : x[k]);
  }
  return s;
}

void BernoulliHmm::sample_transition(long p, std::span<const double> prev,
                                     RngStream& rng, std::span<double> out) const {
  (void)p;
  rng.fill_gaussian(out.data(), out.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += prev[k];
}

double BernoulliHmm::transition_log_density(long p, std::span<const double> prev,
                                            std::span<const double> cur) const {
  (void)p;
  double s = 0.0;
  for (std::size_t k = 0; k < cur.size(); ++k) s += sq(cur[k] - prev[k]);
  return -0.5 * d_x_ * kLog2Pi - 0.5 * s;
}

void BernoulliHmm::backward_log_weights(long p, const double* prev, std::size_t n,
                                        std::span<const double> glog,
                                        std::span<const double> target,
                                        double* logw) const {
  (void)p;
  const double c = -0.5 * d_x_ * kLog2Pi;
  if (d_x_ == 1) {
    const double t = target[0];
    for (std::size_t i = 0; i < n; ++i) {
      double dx = prev[i] - t;
      logw[i] = glog[i] + c - 0.5 * dx * dx;
    }
    return;
  }
  const int d = d_x_;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    const double* xi = prev + i * d;
    for (int k = 0; k < d; ++k) s += sq(xi[k] - target[k]);
    logw[i] = glog[i] + c - 0.5 * s;
  }
}

// ---- LinearGaussianHmm ----

LinearGaussianHmm::LinearGaussianHmm(double a, double sigma_x2, double c,
                                     double sigma_y2,
                                     std::vector<double> observations, double m0,
                                     double p0, double delta0, double delta)
    : a_(a),
      sigma_x2_(sigma_x2),
      c_(c),
      sigma_y2_(sigma_y2),
      m0_(m0),
      p0_(p0),
      obs_(std::move(observations)) {
  if (!(sigma_x2_ > 0.0)) throw ValidationError("linear_gaussian: sigma_x2 must be > 0");
  if (!(sigma_y2_ > 0.0)) throw ValidationError("linear_gaussian: sigma_y2 must be > 0");
  if (!(p0_ > 0.0)) throw ValidationError("linear_gaussian: p0 must be > 0");
  if (obs_.empty()) throw ValidationError("linear_gaussian: empty observations");
  log_norm_x_ = -0.5 * (kLog2Pi + portable_log(sigma_x2_));
  log_norm_y_ = -0.5 * (kLog2Pi + portable_log(sigma_y2_));
  log_norm_0_ = -0.5 * (kLog2Pi + portable_log(p0_));
  drift_ = quadratic_drift(delta0, delta);
}

void LinearGaussianHmm::sample_initial(RngStream& rng,
                                       std::span<double> out) const {
  out[0] = m0_ + std::sqrt(p0_) * rng.next_gaussian();
}

double LinearGaussianHmm::initial_log_density(std::span<const double> x) const {
  return log_norm_0_ - 0.5 * sq(x[0] - m0_) / p0_;
}

double LinearGaussianHmm::log_potential(long p, std::span<const double> x) const {
  check_time(p);
  return log_norm_y_ - 0.5 * sq(obs_[static_cast<std::size_t>(p)] - c_ * x[0]) / sigma_y2_;
}

void LinearGaussianHmm::sample_transition(long p, std::span<const double> prev,
                                          RngStream& rng,
                                          std::span<double> out) const {
  (void)p;
  out[0] = a_ * prev[0] + std::sqrt(sigma_x2_) * rng.next_gaussian();
}

double LinearGaussianHmm::transition_log_density(long p,
                                                 std::span<const double> prev,
                                                 std::span<const double> cur) const {
  (void)p;
  return log_norm_x_ - 0.5 * sq(cur[0] - a_ * prev[0]) / sigma_x2_;
}

void LinearGaussianHmm::backward_log_weights(long p, const double* prev,
                                             std::size_t n,
                                             std::span<const double> glog,
                                             std::span<const double> target,
                                             double* logw) const {
  (void)p;
  const double t = target[0];
  const double inv2 = 0.5 / sigma_x2_;
  const double ln = log_norm_x_;
  const double a = a_;
  for (std::size_t i = 0; i < n; ++i) {
    double dx = t - a * prev[i];
    logw[i] = glog[i] + ln - inv2 * dx * dx;
  }
}

// ---- builders ----

FiniteHmm make_finite_hmm(int states, std::vector<double> initial,
                          std::vector<std::vector<double>> transition,
                          std::vector<std::vector<double>> potentials) {
  const auto S = static_cast<std::size_t>(states < 0 ? 0 : states);
  if (transition.size() != S) {
    throw ValidationError("transition matrix has " +
                          std::to_string(transition.size()) + " rows, expected " +
                          std::to_string(states));
  }
  std::vector<double> flat;
  flat.reserve(S * S);
  for (std::size_t r = 0; r < S; ++r) {
    if (transition[r].size() != S) {
      throw ValidationError("transition row " + std::to_string(r) + " has " +
                            std::to_string(transition[r].size()) +
                            " entries, expected " + std::to_string(states));
    }
    flat.insert(flat.end(), transition[r].begin(), transition[r].end());
  }
  return FiniteHmm(states, std::move(initial), std::move(flat),
                   std::move(potentials));
}

FiniteHmm make_finite_hmm(int states, std::vector<double> initial,
                          std::vector<std::vector<double>> transition,
                          std::function<double(long, int)> log_potential_fn,
                          long horizon) {
  const auto S = static_cast<std::size_t>(states < 0 ? 0 : states);
  if (transition.size() != S) {
    throw ValidationError("transition matrix has " +
                          std::to_string(transition.size()) + " rows, expected " +
                          std::to_string(states));
  }
  std::vector<double> flat;
  flat.reserve(S * S);
  for (std::size_t r = 0; r < S; ++r) {
    if (transition[r].size() != S) {
      throw ValidationError("transition row " + std::to_string(r) + " has " +
                            std::to_string(transition[r].size()) +
                            " entries, expected " + std::to_string(states));
    }
    flat.insert(flat.end(), transition[r].begin(), transition[r].end());
  }
  return FiniteHmm(states, std::move(initial), std::move(flat),
                   std::move(log_potential_fn), horizon);
}

GaussianRwHmm make_gaussian_rw_hmm(int d_x, double delta0, double sigma_y2,
                                   ObsMap h_obs,
                                   std::vector<std::vector<double>> observations,
                                   double delta) {
  return GaussianRwHmm(d_x, delta0, sigma_y2, h_obs, std::move(observations),
                       delta);
}

BernoulliHmm make_bernoulli_hmm(int d_x,
                                std::vector<std::vector<double>> observations,
                                double delta0, double delta) {
  return BernoulliHmm(d_x, std::move(observations), delta0, delta);
}

LinearGaussianHmm make_linear_gaussian_hmm(double a, double sigma_x2, double c,
                                           double sigma_y2,
                                           std::vector<double> observations,
                                           double m0, double p0, double delta0,
                                           double delta) {
  return LinearGaussianHmm(a, sigma_x2, c, sigma_y2, std::move(observations), m0,
                           p0, delta0, delta);
}

// ---- simulation ----

SimulatedData simulate_gaussian_rw(int d_x, double sigma_y2, ObsMap h_obs,
                                   long n, std::uint64_t seed) {
  if (n <= 0) throw ValidationError("simulate: n must be positive");
  if (d_x < 1) throw ValidationError("simulate: d_x must be >= 1");
  if (!(sigma_y2 > 0.0)) throw ValidationError("simulate: sigma_y2 must be > 0");
  RngPolicy policy{seed};
  SimulatedData out;
  out.states.assign(static_cast<std::size_t>(n), std::vector<double>(d_x));
  out.observations.assign(static_cast<std::size_t>(n), std::vector<double>(d_x));
  const double sy = std::sqrt(sigma_y2);
  std::vector<double> h(d_x);
  for (long p = 0; p < n; ++p) {
    auto rng = policy.stream(0, static_cast<std::uint64_t>(p), 0, RngPhase::Simulate);
    auto& x = out.states[static_cast<std::size_t>(p)];
    rng.fill_gaussian(x.data(), x.size());
    if (p > 0) {
      const auto& xp = out.states[static_cast<std::size_t>(p - 1)];
      for (int k = 0; k < d_x; ++k) x[k] += xp[k];
    }
    switch (h_obs) {
      case ObsMap::Tanh:
        for (int k = 0; k < d_x; ++k) h[k] = portable_tanh(x[k]);
        break;
      case ObsMap::Identity:
        for (int k = 0; k < d_x; ++k) h[k] = x[k];
        break;
      case ObsMap::Zero:
        for (int k = 0; k < d_x; ++k) h[k] = 0.0;
        break;
    }
    auto& y = out.observations[static_cast<std::size_t>(p)];
    rng.fill_gaussian(y.data(), y.size());
    for (int k = 0; k < d_x; ++k) y[k] = h[k] + sy * y[k];
  }
  return out;
}

SimulatedData simulate_bernoulli(int d_x, long n, std::uint64_t seed) {
  if (n <= 0) throw ValidationError("simulate: n must be positive");
  if (d_x < 1) throw ValidationError("simulate: d_x must be >= 1");
  RngPolicy policy{seed};
  SimulatedData out;
  out.states.assign(static_cast<std::size_t>(n), std::vector<double>(d_x));
  out.observations.assign(static_cast<std::size_t>(n), std::vector<double>(d_x));
  for (long p = 0; p < n; ++p) {
    auto rng = policy.stream(0, static_cast<std::uint64_t>(p), 0, RngPhase::Simulate);
    auto& x = out.states[static_cast<std::size_t>(p)];
    rng.fill_gaussian(x.data(), x.size());
    if (p > 0) {
      const auto& xp = out.states[static_cast<std::size_t>(p - 1)];
      for (int k = 0; k < d_x; ++k) x[k] += xp[k];
    }
    auto& y = out.observations[static_cast<std::size_t>(p)];
    for (int k = 0; k < d_x; ++k) {
      double prob = 1.0 / (1.0 + portable_exp(-x[k]));
      y[k] = rng.next_unit() < prob ? 1.0 : 0.0;
    }
  }
  return out;
}

SimulatedData simulate_linear_gaussian(double a, double sigma_x2, double c,
                                       double sigma_y2, double m0, double p0,
                                       long n, std::uint64_t seed) {
  if (n <= 0) throw ValidationError("simulate: n must be positive");
  if (!(sigma_x2 > 0.0) || !(sigma_y2 > 0.0) || !(p0 > 0.0)) {
    throw ValidationError("simulate: variances must be positive");
  }
  RngPolicy policy{seed};
  SimulatedData out;
  out.states.assign(static_cast<std::size_t>(n), std::vector<double>(1));
  out.observations.assign(static_cast<std::size_t>(n), std::vector<double>(1));
  const double sx = std::sqrt(sigma_x2), sy = std::sqrt(sigma_y2);
  for (long p = 0; p < n; ++p) {
    auto rng = policy.stream(0, static_cast<std::uint64_t>(p), 0, RngPhase::Simulate);
    double x;
    if (p == 0) {
      x = m0 + std::sqrt(p0) * rng.next_gaussian();
    } else {
      x = a * out.states[static_cast<std::size_t>(p - 1)][0] + sx * rng.next_gaussian();
    }
    out.states[static_cast<std::size_t>(p)][0] = x;
    out.observations[static_cast<std::size_t>(p)][0] = c * x + sy * rng.next_gaussian();
  }
  return out;
}

// ---- additive functional probes ----

AdditiveFunctional make_coordinate_probe(int index, double center) {
  AdditiveFunctional f;
  f.name = "coordinate";
  f.term = [index, center](long, std::span<const double> x) {
    if (index < 0 || static_cast<std::size_t>(index) >= x.size()) {
      throw ValidationError("coordinate probe index " + std::to_string(index) +
                            " out of range for state dimension " +
                            std::to_string(x.size()));
    }
    return x[static_cast<std::size_t>(index)] - center;
  };
  return f;
}

AdditiveFunctional make_indicator_probe(int state, double center) {
  AdditiveFunctional f;
  f.name = "indicator";
  f.term = [state, center](long, std::span<const double> x) {
    int s = static_cast<int>(x[0] >= 0 ? x[0] + 0.5 : x[0] - 0.5);
    return (s == state ? 1.0 : 0.0) - center;
  };
  return f;
}

AdditiveFunctional make_tanh_probe(int index, double scale) {
  AdditiveFunctional f;
  f.name = "tanh";
  f.term = [index, scale](long, std::span<const double> x) {
    if (index < 0 || static_cast<std::size_t>(index) >= x.size()) {
      throw ValidationError("tanh probe index out of range");
    }
    return scale * portable_tanh(x[static_cast<std::size_t>(index)]);
  };
  return f;
}

AdditiveFunctional make_table_probe(std::vector<double> xs,
                                    std::vector<double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw ValidationError("table probe needs matching x/y arrays with >= 2 knots");
  }
  for (std::size_t k = 1; k < xs.size(); ++k) {
    if (!(xs[k] > xs[k - 1])) {
      throw ValidationError("table probe knots must be strictly increasing");
    }
  }
  AdditiveFunctional f;
  f.name = "table";
  f.term = [xs = std::move(xs), ys = std::move(ys)](long,
                                                    std::span<const double> x) {
    double v = x[0];
    if (v <= xs.front()) return ys.front();
    if (v >= xs.back()) return ys.back();
    auto it = std::upper_bound(xs.begin(), xs.end(), v);
    std::size_t hi = static_cast<std::size_t>(it - xs.begin());
    std::size_t lo = hi - 1;
    double w = (v - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + w * (ys[hi] - ys[lo]);
  };
  return f;
}

AdditiveFunctional make_constant_probe(double value) {
  AdditiveFunctional f;
  f.name = "constant";
  f.term = [value](long, std::span<const double>) { return value; };
  return f;
}

double sup_norm_report(const AdditiveFunctional& f, const Model& model, long n,
                       const std::vector<double>& grid) {
  const DriftSpec* d = model.drift();
  double sup = 0.0;
  auto visit = [&](std::span<const double> x) {
    double vpow = 1.0;
    if (d && d->V) vpow = portable_exp(f.alpha * d->V(x));
    for (long p = 0; p <= n; ++p) {
      double val = std::abs(f(p, x)) / vpow;
      if (val > sup) sup = val;
    }
  };
  if (const FiniteHmm* fin = model.finite()) {
    for (int s = 0; s < fin->size(); ++s) {
      double xs = s;
      visit(std::span<const double>(&xs, 1));
    }
  } else {
    if (model.state_dim() != 1) {
      throw ValidationError("sup_norm_report grid path supports d_x = 1");
    }
    for (double g : grid) visit(std::span<const double>(&g, 1));
  }
  return sup;
}

// ---- Kalman / RTS ----

KalmanRtsMoments kalman_rts_moments(const LinearGaussianHmm& m, long n) {
  if (n < 0) throw ValidationError("kalman: n must be >= 0");
  if (n > m.horizon()) {
    throw ValidationError("kalman: horizon n=" + std::to_string(n) +
                          " exceeds data length " + std::to_string(m.horizon()));
  }
  const double a = m.a(), c = m.c(), sx2 = m.sigma_x2(), sy2 = m.sigma_y2();
  const auto& y = m.observations();
  KalmanRtsMoments out;
  out.pred_mean.resize(static_cast<std::size_t>(n) + 1);
  out.pred_var.resize(static_cast<std::size_t>(n) + 1);
  out.filt_mean.resize(static_cast<std::size_t>(n));
  out.filt_var.resize(static_cast<std::size_t>(n));
  out.pred_mean[0] = m.m0();
  out.pred_var[0] = m.p0();
  double ll = 0.0;
  for (long p = 0; p < n; ++p) {
    const auto ip = static_cast<std::size_t>(p);
    double pm = out.pred_mean[ip], pv = out.pred_var[ip];
    double s = c * c * pv + sy2;
    double innov = y[ip] - c * pm;
    ll += -0.5 * (kLog2Pi + portable_log(s)) - 0.5 * innov * innov / s;
    double k = pv * c / s;
    double fm = pm + k * innov;
    double fv = (1.0 - k * c) * pv;
    out.filt_mean[ip] = fm;
    out.filt_var[ip] = fv;
    out.pred_mean[ip + 1] = a * fm;
    out.pred_var[ip + 1] = a * a * fv + sx2;
  }
  out.log_likelihood = ll;
  out.smooth_mean.resize(static_cast<std::size_t>(n) + 1);
  out.smooth_var.resize(static_cast<std::size_t>(n) + 1);
  out.smooth_mean[static_cast<std::size_t>(n)] = out.pred_mean[static_cast<std::size_t>(n)];
  out.smooth_var[static_cast<std::size_t>(n)] = out.pred_var[static_cast<std::size_t>(n)];
  for (long p = n - 1; p >= 0; --p) {
    const auto ip = static_cast<std::size_t>(p);
    double ck = out.filt_var[ip] * a / out.pred_var[ip + 1];
    out.smooth_mean[ip] =
        out.filt_mean[ip] + ck * (out.smooth_mean[ip + 1] - out.pred_mean[ip + 1]);
    out.smooth_var[ip] =
        out.filt_var[ip] + ck * ck * (out.smooth_var[ip + 1] - out.pred_var[ip + 1]);
  }
  return out;
}

}  // namespace fk
