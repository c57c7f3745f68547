#include "fk/oracle.hpp"

#include <cmath>
#include <string>

namespace fk::oracle {

namespace {

void check_horizon(const FiniteHmm& model, long n) {
  if (n < 0) throw ValidationError("oracle: horizon n must be >= 0");
  if (n > model.horizon()) {
    throw ValidationError("oracle: horizon n=" + std::to_string(n) +
                          " exceeds the model's data horizon T=" +
                          std::to_string(model.horizon()));
  }
}

double state_value(int s) { return static_cast<double>(s); }

double eval_term(const AdditiveFunctional& f, long p, int s) {
  double x = state_value(s);
  return f(p, std::span<const double>(&x, 1));
}

}  // namespace

Flow forward_flow(const FiniteHmm& model, long n) {
  check_horizon(model, n);
  const int S = model.size();
  Flow out;
  out.eta.reserve(static_cast<std::size_t>(n) + 1);
  out.eta.push_back(model.initial());
  out.lambda.reserve(static_cast<std::size_t>(n));
  double log_gamma = 0.0;
  for (long p = 0; p < n; ++p) {
    const auto& eta = out.eta.back();
    std::vector<double> w(S);
    double lam = 0.0;
    for (int s = 0; s < S; ++s) {
      w[s] = eta[s] * model.potential_state(p, s);
      lam += w[s];
    }
    if (!(lam > 0.0)) {
      throw SingularityError("flow degenerate at p=" + std::to_string(p) +
                             ": eta_p(G_p) = 0");
    }
    std::vector<double> next(S, 0.0);
    for (int s = 0; s < S; ++s) {
      if (w[s] == 0.0) continue;
      double ws = w[s] / lam;
      for (int y = 0; y < S; ++y) next[y] += ws * model.transition_prob(s, y);
    }
    out.lambda.push_back(lam);
    log_gamma += portable_log(lam);
    out.eta.push_back(std::move(next));
  }
  out.log_gamma_n = log_gamma;
  return out;
}

PathExpectation enumerate_paths(
    const FiniteHmm& model, long n,
    const std::function<double(std::span<const int>)>& path_functional) {
  check_horizon(model, n);
  const int S = model.size();
  double count = std::pow(static_cast<double>(S), static_cast<double>(n) + 1.0);
  if (count > 1e7) {
    throw ValidationError("enumerate_paths: S^(n+1) = " + format_double(count) +
                          " exceeds the 1e7 guard");
  }
  // potentials and transition cached in linear scale
  std::vector<std::vector<double>> pot(static_cast<std::size_t>(n));
  for (long p = 0; p < n; ++p) {
    pot[static_cast<std::size_t>(p)].resize(S);
    for (int s = 0; s < S; ++s) {
      pot[static_cast<std::size_t>(p)][s] = model.potential_state(p, s);
    }
  }
  std::vector<int> path(static_cast<std::size_t>(n) + 1, 0);
  PathExpectation out;
  for (;;) {
    double w = model.initial()[path[0]];
    for (long p = 0; p < n; ++p) {
      const auto ip = static_cast<std::size_t>(p);
      w *= pot[ip][path[ip]];
      w *= model.transition_prob(path[ip], path[ip + 1]);
    }
    if (w != 0.0) {
      double fv = path_functional(path);
      out.normalizer += w;
      out.unnormalized += w * fv;
    }
    // odometer increment, last index fastest
    long k = n;
    while (k >= 0) {
      auto ik = static_cast<std::size_t>(k);
      if (++path[ik] < S) break;
      path[ik] = 0;
      --k;
    }
    if (k < 0) break;
  }
  if (!(out.normalizer > 0.0)) {
    throw SingularityError("enumerate_paths: gamma_n(1) = 0, flow degenerate");
  }
  out.normalized = out.unnormalized / out.normalizer;
  return out;
}

PathExpectation enumerate_paths(const FiniteHmm& model, long n,
                                const AdditiveFunctional& f) {
  return enumerate_paths(model, n, [&](std::span<const int> path) {
    double s = 0.0;
    for (long p = 0; p <= n; ++p) {
      s += eval_term(f, p, path[static_cast<std::size_t>(p)]);
    }
    return s;
  });
}

std::vector<std::vector<double>> backward_kernels(const FiniteHmm& model,
                                                  const Flow& flow, long n) {
  check_horizon(model, n);
  if (flow.eta.size() < static_cast<std::size_t>(n) + 1) {
    throw ValidationError("backward_kernels: flow shorter than horizon");
  }
  const int S = model.size();
  std::vector<std::vector<double>> kernels(static_cast<std::size_t>(n) + 1);
  for (long q = 1; q <= n; ++q) {
    const auto& eta_prev = flow.eta[static_cast<std::size_t>(q - 1)];
    std::vector<double> g(S);
    for (int s = 0; s < S; ++s) g[s] = model.potential_state(q - 1, s);
    auto& ker = kernels[static_cast<std::size_t>(q)];
    ker.assign(static_cast<std::size_t>(S) * S, 0.0);
    for (int x = 0; x < S; ++x) {
      double denom = 0.0;
      for (int xp = 0; xp < S; ++xp) {
        denom += eta_prev[xp] * g[xp] * model.transition_prob(xp, x);
      }
      if (!(denom > 0.0)) {
        throw SingularityError("backward kernel singular at q=" +
                               std::to_string(q) + ", state " + std::to_string(x) +
                               ": eta_{q-1}(G_{q-1} H_q(., x)) = 0");
      }
      for (int xp = 0; xp < S; ++xp) {
        ker[static_cast<std::size_t>(x) * S + xp] =
            eta_prev[xp] * g[xp] * model.transition_prob(xp, x) / denom;
      }
    }
  }
  return kernels;
}

SmootherResult smoother_expectation(const FiniteHmm& model, const Flow& flow,
                                    const AdditiveFunctional& f, long n) {
  check_horizon(model, n);
  const int S = model.size();
  auto kernels = backward_kernels(model, flow, n);
  SmootherResult out;
  out.cumulative.assign(static_cast<std::size_t>(n) + 1,
                        std::vector<double>(S, 0.0));
  for (long p = 1; p <= n; ++p) {
    const auto& ker = kernels[static_cast<std::size_t>(p)];
    const auto& prev = out.cumulative[static_cast<std::size_t>(p - 1)];
    auto& cur = out.cumulative[static_cast<std::size_t>(p)];
    for (int x = 0; x < S; ++x) {
      double acc = 0.0;
      for (int xp = 0; xp < S; ++xp) {
        acc += ker[static_cast<std::size_t>(x) * S + xp] *
               (eval_term(f, p - 1, xp) + prev[xp]);
      }
      cur[x] = acc;
    }
  }
  const auto& eta_n = flow.eta[static_cast<std::size_t>(n)];
  double v = 0.0;
  for (int x = 0; x < S; ++x) {
    v += eta_n[x] * (eval_term(f, n, x) +
                     out.cumulative[static_cast<std::size_t>(n)][x]);
  }
  out.value = v;
  return out;
}

SemigroupCache semigroup_cache(const FiniteHmm& model, const Flow& flow, long n) {
  check_horizon(model, n);
  const int S = model.size();
  SemigroupCache out;
  out.u_hat.assign(static_cast<std::size_t>(n) + 1, std::vector<double>(S, 1.0));
  out.log_scale.assign(static_cast<std::size_t>(n) + 1, 0.0);
  out.step_scale.assign(static_cast<std::size_t>(n), 0.0);
  out.log_eta_u.assign(static_cast<std::size_t>(n) + 1, 0.0);
  for (long p = n - 1; p >= 0; --p) {
    const auto ip = static_cast<std::size_t>(p);
    const auto& next = out.u_hat[ip + 1];
    std::vector<double> raw(S, 0.0);
    double mx = 0.0;
    for (int x = 0; x < S; ++x) {
      double acc = 0.0;
      for (int y = 0; y < S; ++y) acc += model.transition_prob(x, y) * next[y];
      raw[x] = model.potential_state(p, x) * acc;
      if (raw[x] > mx) mx = raw[x];
    }
    if (!(mx > 0.0)) {
      throw SingularityError("semigroup vanished at p=" + std::to_string(p) +
                             ": Q_{p,n}(1) = 0 everywhere");
    }
    for (int x = 0; x < S; ++x) raw[x] /= mx;
    out.u_hat[ip] = std::move(raw);
    out.step_scale[ip] = mx;
    out.log_scale[ip] = out.log_scale[ip + 1] + portable_log(mx);
  }
  for (long p = 0; p <= n; ++p) {
    const auto ip = static_cast<std::size_t>(p);
    const auto& eta = flow.eta[ip];
    double s = 0.0;
    for (int x = 0; x < S; ++x) s += eta[x] * out.u_hat[ip][x];
    if (!(s > 0.0)) {
      throw SingularityError("eta_p(Q_{p,n}(1)) = 0 at p=" + std::to_string(p));
    }
    out.log_eta_u[ip] = out.log_scale[ip] + portable_log(s);
  }
  return out;
}

namespace {

// Scaled forward sums: a_hat[p][x] with
//   sum_{q=p}^n Q_{p,q}(f_q Q_{q,n}(1))(x) = exp(log_scale[p]) * a_hat[p][x].
std::vector<std::vector<double>> forward_sums(const FiniteHmm& model,
                                              const SemigroupCache& sg,
                                              const AdditiveFunctional& f,
                                              long n,
                                              double f0_shift) {
  const int S = model.size();
  std::vector<std::vector<double>> a(static_cast<std::size_t>(n) + 1,
                                     std::vector<double>(S, 0.0));
  for (int x = 0; x < S; ++x) {
    a[static_cast<std::size_t>(n)][x] = eval_term(f, n, x) - (n == 0 ? f0_shift : 0.0);
  }
  for (long p = n - 1; p >= 0; --p) {
    const auto ip = static_cast<std::size_t>(p);
    const auto& next = a[ip + 1];
    for (int x = 0; x < S; ++x) {
      double acc = 0.0;
      for (int y = 0; y < S; ++y) acc += model.transition_prob(x, y) * next[y];
      double fp = eval_term(f, p, x) - (p == 0 ? f0_shift : 0.0);
      a[ip][x] = fp * sg.u_hat[ip][x] +
                 model.potential_state(p, x) * acc / sg.step_scale[ip];
    }
  }
  return a;
}

// Backward cumulative sums B_p for f with an optional shift on f_0.
std::vector<std::vector<double>> backward_sums(
    const FiniteHmm& model, const std::vector<std::vector<double>>& kernels,
    const AdditiveFunctional& f, long n, double f0_shift) {
  const int S = model.size();
  std::vector<std::vector<double>> b(static_cast<std::size_t>(n) + 1,
                                     std::vector<double>(S, 0.0));
  for (long p = 1; p <= n; ++p) {
    const auto ip = static_cast<std::size_t>(p);
    const auto& ker = kernels[ip];
    const auto& prev = b[ip - 1];
    for (int x = 0; x < S; ++x) {
      double acc = 0.0;
      for (int xp = 0; xp < S; ++xp) {
        double term = eval_term(f, p - 1, xp) - (p - 1 == 0 ? f0_shift : 0.0);
        acc += ker[static_cast<std::size_t>(x) * S + xp] * (term + prev[xp]);
      }
      b[ip][x] = acc;
    }
  }
  return b;
}

}  // namespace

VarianceBreakdown asymptotic_variance(const FiniteHmm& model,
                                      const AdditiveFunctional& f, long n) {
  check_horizon(model, n);
  const int S = model.size();
  Flow flow = forward_flow(model, n);
  SemigroupCache sg = semigroup_cache(model, flow, n);
  auto kernels = backward_kernels(model, flow, n);

  VarianceBreakdown out;
  out.per_p_terms.assign(static_cast<std::size_t>(n) + 1, 0.0);

  // section-3 form, uncentered f
  {
    auto b = backward_sums(model, kernels, f, n, 0.0);
    auto a = forward_sums(model, sg, f, n, 0.0);
    double total = 0.0;
    for (long p = 0; p <= n; ++p) {
      const auto ip = static_cast<std::size_t>(p);
      const auto& eta = flow.eta[ip];
      const auto& uh = sg.u_hat[ip];
      double eta_u = 0.0, eta_d = 0.0;
      for (int x = 0; x < S; ++x) {
        eta_u += eta[x] * uh[x];
        eta_d += eta[x] * (uh[x] * b[ip][x] + a[ip][x]);
      }
      if (!(eta_u > 0.0)) {
        throw SingularityError("eta_p(D_{p,n}(1)) = 0 at p=" + std::to_string(p));
      }
      double r = eta_d / eta_u;  // equals Q_n(F_n) analytically, at every p
      double term = 0.0;
      for (int x = 0; x < S; ++x) {
        // h_{p,n}(x) (P_{p,n}(F)(x) - r), written so states with a dead
        // future (u_hat = 0) contribute zero instead of 0/0
        double g = (uh[x] * b[ip][x] + a[ip][x] - uh[x] * r) / eta_u;
        term += eta[x] * g * g;
      }
      out.per_p_terms[ip] = term;
      total += term;
    }
    out.sigma2 = total;
  }

  // Var-sum form, f centered by the smoother value
  {
    SmootherResult sm = smoother_expectation(model, flow, f, n);
    out.smoother_value = sm.value;
    auto b = backward_sums(model, kernels, f, n, sm.value);
    auto a = forward_sums(model, sg, f, n, sm.value);
    double total = 0.0;
    for (long p = 0; p <= n; ++p) {
      const auto ip = static_cast<std::size_t>(p);
      const auto& eta = flow.eta[ip];
      const auto& uh = sg.u_hat[ip];
      double eta_u = 0.0;
      for (int x = 0; x < S; ++x) eta_u += eta[x] * uh[x];
      double mean = 0.0, mean2 = 0.0;
      for (int x = 0; x < S; ++x) {
        double ghat = (uh[x] * b[ip][x] + a[ip][x]) / eta_u;
        mean += eta[x] * ghat;
        mean2 += eta[x] * ghat * ghat;
      }
      total += mean2 - mean * mean;
    }
    out.sigma2_var_form = total;
  }

  double tol = 1e-9 * std::max({1.0, std::abs(out.sigma2),
                                std::abs(out.sigma2_var_form)});
  if (!(std::abs(out.sigma2 - out.sigma2_var_form) <= tol)) {
    throw Error("asymptotic variance forms disagree: " +
                format_double(out.sigma2) + " vs " +
                format_double(out.sigma2_var_form));
  }
  return out;
}

}  // namespace fk::oracle
