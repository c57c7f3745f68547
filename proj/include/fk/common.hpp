#pragma once

// Shared basics: error types, portable elementary functions, fixed-order
// reductions, a small parallel_for, and float formatting for stable output.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fk {

inline constexpr const char* kVersion = "0.1.0";

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad input: configs, shapes, parameter ranges. CLI exit code 1.
struct ValidationError : Error {
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Numeric degeneracy: particle collapse, degenerate flow, singular backward
// kernels. CLI exit code 3.
struct SingularityError : Error {
  explicit SingularityError(const std::string& msg) : Error(msg) {}
};

// ---- portable elementary functions ----
//
// Results must be bit-identical across runs and platforms, and exp sits inside
// an O(N^2) loop, so we do not call libm here. Cephes-style rational
// approximations, accurate to ~1-2 ulp, written so the batch versions
// auto-vectorize.

namespace detail {

inline double exp_core(double x) {
  // valid for |x| <= 710 after the caller's clamping; no special values
  constexpr double kLog2E = 1.4426950408889634074;
  constexpr double kC1 = 6.93145751953125e-1;
  constexpr double kC2 = 1.42860682030941723212e-6;
  double nf = std::floor(kLog2E * x + 0.5);
  double r = x - nf * kC1;
  r -= nf * kC2;
  double rr = r * r;
  double px = r * (1.26177193074810590878e-4 * rr * rr +
                   3.02994407707441961300e-2 * rr +
                   9.99999999999999999910e-1);
  double qx = 3.00198505138664455042e-6 * rr * rr * rr +
              2.52448340349684104192e-3 * rr * rr +
              2.27265548208155028766e-1 * rr + 2.00000000000000000005e0;
  double e = 1.0 + 2.0 * px / (qx - px);
  // scale by 2^n, split so subnormal results round correctly
  long long n = static_cast<long long>(nf);
  long long n1 = n < -1000 ? -1000 : (n > 1000 ? 1000 : n);
  long long n2 = n - n1;
  auto pow2 = [](long long k) {
    return std::bit_cast<double>(static_cast<std::uint64_t>(k + 1023) << 52);
  };
  return e * pow2(n1) * pow2(n2);
}

}  // namespace detail

inline double portable_exp(double x) {
  if (x != x) return x;
  if (x > 709.782712893384) return kInf;
  if (x < -745.2) return 0.0;
  return detail::exp_core(x);
}

// out[i] = exp(in[i] + shift); -inf maps to 0. Written branch-light so the
// compiler vectorizes it.
inline void exp_batch_shift(const double* in, double* out, std::size_t n,
                            double shift) {
  for (std::size_t i = 0; i < n; ++i) {
    double x = in[i] + shift;
    double xc = x < -745.2 ? -745.2 : (x > 709.7 ? 709.7 : x);
    double e = detail::exp_core(xc);
    out[i] = x < -745.2 ? 0.0 : e;
  }
}

inline double portable_log(double x) {
  if (x != x) return x;
  if (x < 0.0) return kNaN;
  if (x == 0.0) return kNegInf;
  if (x == kInf) return kInf;
  constexpr double kSqrtH = 0.70710678118654752440;
  int e = 0;
  double m = std::frexp(x, &e);  // m in [0.5, 1)
  if (m < kSqrtH) {
    m = 2.0 * m;
    e -= 1;
  }
  // log(m) = 2 atanh(s), s = (m-1)/(m+1); |s| <= 0.1716 here, so eleven
  // odd terms reach ~1e-18 relative truncation. Exact 1/(2k+1) coefficients.
  double f = m - 1.0;
  double s = f / (2.0 + f);
  double s2 = s * s;
  double t = 1.0 / 21.0;
  t = t * s2 + 1.0 / 19.0;
  t = t * s2 + 1.0 / 17.0;
  t = t * s2 + 1.0 / 15.0;
  t = t * s2 + 1.0 / 13.0;
  t = t * s2 + 1.0 / 11.0;
  t = t * s2 + 1.0 / 9.0;
  t = t * s2 + 1.0 / 7.0;
  t = t * s2 + 1.0 / 5.0;
  t = t * s2 + 1.0 / 3.0;
  double series = 2.0 * s + 2.0 * s * s2 * t;
  // ln 2 split as an exact binary value plus a small residual, so the
  // exponent contribution rounds once
  double ef = static_cast<double>(e);
  double r = series - ef * 2.121944400546905827679e-4;
  r += ef * 0.693359375;
  return r;
}

inline double portable_log1p(double u) {
  double au = u < 0 ? -u : u;
  if (au < 1e-4) {
    return u * (1.0 + u * (-0.5 + u * (1.0 / 3.0 + u * -0.25)));
  }
  return portable_log(1.0 + u);
}

inline double portable_expm1(double x) {
  double ax = x < 0 ? -x : x;
  if (ax < 1e-5) {
    return x * (1.0 + x * (0.5 + x * (1.0 / 6.0 + x / 24.0)));
  }
  return portable_exp(x) - 1.0;
}

inline double portable_tanh(double x) {
  if (x != x) return x;
  if (x > 20.0) return 1.0;
  if (x < -20.0) return -1.0;
  double t = portable_expm1(2.0 * x);
  return t / (t + 2.0);
}

// log(1 + e^x), stable on both tails
inline double portable_softplus(double x) {
  if (x > 0.0) return x + portable_log1p(portable_exp(-x));
  return portable_log1p(portable_exp(x));
}

// ---- fixed-order reductions ----
//
// Eight striped accumulators combined in a fixed order: vectorizes without
// -ffast-math and gives the same bits no matter the thread count or ISA.

namespace detail {
constexpr std::size_t kLanes = 8;
}

inline double striped_max(const double* w, std::size_t n) {
  double m[detail::kLanes];
  for (auto& v : m) v = kNegInf;
  std::size_t i = 0;
  for (; i + detail::kLanes <= n; i += detail::kLanes) {
    for (std::size_t l = 0; l < detail::kLanes; ++l) {
      double x = w[i + l];
      m[l] = x > m[l] ? x : m[l];
    }
  }
  double r = kNegInf;
  for (std::size_t l = 0; l < detail::kLanes; ++l) r = m[l] > r ? m[l] : r;
  for (; i < n; ++i) r = w[i] > r ? w[i] : r;
  return r;
}

inline double striped_sum(const double* w, std::size_t n) {
  double a[detail::kLanes] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + detail::kLanes <= n; i += detail::kLanes)
    for (std::size_t l = 0; l < detail::kLanes; ++l) a[l] += w[i + l];
  double r = 0.0;
  for (std::size_t l = 0; l < detail::kLanes; ++l) r += a[l];
  for (; i < n; ++i) r += w[i];
  return r;
}

// num = sum w[i]*f[i], den = sum w[i], both in the same fixed stripe order.
inline void striped_dot2(const double* w, const double* f, std::size_t n,
                         double& num_out, double& den_out) {
  double num[detail::kLanes] = {0, 0, 0, 0, 0, 0, 0, 0};
  double den[detail::kLanes] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + detail::kLanes <= n; i += detail::kLanes) {
    for (std::size_t l = 0; l < detail::kLanes; ++l) {
      num[l] += w[i + l] * f[i + l];
      den[l] += w[i + l];
    }
  }
  double ns = 0.0, ds = 0.0;
  for (std::size_t l = 0; l < detail::kLanes; ++l) {
    ns += num[l];
    ds += den[l];
  }
  for (; i < n; ++i) {
    ns += w[i] * f[i];
    ds += w[i];
  }
  num_out = ns;
  den_out = ds;
}

// log sum_i exp(w[i]) with max shift; -inf when all terms vanish.
inline double log_sum_exp(std::span<const double> w) {
  if (w.empty()) return kNegInf;
  double m = striped_max(w.data(), w.size());
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : w) s += portable_exp(x - m);
  return m + portable_log(s);
}

// ---- parallel_for ----
//
// Contiguous chunks; fn(begin, end) must write disjoint slots. Results are
// thread-count independent as long as fn itself is index-deterministic.

inline void parallel_for(std::size_t total, int threads,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  if (total == 0) return;
  std::size_t t = threads <= 1 ? 1 : static_cast<std::size_t>(threads);
  if (t > total) t = total;
  if (t == 1) {
    fn(0, total);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t - 1);
  std::size_t chunk = (total + t - 1) / t;
  for (std::size_t k = 1; k < t; ++k) {
    std::size_t b = k * chunk;
    std::size_t e = b + chunk < total ? b + chunk : total;
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(0, chunk < total ? chunk : total);
  for (auto& th : pool) th.join();
}

// ---- formatting ----

// 17 significant digits: round-trips any double, byte-stable across runs.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_int(long long v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld", v);
  return buf;
}

}  // namespace fk
