#include "fk/assumptions.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fk/common.hpp"
#include "fk/oracle.hpp"

namespace fk::assumptions {

namespace {

constexpr double kQuadTol = 1e-6;
constexpr long kQuadNodesBase = 513;
constexpr double kStabilityTol = 1e-9;
// A grid sup of a smooth statistic moves by O(h^2 |f''| / 8) when the grid is
// refined, so sup comparisons get a looser tolerance than exact reductions.
constexpr double kSupRefineTol = 1e-4;
constexpr int kMaxSupExtensions = 5;

const DriftSpec& require_drift(const Model& model) {
  const DriftSpec* ds = model.drift();
  if (ds == nullptr || !ds->V)
    throw ValidationError("model '" + model.name() + "' carries no drift data");
  return *ds;
}

void require_scalar_state(const Model& model) {
  if (model.state_dim() != 1)
    throw ValidationError("grid checks support one-dimensional state spaces; '" +
                          model.name() + "' has dimension " +
                          format_int(model.state_dim()));
}

double v_at(const DriftSpec& ds, double x) { return ds.V({&x, 1}); }

double log_pot_max(const Model& model, double x) {
  double m = kNegInf;
  for (long p = 0; p < model.horizon(); ++p)
    m = std::max(m, model.log_potential(p, {&x, 1}));
  return m;
}

double log_pot_min(const Model& model, double x) {
  double m = kInf;
  for (long p = 0; p < model.horizon(); ++p)
    m = std::min(m, model.log_potential(p, {&x, 1}));
  return m;
}

// log transition density between scalar points; prefers the axis profile
// over the per-pair virtual call when available
struct TransEval {
  bool has_profile{false};
  double scale{1.0}, var{1.0}, log_norm{0.0};
  const Model* model{nullptr};

  explicit TransEval(const Model& m) : model(&m) {
    if (auto ax = m.axis_transition()) {
      has_profile = true;
      scale = ax->scale;
      var = ax->var;
      log_norm = -0.5 * (kLog2Pi + portable_log(var));
    }
  }
  double operator()(double x, double y) const {
    if (has_profile) {
      const double dx = y - scale * x;
      return log_norm - dx * dx / (2.0 * var);
    }
    return model->transition_log_density(1, {&x, 1}, {&y, 1});
  }
};

// second difference estimate of V's quadratic growth coefficient (V'' for
// the quadratic family, 0 for constant V); sets the quadrature window
double v_curvature(const DriftSpec& ds) {
  const double L = 10.0;
  const double c2 = (v_at(ds, L) + v_at(ds, -L) - 2.0 * v_at(ds, 0.0)) / (L * L);
  return std::max(0.0, c2);
}

struct LogSimpson {
  double value{kNegInf};
  double mass_at_edge{kNegInf};  // max integrand at window ends, vs peak
};

LogSimpson log_simpson(double lo, double hi, long nodes,
                       const std::function<double(double)>& log_f) {
  if (nodes % 2 == 0) ++nodes;
  const double h = (hi - lo) / static_cast<double>(nodes - 1);
  static const double kLog4 = portable_log(4.0);
  static const double kLog2v = portable_log(2.0);
  std::vector<double> terms(nodes);
  double peak = kNegInf;
  for (long i = 0; i < nodes; ++i) {
    const double y = lo + h * static_cast<double>(i);
    const double lf = log_f(y);
    peak = std::max(peak, lf);
    double lw = 0.0;
    if (i != 0 && i != nodes - 1) lw = (i % 2 == 1) ? kLog4 : kLog2v;
    terms[i] = lf + lw;
  }
  LogSimpson out;
  out.value = portable_log(h / 3.0) + log_sum_exp(terms);
  out.mass_at_edge =
      std::max(log_f(lo), log_f(hi)) - peak;
  return out;
}

// integral of N(y; mean, var) e^{V(y)} dy for a general scalar V, window
// picked from the effective Gaussian after removing V's quadratic growth
LogSimpson log_drift_integral(double mean, double var, const DriftSpec& ds,
                              double curvature, long nodes) {
  const double prec = 1.0 / var - curvature;
  if (!(prec > 0.0)) return {kInf, 0.0};
  const double center = (mean / var) / prec;
  const double sd = 1.0 / std::sqrt(prec);
  const double halfw = 14.0 * std::max(sd, 1.0);
  const double log_norm = -0.5 * (kLog2Pi + portable_log(var));
  auto log_f = [&](double y) {
    const double dy = y - mean;
    return log_norm - dy * dy / (2.0 * var) + v_at(ds, y);
  };
  return log_simpson(center - halfw, center + halfw, nodes, log_f);
}

bool v_is_quadratic_family(const DriftSpec& ds) {
  const double c = 1.0 + ds.delta0;
  for (double x : {0.0, 1.7, -3.2, 8.1}) {
    const double ref = 1.0 + x * x / (2.0 * c);
    if (std::abs(v_at(ds, x) - ref) > 1e-9) return false;
  }
  return true;
}

struct DriftPass {
  double b_d{0.0};
  double worst_margin{kNegInf};
  double witness_x{kNaN};
  long outside_points{0};
  bool holds{false};
  QuadratureDiag quad;
};

DriftPass drift_pass_finite(const FiniteHmm& fh, const DriftSpec& ds, double d) {
  DriftPass out;
  const int s_count = fh.size();
  std::vector<double> gap(s_count);
  std::vector<bool> inside(s_count);
  for (int s = 0; s < s_count; ++s) {
    const double xs = static_cast<double>(s);
    double acc = 0.0;
    for (int t = 0; t < s_count; ++t)
      acc += fh.transition_prob(s, t) * portable_exp(v_at(ds, static_cast<double>(t)));
    double gmax = kNegInf;
    for (long p = 0; p < fh.horizon(); ++p)
      gmax = std::max(gmax, fh.log_potential_state(p, s));
    gap[s] = gmax + portable_log(acc) - (1.0 - ds.delta) * v_at(ds, xs);
    inside[s] = v_at(ds, xs) <= d;
  }
  double inside_max = kNegInf;
  for (int s = 0; s < s_count; ++s)
    if (inside[s]) inside_max = std::max(inside_max, gap[s]);
  out.b_d = inside_max == kNegInf ? 0.0 : std::max(0.0, inside_max);
  for (int s = 0; s < s_count; ++s) {
    const double margin = gap[s] - (inside[s] ? out.b_d : 0.0);
    if (!inside[s]) ++out.outside_points;
    if (margin > out.worst_margin) {
      out.worst_margin = margin;
      out.witness_x = static_cast<double>(s);
    }
  }
  out.holds = out.worst_margin <= 0.0;
  return out;
}

DriftPass drift_pass_grid(const Model& model, const DriftSpec& ds, double d,
                          const GridSpec& grid) {
  const auto ax = model.axis_transition();
  if (!ax)
    throw ValidationError("drift check needs a Gaussian transition profile or "
                          "a finite state space");
  const double curvature = v_curvature(ds);
  const bool quad_family = v_is_quadratic_family(ds);
  const double c = 1.0 + ds.delta0;

  DriftPass out;
  const std::vector<double> xs = grid.values();
  std::vector<double> gap(xs.size());
  std::vector<bool> inside(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = xs[i];
    const double mean = ax->scale * x;
    const LogSimpson coarse =
        log_drift_integral(mean, ax->var, ds, curvature, kQuadNodesBase);
    const LogSimpson fine =
        log_drift_integral(mean, ax->var, ds, curvature, 2 * kQuadNodesBase - 1);
    double integral = fine.value;
    if (integral == kInf) {
      // divergent moment: drift bound cannot hold at this point
      gap[i] = kInf;
      inside[i] = v_at(ds, x) <= d;
      continue;
    }
    out.quad.refinement_diff = std::max(out.quad.refinement_diff,
                                        std::abs(fine.value - coarse.value));
    if (quad_family && ax->var < c) {
      const double closed = 1.0 + log_gaussian_expv_closed(mean, ax->var, c);
      out.quad.closed_form_diff =
          std::max(out.quad.closed_form_diff, std::abs(integral - closed));
    }
    gap[i] = log_pot_max(model, x) + integral - (1.0 - ds.delta) * v_at(ds, x);
    inside[i] = v_at(ds, x) <= d;
  }
  out.quad.reliable = out.quad.refinement_diff <= kQuadTol;

  double inside_max = kNegInf;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (inside[i]) inside_max = std::max(inside_max, gap[i]);
  out.b_d = inside_max == kNegInf ? 0.0 : std::max(0.0, inside_max);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!inside[i]) ++out.outside_points;
    if (gap[i] == kInf) {
      // divergent moment: no finite b_d can absorb it, even inside the set
      out.worst_margin = kInf;
      out.witness_x = xs[i];
      continue;
    }
    const double margin = gap[i] - (inside[i] ? out.b_d : 0.0);
    if (margin > out.worst_margin) {
      out.worst_margin = margin;
      out.witness_x = xs[i];
    }
  }
  out.holds = out.worst_margin <= 0.0;
  return out;
}

Verdict settle(bool holds, bool stable, bool reliable) {
  if (!reliable || !stable) return Verdict::Inconclusive;
  return holds ? Verdict::Pass : Verdict::Fail;
}

struct MinorPass {
  double log_lower{kInf};
  double log_upper{kNegInf};
  double lower_x{kNaN}, lower_y{kNaN}, upper_x{kNaN}, upper_y{kNaN};
  double log_ref_moment{kNaN};
  long set_points{0};
};

MinorPass minor_pass_finite(const FiniteHmm& fh, const DriftSpec& ds, double d) {
  MinorPass out;
  const int s_count = fh.size();
  std::vector<int> level;
  for (int s = 0; s < s_count; ++s)
    if (v_at(ds, static_cast<double>(s)) <= d) level.push_back(s);
  if (level.empty())
    throw ValidationError("level set {V <= " + format_double(d) +
                          "} contains no states");
  out.set_points = static_cast<long>(level.size());
  for (int x : level) {
    double gmin = kInf, gmax = kNegInf;
    for (long p = 0; p < fh.horizon(); ++p) {
      const double g = fh.log_potential_state(p, x);
      gmin = std::min(gmin, g);
      gmax = std::max(gmax, g);
    }
    for (int y : level) {
      const double lt = fh.log_transition(x, y);
      if (gmin + lt < out.log_lower) {
        out.log_lower = gmin + lt;
        out.lower_x = x;
        out.lower_y = y;
      }
      if (gmax + lt > out.log_upper) {
        out.log_upper = gmax + lt;
        out.upper_x = x;
        out.upper_y = y;
      }
    }
  }
  std::vector<double> vs(level.size());
  for (std::size_t i = 0; i < level.size(); ++i)
    vs[i] = v_at(ds, static_cast<double>(level[i]));
  out.log_ref_moment = log_sum_exp(vs) - portable_log(double(level.size()));
  return out;
}

MinorPass minor_pass_grid(const Model& model, const DriftSpec& ds, double d,
                          const GridSpec& grid) {
  MinorPass out;
  const std::vector<double> xs = grid.values();
  std::vector<double> level;
  for (double x : xs)
    if (v_at(ds, x) <= d) level.push_back(x);
  if (level.empty())
    throw ValidationError("level set {V <= " + format_double(d) +
                          "} misses the grid [" + format_double(grid.lo) + ", " +
                          format_double(grid.hi) + "]");
  out.set_points = static_cast<long>(level.size());

  const TransEval trans(model);
  std::vector<double> gmin(level.size()), gmax(level.size());
  for (std::size_t i = 0; i < level.size(); ++i) {
    gmin[i] = log_pot_min(model, level[i]);
    gmax[i] = log_pot_max(model, level[i]);
  }
  for (std::size_t i = 0; i < level.size(); ++i) {
    for (std::size_t j = 0; j < level.size(); ++j) {
      const double lt = trans(level[i], level[j]);
      const double lo_v = gmin[i] + lt;
      const double hi_v = gmax[i] + lt;
      if (lo_v < out.log_lower) {
        out.log_lower = lo_v;
        out.lower_x = level[i];
        out.lower_y = level[j];
      }
      if (hi_v > out.log_upper) {
        out.log_upper = hi_v;
        out.upper_x = level[i];
        out.upper_y = level[j];
      }
    }
  }
  std::vector<double> vs(level.size());
  for (std::size_t i = 0; i < level.size(); ++i) vs[i] = v_at(ds, level[i]);
  out.log_ref_moment = log_sum_exp(vs) - portable_log(double(level.size()));
  return out;
}

struct SupPass {
  double log_sup{kNegInf};
  double witness{kNaN};
};

SupPass sup_over_grid(const Model& model, const GridSpec& grid,
                      const std::function<double(double)>& fn) {
  SupPass out;
  for (double x : grid.values()) {
    const double v = fn(x);
    if (v > out.log_sup) {
      out.log_sup = v;
      out.witness = x;
    }
  }
  return out;
}

// Grid supremum with widening: the maximizer may sit outside the requested
// window even when the statistic is integrable (a far-out observation shifts
// the peak), so the window doubles until the sup stops growing or the round
// budget runs out. Refinement is judged on the final window.
struct SupScan {
  double log_sup{kNegInf};
  double log_sup_extended{kNegInf};  // sup on the confirming extension
  double witness{kNaN};
  GridSpec grid;
  bool extension_stable{false};
  bool refinement_stable{false};
};

SupScan scan_sup(const Model& model, const GridSpec& grid,
                 const std::function<double(double)>& fn) {
  SupScan out;
  GridSpec g = grid;
  SupPass cur = sup_over_grid(model, g, fn);
  for (int round = 0; round <= kMaxSupExtensions; ++round) {
    const GridSpec wider = g.extended();
    const SupPass next = sup_over_grid(model, wider, fn);
    const double grow_tol = kStabilityTol * std::max(1.0, std::abs(cur.log_sup));
    if (next.log_sup <= cur.log_sup + grow_tol || cur.log_sup == kInf) {
      out.extension_stable = true;
      out.log_sup_extended = next.log_sup;
      break;
    }
    g = wider;
    cur = next;
    out.log_sup_extended = next.log_sup;
  }
  out.log_sup = cur.log_sup;
  out.witness = cur.witness;
  out.grid = g;
  const SupPass fine = sup_over_grid(model, g.refined(), fn);
  const double ref_tol = kSupRefineTol * std::max(1.0, std::abs(cur.log_sup));
  out.refinement_stable = fine.log_sup <= cur.log_sup + ref_tol;
  return out;
}

// observation-noise headroom against the Lyapunov scale; +inf when the
// observation map has bounded range (the potentials are then bounded below
// on compacts and the growth side is automatic)
double noise_margin_for(const Model& model) {
  if (const auto* g = dynamic_cast<const GaussianRwHmm*>(&model)) {
    if (g->obs_map() == ObsMap::Identity)
      return g->sigma_y2() - 2.0 * (1.0 + g->delta0());
    return kInf;
  }
  if (const auto* lg = dynamic_cast<const LinearGaussianHmm*>(&model)) {
    if (lg->c() == 0.0) return kInf;
    const double d0 = lg->drift() ? lg->drift()->delta0 : kDefaultDelta0;
    return lg->sigma_y2() / (lg->c() * lg->c()) - 2.0 * (1.0 + d0);
  }
  return kInf;  // bounded potentials (e.g. Bernoulli observations)
}

struct CertPass {
  double min_log{kInf};
  double witness_y{kNaN};
};

CertPass ratio_cert_grid(const Model& model, const DriftSpec& ds, double d,
                         double alpha, const GridSpec& grid) {
  const std::vector<double> xs = grid.values();
  std::vector<double> level;
  for (double x : xs)
    if (v_at(ds, x) <= d) level.push_back(x);
  if (level.empty())
    throw ValidationError("level set {V <= " + format_double(d) +
                          "} misses the grid");
  const TransEval trans(model);
  CertPass out;
  for (double y : xs) {
    double floor_log = kInf;
    for (double x : level) floor_log = std::min(floor_log, trans(x, y));
    const double val = floor_log + alpha * v_at(ds, y);
    if (val < out.min_log) {
      out.min_log = val;
      out.witness_y = y;
    }
  }
  return out;
}

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    default: return "inconclusive";
  }
}

void GridSpec::validate() const {
  if (!(hi > lo)) throw ValidationError("grid needs hi > lo");
  if (points < 3) throw ValidationError("grid needs at least 3 points");
  if (points > 2000001) throw ValidationError("grid larger than 2000001 points");
}

std::vector<double> GridSpec::values() const {
  validate();
  std::vector<double> out(points);
  const double h = spacing();
  for (long i = 0; i < points; ++i)
    out[i] = lo + h * static_cast<double>(i);
  out.back() = hi;
  return out;
}

double log_gaussian_expv_integral(double mean, double var, double scale,
                                  long nodes) {
  if (!(var > 0.0) || !(scale > 0.0))
    throw ValidationError("gaussian moment integral needs positive variances");
  if (!(var < scale)) return kInf;
  const double prec = 1.0 / var - 1.0 / scale;
  const double center = (mean / var) / prec;
  const double sd = 1.0 / std::sqrt(prec);
  const double log_norm = -0.5 * (kLog2Pi + portable_log(var));
  auto log_f = [&](double y) {
    const double dy = y - mean;
    return log_norm - dy * dy / (2.0 * var) + y * y / (2.0 * scale);
  };
  return log_simpson(center - 14.0 * sd, center + 14.0 * sd, nodes, log_f).value;
}

double log_gaussian_expv_closed(double mean, double var, double scale) {
  if (!(var > 0.0) || !(var < scale)) return kInf;
  return 0.5 * portable_log(scale / (scale - var)) +
         mean * mean / (2.0 * (scale - var));
}

DriftReport check_drift(const Model& model, double d, const GridSpec& grid) {
  grid.validate();
  const DriftSpec& ds = require_drift(model);
  if (d < ds.d_lower)
    throw ValidationError("level d=" + format_double(d) + " below the smallest "
                          "nonempty level " + format_double(ds.d_lower));

  DriftReport rep;
  rep.d = d;
  rep.delta = ds.delta;
  rep.grid = grid;

  if (const FiniteHmm* fh = model.finite()) {
    const DriftPass pass = drift_pass_finite(*fh, ds, d);
    rep.b_d = pass.b_d;
    rep.worst_margin = pass.worst_margin;
    rep.witness_x = pass.witness_x;
    rep.outside_points = pass.outside_points;
    rep.holds = pass.holds;
    rep.refinement_stable = true;
    rep.quadrature.reliable = true;
    rep.verdict = pass.holds ? Verdict::Pass : Verdict::Fail;
    return rep;
  }

  require_scalar_state(model);
  const DriftPass base = drift_pass_grid(model, ds, d, grid);
  const DriftPass fine = drift_pass_grid(model, ds, d, grid.refined());
  rep.b_d = base.b_d;
  rep.worst_margin = base.worst_margin;
  rep.witness_x = base.witness_x;
  rep.outside_points = base.outside_points;
  rep.holds = base.holds;
  rep.quadrature = base.quad;
  rep.quadrature.reliable = base.quad.reliable && fine.quad.reliable;
  rep.refinement_stable = base.holds == fine.holds;
  rep.verdict = settle(rep.holds, rep.refinement_stable, rep.quadrature.reliable);
  return rep;
}

MinorizationReport check_minorization(const Model& model, double d,
                                      const GridSpec& grid) {
  grid.validate();
  const DriftSpec& ds = require_drift(model);

  MinorizationReport rep;
  rep.d = d;
  rep.grid = grid;

  auto fill = [&rep](const MinorPass& pass) {
    rep.log_eps_lower = pass.log_lower;
    rep.log_eps_upper = pass.log_upper;
    rep.eps_lower = portable_exp(pass.log_lower);
    rep.eps_upper = portable_exp(pass.log_upper);
    rep.contraction =
        -portable_expm1(2.0 * (pass.log_lower - pass.log_upper));
    rep.log_reference_moment = pass.log_ref_moment;
    rep.lower_x = pass.lower_x;
    rep.lower_y = pass.lower_y;
    rep.upper_x = pass.upper_x;
    rep.upper_y = pass.upper_y;
    rep.level_set_points = pass.set_points;
  };
  auto ok = [](const MinorPass& pass) {
    return pass.log_lower > kNegInf && pass.log_upper < kInf;
  };

  if (const FiniteHmm* fh = model.finite()) {
    const MinorPass pass = minor_pass_finite(*fh, ds, d);
    fill(pass);
    rep.refinement_stable = true;
    rep.verdict = ok(pass) ? Verdict::Pass : Verdict::Fail;
    return rep;
  }

  require_scalar_state(model);
  const MinorPass base = minor_pass_grid(model, ds, d, grid);
  const MinorPass fine = minor_pass_grid(model, ds, d, grid.refined());
  fill(base);
  rep.refinement_stable = ok(base) == ok(fine);
  rep.verdict = rep.refinement_stable
                    ? (ok(base) ? Verdict::Pass : Verdict::Fail)
                    : Verdict::Inconclusive;
  return rep;
}

InitialMomentReport check_initial_moment(const Model& model) {
  const DriftSpec& ds = require_drift(model);
  InitialMomentReport rep;

  if (const FiniteHmm* fh = model.finite()) {
    double acc = 0.0;
    for (int s = 0; s < fh->size(); ++s)
      acc += fh->initial()[s] * portable_exp(v_at(ds, static_cast<double>(s)));
    rep.log_moment = portable_log(acc);
    rep.verdict = Verdict::Pass;
    return rep;
  }

  require_scalar_state(model);
  auto log_f = [&](double y) {
    return model.initial_log_density({&y, 1}) + v_at(ds, y);
  };
  const LogSimpson coarse = log_simpson(-60.0, 60.0, 4097, log_f);
  const LogSimpson fine = log_simpson(-60.0, 60.0, 8193, log_f);
  rep.log_moment = fine.value;
  rep.quadrature.refinement_diff = std::abs(fine.value - coarse.value);
  rep.quadrature.reliable = rep.quadrature.refinement_diff <= kQuadTol;
  // integrand not vanishing at the window edge signals a divergent moment
  if (fine.mass_at_edge > -30.0) {
    rep.verdict = Verdict::Fail;
    rep.log_moment = kInf;
    return rep;
  }
  rep.verdict = rep.quadrature.reliable ? Verdict::Pass : Verdict::Inconclusive;
  return rep;
}

PotentialBoundReport check_potential_bound(const Model& model,
                                           const GridSpec& grid) {
  grid.validate();
  PotentialBoundReport rep;
  rep.grid = grid;

  if (const FiniteHmm* fh = model.finite()) {
    double sup = kNegInf;
    for (int s = 0; s < fh->size(); ++s)
      for (long p = 0; p < fh->horizon(); ++p) {
        const double g = fh->log_potential_state(p, s);
        if (g > sup) {
          sup = g;
          rep.witness_x = static_cast<double>(s);
        }
      }
    rep.log_sup = rep.log_sup_extended = sup;
    rep.extension_stable = rep.refinement_stable = true;
    rep.verdict = sup < kInf ? Verdict::Pass : Verdict::Fail;
    return rep;
  }

  require_scalar_state(model);
  auto fn = [&](double x) { return log_pot_max(model, x); };
  const SupScan scan = scan_sup(model, grid, fn);
  rep.log_sup = scan.log_sup;
  rep.log_sup_extended = scan.log_sup_extended;
  rep.witness_x = scan.witness;
  rep.grid = scan.grid;
  rep.extension_stable = scan.extension_stable;
  rep.refinement_stable = scan.refinement_stable;
  if (rep.log_sup == kInf || !rep.extension_stable)
    rep.verdict = Verdict::Fail;
  else
    rep.verdict = rep.refinement_stable ? Verdict::Pass : Verdict::Inconclusive;
  return rep;
}

PotentialTailReport check_potential_tail(const Model& model, double exponent,
                                         const GridSpec& grid) {
  grid.validate();
  if (!(exponent > 0.0))
    throw ValidationError("tail exponent must be positive");
  const DriftSpec& ds = require_drift(model);

  PotentialTailReport rep;
  rep.exponent = exponent;
  rep.grid = grid;

  if (const FiniteHmm* fh = model.finite()) {
    double sup = kNegInf;
    for (int s = 0; s < fh->size(); ++s) {
      const double xs = static_cast<double>(s);
      for (long p = 0; p < fh->horizon(); ++p) {
        const double v = -fh->log_potential_state(p, s) - exponent * v_at(ds, xs);
        if (v > sup) {
          sup = v;
          rep.witness_x = xs;
        }
      }
    }
    rep.log_sup = rep.log_sup_extended = sup;
    rep.extension_stable = rep.refinement_stable = true;
    rep.verdict = sup < kInf ? Verdict::Pass : Verdict::Fail;
    return rep;
  }

  require_scalar_state(model);
  auto fn = [&](double x) {
    return -log_pot_min(model, x) - exponent * v_at(ds, x);
  };
  const SupScan scan = scan_sup(model, grid, fn);
  rep.log_sup = scan.log_sup;
  rep.log_sup_extended = scan.log_sup_extended;
  rep.witness_x = scan.witness;
  rep.grid = scan.grid;
  rep.extension_stable = scan.extension_stable;
  rep.refinement_stable = scan.refinement_stable;
  if (rep.log_sup == kInf || !rep.extension_stable)
    rep.verdict = Verdict::Fail;
  else
    rep.verdict = rep.refinement_stable ? Verdict::Pass : Verdict::Inconclusive;
  return rep;
}

RatioReport check_ratio_condition(const Model& model, double d, double alpha,
                                  const GridSpec& grid) {
  grid.validate();
  if (!(alpha > 0.0 && alpha < 0.5))
    throw ValidationError("ratio exponent alpha must lie in (0, 1/2), got " +
                          format_double(alpha));
  const DriftSpec& ds = require_drift(model);

  RatioReport rep;
  rep.alpha = alpha;
  rep.d = d;
  rep.grid = grid;

  if (const FiniteHmm* fh = model.finite()) {
    const long t_count = fh->horizon();
    if (t_count < 2)
      throw ValidationError("ratio check needs at least two observation times");
    const oracle::Flow flow = oracle::forward_flow(*fh, t_count - 2);
    const int s_count = fh->size();
    double sup = kNegInf;
    bool broken = false;
    for (long p = 1; p <= t_count - 1; ++p) {
      const std::vector<double>& eta = flow.eta[p - 1];
      for (int y = 0; y < s_count; ++y) {
        double denom = 0.0;
        for (int x = 0; x < s_count; ++x)
          denom += eta[x] * fh->potential_state(p - 1, x) * fh->transition_prob(x, y);
        for (int x = 0; x < s_count; ++x) {
          const double num =
              fh->potential_state(p - 1, x) * fh->transition_prob(x, y);
          if (num == 0.0) continue;
          if (denom == 0.0) {
            broken = true;
            continue;
          }
          const double val =
              num / denom *
              portable_exp(-alpha * (v_at(ds, x) + v_at(ds, y)));
          if (val > sup) {
            sup = val;
            rep.witness_p = p;
            rep.witness_x = x;
            rep.witness_y = y;
          }
        }
      }
    }
    rep.exact_sup = broken ? kInf : sup;
    rep.refinement_stable = true;
    rep.verdict = broken ? Verdict::Fail : Verdict::Pass;
    return rep;
  }

  require_scalar_state(model);
  rep.noise_margin = noise_margin_for(model);
  const CertPass base = ratio_cert_grid(model, ds, d, alpha, grid);
  const CertPass fine = ratio_cert_grid(model, ds, d, alpha, grid.refined());
  rep.cert_min_log = base.min_log;
  rep.witness_y = base.witness_y;
  const bool base_ok = base.min_log > kNegInf;
  rep.refinement_stable = base_ok == (fine.min_log > kNegInf);
  if (rep.noise_margin <= 0.0)
    rep.verdict = Verdict::Fail;
  else if (base_ok && rep.refinement_stable)
    rep.verdict = Verdict::Pass;
  else
    rep.verdict = Verdict::Inconclusive;
  return rep;
}

AssumptionsReport check_all(const Model& model, double d, double alpha,
                            const GridSpec& grid, double tail_exponent) {
  const DriftSpec& ds = require_drift(model);
  AssumptionsReport rep;
  rep.drift = check_drift(model, d, grid);
  rep.initial_moment = check_initial_moment(model);
  rep.ratio = check_ratio_condition(model, d, alpha, grid);
  rep.minorization = check_minorization(model, d, grid);
  rep.potential_bound = check_potential_bound(model, grid);
  const double expo = tail_exponent >= 0.0 ? tail_exponent : 0.5 * ds.delta;
  rep.potential_tail = check_potential_tail(model, expo, grid);

  const Verdict all[] = {rep.drift.verdict,          rep.initial_moment.verdict,
                         rep.ratio.verdict,          rep.minorization.verdict,
                         rep.potential_bound.verdict, rep.potential_tail.verdict};
  rep.overall = Verdict::Pass;
  for (Verdict v : all) {
    if (v == Verdict::Fail) {
      rep.overall = Verdict::Fail;
      break;
    }
    if (v == Verdict::Inconclusive) rep.overall = Verdict::Inconclusive;
  }
  return rep;
}

}  // namespace fk::assumptions
