#include "fk/config.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "fk/common.hpp"

namespace fk::config {

// ---- Json writer ----

Json Json::null() { return Json{}; }

Json Json::boolean(bool v) {
  Json j;
  j.kind_ = Kind::Bool;
  j.b_ = v;
  return j;
}

Json Json::integer(long long v) {
  Json j;
  j.kind_ = Kind::Int;
  j.i_ = v;
  return j;
}

Json Json::real(double v) {
  Json j;
  j.kind_ = Kind::Real;
  j.d_ = v;
  return j;
}

Json Json::str(std::string v) {
  Json j;
  j.kind_ = Kind::Str;
  j.s_ = std::move(v);
  return j;
}

Json Json::array() {
  Json j;
  j.kind_ = Kind::Arr;
  return j;
}

Json Json::object() {
  Json j;
  j.kind_ = Kind::Obj;
  return j;
}

Json Json::raw(std::string serialized) {
  Json j;
  j.kind_ = Kind::Raw;
  j.s_ = std::move(serialized);
  return j;
}

Json& Json::push(Json v) {
  if (kind_ != Kind::Arr) throw Error("Json::push on a non-array");
  arr_.push_back(std::move(v));
  return *this;
}

Json& Json::set(std::string key, Json v) {
  if (kind_ != Kind::Obj) throw Error("Json::set on a non-object");
  obj_.emplace_back(std::move(key), std::move(v));
  return *this;
}

namespace {

void escape_into(std::string& out, const std::string& s) {
  out += '"';
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  out += '"';
}

std::string real_token(double v) {
  if (std::isnan(v)) return "\"nan\"";
  if (v == kInf) return "\"inf\"";
  if (v == kNegInf) return "\"-inf\"";
  return format_double(v);
}

}  // namespace

void Json::write(std::string& out, int indent, int depth) const {
  const std::string pad(static_cast<std::size_t>(indent) * depth, ' ');
  const std::string pad_in(static_cast<std::size_t>(indent) * (depth + 1), ' ');
  switch (kind_) {
    case Kind::Null: out += "null"; break;
    case Kind::Bool: out += b_ ? "true" : "false"; break;
    case Kind::Int: out += std::to_string(i_); break;
    case Kind::Real: out += real_token(d_); break;
    case Kind::Str: escape_into(out, s_); break;
    case Kind::Raw: out += s_; break;
    case Kind::Arr: {
      if (arr_.empty()) {
        out += "[]";
        break;
      }
      out += "[\n";
      for (std::size_t i = 0; i < arr_.size(); ++i) {
        out += pad_in;
        arr_[i].write(out, indent, depth + 1);
        if (i + 1 < arr_.size()) out += ',';
        out += '\n';
      }
      out += pad + "]";
      break;
    }
    case Kind::Obj: {
      if (obj_.empty()) {
        out += "{}";
        break;
      }
      out += "{\n";
      for (std::size_t i = 0; i < obj_.size(); ++i) {
        out += pad_in;
        escape_into(out, obj_[i].first);
        out += ": ";
        obj_[i].second.write(out, indent, depth + 1);
        if (i + 1 < obj_.size()) out += ',';
        out += '\n';
      }
      out += pad + "}";
      break;
    }
  }
}

std::string Json::dump(int indent) const {
  std::string out;
  write(out, indent, 0);
  out += '\n';
  return out;
}

// ---- digests and files ----

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << content;
  if (!out) throw ValidationError("write failed: " + path);
}

std::string file_digest(const std::string& path) {
  return fnv1a64_hex(read_file(path));
}

std::string iso8601_utc_now() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---- parse helpers ----

namespace {

[[noreturn]] void bad(const std::string& ctx, const std::string& what) {
  throw ValidationError(ctx + ": " + what);
}

const json& need(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) bad(ctx, std::string("missing key '") + key + "'");
  return *it;
}

double num(const json& j, const char* key, const std::string& ctx) {
  const json& v = need(j, key, ctx);
  if (!v.is_number()) bad(ctx, std::string("'") + key + "' must be a number");
  return v.get<double>();
}

double num_or(const json& j, const char* key, double fallback,
              const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number()) bad(ctx, std::string("'") + key + "' must be a number");
  return it->get<double>();
}

long integer(const json& j, const char* key, const std::string& ctx) {
  const json& v = need(j, key, ctx);
  if (!v.is_number_integer())
    bad(ctx, std::string("'") + key + "' must be an integer");
  return v.get<long>();
}

long integer_or(const json& j, const char* key, long fallback,
                const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_integer())
    bad(ctx, std::string("'") + key + "' must be an integer");
  return it->get<long>();
}

std::uint64_t seed_or(const json& j, const char* key, std::uint64_t fallback,
                      const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_integer())
    bad(ctx, std::string("'") + key + "' must be an integer");
  return it->get<std::uint64_t>();
}

std::string text(const json& j, const char* key, const std::string& ctx) {
  const json& v = need(j, key, ctx);
  if (!v.is_string()) bad(ctx, std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<double> num_list(const json& v, const std::string& ctx) {
  if (!v.is_array()) bad(ctx, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const json& e : v) {
    if (!e.is_number()) bad(ctx, "expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::vector<double>> num_rows(const json& v, const std::string& ctx) {
  if (!v.is_array()) bad(ctx, "expected an array of rows");
  std::vector<std::vector<double>> out;
  out.reserve(v.size());
  for (const json& row : v) out.push_back(num_list(row, ctx));
  return out;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) bad(ctx, "unknown key '" + it.key() + "'");
  }
}

json rows_json(const std::vector<std::vector<double>>& rows) {
  json out = json::array();
  for (const auto& r : rows) out.push_back(r);
  return out;
}

ObsMap parse_obs_map(const std::string& s, const std::string& ctx) {
  if (s == "tanh") return ObsMap::Tanh;
  if (s == "identity") return ObsMap::Identity;
  if (s == "zero") return ObsMap::Zero;
  bad(ctx, "obs_map must be one of tanh|identity|zero, got '" + s + "'");
}

const char* obs_map_name(ObsMap m) {
  switch (m) {
    case ObsMap::Tanh: return "tanh";
    case ObsMap::Identity: return "identity";
    default: return "zero";
  }
}

}  // namespace

// ---- model configs ----

LoadedModel load_model(const json& j) {
  const std::string ctx = "model config";
  if (!j.is_object()) bad(ctx, "expected an object");
  const std::string type = text(j, "type", ctx);
  LoadedModel out;

  if (type == "finite") {
    check_keys(j, {"type", "initial", "transition", "potentials"}, ctx);
    auto initial = num_list(need(j, "initial", ctx), ctx + ".initial");
    auto transition = num_rows(need(j, "transition", ctx), ctx + ".transition");
    auto potentials = num_rows(need(j, "potentials", ctx), ctx + ".potentials");
    const int s_count = static_cast<int>(initial.size());
    out.resolved = {{"type", "finite"},
                    {"initial", initial},
                    {"transition", rows_json(transition)},
                    {"potentials", rows_json(potentials)}};
    out.model = std::make_unique<FiniteHmm>(make_finite_hmm(
        s_count, std::move(initial), std::move(transition), std::move(potentials)));
    return out;
  }

  if (type == "gaussian_rw") {
    check_keys(j, {"type", "d_x", "delta0", "sigma_y2", "obs_map",
                   "observations", "delta"}, ctx);
    const int d_x = static_cast<int>(integer_or(j, "d_x", 1, ctx));
    const double delta0 = num_or(j, "delta0", kDefaultDelta0, ctx);
    const double delta = num_or(j, "delta", kDefaultDelta, ctx);
    const double sigma_y2 = num(j, "sigma_y2", ctx);
    const ObsMap omap = parse_obs_map(text(j, "obs_map", ctx), ctx);
    auto obs = num_rows(need(j, "observations", ctx), ctx + ".observations");
    out.resolved = {{"type", "gaussian_rw"}, {"d_x", d_x},
                    {"delta0", delta0},      {"sigma_y2", sigma_y2},
                    {"obs_map", obs_map_name(omap)},
                    {"observations", rows_json(obs)},
                    {"delta", delta}};
    out.model = std::make_unique<GaussianRwHmm>(
        make_gaussian_rw_hmm(d_x, delta0, sigma_y2, omap, std::move(obs), delta));
    return out;
  }

  if (type == "bernoulli") {
    check_keys(j, {"type", "d_x", "observations", "delta0", "delta"}, ctx);
    const int d_x = static_cast<int>(integer_or(j, "d_x", 1, ctx));
    const double delta0 = num_or(j, "delta0", kDefaultDelta0, ctx);
    const double delta = num_or(j, "delta", kDefaultDelta, ctx);
    auto obs = num_rows(need(j, "observations", ctx), ctx + ".observations");
    out.resolved = {{"type", "bernoulli"},
                    {"d_x", d_x},
                    {"observations", rows_json(obs)},
                    {"delta0", delta0},
                    {"delta", delta}};
    out.model = std::make_unique<BernoulliHmm>(
        make_bernoulli_hmm(d_x, std::move(obs), delta0, delta));
    return out;
  }

  if (type == "linear_gaussian") {
    check_keys(j, {"type", "a", "sigma_x2", "c", "sigma_y2", "observations",
                   "m0", "p0", "delta0", "delta"}, ctx);
    const double a = num(j, "a", ctx);
    const double sigma_x2 = num(j, "sigma_x2", ctx);
    const double c = num(j, "c", ctx);
    const double sigma_y2 = num(j, "sigma_y2", ctx);
    const double m0 = num_or(j, "m0", 0.0, ctx);
    const double p0 = num_or(j, "p0", 1.0, ctx);
    const double delta0 = num_or(j, "delta0", kDefaultDelta0, ctx);
    const double delta = num_or(j, "delta", kDefaultDelta, ctx);
    auto obs = num_list(need(j, "observations", ctx), ctx + ".observations");
    out.resolved = {{"type", "linear_gaussian"},
                    {"a", a},
                    {"sigma_x2", sigma_x2},
                    {"c", c},
                    {"sigma_y2", sigma_y2},
                    {"observations", obs},
                    {"m0", m0},
                    {"p0", p0},
                    {"delta0", delta0},
                    {"delta", delta}};
    out.model = std::make_unique<LinearGaussianHmm>(make_linear_gaussian_hmm(
        a, sigma_x2, c, sigma_y2, std::move(obs), m0, p0, delta0, delta));
    return out;
  }

  bad(ctx, "unknown model type '" + type + "'");
}

LoadedModel load_model_file(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("cannot parse " + path + ": " + e.what());
  }
  return load_model(j);
}

// ---- functionals ----

LoadedFunctional load_functional(const json& j) {
  const std::string ctx = "functional config";
  if (!j.is_object()) bad(ctx, "expected an object");
  const std::string type = text(j, "type", ctx);
  const double alpha = num_or(j, "alpha", 0.1, ctx);
  LoadedFunctional out;

  if (type == "coordinate") {
    check_keys(j, {"type", "index", "center", "alpha"}, ctx);
    const int index = static_cast<int>(integer_or(j, "index", 0, ctx));
    const double center = num_or(j, "center", 0.0, ctx);
    out.functional = make_coordinate_probe(index, center);
    out.resolved = {{"type", "coordinate"}, {"index", index},
                    {"center", center},     {"alpha", alpha}};
  } else if (type == "indicator") {
    check_keys(j, {"type", "state", "center", "alpha"}, ctx);
    const int state = static_cast<int>(integer_or(j, "state", 1, ctx));
    const double center = num_or(j, "center", 0.0, ctx);
    out.functional = make_indicator_probe(state, center);
    out.resolved = {{"type", "indicator"}, {"state", state},
                    {"center", center},    {"alpha", alpha}};
  } else if (type == "tanh") {
    check_keys(j, {"type", "index", "scale", "alpha"}, ctx);
    const int index = static_cast<int>(integer_or(j, "index", 0, ctx));
    const double scale = num_or(j, "scale", 1.0, ctx);
    out.functional = make_tanh_probe(index, scale);
    out.resolved = {{"type", "tanh"}, {"index", index},
                    {"scale", scale}, {"alpha", alpha}};
  } else if (type == "table") {
    check_keys(j, {"type", "xs", "ys", "alpha"}, ctx);
    auto xs = num_list(need(j, "xs", ctx), ctx + ".xs");
    auto ys = num_list(need(j, "ys", ctx), ctx + ".ys");
    out.resolved = {{"type", "table"}, {"xs", xs}, {"ys", ys}, {"alpha", alpha}};
    out.functional = make_table_probe(std::move(xs), std::move(ys));
  } else if (type == "constant") {
    check_keys(j, {"type", "value", "alpha"}, ctx);
    const double value = num(j, "value", ctx);
    out.functional = make_constant_probe(value);
    out.resolved = {{"type", "constant"}, {"value", value}, {"alpha", alpha}};
  } else {
    bad(ctx, "unknown functional type '" + type + "'");
  }
  out.functional.alpha = alpha;
  return out;
}

LoadedFunctional load_functional_file(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("cannot parse " + path + ": " + e.what());
  }
  return load_functional(j);
}

LoadedFunctional default_functional(const Model& model) {
  json j;
  if (model.finite() != nullptr)
    j = {{"type", "indicator"}, {"state", 1}, {"center", 0.5}, {"alpha", 0.1}};
  else
    j = {{"type", "coordinate"}, {"index", 0}, {"center", 0.0}, {"alpha", 0.1}};
  return load_functional(j);
}

// ---- studies ----

StudyConfig load_study(const json& j) {
  const std::string ctx = "study config";
  if (!j.is_object()) bad(ctx, "expected an object");
  check_keys(j, {"kind", "model", "functional", "horizon", "horizons",
                 "particles", "particle_counts", "replicates", "seed",
                 "threads", "steps", "repeats"}, ctx);
  StudyConfig out;
  out.kind = text(j, "kind", ctx);
  out.model = load_model(need(j, "model", ctx));
  if (j.contains("functional"))
    out.functional = load_functional(j.at("functional"));
  else
    out.functional = default_functional(*out.model.model);

  json resolved = {{"kind", out.kind},
                   {"model", out.model.resolved},
                   {"functional", out.functional.resolved}};

  if (out.kind == "clt") {
    out.clt.horizon = integer(j, "horizon", ctx);
    out.clt.particles = integer(j, "particles", ctx);
    out.clt.replicates = integer(j, "replicates", ctx);
    out.clt.seed = seed_or(j, "seed", 1, ctx);
    out.clt.threads = static_cast<int>(integer_or(j, "threads", 1, ctx));
    resolved["horizon"] = out.clt.horizon;
    resolved["particles"] = out.clt.particles;
    resolved["replicates"] = out.clt.replicates;
    resolved["seed"] = out.clt.seed;
    resolved["threads"] = out.clt.threads;
  } else if (out.kind == "growth") {
    const json& hs = need(j, "horizons", ctx);
    out.growth.horizons.clear();
    for (double h : num_list(hs, ctx + ".horizons"))
      out.growth.horizons.push_back(static_cast<long>(h));
    out.growth.particles = integer(j, "particles", ctx);
    out.growth.replicates = integer(j, "replicates", ctx);
    out.growth.seed = seed_or(j, "seed", 1, ctx);
    out.growth.threads = static_cast<int>(integer_or(j, "threads", 1, ctx));
    resolved["horizons"] = out.growth.horizons;
    resolved["particles"] = out.growth.particles;
    resolved["replicates"] = out.growth.replicates;
    resolved["seed"] = out.growth.seed;
    resolved["threads"] = out.growth.threads;
  } else if (out.kind == "cost") {
    const json& ns = need(j, "particle_counts", ctx);
    out.cost.particle_counts.clear();
    for (double n : num_list(ns, ctx + ".particle_counts"))
      out.cost.particle_counts.push_back(static_cast<long>(n));
    out.cost.steps = integer_or(j, "steps", 3, ctx);
    out.cost.repeats = static_cast<int>(integer_or(j, "repeats", 5, ctx));
    out.cost.seed = seed_or(j, "seed", 1, ctx);
    resolved["particle_counts"] = out.cost.particle_counts;
    resolved["steps"] = out.cost.steps;
    resolved["repeats"] = out.cost.repeats;
    resolved["seed"] = out.cost.seed;
  } else {
    bad(ctx, "kind must be clt|growth|cost, got '" + out.kind + "'");
  }
  out.resolved = std::move(resolved);
  return out;
}

StudyConfig load_study_file(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("cannot parse " + path + ": " + e.what());
  }
  return load_study(j);
}

// ---- CSV ----

std::string render_study_csv(const std::vector<StudyCsvRow>& rows) {
  std::string out = "estimator,n,N,R,mean,var,n_var,var_se,ratio_to_oracle\n";
  for (const StudyCsvRow& r : rows) {
    out += r.estimator;
    out += ',';
    out += format_int(r.horizon);
    out += ',';
    out += format_int(r.particles);
    out += ',';
    out += format_int(r.replicates);
    out += ',';
    out += r.mean;
    out += ',';
    out += r.var;
    out += ',';
    out += r.n_var;
    out += ',';
    out += r.var_se;
    out += ',';
    out += r.ratio_to_oracle;
    out += '\n';
  }
  return out;
}

// ---- manifest ----

void write_manifest(const std::string& out_path, const RunManifest& m) {
  Json doc = Json::object();
  doc.set("tool_version", Json::str(m.tool_version));
  doc.set("subcommand", Json::str(m.subcommand));
  doc.set("master_seed", Json::str(std::to_string(m.master_seed)));
  doc.set("threads", Json::integer(m.threads));
  doc.set("started_at_utc", Json::str(m.started_at_utc));
  doc.set("finished_at_utc", Json::str(m.finished_at_utc));
  doc.set("resolved_config", m.resolved_config.empty()
                                 ? Json::null()
                                 : Json::raw(m.resolved_config));
  Json outs = Json::array();
  for (const auto& [path, digest] : m.output_digests) {
    Json entry = Json::object();
    entry.set("path", Json::str(path));
    entry.set("fnv1a64", Json::str(digest));
    outs.push(std::move(entry));
  }
  doc.set("outputs", std::move(outs));
  write_file(out_path + ".manifest.json", doc.dump());
}

}  // namespace fk::config
