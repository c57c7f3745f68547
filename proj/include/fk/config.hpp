#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fk/experiments.hpp"
#include "fk/model.hpp"

namespace fk::config {

using nlohmann::json;

// ---- output JSON (in-house writer) ----
//
// Reports are written with an insertion-ordered tree and floats printed at
// 17 significant digits, so a rerun of the same resolved config reproduces
// files byte for byte. Non-finite values are emitted as the strings "inf",
// "-inf", "nan" (plain JSON has no spelling for them).
class Json {
 public:
  static Json null();
  static Json boolean(bool v);
  static Json integer(long long v);
  static Json real(double v);
  static Json str(std::string v);
  static Json array();
  static Json object();
  // wraps an already-serialized JSON fragment verbatim (used to embed
  // parsed configs into reports)
  static Json raw(std::string serialized);

  Json& push(Json v);                     // array append
  Json& set(std::string key, Json v);     // object append
  std::string dump(int indent = 2) const;

 private:
  enum class Kind { Null, Bool, Int, Real, Str, Arr, Obj, Raw };
  Kind kind_{Kind::Null};
  bool b_{false};
  long long i_{0};
  double d_{0.0};
  std::string s_;
  std::vector<Json> arr_;
  std::vector<std::pair<std::string, Json>> obj_;

  void write(std::string& out, int indent, int depth) const;
};

// ---- digests and files ----

std::string fnv1a64_hex(std::string_view bytes);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
std::string file_digest(const std::string& path);
std::string iso8601_utc_now();

// ---- model / functional / study configs ----

struct LoadedModel {
  std::unique_ptr<Model> model;
  json resolved;  // config with defaults filled in
};

LoadedModel load_model(const json& j);
LoadedModel load_model_file(const std::string& path);

struct LoadedFunctional {
  AdditiveFunctional functional;
  json resolved;
};

LoadedFunctional load_functional(const json& j);
LoadedFunctional load_functional_file(const std::string& path);
// centered indicator of state 1 on finite models, first coordinate
// otherwise
LoadedFunctional default_functional(const Model& model);

struct StudyConfig {
  std::string kind;  // clt | growth | cost
  LoadedModel model;
  LoadedFunctional functional;
  experiments::CltStudySpec clt;
  experiments::GrowthStudySpec growth;
  experiments::CostStudySpec cost;
  json resolved;
};

StudyConfig load_study(const json& j);
StudyConfig load_study_file(const std::string& path);

// ---- study CSV ----

// One row of the pinned study schema; empty strings render as empty cells.
struct StudyCsvRow {
  std::string estimator;
  long horizon{0};
  long particles{0};
  long replicates{0};
  std::string mean, var, n_var, var_se, ratio_to_oracle;
};

std::string render_study_csv(const std::vector<StudyCsvRow>& rows);

// ---- run manifest ----

struct RunManifest {
  std::string tool_version;
  std::string subcommand;
  std::uint64_t master_seed{0};
  int threads{1};
  std::string started_at_utc;
  std::string finished_at_utc;
  std::string resolved_config;  // serialized JSON of the effective config
  std::vector<std::pair<std::string, std::string>> output_digests;
};

// writes <out>.manifest.json next to the output it describes
void write_manifest(const std::string& out_path, const RunManifest& m);

}  // namespace fk::config
