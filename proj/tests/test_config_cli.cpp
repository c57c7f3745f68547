#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fk/common.hpp"
#include "fk/config.hpp"
#include "fk/experiments.hpp"
#include "fk/oracle.hpp"

using namespace fk;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() /
                 ("fk_cli_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string path_of(const std::string& name) {
  return (scratch() / name).string();
}

void put(const std::string& name, const std::string& content) {
  config::write_file(path_of(name), content);
}

struct RunResult {
  int code{-1};
  std::string out;
};

RunResult run_fk(const std::string& args, const std::string& env = "") {
  const std::string out_file = path_of("last_stdout.txt");
  std::string cmd = env.empty() ? std::string{} : env + " ";
  cmd += std::string(FK_BIN_PATH) + " " + args + " > " + out_file +
         " 2> " + path_of("last_stderr.txt");
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = config::read_file(out_file);
  return r;
}

std::string finite_model_json(long horizon) {
  json pot = json::array();
  for (long p = 0; p < horizon; ++p)
    pot.push_back({0.6 + 0.05 * (p % 3), 1.1 - 0.04 * (p % 4)});
  json j = {{"type", "finite"},
            {"initial", {0.6, 0.4}},
            {"transition", {{0.7, 0.3}, {0.2, 0.8}}},
            {"potentials", pot}};
  return j.dump();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

// ---- in-process config layer ----

TEST_CASE("json writer preserves order, formats, and escapes") {
  config::Json doc = config::Json::object();
  doc.set("zeta", config::Json::integer(-3));
  doc.set("alpha", config::Json::real(0.1));
  doc.set("flag", config::Json::boolean(true));
  doc.set("none", config::Json::null());
  doc.set("text", config::Json::str("a\"b\nc"));
  config::Json arr = config::Json::array();
  arr.push(config::Json::real(kInf));
  arr.push(config::Json::real(kNegInf));
  arr.push(config::Json::real(std::nan("")));
  doc.set("specials", std::move(arr));
  doc.set("embedded", config::Json::raw("{\"x\": 1}"));

  const std::string text = doc.dump();
  // insertion order, not alphabetical
  CHECK(text.find("\"zeta\"") < text.find("\"alpha\""));
  CHECK(text.find("0.10000000000000001") != std::string::npos);
  CHECK(text.find("\"a\\\"b\\nc\"") != std::string::npos);
  CHECK(text.find("\"inf\"") != std::string::npos);
  CHECK(text.find("\"-inf\"") != std::string::npos);
  CHECK(text.find("\"nan\"") != std::string::npos);
  CHECK(text.find("{\"x\": 1}") != std::string::npos);

  // round-trips through a standard parser
  json parsed = json::parse(text);
  CHECK(parsed["zeta"] == -3);
  CHECK(parsed["alpha"].get<double>() == 0.1);
  CHECK(parsed["embedded"]["x"] == 1);
  CHECK(parsed["text"].get<std::string>() == "a\"b\nc");

  CHECK(config::Json::array().dump() == "[]\n");
  CHECK(config::Json::object().dump() == "{}\n");
}

TEST_CASE("fnv1a64 matches the reference vectors") {
  CHECK(config::fnv1a64_hex("") == "cbf29ce484222325");
  CHECK(config::fnv1a64_hex("a") == "af63dc4c8601ec8c");
  CHECK(config::fnv1a64_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("file io and digests") {
  const std::string p = path_of("io_roundtrip.bin");
  const std::string content = std::string("line1\n\0mid", 10) + "\ttail";
  config::write_file(p, content);
  CHECK(config::read_file(p) == content);
  CHECK(config::file_digest(p) == config::fnv1a64_hex(content));
  CHECK_THROWS_AS(config::read_file(path_of("no_such_file")), ValidationError);
}

TEST_CASE("timestamps use compact utc iso8601") {
  const std::string t = config::iso8601_utc_now();
  REQUIRE(t.size() == 20);
  CHECK(t[4] == '-');
  CHECK(t[10] == 'T');
  CHECK(t[19] == 'Z');
}

TEST_CASE("model configs resolve defaults and reject unknown keys") {
  json g = {{"type", "gaussian_rw"},
            {"sigma_y2", 5.0},
            {"obs_map", "identity"},
            {"observations", {{0.4}, {-1.0}}}};
  auto lm = config::load_model(g);
  CHECK(lm.model->name() == "gaussian_rw");
  CHECK(lm.resolved["d_x"] == 1);
  CHECK(lm.resolved["delta0"].get<double>() == kDefaultDelta0);
  CHECK(lm.resolved["delta"].get<double>() == kDefaultDelta);

  g["surprise"] = 1;
  CHECK_THROWS_WITH_AS(config::load_model(g),
                       doctest::Contains("unknown key 'surprise'"),
                       ValidationError);

  json bad_type = {{"type", "quantum"}};
  CHECK_THROWS_AS(config::load_model(bad_type), ValidationError);
  CHECK_THROWS_AS(config::load_model(json::array()), ValidationError);

  // constructor validation propagates: transition rows must normalize
  json f = json::parse(finite_model_json(3));
  f["transition"][0] = {0.9, 0.3};
  CHECK_THROWS_AS(config::load_model(f), ValidationError);

  json lg = {{"type", "linear_gaussian"},
             {"a", 0.9},
             {"sigma_x2", 1.0},
             {"c", 1.0},
             {"sigma_y2", 0.5},
             {"observations", {0.1, -0.2}}};
  auto lin = config::load_model(lg);
  CHECK(lin.resolved["m0"].get<double>() == 0.0);
  CHECK(lin.resolved["p0"].get<double>() == 1.0);
}

TEST_CASE("functional configs cover every probe family") {
  auto co = config::load_functional(
      {{"type", "coordinate"}, {"center", 0.25}, {"alpha", 0.15}});
  double x = 1.0;
  CHECK(co.functional(0, {&x, 1}) == doctest::Approx(0.75));
  CHECK(co.functional.alpha == 0.15);
  CHECK(co.resolved["index"] == 0);

  auto ind = config::load_functional({{"type", "indicator"}, {"state", 0}});
  double s = 0.0;
  CHECK(ind.functional(2, {&s, 1}) == 1.0);

  auto tb = config::load_functional(
      {{"type", "table"}, {"xs", {0.0, 1.0}}, {"ys", {2.0, 4.0}}});
  double mid = 0.5;
  CHECK(tb.functional(0, {&mid, 1}) == doctest::Approx(3.0));

  auto ct = config::load_functional({{"type", "constant"}, {"value", 2.5}});
  CHECK(ct.functional(9, {&x, 1}) == 2.5);

  CHECK_THROWS_AS(config::load_functional({{"type", "mystery"}}),
                  ValidationError);
  CHECK_THROWS_AS(
      config::load_functional({{"type", "coordinate"}, {"scale", 2.0}}),
      ValidationError);
  // table knots must increase: model-layer validation propagates
  CHECK_THROWS_AS(config::load_functional({{"type", "table"},
                                           {"xs", {1.0, 1.0}},
                                           {"ys", {0.0, 0.0}}}),
                  ValidationError);
}

TEST_CASE("study configs map onto the experiment specs") {
  json spec = {{"kind", "clt"},
               {"model", json::parse(finite_model_json(4))},
               {"horizon", 3},
               {"particles", 64},
               {"replicates", 16},
               {"seed", 9}};
  auto sc = config::load_study(spec);
  CHECK(sc.kind == "clt");
  CHECK(sc.clt.horizon == 3);
  CHECK(sc.clt.particles == 64);
  CHECK(sc.clt.replicates == 16);
  CHECK(sc.clt.seed == 9);
  CHECK(sc.clt.threads == 1);  // default
  // no functional given: finite models default to the centered indicator
  CHECK(sc.functional.resolved["type"] == "indicator");
  CHECK(sc.functional.resolved["center"].get<double>() == 0.5);

  json growth = {{"kind", "growth"},
                 {"model", json::parse(finite_model_json(9))},
                 {"horizons", {2, 4, 8}},
                 {"particles", 32},
                 {"replicates", 8},
                 {"threads", 2}};
  auto gc = config::load_study(growth);
  CHECK(gc.growth.horizons == std::vector<long>{2, 4, 8});
  CHECK(gc.growth.threads == 2);
  CHECK(gc.growth.seed == 1);  // default

  json cost = {{"kind", "cost"},
               {"model", json::parse(finite_model_json(4))},
               {"particle_counts", {64, 128}}};
  auto cc = config::load_study(cost);
  CHECK(cc.cost.particle_counts == std::vector<long>{64, 128});
  CHECK(cc.cost.steps == 3);
  CHECK(cc.cost.repeats == 5);

  json bad = spec;
  bad["kind"] = "voyage";
  CHECK_THROWS_AS(config::load_study(bad), ValidationError);
  json stray = spec;
  stray["budget"] = 10;
  CHECK_THROWS_WITH_AS(config::load_study(stray),
                       doctest::Contains("unknown key 'budget'"),
                       ValidationError);
  json missing = spec;
  missing.erase("particles");
  CHECK_THROWS_AS(config::load_study(missing), ValidationError);
}

TEST_CASE("study csv renders the pinned schema") {
  config::StudyCsvRow full{"backward", 5, 100, 40,
                           "1.5", "0.25", "25", "0.01", "0.98"};
  config::StudyCsvRow sparse{"filter", 3, 64, 2, "0.002", "", "", "", ""};
  const std::string csv = config::render_study_csv({full, sparse});
  auto rows = lines_of(csv);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "estimator,n,N,R,mean,var,n_var,var_se,ratio_to_oracle");
  CHECK(rows[1] == "backward,5,100,40,1.5,0.25,25,0.01,0.98");
  CHECK(rows[2] == "filter,3,64,2,0.002,,,,");
}

// ---- the binary, end to end ----

TEST_CASE("version and usage errors") {
  auto v = run_fk("--version");
  CHECK(v.code == 0);
  CHECK(v.out.find(kVersion) != std::string::npos);

  CHECK(run_fk("").code == 1);                  // subcommand required
  CHECK(run_fk("conjure").code == 1);           // unknown subcommand
  CHECK(run_fk("oracle --bogus 1").code == 1);  // unknown flag
  CHECK(run_fk("oracle").code == 1);            // missing required options
}

TEST_CASE("oracle subcommand reports the exact reference values") {
  put("m2.json", finite_model_json(6));
  auto r = run_fk("oracle --config " + path_of("m2.json") + " --n 5");
  REQUIRE(r.code == 0);
  json doc = json::parse(r.out);

  auto lm = config::load_model_file(path_of("m2.json"));
  auto lf = config::default_functional(*lm.model);
  const FiniteHmm* fh = lm.model->finite();
  auto flow = oracle::forward_flow(*fh, 5);
  auto sm = oracle::smoother_expectation(*fh, flow, lf.functional, 5);
  auto vb = oracle::asymptotic_variance(*fh, lf.functional, 5);

  CHECK(doc["n"] == 5);
  CHECK(doc["smoother_value"].get<double>() == sm.value);
  CHECK(doc["sigma2"].get<double>() == vb.sigma2);
  CHECK(doc["sigma2_var_form"].get<double>() == vb.sigma2_var_form);
  CHECK(doc["log_gamma"].get<double>() == flow.log_gamma_n);
  CHECK(doc["sigma2_terms"].size() == vb.per_p_terms.size());

  // continuous models have no exact reference
  put("rw.json", json({{"type", "gaussian_rw"},
                       {"sigma_y2", 5.0},
                       {"obs_map", "identity"},
                       {"observations", {{0.4}, {-1.0}}}})
                     .dump());
  CHECK(run_fk("oracle --config " + path_of("rw.json") + " --n 1").code == 1);
}

TEST_CASE("manifests record the run and digest the outputs") {
  put("m3.json", finite_model_json(6));
  const std::string out = path_of("oracle_out.json");
  auto r = run_fk("oracle --config " + path_of("m3.json") + " --n 4 --out " +
                  out);
  REQUIRE(r.code == 0);

  json man = json::parse(config::read_file(out + ".manifest.json"));
  CHECK(man["tool_version"].get<std::string>() == kVersion);
  CHECK(man["subcommand"] == "oracle");
  CHECK(man["master_seed"] == "0");
  CHECK(man["threads"] == 1);
  for (const char* k : {"started_at_utc", "finished_at_utc"}) {
    const auto t = man[k].get<std::string>();
    CHECK(t.size() == 20);
    CHECK(t.back() == 'Z');
  }
  CHECK(man["resolved_config"]["n"] == 4);
  CHECK(man["resolved_config"]["model"]["type"] == "finite");
  CHECK(man["resolved_config"]["functional"]["type"] == "indicator");
  REQUIRE(man["outputs"].size() == 1);
  CHECK(man["outputs"][0]["path"] == out);
  CHECK(man["outputs"][0]["fnv1a64"].get<std::string>() ==
        config::file_digest(out));
}

TEST_CASE("filter emits one row per time point") {
  put("m4.json", finite_model_json(6));
  const std::string out = path_of("filter_out.csv");
  auto r = run_fk("filter --config " + path_of("m4.json") +
                  " --n 5 --particles 200 --seed 3 --out " + out);
  REQUIRE(r.code == 0);
  auto rows = lines_of(config::read_file(out));
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == "p,eta_indicator,log_gamma_hat");
  CHECK(split_csv(rows[1])[0] == "0");
  CHECK(split_csv(rows[6])[0] == "5");
  // the horizon-0 row predates any reweighting
  CHECK(split_csv(rows[1])[2] == "0");

  CHECK(run_fk("filter --config " + path_of("m4.json") +
               " --n 9 --particles 50 --out " + out)
            .code == 1);  // n beyond the data
}

TEST_CASE("smooth outputs are reproducible byte for byte") {
  put("m5.json", finite_model_json(6));
  const std::string base = "smooth --config " + path_of("m5.json") +
                           " --n 4 --particles 150 --method both --seed 11";
  REQUIRE(run_fk(base + " --out " + path_of("sm_a.csv")).code == 0);
  REQUIRE(run_fk(base + " --out " + path_of("sm_b.csv")).code == 0);
  const std::string a = config::read_file(path_of("sm_a.csv"));
  CHECK(a == config::read_file(path_of("sm_b.csv")));

  // worker count must not leak into the estimates
  REQUIRE(run_fk(base + " --out " + path_of("sm_c.csv"), "FK_THREADS=3")
              .code == 0);
  CHECK(a == config::read_file(path_of("sm_c.csv")));

  REQUIRE(run_fk("smooth --config " + path_of("m5.json") +
                 " --n 4 --particles 150 --method both --seed 12 --out " +
                 path_of("sm_d.csv"))
              .code == 0);
  CHECK(a != config::read_file(path_of("sm_d.csv")));

  auto rows = lines_of(a);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "method,n,N,estimate,kernel_evals");
  auto bw = split_csv(rows[1]);
  auto gen = split_csv(rows[2]);
  CHECK(bw[0] == "backward");
  CHECK(bw[4] == "90000");  // 4 steps x 150^2
  CHECK(gen[0] == "genealogy");
  CHECK(gen[4] == "0");

  CHECK(run_fk("smooth --config " + path_of("m5.json") +
               " --n 4 --particles 150 --method sideways --out " +
               path_of("sm_e.csv"))
            .code == 1);
}

TEST_CASE("broken inputs exit 1, degenerate runs exit 3") {
  put("mangled.json", "{\"type\": ");
  CHECK(run_fk("filter --config " + path_of("mangled.json") +
               " --n 1 --particles 10 --out " + path_of("x.csv"))
            .code == 1);

  // all potentials vanish at p=0: the first reweighting has zero mass
  json dead = {{"type", "finite"},
               {"initial", {0.5, 0.5}},
               {"transition", {{0.5, 0.5}, {0.5, 0.5}}},
               {"potentials", {{0.0, 0.0}, {1.0, 1.0}}}};
  put("dead.json", dead.dump());
  CHECK(run_fk("filter --config " + path_of("dead.json") +
               " --n 1 --particles 20 --out " + path_of("y.csv"))
            .code == 3);
}

TEST_CASE("simulate-data round-trips into the filter") {
  json sim = {{"type", "gaussian_rw"},
              {"steps", 5},
              {"seed", 4},
              {"sigma_y2", 5.0},
              {"obs_map", "identity"}};
  put("sim.json", sim.dump());
  const std::string d1 = path_of("data1.json");
  REQUIRE(run_fk("simulate-data --config " + path_of("sim.json") + " --out " +
                 d1)
              .code == 0);
  const std::string d2 = path_of("data2.json");
  REQUIRE(run_fk("simulate-data --config " + path_of("sim.json") + " --out " +
                 d2)
              .code == 0);
  CHECK(config::read_file(d1) == config::read_file(d2));

  // flag overrides the config seed and changes the draw
  const std::string d3 = path_of("data3.json");
  REQUIRE(run_fk("simulate-data --config " + path_of("sim.json") +
                 " --seed 7 --out " + d3)
              .code == 0);
  CHECK(config::read_file(d1) != config::read_file(d3));

  json doc = json::parse(config::read_file(d1));
  REQUIRE(doc["states"].size() == 5);
  REQUIRE(doc["model"]["observations"].size() == 5);
  put("sim_model.json", doc["model"].dump());
  CHECK(run_fk("filter --config " + path_of("sim_model.json") +
               " --n 4 --particles 100 --out " + path_of("sim_f.csv"))
            .code == 0);
}

TEST_CASE("check subcommand reports verdicts without failing the run") {
  put("m6.json", finite_model_json(5));
  auto r = run_fk("check --config " + path_of("m6.json") + " --d 1 --alpha 0.25");
  REQUIRE(r.code == 0);
  json doc = json::parse(r.out);
  CHECK(doc["model"] == "finite");
  const auto& hyp = doc["hypotheses"];
  for (const char* k : {"drift", "initial_moment", "backward_weight_growth",
                        "minorization", "potential_bound", "potential_tail"}) {
    REQUIRE(hyp.contains(k));
    const auto v = hyp[k]["verdict"].get<std::string>();
    CHECK((v == "pass" || v == "fail" || v == "inconclusive"));
  }
  CHECK(doc["overall"] == "pass");
  CHECK(hyp["drift"]["b_d"].get<double>() > 0.0);
}

TEST_CASE("study clt: exit code and csv mirror the library result") {
  json spec = {{"kind", "clt"},
               {"model", json::parse(finite_model_json(4))},
               {"horizon", 3},
               {"particles", 64},
               {"replicates", 16},
               {"seed", 9}};
  put("clt.json", spec.dump());
  const std::string out = path_of("clt.csv");
  auto r = run_fk("study clt --spec " + path_of("clt.json") + " --out " + out);

  auto sc = config::load_study(spec);
  auto res = experiments::run_clt_study(*sc.model.model->finite(),
                                        sc.functional.functional, sc.clt);
  CHECK(r.code == (res.passed ? 0 : 2));

  auto rows = lines_of(config::read_file(out));
  REQUIRE(rows.size() == 2);
  auto cells = split_csv(rows[1]);
  REQUIRE(cells.size() == 9);
  CHECK(cells[0] == "backward");
  CHECK(cells[1] == "3");
  CHECK(cells[2] == "64");
  CHECK(cells[3] == "16");
  CHECK(cells[4] == format_double(res.mean));
  CHECK(cells[5] == format_double(res.var));
  CHECK(cells[6] == format_double(res.n_var));
  CHECK(cells[7] == format_double(res.var_se));
  CHECK(cells[8] == format_double(res.ratio));

  // kind argument must agree with the spec
  CHECK(run_fk("study growth --spec " + path_of("clt.json") + " --out " +
               path_of("z.csv"))
            .code == 1);
}

TEST_CASE("study growth: threads flag cannot change the numbers") {
  json spec = {{"kind", "growth"},
               {"model", json::parse(finite_model_json(9))},
               {"horizons", {2, 4, 8}},
               {"particles", 48},
               {"replicates", 12},
               {"seed", 5}};
  put("growth.json", spec.dump());
  auto r1 = run_fk("study growth --spec " + path_of("growth.json") +
                   " --threads 1 --out " + path_of("g1.csv"));
  auto r2 = run_fk("study growth --spec " + path_of("growth.json") +
                   " --threads 3 --out " + path_of("g2.csv"));
  CHECK(r1.code == r2.code);
  const std::string csv = config::read_file(path_of("g1.csv"));
  CHECK(csv == config::read_file(path_of("g2.csv")));
  auto rows = lines_of(csv);
  REQUIRE(rows.size() == 7);  // header + 2 estimators x 3 horizons
  CHECK(split_csv(rows[1])[0] == "backward");
  CHECK(split_csv(rows[2])[0] == "genealogy");
}

TEST_CASE("study cost: timing rows leave the statistics blank") {
  json spec = {{"kind", "cost"},
               {"model", json::parse(finite_model_json(4))},
               {"particle_counts", {64, 128}},
               {"steps", 2},
               {"repeats", 2}};
  put("cost.json", spec.dump());
  const std::string out = path_of("cost.csv");
  auto r = run_fk("study cost --spec " + path_of("cost.json") + " --out " + out);
  CHECK((r.code == 0 || r.code == 2));  // bands are timing-dependent
  auto rows = lines_of(config::read_file(out));
  REQUIRE(rows.size() == 5);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto cells = split_csv(rows[i]);
    REQUIRE(cells.size() == 9);
    CHECK((cells[0] == "filter" || cells[0] == "backward"));
    CHECK(cells[1] == "2");
    CHECK(std::stod(cells[4]) > 0.0);  // median seconds
    for (std::size_t k = 5; k < 9; ++k) CHECK(cells[k].empty());
  }
}
