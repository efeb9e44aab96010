#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  if (const char* p = std::getenv("QSTEIN_CLI")) return p;
  return "./build/qstein";  // manual invocation from the repo root
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / "qstein_cli_test";
  fs::create_directories(dir);
  const fs::path out = dir / ("out" + std::to_string(counter) + ".txt");
  const fs::path err = dir / ("err" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd =
      cli_path() + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path tmp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "qstein_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

TEST_CASE("cli: no subcommand fails with usage exit code") {
  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("frobnicate").exit_code == 2);
}

TEST_CASE("cli sample: writes header, rows, and an in-support batch") {
  const auto csv_path = tmp_file("sample1.csv");
  const auto r =
      run_cli("sample --d 1 --q 0 --s 200 --seed 11 --out " + csv_path.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("config:") == 0);  // config echo on the first line
  const auto lines = lines_of(slurp(csv_path));
  REQUIRE(lines.size() == 201);
  CHECK(lines[0] == "x_1,s");
  // every row stays strictly inside |x| < R = sqrt((3/2)^(2/3))
  const double R = std::sqrt(std::cbrt(1.5 * 1.5));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const double x = std::stod(lines[i].substr(0, lines[i].find(',')));
    REQUIRE(std::abs(x) < R);
  }
}

TEST_CASE("cli sample: reruns are byte-identical") {
  const auto a = tmp_file("det_a.csv");
  const auto b = tmp_file("det_b.csv");
  REQUIRE(run_cli("sample --d 3 --q 0.75 --s 500 --seed 4 --out " + a.string()).exit_code == 0);
  REQUIRE(run_cli("sample --d 3 --q 0.75 --s 500 --seed 4 --out " + b.string()).exit_code == 0);
  const std::string ca = slurp(a), cb = slurp(b);
  REQUIRE_FALSE(ca.empty());
  CHECK(ca == cb);
  // a different seed changes the bytes
  const auto c = tmp_file("det_c.csv");
  REQUIRE(run_cli("sample --d 3 --q 0.75 --s 500 --seed 5 --out " + c.string()).exit_code == 0);
  CHECK(slurp(c) != ca);
}

TEST_CASE("cli sample: escort source and mean/factor options") {
  const auto p = tmp_file("esc.csv");
  const auto r = run_cli("sample --d 2 --q 0.5 --s 50 --seed 1 --source escort --mu 1.5,-0.5 "
                         "--out " + p.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("\"source\":\"escort\"") != std::string::npos);
  CHECK(run_cli("sample --d 2 --q 0.5 --s 5 --seed 1 --source nonsense --out " +
                tmp_file("x.csv").string())
            .exit_code == 2);
}

TEST_CASE("cli sample: the wrong tail regime is refused with a message") {
  const auto r = run_cli("sample --d 1 --q 1.5 --s 10 --seed 1 --out " +
                         tmp_file("never.csv").string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("heavy-tailed") != std::string::npos);
  CHECK(r.err.find("not supported") != std::string::npos);
}

TEST_CASE("cli verify: identity battery passes in both dimensions") {
  const auto r1 = run_cli("verify --q 0 --d 1");
  CHECK(r1.exit_code == 0);
  CHECK(r1.out.find("fail") == std::string::npos);
  CHECK(r1.out.find("normalization(base)") != std::string::npos);
  CHECK(r1.out.find("scale_gradient(logistic_loss)") != std::string::npos);

  const auto r2 = run_cli("verify --q 0.99 --d 2");
  CHECK(r2.exit_code == 0);
  CHECK(r2.out.find("fail") == std::string::npos);

  // gaussian limit: the reweighted rows do not apply and are not printed
  const auto rg = run_cli("verify --q 1 --d 1");
  CHECK(rg.exit_code == 0);
  CHECK(rg.out.find("reweighted_form") == std::string::npos);
  CHECK(rg.out.find("first_moment") != std::string::npos);
}

TEST_CASE("cli verify: oracle dimensions above two are refused") {
  CHECK(run_cli("verify --q 0.5 --d 3").exit_code == 2);
}

TEST_CASE("cli estimate: serialized estimate has exactly the published shape") {
  const auto out = tmp_file("est.json");
  const auto r = run_cli("estimate --estimator prop1_grad --function tanh_sum --d 2 --q 0.5 "
                         "--s 5000 --seed 9 --out " + out.string());
  REQUIRE(r.exit_code == 0);
  const auto j = nlohmann::json::parse(slurp(out));
  REQUIRE(j.size() == 6);
  for (const char* key : {"value", "stderr", "bound", "S", "seed", "estimator"})
    REQUIRE(j.contains(key));
  CHECK(j["estimator"] == "prop1_grad");
  CHECK(j["S"] == 5000);
  CHECK(j["seed"] == 9);
  CHECK(j["value"].size() == 2);
  CHECK(j["bound"].is_number());

  // hessian-type value serializes as nested rows
  const auto out2 = tmp_file("est2.json");
  REQUIRE(run_cli("estimate --estimator grad_sigma --function sine --d 2 --q 0.5 --s 2000 "
                  "--seed 9 --out " + out2.string())
              .exit_code == 0);
  const auto j2 = nlohmann::json::parse(slurp(out2));
  CHECK(j2["value"][0].is_array());
  CHECK(j2["bound"].is_null());
}

TEST_CASE("cli estimate: unknown estimator or battery function is a usage error") {
  CHECK(run_cli("estimate --estimator nope --function sine --d 1 --q 0.5 --s 10 --seed 1 "
                "--out " + tmp_file("e1.json").string())
            .exit_code == 2);
  CHECK(run_cli("estimate --estimator prop1_grad --function nope --d 1 --q 0.5 --s 10 --seed 1 "
                "--out " + tmp_file("e2.json").string())
            .exit_code == 2);
  // reweighted estimators require bounded support
  CHECK(run_cli("estimate --estimator prop1_grad --function sine --d 1 --q 1 --s 10 --seed 1 "
                "--out " + tmp_file("e3.json").string())
            .exit_code == 2);
}

TEST_CASE("cli experiment: radius report with the default grid") {
  const auto out = tmp_file("radius.json");
  const auto r = run_cli("experiment --kind radius --out " + out.string());
  REQUIRE(r.exit_code == 0);
  const auto j = nlohmann::json::parse(slurp(out));
  REQUIRE(j.contains("radius"));
  CHECK(j["radius"].size() == 5);
  CHECK(j["radius"][0]["argmin_d"] == 4);
  CHECK_FALSE(j.contains("wall_clock_sec"));
  // timings go to the serialized report only on request
  const auto out_t = tmp_file("radius_t.json");
  REQUIRE(run_cli("experiment --kind radius --timings --out " + out_t.string()).exit_code == 0);
  CHECK(nlohmann::json::parse(slurp(out_t)).contains("wall_clock_sec"));
}

TEST_CASE("cli experiment: config file round-trip and unknown keys") {
  const auto cfg = tmp_file("logreg_cfg.json");
  {
    std::ofstream f(cfg);
    f << R"({"dims":[5],"qs":[0.0,1.0],"N":200,"S":4,"reps":6,"seed":2})";
  }
  const auto out = tmp_file("logreg_out.json");
  const auto r = run_cli("experiment --kind logreg --config " + cfg.string() + " --out " +
                         out.string());
  REQUIRE(r.exit_code == 0);
  const auto j = nlohmann::json::parse(slurp(out));
  CHECK(j["config"]["logreg"]["N"] == 200);
  CHECK(j["logreg"].size() == 2);

  const auto bad = tmp_file("bad_cfg.json");
  {
    std::ofstream f(bad);
    f << R"({"dims":[5],"qs":[0.5],"N":200,"S":4,"reps":6,"seed":2,"mystery":1})";
  }
  CHECK(run_cli("experiment --kind logreg --config " + bad.string() + " --out " +
                tmp_file("nope.json").string())
            .exit_code == 2);
}

TEST_CASE("cli experiment: csv export alongside the json report") {
  const auto out = tmp_file("rad2.json");
  const auto csv = tmp_file("rad2.csv");
  REQUIRE(run_cli("experiment --kind radius --out " + out.string() + " --csv " + csv.string())
              .exit_code == 0);
  const auto text = slurp(csv);
  CHECK(text.rfind("experiment,rule,D,q,seed,metric,value\r\n", 0) == 0);
  CHECK(lines_of(text).size() == 1 + 5 * 200);
}

TEST_CASE("cli experiment: reports are byte-identical across reruns") {
  const auto a = tmp_file("rep_a.json");
  const auto b = tmp_file("rep_b.json");
  const auto cfg = tmp_file("train_cfg.json");
  {
    std::ofstream f(cfg);
    f << R"({"optimizers":[{"rule":"sgd","epochs":10,"seed":1},{"rule":"qvsgd","epochs":10,"seed":1}],"n_seeds":2})";
  }
  REQUIRE(run_cli("experiment --kind train --config " + cfg.string() + " --out " + a.string())
              .exit_code == 0);
  REQUIRE(run_cli("experiment --kind train --config " + cfg.string() + " --out " + b.string())
              .exit_code == 0);
  const std::string ca = slurp(a), cb = slurp(b);
  REQUIRE_FALSE(ca.empty());
  CHECK(ca == cb);
}

TEST_CASE("cli: mu file input and identity factor") {
  const auto muf = tmp_file("mu.json");
  {
    std::ofstream f(muf);
    f << "[0.25,-0.75]";
  }
  const auto out = tmp_file("mu_sample.csv");
  const auto r = run_cli("sample --d 2 --q 0.5 --s 20 --seed 2 --mu @" + muf.string() +
                         " --sigma-factor identity --out " + out.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("\"mu\":[0.25,-0.75]") != std::string::npos);
}
