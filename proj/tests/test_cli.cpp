#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const std::string kBinary = CLI_BINARY_PATH;

struct CliEnv {
  fs::path root;
  CliEnv() {
    const char* tmp = std::getenv("TMPDIR");
    root = fs::path(tmp ? tmp : "/tmp") /
           ("pstrata_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~CliEnv() { fs::remove_all(root); }
  std::string dir(const std::string& name) const {
    return (root / name).string();
  }
};

int run(const std::string& args) {
  std::string cmd = kBinary + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) out.push_back(tok);
  return out;
}

}  // namespace

TEST_CASE("cli end-to-end workflow") {
  CliEnv env;
  std::string sim = env.dir("sim");
  REQUIRE(run("simulate --n 800 --seed 4 --out " + sim) == 0);

  SUBCASE("simulate writes labeled and observable files") {
    auto labeled = lines_of(env.dir("sim") + "/labeled.csv");
    auto observable = lines_of(env.dir("sim") + "/observable.csv");
    REQUIRE(labeled.size() == 801);
    REQUIRE(observable.size() == 801);
    CHECK(labeled[0] == "z,s,y,a_1,c_1,g,y0,y1");
    CHECK(observable[0] == "z,s,y,a_1,c_1");  // leakage guard
  }
  SUBCASE("simulate is deterministic and refuses silent overwrite") {
    CHECK(run("simulate --n 800 --seed 4 --out " + sim) != 0);
    std::string sim2 = env.dir("sim2");
    REQUIRE(run("simulate --n 800 --seed 4 --out " + sim2) == 0);
    CHECK(slurp(sim + "/labeled.csv") == slurp(sim2 + "/labeled.csv"));
    CHECK(run("simulate --n 800 --seed 4 --force --out " + sim) == 0);
  }

  std::string fitd = env.dir("fit");
  REQUIRE(run("fit --data " + sim + "/observable.csv --out " + fitd) == 0);

  SUBCASE("fit leaves models and diagnostics") {
    CHECK(fs::exists(fitd + "/strata_model.txt"));
    CHECK(fs::exists(fitd + "/outcome_model.txt"));
    std::string diag = slurp(fitd + "/diagnostics.json");
    CHECK(diag.find("\"em\"") != std::string::npos);
    CHECK(diag.find("\"identification\"") != std::string::npos);
    CHECK(diag.find("\"effective_sample_size\"") != std::string::npos);
    CHECK(diag.find("\"estimands\"") != std::string::npos);
  }

  SUBCASE("classify emits one labeled row per observation") {
    REQUIRE(run("classify --data " + sim + "/observable.csv --out " + fitd +
                " --force") == 0);
    auto rows = lines_of(fitd + "/classification.csv");
    REQUIRE(rows.size() == 801);
    CHECK(rows[0] ==
          "id,pi_00,pi_01,pi_10,pi_11,h_00,h_01,h_10,h_11,label,treat");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      auto f = split(rows[i], ',');
      REQUIRE(f.size() == 11);
      bool known = f[9] == "00" || f[9] == "01" || f[9] == "10" || f[9] == "11";
      CHECK(known);
      CHECK((f[10] == "0" || f[10] == "1"));
    }
  }

  SUBCASE("classify with identity rewards reduces to the posterior mode") {
    REQUIRE(run("classify --identity-rewards --data " + sim +
                "/observable.csv --out " + fitd + " --force") == 0);
    auto rows = lines_of(fitd + "/classification.csv");
    const char* names[4] = {"00", "01", "10", "11"};
    for (std::size_t i = 1; i < rows.size(); ++i) {
      auto f = split(rows[i], ',');
      int best = 0;
      for (int g = 1; g < 4; ++g)
        if (std::stod(f[1 + g]) > std::stod(f[1 + best])) best = g;
      CHECK(f[9] == names[best]);
    }
  }

  SUBCASE("policy-eval compares the three methods") {
    REQUIRE(run("policy-eval --data " + sim + "/observable.csv --out " + fitd +
                " --force") == 0);
    std::string j = slurp(fitd + "/policy_eval.json");
    for (const char* key :
         {"\"proposed\"", "\"posterior\"", "\"direct\"", "\"reward_matrix\"",
          "\"revenue_ratio\"", "\"per_stratum\""})
      CHECK(j.find(key) != std::string::npos);
  }

  SUBCASE("sensitivity sweeps the eta grid") {
    std::string sen = env.dir("sen");
    REQUIRE(run("sensitivity --data " + sim + "/observable.csv --eta-grid "
                "0,0.25 --out " + sen) == 0);
    auto rows = lines_of(sen + "/sensitivity.csv");
    REQUIRE(rows.size() > 1);
    CHECK(rows[0] == "eta,quantity,value");
    bool saw0 = false, saw25 = false;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      auto f = split(rows[i], ',');
      if (f[0] == "0") saw0 = true;
      if (f[0] == "0.25") saw25 = true;
    }
    CHECK(saw0);
    CHECK(saw25);
    CHECK(slurp(sen + "/sensitivity.json").find("\"label_counts\"") !=
          std::string::npos);
  }
}

TEST_CASE("cli bootstrap and experiment commands") {
  CliEnv env;
  std::string sim = env.dir("sim");
  REQUIRE(run("simulate --n 500 --seed 6 --out " + sim) == 0);

  SUBCASE("bootstrap writes replicates and intervals") {
    std::string boo = env.dir("boot");
    REQUIRE(run("bootstrap --data " + sim + "/observable.csv --boot 8 "
                "--seed 2 --out " + boo) == 0);
    auto rows = lines_of(boo + "/bootstrap.csv");
    CHECK(rows.size() == 1 + 8 * 4);  // header + B replicates x 4 estimands
    CHECK(rows[0] == "replicate,estimand,value");
    std::string j = slurp(boo + "/bootstrap.json");
    for (const char* key : {"\"ci_lower\"", "\"ci_upper\"", "\"estimate\"",
                            "\"failures\"", "\"B\""})
      CHECK(j.find(key) != std::string::npos);
  }

  SUBCASE("experiment emits the replication table and summary") {
    std::string ex = env.dir("exp");
    REQUIRE(run("experiment --n 400 --reps 2 --seed 11 --method "
                "proposed,posterior --out " + ex) == 0);
    auto rows = lines_of(ex + "/experiment.csv");
    CHECK(rows[0] == "rep,method,metric,value");
    CHECK(rows.size() > 1);
    std::string summary = slurp(ex + "/summary.txt");
    CHECK(summary.find("bias(x100)") != std::string::npos);
    CHECK(summary.find("median accuracy") != std::string::npos);
    std::string j = slurp(ex + "/experiment.json");
    CHECK(j.find("\"median_revenue_ratio\"") != std::string::npos);
    CHECK(j.find("\"true_estimands\"") != std::string::npos);
  }
}

TEST_CASE("cli error handling") {
  CliEnv env;
  CHECK(run("fit --out " + env.dir("x")) != 0);          // missing --data
  CHECK(run("nonsense") != 0);                            // unknown subcommand
  CHECK(run("sensitivity --data /nonexistent.csv --eta-grid 0 --out " +
            env.dir("y")) != 0);
  std::string sim = env.dir("sim");
  REQUIRE(run("simulate --n 300 --seed 2 --out " + sim) == 0);
  // classify before fit: model files absent
  CHECK(run("classify --data " + sim + "/observable.csv --out " +
            env.dir("nofit")) != 0);
}

TEST_CASE("cli config file fills unset flags") {
  CliEnv env;
  std::string cfg = env.dir("") + "cfg.json";
  std::string sim = env.dir("simc");
  {
    std::ofstream f(cfg);
    f << "{\"n\": 250, \"seed\": 9, \"out\": \"" << sim << "\"}\n";
  }
  REQUIRE(run("simulate --config " + cfg) == 0);
  CHECK(lines_of(sim + "/observable.csv").size() == 251);
  // command line overrides the config value
  std::string sim2 = env.dir("simc2");
  REQUIRE(run("simulate --config " + cfg + " --n 100 --out " + sim2) == 0);
  CHECK(lines_of(sim2 + "/observable.csv").size() == 101);
}
