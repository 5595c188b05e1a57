// pstrata command-line front end: simulate / fit / classify / policy-eval /
// sensitivity / bootstrap / experiment. All randomness flows from --seed.

#include <CLI11.hpp>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <thread>

#include "pstrata/csv.hpp"
#include "pstrata/inference.hpp"
#include "pstrata/pipeline.hpp"
#include "pstrata/serialize.hpp"
#include "pstrata/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pstrata;

namespace {

struct Common {
  std::string config_path;
  std::string data_path;
  std::string out_dir = "out";
  std::vector<std::string> a_cols, c_cols;
  double eta = 0.0;
  std::string eta_grid;  // comma-separated
  std::vector<std::string> methods;
  std::string family = "exp";
  std::string strata_method = "em";
  std::uint64_t seed = 1;
  int reps = 50;
  int boot = 200;
  bool force = false;
  int workers = 0;
  double cost_c1 = 0.0, cost_c0 = 0.0;
  std::size_t n = 1000;
  double delta = 0.0;
  json cfg;  // parsed --config contents
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON run configuration");
  app->add_option("--data", c.data_path, "input dataset CSV");
  app->add_option("--out", c.out_dir, "output directory");
  app->add_option("--a-cols", c.a_cols, "explicit A column names")
      ->delimiter(',');
  app->add_option("--c-cols", c.c_cols, "explicit C column names")
      ->delimiter(',');
  app->add_option("--eta", c.eta, "log odds-ratio sensitivity parameter");
  app->add_option("--eta-grid", c.eta_grid, "comma-separated eta values");
  app->add_option("--method", c.methods,
                  "method set: proposed, posterior, direct")
      ->delimiter(',');
  app->add_option("--family", c.family, "outcome family: exp | linear");
  app->add_option("--strata", c.strata_method,
                  "strata estimator: em | closed-form");
  app->add_option("--seed", c.seed, "top-level seed");
  app->add_option("--reps", c.reps, "replication count");
  app->add_option("--boot", c.boot, "bootstrap resample count");
  app->add_option("--workers", c.workers, "worker thread cap (0 = auto)");
  app->add_option("--n", c.n, "simulated sample size");
  app->add_option("--delta", c.delta, "treatment-assignment coefficient");
  app->add_flag("--force", c.force, "overwrite existing outputs");
}

// config supplies values only for flags not given on the command line
void apply_config(CLI::App* app, Common& c) {
  if (c.config_path.empty()) return;
  std::ifstream in(c.config_path);
  if (!in) throw std::runtime_error("cannot open config: " + c.config_path);
  in >> c.cfg;
  auto unset = [&](const char* flag) {
    auto* opt = app->get_option_no_throw(flag);
    return !opt || opt->count() == 0;
  };
  auto pick = [&](const char* flag, const char* key, auto& target) {
    if (c.cfg.contains(key) && unset(flag)) target = c.cfg.at(key).get<std::decay_t<decltype(target)>>();
  };
  pick("--data", "data", c.data_path);
  pick("--out", "out", c.out_dir);
  pick("--a-cols", "a_cols", c.a_cols);
  pick("--c-cols", "c_cols", c.c_cols);
  pick("--eta", "eta", c.eta);
  pick("--eta-grid", "eta_grid", c.eta_grid);
  pick("--method", "methods", c.methods);
  pick("--family", "family", c.family);
  pick("--strata", "strata", c.strata_method);
  pick("--seed", "seed", c.seed);
  pick("--reps", "reps", c.reps);
  pick("--boot", "boot", c.boot);
  pick("--workers", "workers", c.workers);
  pick("--n", "n", c.n);
  pick("--delta", "delta", c.delta);
  if (c.cfg.contains("cost_c1")) c.cost_c1 = c.cfg.at("cost_c1").get<double>();
  if (c.cfg.contains("cost_c0")) c.cost_c0 = c.cfg.at("cost_c0").get<double>();
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  return out;
}

void prepare_out(const Common& c) { fs::create_directories(c.out_dir); }

std::string out_path(const Common& c, const std::string& name) {
  fs::path p = fs::path(c.out_dir) / name;
  if (fs::exists(p) && !c.force)
    throw std::runtime_error("output exists (use --force): " + p.string());
  return p.string();
}

std::ofstream open_out(const Common& c, const std::string& name) {
  std::string p = out_path(c, name);
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write: " + p);
  f << std::setprecision(17);
  return f;
}

void write_json(const Common& c, const std::string& name, const json& j) {
  auto f = open_out(c, name);
  f << j.dump(2) << "\n";
}

PipelineConfig make_pipeline(const Common& c) {
  PipelineConfig p;
  p.odds.eta = c.eta;
  p.family = family_from_name(c.family);
  if (c.strata_method == "em")
    p.strata_method = PipelineConfig::StrataMethod::Em;
  else if (c.strata_method == "closed-form")
    p.strata_method = PipelineConfig::StrataMethod::ClosedForm;
  else
    throw std::runtime_error("unknown strata estimator: " + c.strata_method);
  p.em.seed = c.seed ^ 0xe11aULL;
  p.gmm.seed = c.seed ^ 0x6e11ULL;
  p.costs.c1.intercept = c.cost_c1;
  p.costs.c0.intercept = c.cost_c0;
  return p;
}

Dataset load_data(const Common& c) {
  if (c.data_path.empty()) throw std::runtime_error("--data is required");
  CsvOptions opt;
  opt.a_cols = c.a_cols;
  opt.c_cols = c.c_cols;
  Dataset d = read_dataset_csv(c.data_path, opt);
  require_valid(d);
  return d;
}

SimulationConfig make_sim(const Common& c) {
  SimulationConfig s;
  s.n = c.n;
  s.delta = c.delta;
  s.eta = c.eta;
  s.family = family_from_name(c.family);
  s.seed = c.seed;
  return s;
}

json estimands_json(const std::array<double, 4>& est) {
  json j;
  for (int k = 0; k < 4; ++k)
    j[kEstimandNames[k]] = std::isfinite(est[k]) ? json(est[k]) : json();
  return j;
}

int cmd_simulate(const Common& c) {
  prepare_out(c);
  LabeledDataset ld = generate(make_sim(c));
  {
    auto f = open_out(c, "labeled.csv");
    f << "z,s,y";
    for (int j = 0; j < ld.data.a_dim; ++j) f << ",a_" << j + 1;
    for (int j = 0; j < ld.data.c_dim; ++j) f << ",c_" << j + 1;
    f << ",g,y0,y1\n";
    for (std::size_t i = 0; i < ld.data.rows.size(); ++i) {
      const Observation& o = ld.data.rows[i];
      f << o.z << "," << o.s << "," << o.y;
      for (double v : o.a) f << "," << v;
      for (double v : o.c) f << "," << v;
      f << "," << stratum_name(ld.g[i]) << "," << ld.y0[i] << "," << ld.y1[i]
        << "\n";
    }
  }
  write_dataset_csv(out_path(c, "observable.csv"), ld.data);
  std::cout << "wrote " << ld.data.rows.size() << " rows to " << c.out_dir
            << "\n";
  return 0;
}

int cmd_fit(const Common& c) {
  Dataset d = load_data(c);
  PipelineConfig pipe = make_pipeline(c);
  FittedPipeline fp = fit_pipeline(d, pipe);
  prepare_out(c);
  save_strata_model(out_path(c, "strata_model.txt"), fp.strata);
  save_outcome_model(out_path(c, "outcome_model.txt"), fp.outcome);
  json diag;
  diag["eta"] = c.eta;
  diag["strata_method"] = c.strata_method;
  diag["family"] = c.family;
  for (int z = 0; z < 2; ++z) {
    json arm;
    arm["criterion"] = fp.gmm_diag.arm[z].criterion;
    arm["gradient_norm"] = fp.gmm_diag.arm[z].gradient_norm;
    arm["iterations"] = fp.gmm_diag.arm[z].iterations;
    arm["converged"] = fp.gmm_diag.arm[z].converged;
    diag["gmm"]["arm_" + std::to_string(z)] = arm;
  }
  for (int g = 0; g < kNumStrata; ++g)
    diag["effective_sample_size"][stratum_name(stratum_from_index(g))] =
        fp.gmm_diag.effective_sample_size[g];
  for (int set = 0; set < 2; ++set) {
    json id;
    id["eigen_min"] = fp.gmm_diag.identification.eigen_min[set];
    id["eigen_max"] = fp.gmm_diag.identification.eigen_max[set];
    id["condition_number"] =
        fp.gmm_diag.identification.condition_number[set];
    id["flagged"] = fp.gmm_diag.identification.flagged[set];
    diag["identification"]["set_" + std::to_string(set + 1)] = id;
  }
  if (!fp.em_trace.log_likelihood.empty()) {
    diag["em"]["iterations"] = fp.em_trace.log_likelihood.size();
    diag["em"]["final_log_likelihood"] = fp.em_trace.final_log_likelihood;
    diag["em"]["converged"] = fp.em_trace.converged;
    diag["em"]["best_restart"] = fp.em_trace.best_restart;
  }
  diag["estimands"] = estimands_json(marginal_estimands(fp, d));
  write_json(c, "diagnostics.json", diag);
  std::cout << "fit written to " << c.out_dir << "\n";
  return 0;
}

struct LoadedModels {
  StrataProbabilityModel strata;
  OutcomeModel outcome;
};

LoadedModels load_models(const Common& c, const Dataset& d) {
  LoadedModels m;
  m.strata = load_strata_model((fs::path(c.out_dir) / "strata_model.txt").string());
  m.outcome = load_outcome_model((fs::path(c.out_dir) / "outcome_model.txt").string());
  if (m.strata.a_dim != d.a_dim || m.strata.c_dim != d.c_dim)
    throw std::runtime_error(
        "strata model covariate dimensions (" +
        std::to_string(m.strata.a_dim) + "," + std::to_string(m.strata.c_dim) +
        ") do not match dataset (" + std::to_string(d.a_dim) + "," +
        std::to_string(d.c_dim) + ")");
  if (m.outcome.a_dim != d.a_dim || m.outcome.c_dim != d.c_dim)
    throw std::runtime_error(
        "outcome model covariate dimensions (" +
        std::to_string(m.outcome.a_dim) + "," +
        std::to_string(m.outcome.c_dim) + ") do not match dataset (" +
        std::to_string(d.a_dim) + "," + std::to_string(d.c_dim) + ")");
  return m;
}

int cmd_classify(const Common& c, bool identity_rewards) {
  Dataset d = load_data(c);
  LoadedModels m = load_models(c, d);
  CostSpec costs;
  costs.c1.intercept = c.cost_c1;
  costs.c0.intercept = c.cost_c0;
  RewardMatrix rm;
  if (identity_rewards) {
    for (int g = 0; g < kNumStrata; ++g)
      for (int s = 0; s < kNumStrata; ++s) rm.entries[g][s] = g == s ? 1.0 : 0.0;
  } else {
    rm = reward_matrix(d, m.strata, m.outcome, costs);
  }
  prepare_out(c);
  auto f = open_out(c, "classification.csv");
  f << "id,pi_00,pi_01,pi_10,pi_11,h_00,h_01,h_10,h_11,label,treat\n";
  for (std::size_t i = 0; i < d.rows.size(); ++i) {
    const Observation& o = d.rows[i];
    StrataVector pi = m.strata.predict(o.a, o.c);
    auto h = bayes_scores(rm, m.strata, o.a, o.c);
    StratumLabel lab = classify_bayes(rm, m.strata, o.a, o.c);
    int treat = treatment_rule(m.outcome, costs, lab, o.a, o.c);
    f << i;
    for (double v : pi) f << "," << v;
    for (double v : h) f << "," << v;
    f << "," << stratum_name(lab) << "," << treat << "\n";
  }
  std::cout << "classification written to " << c.out_dir << "\n";
  return 0;
}

int cmd_policy_eval(const Common& c) {
  Dataset d = load_data(c);
  LoadedModels m = load_models(c, d);
  CostSpec costs;
  costs.c1.intercept = c.cost_c1;
  costs.c0.intercept = c.cost_c0;
  RewardMatrix rm = reward_matrix(d, m.strata, m.outcome, costs);
  std::vector<std::string> methods =
      c.methods.empty()
          ? std::vector<std::string>{"proposed", "posterior", "direct"}
          : c.methods;

  json summary;
  for (const std::string& meth : methods) {
    PolicyEvaluation ev;
    if (meth == "proposed" || meth == "posterior") {
      DecisionRule rule = meth == "proposed"
                              ? make_bayes_rule(rm, m.strata)
                              : make_posterior_rule(m.strata);
      Policy pol = [&](const std::vector<double>& a,
                       const std::vector<double>& c2) {
        return treatment_rule(m.outcome, costs, rule.classify(a, c2), a, c2);
      };
      ev = value_function(pol, m.strata, m.outcome, costs, d);
    } else if (meth == "direct") {
      DirectPolicyResult dp =
          direct_policy_search(m.strata, m.outcome, costs, d);
      ev = dp.eval;
      for (Eigen::Index j = 0; j < dp.beta.size(); ++j)
        summary[meth]["beta"].push_back(dp.beta[j]);
    } else {
      throw std::runtime_error("unknown method: " + meth);
    }
    summary[meth]["value"] = ev.value;
    summary[meth]["revenue_ratio"] =
        std::isfinite(ev.revenue_ratio) ? json(ev.revenue_ratio) : json();
    for (int g = 0; g < kNumStrata; ++g)
      summary[meth]["per_stratum"][stratum_name(stratum_from_index(g))] =
          ev.per_stratum[g];
  }
  json rmj;
  for (int g = 0; g < kNumStrata; ++g) {
    json row;
    for (int s = 0; s < kNumStrata; ++s)
      row.push_back(rm.column_defined[s] ? json(rm.entries[g][s]) : json());
    rmj.push_back(row);
  }
  summary["reward_matrix"] = rmj;
  prepare_out(c);
  write_json(c, "policy_eval.json", summary);
  std::cout << "policy evaluation written to " << c.out_dir << "\n";
  return 0;
}

int cmd_sensitivity(const Common& c) {
  Dataset d = load_data(c);
  std::vector<double> etas = parse_grid(c.eta_grid);
  if (etas.empty()) throw std::runtime_error("--eta-grid is required");
  SensitivityGrid grid = sensitivity_sweep(d, etas, make_pipeline(c));
  prepare_out(c);
  auto f = open_out(c, "sensitivity.csv");
  f << "eta,quantity,value\n";
  json j;
  for (const SweepPoint& pt : grid.points) {
    json pj;
    pj["eta"] = pt.eta;
    if (pt.failed) {
      f << pt.eta << ",error,\n";
      pj["error"] = pt.error;
      j.push_back(pj);
      continue;
    }
    for (int k = 0; k < 4; ++k)
      f << pt.eta << "," << kEstimandNames[k] << "," << pt.estimands[k] << "\n";
    for (int g = 0; g < kNumStrata; ++g)
      f << pt.eta << ",pi_" << stratum_name(stratum_from_index(g)) << ","
        << pt.proportions[g] << "\n";
    f << pt.eta << ",bayes_value," << pt.bayes_value << "\n";
    f << pt.eta << ",revenue_ratio," << pt.revenue_ratio << "\n";
    pj["estimands"] = estimands_json(pt.estimands);
    for (int g = 0; g < kNumStrata; ++g) {
      pj["proportions"][stratum_name(stratum_from_index(g))] =
          pt.proportions[g];
      pj["label_counts"][stratum_name(stratum_from_index(g))] =
          pt.label_counts[g];
    }
    pj["bayes_value"] = pt.bayes_value;
    pj["revenue_ratio"] = pt.revenue_ratio;
    j.push_back(pj);
  }
  write_json(c, "sensitivity.json", j);
  std::cout << grid.points.size() << " sweep points written to " << c.out_dir
            << "\n";
  return 0;
}

int cmd_bootstrap(const Common& c) {
  Dataset d = load_data(c);
  PipelineConfig pipe = make_pipeline(c);
  if (c.boot < 2) throw std::runtime_error("--boot must be >= 2");

  // one pipeline refit per resample yields all four estimands at once
  FittedPipeline point_fit = fit_pipeline(d, pipe);
  std::array<double, 4> point = marginal_estimands(point_fit, d);

  const std::size_t n = d.rows.size();
  std::vector<std::array<double, 4>> reps(c.boot);
  std::vector<char> ok(c.boot, 0);
  int nw = c.workers > 0 ? c.workers
                         : static_cast<int>(std::thread::hardware_concurrency());
  nw = std::clamp(nw, 1, c.boot);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int b = next.fetch_add(1);
      if (b >= c.boot) break;
      Rng rng = Rng::stream(c.seed, static_cast<std::uint64_t>(b) + 1);
      Dataset boot;
      boot.a_dim = d.a_dim;
      boot.c_dim = d.c_dim;
      boot.rows.reserve(n);
      for (std::size_t i = 0; i < n; ++i)
        boot.rows.push_back(d.rows[rng.below(n)]);
      try {
        FittedPipeline fp = fit_pipeline(boot, pipe);
        reps[b] = marginal_estimands(fp, boot);
        ok[b] = 1;
      } catch (const std::exception&) {
        ok[b] = 0;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < nw; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  int failures = 0;
  for (char o : ok)
    if (!o) ++failures;
  if (failures > 0.2 * c.boot)
    throw std::runtime_error("bootstrap: too many failed replicates (" +
                             std::to_string(failures) + ")");

  prepare_out(c);
  auto f = open_out(c, "bootstrap.csv");
  f << "replicate,estimand,value\n";
  for (int b = 0; b < c.boot; ++b) {
    if (!ok[b]) continue;
    for (int k = 0; k < 4; ++k)
      f << b << "," << kEstimandNames[k] << "," << reps[b][k] << "\n";
  }
  json j;
  j["B"] = c.boot;
  j["failures"] = failures;
  j["eta"] = c.eta;
  for (int k = 0; k < 4; ++k) {
    std::vector<double> v;
    for (int b = 0; b < c.boot; ++b)
      if (ok[b] && std::isfinite(reps[b][k])) v.push_back(reps[b][k]);
    json e;
    e["estimate"] = point[k];
    if (!v.empty()) {
      e["ci_lower"] = quantile_type1(v, 0.025);
      e["ci_upper"] = quantile_type1(v, 0.975);
    }
    j["estimands"][kEstimandNames[k]] = e;
  }
  write_json(c, "bootstrap.json", j);
  std::cout << "bootstrap (" << c.boot - failures << " ok) written to "
            << c.out_dir << "\n";
  return 0;
}

int cmd_experiment(const Common& c) {
  SimulationConfig sim = make_sim(c);
  std::vector<std::string> methods =
      c.methods.empty()
          ? std::vector<std::string>{"proposed", "posterior", "direct"}
          : c.methods;
  ExperimentResult res =
      run_experiment(sim, c.reps, methods, make_pipeline(c), c.workers);
  prepare_out(c);
  {
    auto f = open_out(c, "experiment.csv");
    f << "rep,method,metric,value\n";
    for (const RepRecord& r : res.reps) {
      if (r.failed) {
        f << r.rep << ",,error,\n";
        continue;
      }
      for (int k = 0; k < 4; ++k)
        f << r.rep << ",pipeline," << kEstimandNames[k] << ","
          << r.estimands[k] << "\n";
      for (const auto& kv : r.accuracy)
        f << r.rep << "," << kv.first << ",accuracy," << kv.second << "\n";
      for (const auto& kv : r.revenue_ratio)
        f << r.rep << "," << kv.first << ",revenue_ratio," << kv.second
          << "\n";
    }
  }
  {
    auto f = open_out(c, "summary.txt");
    f << std::setprecision(4);
    f << "n=" << sim.n << " delta=" << sim.delta << " eta=" << sim.eta
      << " family=" << c.family << " reps=" << c.reps
      << " failures=" << res.failures << "\n\n";
    f << "estimand      bias(x100)  SE(x100)\n";
    for (int k = 0; k < 4; ++k)
      f << std::left << std::setw(14) << kEstimandNames[k] << std::right
        << std::setw(10) << res.bias_x100[k] << std::setw(10)
        << res.se_x100[k] << "\n";
    f << "\nmethod      median accuracy   median revenue ratio\n";
    for (const std::string& meth : methods) {
      f << std::left << std::setw(12) << meth << std::right;
      if (res.median_accuracy.count(meth))
        f << std::setw(12) << res.median_accuracy.at(meth);
      else
        f << std::setw(12) << "-";
      if (res.median_revenue_ratio.count(meth))
        f << std::setw(18) << res.median_revenue_ratio.at(meth);
      else
        f << std::setw(18) << "-";
      f << "\n";
    }
  }
  json j;
  j["failures"] = res.failures;
  for (int k = 0; k < 4; ++k) {
    j["true_estimands"][kEstimandNames[k]] = res.true_estimands[k];
    j["bias_x100"][kEstimandNames[k]] = res.bias_x100[k];
    j["se_x100"][kEstimandNames[k]] = res.se_x100[k];
  }
  for (const auto& kv : res.median_accuracy)
    j["median_accuracy"][kv.first] = kv.second;
  for (const auto& kv : res.median_revenue_ratio)
    j["median_revenue_ratio"][kv.first] = kv.second;
  write_json(c, "experiment.json", j);
  std::cout << "experiment written to " << c.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pseudo-strata learning toolkit"};
  app.require_subcommand(1);

  Common c;
  bool identity_rewards = false;

  auto* sim = app.add_subcommand("simulate", "generate synthetic data");
  auto* fit = app.add_subcommand("fit", "fit strata + outcome models");
  auto* cls = app.add_subcommand("classify", "pseudo-strata classification");
  cls->add_flag("--identity-rewards", identity_rewards,
                "use the identity reward matrix (posterior-mode cross-check)");
  auto* pev = app.add_subcommand("policy-eval", "value function comparison");
  auto* sen = app.add_subcommand("sensitivity", "eta sensitivity sweep");
  auto* boo = app.add_subcommand("bootstrap", "percentile bootstrap intervals");
  auto* exp = app.add_subcommand("experiment", "replicated simulation study");
  for (CLI::App* s : {sim, fit, cls, pev, sen, boo, exp}) add_common(s, c);

  CLI11_PARSE(app, argc, argv);
  CLI::App* sub = app.get_subcommands().front();
  try {
    apply_config(sub, c);
    if (sub == sim) return cmd_simulate(c);
    if (sub == fit) return cmd_fit(c);
    if (sub == cls) return cmd_classify(c, identity_rewards);
    if (sub == pev) return cmd_policy_eval(c);
    if (sub == sen) return cmd_sensitivity(c);
    if (sub == boo) return cmd_bootstrap(c);
    if (sub == exp) return cmd_experiment(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
