#include "opl/runner.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "opl/errors.hpp"

namespace opl {

namespace {

using json = nlohmann::json;

constexpr Method kAllMethods[] = {Method::kLogging, Method::kRegA, Method::kRegF, Method::kIPS,
                                  Method::kDR,      Method::kPI,   Method::kLCPI, Method::kPONA};

const std::set<std::string> kSweepNames{"none", "n", "new_action_pct", "gamma", "rho_lower"};

struct KeyReader {
  const json& obj;
  std::string where;  // "file: path.to.block"
  std::set<std::string> seen;

  KeyReader(const json& o, std::string w) : obj(o), where(std::move(w)) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  }

  std::string at(const std::string& key) const { return where + "." + key; }

  const json* find(const std::string& key) {
    seen.insert(key);
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  double number(const json& v, const std::string& key) const {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
      if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    throw ConfigError(at(key) + ": expected a number (or \"inf\" / \"-inf\")");
  }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) out = number(*v, key);
  }
  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key) + ": expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) {
        throw ConfigError(at(key) + ": expected a non-negative integer");
      }
      out = v->get<std::size_t>();
    }
  }
  void get_u64(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(at(key) + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(at(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::vector<int>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(at(key) + ": expected an array of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) throw ConfigError(at(key) + ": expected an array of integers");
        out.push_back(e.get<int>());
      }
    }
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(at(key) + ": expected an array of numbers");
      out.clear();
      for (const auto& e : *v) out.push_back(number(e, key));
    }
  }
  void get(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = std::filesystem::path(s).is_absolute() ? std::filesystem::path(s) : base / s;
  }

  void finish() const {
    for (const auto& [k, v] : obj.items()) {
      if (!seen.count(k)) throw ConfigError(at(k) + ": unknown key");
    }
  }
};

void parse_env(const json& j, const std::string& where, const std::filesystem::path& base, EnvBlock& env) {
  KeyReader r(j, where);
  std::string kind = "synthetic";
  r.get("kind", kind);
  if (kind == "synthetic") {
    env.kind = EnvKind::kSynthetic;
    auto& s = env.synth;
    r.get("context_dim", s.context_dim);
    r.get("cards", s.cards);
    r.get("interaction_width", s.interaction_width);
    r.get("interaction_order", s.interaction_order);
    r.get("gamma", s.gamma);
    r.get("beta", s.beta);
    r.get("noise_sigma", s.noise_sigma);
    r.get("new_action_fraction", s.new_action_fraction);
    r.get("context_mean", s.context_mean);
    r.get("reward_low", s.reward_low);
    r.get("reward_high", s.reward_high);
  } else if (kind == "real") {
    env.kind = EnvKind::kReal;
    r.get("users", env.paths.users, base);
    r.get("items", env.paths.items, base);
    r.get("rewards", env.paths.rewards, base);
    r.get("clip_quantile", env.real.clip_quantile);
    r.get("interaction_width", env.real.interaction_width);
    r.get("interaction_order", env.real.interaction_order);
    r.get("beta", env.beta);
    r.get("new_action_fraction", env.new_action_fraction);
    r.get("noise_sigma", env.noise_sigma);
    if (env.paths.users.empty() || env.paths.items.empty() || env.paths.rewards.empty()) {
      throw ConfigError(where + ": real env needs users, items and rewards paths");
    }
  } else {
    throw ConfigError(r.at("kind") + ": expected \"synthetic\" or \"real\", got \"" + kind + "\"");
  }
  r.finish();
}

void parse_trainer(const json& j, const std::string& where, TrainConfig& t) {
  KeyReader r(j, where);
  r.get("learning_rate", t.learning_rate);
  r.get("iterations", t.iterations);
  std::string opt = t.optimizer == Optimizer::kAdam ? "adam" : "sgd";
  r.get("optimizer", opt);
  if (opt == "adam") {
    t.optimizer = Optimizer::kAdam;
  } else if (opt == "sgd") {
    t.optimizer = Optimizer::kPlain;
  } else {
    throw ConfigError(r.at("optimizer") + ": expected \"adam\" or \"sgd\"");
  }
  r.get("adam_beta1", t.adam_beta1);
  r.get("adam_beta2", t.adam_beta2);
  r.get("adam_epsilon", t.adam_epsilon);
  r.get("batch_size", t.batch_size);
  r.get("kappa_grid", t.kappa_grid);
  r.get("rho_lower", t.rho_lower);
  r.get("rho_upper", t.rho_upper);
  r.get("validation_fraction", t.validation_fraction);
  r.get("ridge_lambda_per_row", t.ridge_lambda_per_row);
  r.get("pinv_tol", t.pinv_tol);
  r.finish();
}

std::string format_number(double v) {
  if (std::isnan(v)) return "null";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_opt(const std::optional<double>& v) { return v ? format_number(*v) : "null"; }

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  }
  return s;
}

int method_rank(Method m) { return static_cast<int>(m); }

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Everything one (sweep value, seed) replicate needs, built once and shared
/// by every method.
struct Replicate {
  const ExperimentConfig& cfg;
  EnvOracle env;
  LoggedDataset train_part;
  LoggedDataset valid_part;
  TrainConfig tcfg;
  EvalSet eval;
  std::shared_ptr<const std::vector<char>> existing_mask;

  std::unique_ptr<QModel> qhat;
  ModelTable train_table, valid_table;
  std::unique_ptr<PseudoinverseWeights> lcpi, pi;

  Replicate(const ExperimentConfig& c, EnvOracle e, const RunSeeds& seeds, std::size_t n)
      : cfg(c), env(std::move(e)), tcfg(c.trainer), eval(env, c.eval_contexts, seeds.eval) {
    tcfg.seed = seeds.train;
    auto log = generate_log(env, n, seeds.log);
    std::tie(train_part, valid_part) = split_dataset(log, tcfg.validation_fraction, tcfg.seed);
    auto mask = std::make_shared<std::vector<char>>(env.action_count());
    for (std::size_t a : env.partition().existing) (*mask)[a] = 1;
    existing_mask = std::move(mask);
  }

  double lambda() const { return tcfg.ridge_lambda_per_row * static_cast<double>(train_part.size()); }

  const QModel& model() {
    if (!qhat) {
      qhat = std::make_unique<QModel>(fit_qmodel(train_part, QModelKind::kActionFeature, lambda()));
      train_table = prepare_model_table(train_part, *qhat);
      valid_table = prepare_model_table(valid_part, *qhat);
    }
    return *qhat;
  }
  const PseudoinverseWeights& weights(IndicatorMode mode) {
    auto& slot = mode == IndicatorMode::kLCPI ? lcpi : pi;
    if (!slot) {
      slot = std::make_unique<PseudoinverseWeights>(
          prepare_pseudoinverse(train_part, mode, logging_source(env), tcfg.pinv_tol, tcfg.exec));
    }
    return *slot;
  }

  MetricsReport score(const PolicyParams& params) const {
    return evaluate(SoftmaxPolicy(params, cfg.evaluate_argmax), eval, tcfg.exec);
  }

  KappaTuning tune() {
    model();
    EstimatorInputs inputs{&train_table, &weights(IndicatorMode::kLCPI), nullptr};
    return kappa_grid_search(train_part, inputs, valid_part, valid_table, tcfg);
  }

  ResultRow run(Method m) {
    ResultRow row;
    row.method = m;
    const auto t0 = Clock::now();
    switch (m) {
      case Method::kLogging:
        row.metrics = evaluate(LoggingPolicy(env), eval, tcfg.exec);
        break;
      case Method::kRegA:
      case Method::kRegF: {
        const auto kind = m == Method::kRegA ? QModelKind::kActionId : QModelKind::kActionFeature;
        auto q = std::make_shared<const QModel>(fit_qmodel(train_part, kind, lambda()));
        row.metrics = evaluate(RegressionPolicy(q, cfg.regression_temperature, cfg.regression_argmax), eval,
                               tcfg.exec);
        break;
      }
      case Method::kIPS:
        row.metrics = score(train(EstimatorSpec{Estimator::kIPS}, train_part, {}, tcfg, existing_mask).params);
        break;
      case Method::kDR: {
        model();
        EstimatorInputs in{&train_table, nullptr, nullptr};
        row.metrics = score(train(EstimatorSpec{Estimator::kDR}, train_part, in, tcfg, existing_mask).params);
        break;
      }
      case Method::kPI: {
        EstimatorInputs in{nullptr, nullptr, &weights(IndicatorMode::kPI)};
        row.metrics = score(train(EstimatorSpec{Estimator::kPI}, train_part, in, tcfg).params);
        break;
      }
      case Method::kLCPI: {
        EstimatorInputs in{nullptr, &weights(IndicatorMode::kLCPI), nullptr};
        row.metrics = score(train(EstimatorSpec{Estimator::kLCPI}, train_part, in, tcfg).params);
        break;
      }
      case Method::kPONA: {
        const KappaTuning tuning = tune();
        row.kappa = tuning.kappa();
        row.feasible = tuning.selection.feasible;
        row.metrics = score(tuning.policy());
        break;
      }
    }
    if (cfg.record_wallclock) row.wallclock_ms = elapsed_ms(t0);
    return row;
  }
};

struct Job {
  double value;
  int seed;
};

template <class Body>
std::vector<ResultRow> run_jobs(const std::vector<Job>& jobs, int workers, Body body) {
  std::vector<std::vector<ResultRow>> out(jobs.size());
  const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    out[k] = body(jobs[k]);
  }
  std::vector<ResultRow> rows;
  for (auto& v : out) std::move(v.begin(), v.end(), std::back_inserter(rows));
  sort_rows(rows);
  return rows;
}

ResultRow error_row(const ExperimentConfig& cfg, const Job& job, Method m, const std::string& msg) {
  ResultRow row;
  row.sweep_name = cfg.sweep.name;
  row.sweep_value = job.value;
  row.seed = job.seed;
  row.method = m;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  row.metrics.overall_value = row.metrics.norm_overall = row.metrics.value_per_existing = nan;
  row.metrics.norm_existing = row.metrics.new_action_mass = row.metrics.existing_mass = nan;
  row.status = "error: " + sanitize(msg);
  return row;
}

std::size_t sweep_n(const ExperimentConfig& cfg, double value) {
  return cfg.sweep.name == "n" ? static_cast<std::size_t>(std::llround(value)) : cfg.n;
}

std::vector<Job> job_list(const ExperimentConfig& cfg) {
  std::vector<Job> jobs;
  for (double v : cfg.sweep.values) {
    for (int s = 0; s < cfg.seeds; ++s) jobs.push_back({v, s});
  }
  return jobs;
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kLogging: return "logging";
    case Method::kRegA: return "reg_a";
    case Method::kRegF: return "reg_f";
    case Method::kIPS: return "ips";
    case Method::kDR: return "dr";
    case Method::kPI: return "pi";
    case Method::kLCPI: return "lcpi";
    case Method::kPONA: return "pona";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown method \"" + std::string(name) +
                    "\" (expected logging, reg_a, reg_f, ips, dr, pi, lcpi or pona)");
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("methods: must list at least one method");
  if (seeds < 1) throw ConfigError("seeds: must be >= 1");
  if (n < 2) throw ConfigError("n: must be >= 2");
  if (eval_contexts < 1) throw ConfigError("eval_contexts: must be >= 1");
  if (!kSweepNames.count(sweep.name)) throw ConfigError("sweep.name: unknown sweep \"" + sweep.name + "\"");
  if (sweep.values.empty()) throw ConfigError("sweep.values: must not be empty");
  for (double v : sweep.values) {
    const bool ok = sweep.name == "rho_lower" ? !std::isnan(v) && v < 1.0 + 1e-12 : std::isfinite(v);
    if (!ok) throw ConfigError("sweep.values: invalid value " + format_number(v));
    if (sweep.name == "n" && (v < 2 || v != std::floor(v))) throw ConfigError("sweep.values: n must be an integer >= 2");
    if (sweep.name == "new_action_pct" && !(v >= 0 && v < 100)) {
      throw ConfigError("sweep.values: new_action_pct must lie in [0, 100)");
    }
  }
  if (sweep.name == "gamma" && env.kind == EnvKind::kReal) throw ConfigError("sweep.name: gamma needs a synthetic env");
  if (!(regression_temperature > 0.0)) throw ConfigError("regression.temperature: must be > 0");
  try {
    trainer.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("trainer: ") + e.what());
  }
  if (env.kind == EnvKind::kSynthetic) {
    try {
      env.synth.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("env: ") + e.what());
    }
  } else if (!(env.new_action_fraction >= 0.0 && env.new_action_fraction < 1.0)) {
    throw ConfigError("env.new_action_fraction: must lie in [0, 1)");
  }
}

ExperimentConfig parse_config(const std::string& text, const std::string& source,
                              const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": byte " + std::to_string(e.byte) + ": malformed JSON");
  }
  ExperimentConfig cfg;
  KeyReader r(root, source);
  if (const json* env = r.find("env")) parse_env(*env, source + ": env", base_dir, cfg.env);
  r.get("n", cfg.n);
  if (const json* m = r.find("methods")) {
    if (!m->is_array()) throw ConfigError(source + ": methods: expected an array of names");
    for (const auto& e : *m) {
      if (!e.is_string()) throw ConfigError(source + ": methods: expected an array of names");
      try {
        cfg.methods.push_back(parse_method(e.get<std::string>()));
      } catch (const ConfigError& err) {
        throw ConfigError(source + ": methods: " + err.what());
      }
    }
  }
  if (const json* s = r.find("sweep")) {
    KeyReader sr(*s, source + ": sweep");
    sr.get("name", cfg.sweep.name);
    sr.get("values", cfg.sweep.values);
    sr.finish();
  }
  r.get("seeds", cfg.seeds);
  r.get_u64("seed_base", cfg.seed_base);
  if (const json* t = r.find("trainer")) parse_trainer(*t, source + ": trainer", cfg.trainer);
  r.get("eval_contexts", cfg.eval_contexts);
  r.get("evaluate_argmax", cfg.evaluate_argmax);
  if (const json* g = r.find("regression")) {
    KeyReader gr(*g, source + ": regression");
    gr.get("temperature", cfg.regression_temperature);
    gr.get("argmax", cfg.regression_argmax);
    gr.finish();
  }
  std::string out;
  r.get("output", out);
  if (!out.empty()) cfg.output = out;
  r.get("record_wallclock", cfg.record_wallclock);
  r.finish();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), path.parent_path());
}

RunSeeds run_seeds(std::uint64_t seed_base, int seed_index) {
  const auto i = static_cast<std::uint64_t>(seed_index);
  return RunSeeds{derive_seed(seed_base, 0xE1, i), derive_seed(seed_base, 0x10C, i),
                  derive_seed(seed_base, 0xE7A, i), derive_seed(seed_base, 0x7A1, i)};
}

EnvOracle make_env(const ExperimentConfig& cfg, double sweep_value, int seed_index) {
  const RunSeeds seeds = run_seeds(cfg.seed_base, seed_index);
  const std::string& sweep = cfg.sweep.name;
  if (cfg.env.kind == EnvKind::kSynthetic) {
    SynthConfig s = cfg.env.synth;
    s.seed = seeds.env;
    if (sweep == "gamma") s.gamma = sweep_value;
    if (sweep == "new_action_pct") s.new_action_fraction = sweep_value / 100.0;
    return build_env(s);
  }
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const RealDatasetSpec>> cache;
  std::shared_ptr<const RealDatasetSpec> spec;
  {
    const std::lock_guard<std::mutex> lock(mu);
    std::ostringstream key;
    key << cfg.env.paths.users << '|' << cfg.env.paths.items << '|' << cfg.env.paths.rewards << '|'
        << format_number(cfg.env.real.clip_quantile) << '|' << cfg.env.real.interaction_width;
    for (int o : cfg.env.real.interaction_order) key << ',' << o;
    auto& slot = cache[key.str()];
    if (!slot) slot = std::make_shared<const RealDatasetSpec>(load_real(cfg.env.paths, cfg.env.real));
    spec = slot;
  }
  const double frac = sweep == "new_action_pct" ? sweep_value / 100.0 : cfg.env.new_action_fraction;
  return build_semi_synth_env(*spec, cfg.env.beta, frac, seeds.env, cfg.env.noise_sigma);
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, int jobs) {
  cfg.validate();
  if (cfg.sweep.name == "rho_lower") throw ConfigError("sweep.name: rho_lower sweeps run through sweep-rho");
  return run_jobs(job_list(cfg), jobs, [&](const Job& job) {
    std::vector<ResultRow> rows;
    std::unique_ptr<Replicate> rep;
    std::string setup_error;
    try {
      rep = std::make_unique<Replicate>(cfg, make_env(cfg, job.value, job.seed), run_seeds(cfg.seed_base, job.seed),
                                        sweep_n(cfg, job.value));
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (Method m : cfg.methods) {
      if (!rep) {
        rows.push_back(error_row(cfg, job, m, setup_error));
        continue;
      }
      try {
        ResultRow row = rep->run(m);
        row.sweep_name = cfg.sweep.name;
        row.sweep_value = job.value;
        row.seed = job.seed;
        rows.push_back(std::move(row));
      } catch (const std::exception& e) {
        rows.push_back(error_row(cfg, job, m, e.what()));
      }
    }
    return rows;
  });
}

std::vector<ResultRow> run_sweep_rho(const ExperimentConfig& cfg, int jobs) {
  cfg.validate();
  if (cfg.sweep.name != "rho_lower") throw ConfigError("sweep.name: sweep-rho needs sweep.name = \"rho_lower\"");
  std::vector<Job> seeds;
  for (int s = 0; s < cfg.seeds; ++s) seeds.push_back({0.0, s});
  return run_jobs(seeds, jobs, [&](const Job& job) {
    std::vector<ResultRow> rows;
    try {
      Replicate rep(cfg, make_env(cfg, 0.0, job.seed), run_seeds(cfg.seed_base, job.seed), cfg.n);
      const auto t0 = Clock::now();
      KappaTuning tuning = rep.tune();
      const double tune_ms = elapsed_ms(t0);
      std::vector<std::optional<MetricsReport>> scored(tuning.points.size());
      for (double rho : cfg.sweep.values) {
        const auto t1 = Clock::now();
        const KappaSelection sel = select_kappa(tuning.points, rho, cfg.trainer.rho_upper);
        if (!scored[sel.index]) scored[sel.index] = rep.score(tuning.points[sel.index].params);
        ResultRow row;
        row.sweep_name = cfg.sweep.name;
        row.sweep_value = rho;
        row.seed = job.seed;
        row.method = Method::kPONA;
        row.kappa = tuning.points[sel.index].kappa;
        row.feasible = sel.feasible;
        row.metrics = *scored[sel.index];
        if (cfg.record_wallclock) row.wallclock_ms = tune_ms + elapsed_ms(t1);
        rows.push_back(std::move(row));
      }
    } catch (const std::exception& e) {
      for (double rho : cfg.sweep.values) rows.push_back(error_row(cfg, {rho, job.seed}, Method::kPONA, e.what()));
    }
    return rows;
  });
}

void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.sweep_value != b.sweep_value) return a.sweep_value < b.sweep_value;
    if (a.seed != b.seed) return a.seed < b.seed;
    return method_rank(a.method) < method_rank(b.method);
  });
}

void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << "sweep_name,sweep_value,seed,method,kappa,overall_value,norm_overall,value_per_existing,norm_existing,"
        "value_per_new,norm_new,new_action_mass,existing_action_mass,feasible,status,wallclock_ms\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    os << r.sweep_name << ',' << format_number(r.sweep_value) << ',' << r.seed << ',' << method_name(r.method)
       << ',' << format_opt(r.kappa) << ',' << format_number(m.overall_value) << ','
       << format_number(m.norm_overall) << ',' << format_number(m.value_per_existing) << ','
       << format_number(m.norm_existing) << ',' << format_opt(m.value_per_new) << ',' << format_opt(m.norm_new)
       << ',' << format_number(m.new_action_mass) << ',' << format_number(m.existing_mass) << ','
       << (r.feasible ? (*r.feasible ? "true" : "false") : "null") << ',' << r.status << ','
       << format_opt(r.wallclock_ms) << '\n';
  }
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  write_results_csv(os, rows);
  return os.str();
}

int resolve_jobs(std::optional<int> flag) {
  if (flag && *flag > 0) return *flag;
  if (const char* env = std::getenv("OPL_JOBS")) {
    int v = 0;
    const std::string_view s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec == std::errc() && res.ptr == s.data() + s.size() && v > 0) return v;
    throw ConfigError("OPL_JOBS must be a positive integer, got \"" + std::string(s) + "\"");
  }
  return 0;
}

}  // namespace opl
