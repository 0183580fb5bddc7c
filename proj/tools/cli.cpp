#include "cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cbandit/csv_io.hpp"
#include "cbandit/error.hpp"
#include "cbandit/evaluation.hpp"
#include "cbandit/learners.hpp"
#include "cbandit/preprocess.hpp"
#include "cbandit/propensity.hpp"
#include "cbandit/reward_model.hpp"
#include "cbandit/synth.hpp"

namespace cbandit::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Anything the user can fix by changing inputs or config; maps to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config;
  std::string input;
  std::string output_dir;
  std::string schema;
  std::string policy;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  bool rank_features = false;
};

struct Config {
  json schema;  // inline object, path string or null
  std::string input;
  std::string output_dir = "runs";
  bool binarize = true;
  bool scale = true;
  ExperimentConfig experiment;
  std::vector<Algorithm> learn_algorithms = {Algorithm::kDR, Algorithm::kDM, Algorithm::kIPW,
                                             Algorithm::kOffsetTree};
  double learn_tau = 0.0;
  bool rank_features = false;
  SynthConfig synth;
  std::size_t oracle_draws = 200000;
  std::string policy;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return json::parse(text.str(), nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw InputError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void reject_unknown(const json& section, std::initializer_list<std::string_view> keys,
                    const std::string& where) {
  for (const auto& [key, value] : section.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw InputError("unknown key '" + key + "' in " + where);
    }
  }
}

Config parse_config(const json& j) {
  Config c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw InputError("config must be a JSON object");
  reject_unknown(j, {"schema", "input", "output_dir", "preprocess", "experiment", "learn",
                     "evaluate", "synth", "predict"},
                 "config");
  try {
    if (j.contains("schema")) c.schema = j.at("schema");
    c.input = j.value("input", c.input);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("preprocess")) {
      const auto& p = j.at("preprocess");
      reject_unknown(p, {"binarize", "scale"}, "preprocess");
      c.binarize = p.value("binarize", c.binarize);
      c.scale = p.value("scale", c.scale);
    }
    if (j.contains("experiment")) c.experiment = j.at("experiment").get<ExperimentConfig>();
    if (j.contains("learn")) {
      const auto& l = j.at("learn");
      reject_unknown(l, {"algorithms", "tau"}, "learn");
      if (l.contains("algorithms")) {
        c.learn_algorithms.clear();
        for (const auto& name : l.at("algorithms")) {
          c.learn_algorithms.push_back(parse_algorithm(name.get<std::string>()));
        }
      }
      c.learn_tau = l.value("tau", c.learn_tau);
    }
    if (j.contains("evaluate")) {
      const auto& e = j.at("evaluate");
      reject_unknown(e, {"rank_features"}, "evaluate");
      c.rank_features = e.value("rank_features", c.rank_features);
    }
    if (j.contains("synth")) {
      json s = j.at("synth");
      if (s.contains("oracle_draws")) {
        c.oracle_draws = s.at("oracle_draws").get<std::size_t>();
        s.erase("oracle_draws");
      }
      c.synth = s.get<SynthConfig>();
    }
    if (j.contains("predict")) {
      const auto& p = j.at("predict");
      reject_unknown(p, {"policy"}, "predict");
      c.policy = p.value("policy", c.policy);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  } catch (const DataError& e) {
    throw InputError(e.what());
  }
  return c;
}

json resolved(const Config& c) {
  std::vector<std::string> learn;
  for (const auto a : c.learn_algorithms) learn.emplace_back(to_string(a));
  json synth = c.synth;
  synth["oracle_draws"] = c.oracle_draws;
  return {{"schema", c.schema},
          {"input", c.input},
          {"output_dir", c.output_dir},
          {"preprocess", {{"binarize", c.binarize}, {"scale", c.scale}}},
          {"experiment", c.experiment},
          {"learn", {{"algorithms", learn}, {"tau", c.learn_tau}}},
          {"evaluate", {{"rank_features", c.rank_features}}},
          {"synth", synth},
          {"predict", {{"policy", c.policy}}}};
}

Config load_config(const Flags& flags) {
  Config c = parse_config(flags.config.empty() ? json() : read_json_file(flags.config));
  if (!flags.input.empty()) c.input = flags.input;
  if (!flags.output_dir.empty()) c.output_dir = flags.output_dir;
  if (!flags.schema.empty()) c.schema = flags.schema;
  if (!flags.policy.empty()) c.policy = flags.policy;
  if (flags.seed) {
    c.experiment.seed = *flags.seed;
    c.synth.seed = *flags.seed;
  }
  if (flags.tau) c.learn_tau = *flags.tau;
  if (flags.rank_features) c.rank_features = true;
  return c;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// <output_dir>/<command>-<hash of the resolved config>, with the config echoed inside.
fs::path make_run_dir(const std::string& command, const Config& c) {
  const json r = resolved(c);
  std::ostringstream name;
  name << command << "-" << std::hex;
  name.width(16);
  name.fill('0');
  name << fnv1a(command + "\n" + r.dump());
  const fs::path dir = fs::path(c.output_dir) / name.str();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory '" + dir.string() + "': " + ec.message());
  write_json(dir / "resolved_config.json", r);
  return dir;
}

const std::string& require_input(const Config& c) {
  if (c.input.empty()) throw InputError("no input dataset given (set \"input\" or pass --input)");
  return c.input;
}

FeatureSchema resolve_schema(const Config& c) {
  json source = c.schema;
  if (source.is_null() && !c.input.empty()) {
    const fs::path guess = fs::path(c.input).parent_path() / "schema.json";
    if (fs::exists(guess)) source = guess.string();
  }
  if (source.is_null()) {
    throw InputError("no schema given (set \"schema\", pass --schema, or place schema.json next to the input)");
  }
  try {
    if (source.is_string()) return read_json_file(source.get<std::string>()).get<FeatureSchema>();
    return source.get<FeatureSchema>();
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid schema: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("invalid schema: ") + e.what());
  }
}

PropensityFit fit_propensity(const Dataset& data, const ExperimentConfig& ec) {
  if (ec.propensity == PropensityKind::kBoostedTrees) return fit_gbm_propensity(data, ec.boosting);
  PropensityModel model = fit_multinomial_logit(data, ec.propensity_ridge);
  const Eigen::MatrixXd p = model.predict_matrix(data);
  const auto actions = data.actions();
  const auto weights = inverse_propensity_weights(p, actions);
  BalanceReport balance = asmd(data, weights);
  return {std::move(model), std::move(balance)};
}

std::string algorithm_file(Algorithm a) { return "policy_" + std::string(to_string(a)) + ".json"; }

int cmd_preprocess(const Config& c, std::ostream& out) {
  const FeatureSchema schema = resolve_schema(c);
  Dataset data = load_dataset(require_input(c), schema);
  if (c.binarize) {
    // A stored grand mean (from an earlier run) is reused so reprocessing is idempotent.
    data = data.stats().grand_mean ? binarize_rewards(data, *data.stats().grand_mean)
                                   : binarize_rewards(data);
  }
  const bool already_scaled = std::any_of(data.stats().scaling.begin(), data.stats().scaling.end(),
                                          [](const auto& r) { return r.has_value(); });
  if (c.scale && !already_scaled) data = scale_features(data);

  const fs::path dir = make_run_dir("preprocess", c);
  export_csv(data, dir / "dataset.csv");
  write_json(dir / "schema.json", schema);
  out << "T=" << data.size() << " K=" << data.num_arms();
  if (data.stats().grand_mean) out << " grand_mean=" << format_double(*data.stats().grand_mean);
  out << "\nwrote " << (dir / "dataset.csv").string() << "\n";
  return kExitOk;
}

int cmd_learn(const Config& c, std::ostream& out) {
  const FeatureSchema schema = resolve_schema(c);
  const Dataset data = load_dataset(require_input(c), schema);
  check_tau(c.learn_tau, data.num_arms());
  c.experiment.validate(data.num_arms());
  if (c.learn_algorithms.empty()) throw InputError("learn needs at least one algorithm");
  for (const auto a : c.learn_algorithms) {
    if (is_baseline(a)) throw InputError(std::string(to_string(a)) + " is a baseline, not a learner");
  }

  std::string stage = "propensity";
  try {
    const PropensityFit pf = fit_propensity(data, c.experiment);
    const bool needs_rm = std::any_of(c.learn_algorithms.begin(), c.learn_algorithms.end(),
                                      [](Algorithm a) { return a == Algorithm::kDM || a == Algorithm::kDR; });
    stage = "reward_model";
    std::optional<RewardModel> rm;
    if (needs_rm) rm = fit_reward_models(data, c.experiment.reward_lambda);

    const fs::path dir = make_run_dir("learn", c);
    write_json(dir / "propensity.json", pf.model.to_json());
    write_json(dir / "balance.json", pf.balance);
    if (rm) write_json(dir / "reward_model.json", rm->to_json());

    stage = "learners";
    const Eigen::MatrixXd x = data.context_matrix();
    for (const auto a : c.learn_algorithms) {
      json artifact;
      if (a == Algorithm::kOffsetTree) {
        artifact = fit_offset_tree(data, pf.model, c.learn_tau, c.experiment.policy_lambda).to_json();
      } else {
        const ImputationMethod method = a == Algorithm::kDM    ? ImputationMethod::kDM
                                        : a == Algorithm::kIPW ? ImputationMethod::kIPW
                                                               : ImputationMethod::kDR;
        const auto imputed = impute_rewards(data, method, rm ? &*rm : nullptr, &pf.model, c.learn_tau);
        artifact = fit_policy(imputed, x, schema, c.experiment.policy_lambda).to_json();
      }
      write_json(dir / algorithm_file(a), artifact);
      out << "wrote " << (dir / algorithm_file(a)).string() << "\n";
    }
    out << "balance (mean ASMD) " << format_double(pf.balance.mean) << "\n";
  } catch (const FitError& e) {
    throw FitError("learn failed in " + stage + ": " + e.what());
  }
  return kExitOk;
}

int cmd_evaluate(const Config& c, std::ostream& out) {
  const FeatureSchema schema = resolve_schema(c);
  const Dataset data = load_dataset(require_input(c), schema);
  c.experiment.validate(data.num_arms());
  if (c.rank_features) check_tau(c.learn_tau, data.num_arms());

  const ExperimentResult result = run_experiment(data, c.experiment);
  const fs::path dir = make_run_dir("evaluate", c);
  write_json(dir / "experiment.json", result);
  const std::string table = render_markdown(result);
  write_text(dir / "experiment.md", table);
  out << table;

  if (c.rank_features) {
    // Importance comes from a DR policy fitted on the full dataset.
    const PropensityFit pf = fit_propensity(data, c.experiment);
    const RewardModel rm = fit_reward_models(data, c.experiment.reward_lambda);
    const auto imputed = impute_rewards(data, ImputationMethod::kDR, &rm, &pf.model, c.learn_tau);
    const LinearPolicy policy = fit_policy(imputed, data.context_matrix(), schema, c.experiment.policy_lambda);
    const FeatureRanking ranking = rank_features(policy);
    write_text(dir / "ranking.csv", ranking_csv(ranking));
    write_json(dir / "ranking.json", ranking_json(ranking));
    write_text(dir / "ranking.svg", ranking_svg(ranking));
    out << "wrote " << (dir / "ranking.svg").string() << "\n";
  }
  out << "wrote " << (dir / "experiment.json").string() << "\n";
  return kExitOk;
}

int cmd_simulate(const Config& c, std::ostream& out) {
  try {
    c.synth.validate();
  } catch (const DataError& e) {
    throw InputError(e.what());
  }
  if (c.oracle_draws < 1) throw InputError("oracle_draws must be >= 1");
  const SynthResult env = generate(c.synth);
  const fs::path dir = make_run_dir("simulate", c);
  export_csv(env.data, dir / "dataset.csv");
  write_json(dir / "schema.json", env.data.schema());
  write_json(dir / "ground_truth.json", env.truth.to_json());

  const std::uint64_t oracle_seed = c.synth.seed ^ 0x0DDBA11CAFEULL;
  const auto random = make_baseline(BaselineKind::kRandom, env.truth.num_arms());
  const TrueBehaviorPolicy behavior(env.truth);
  const OraclePolicy optimal(env.truth);
  json oracle = json::object();
  for (const auto& [name, policy] : std::initializer_list<std::pair<const char*, const Policy*>>{
           {"random", &random}, {"behavior", &behavior}, {"optimal", &optimal}}) {
    const TrueValue v = true_value(*policy, env.truth, c.oracle_draws, oracle_seed);
    oracle[name] = {{"value", v.value}, {"std_error", v.std_error}};
    out << "oracle " << name << " " << format_double(v.value) << " (se " << format_double(v.std_error)
        << ")\n";
  }
  write_json(dir / "oracle.json", oracle);
  out << "T=" << env.data.size() << " K=" << env.data.num_arms() << "\nwrote "
      << (dir / "dataset.csv").string() << "\n";
  return kExitOk;
}

// Reads feature columns by name; other columns are ignored. Values must already be in the
// preprocessed feature space the policy was trained on.
std::vector<std::vector<double>> read_contexts(const fs::path& path, const FeatureSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw InputError("'" + path.string() + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  std::vector<std::size_t> columns;
  for (const auto& name : schema.names()) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError("feature column '" + name + "' missing from input");
    columns.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  std::vector<std::vector<double>> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw InputError("malformed CSV row " + std::to_string(row));
    std::vector<double> x;
    for (const auto col : columns) {
      try {
        std::size_t used = 0;
        x.push_back(std::stod(cells[col], &used));
        if (used != cells[col].size()) throw std::invalid_argument("trailing text");
      } catch (const std::exception&) {
        throw InputError("non-numeric feature value in CSV row " + std::to_string(row));
      }
    }
    rows.push_back(std::move(x));
  }
  return rows;
}

int cmd_predict(const Config& c, std::ostream& out) {
  if (c.policy.empty()) throw InputError("no policy given (set predict.policy or pass --policy)");
  const json artifact = read_json_file(c.policy);
  std::unique_ptr<DeterministicPolicy> policy;
  try {
    const std::string kind = artifact.at("kind").get<std::string>();
    if (kind == "linear") {
      policy = std::make_unique<LinearPolicy>(LinearPolicy::from_json(artifact));
    } else if (kind == "offset_tree") {
      policy = std::make_unique<OffsetTreePolicy>(OffsetTreePolicy::from_json(artifact));
    } else {
      throw InputError("unsupported policy kind '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid policy file: ") + e.what());
  }
  const FeatureSchema& schema = artifact.at("kind") == "linear"
                                    ? static_cast<const LinearPolicy&>(*policy).schema()
                                    : static_cast<const OffsetTreePolicy&>(*policy).schema();
  const auto contexts = read_contexts(require_input(c), schema);

  std::string csv = "row,action\n";
  std::vector<std::size_t> counts(schema.num_arms(), 0);
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const std::size_t a = policy->decide(contexts[i]);
    ++counts[a];
    csv += std::to_string(i) + "," + schema.arm_names()[a] + "\n";
  }
  const fs::path dir = make_run_dir("predict", c);
  write_text(dir / "predictions.csv", csv);
  out << "predicted " << contexts.size() << " contexts";
  for (std::size_t a = 0; a < counts.size(); ++a) out << (a == 0 ? ": " : ", ") << schema.arm_names()[a] << "=" << counts[a];
  out << "\nwrote " << (dir / "predictions.csv").string() << "\n";
  return kExitOk;
}

void add_common(CLI::App& sub, Flags& flags) {
  sub.add_option("-c,--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
  sub.add_option("-i,--input", flags.input, "input CSV (overrides config)");
  sub.add_option("-o,--output-dir", flags.output_dir, "output root (overrides config)");
  sub.add_option("--schema", flags.schema, "schema JSON file (overrides config)");
  sub.add_option("--seed", flags.seed, "seed for folds, boosting and simulation");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Counterfactual policy learning and evaluation from logged bandit feedback",
               "cbandit"};
  app.require_subcommand(1);
  Flags flags;

  auto* preprocess = app.add_subcommand("preprocess", "binarize rewards and scale features");
  auto* learn = app.add_subcommand("learn", "fit propensity, reward and policy models");
  auto* evaluate = app.add_subcommand("evaluate", "k-fold benchmark of learners and baselines");
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic logged dataset");
  auto* predict = app.add_subcommand("predict", "apply a learned policy to contexts");
  for (auto* sub : {preprocess, learn, evaluate, simulate, predict}) add_common(*sub, flags);
  learn->add_option("--tau", flags.tau, "trimming level used for learning");
  evaluate->add_flag("--rank-features", flags.rank_features, "also write the feature ranking");
  evaluate->add_option("--tau", flags.tau, "trimming level for the ranking model");
  predict->add_option("--policy", flags.policy, "policy JSON from learn");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    const Config config = load_config(flags);
    if (preprocess->parsed()) return cmd_preprocess(config, out);
    if (learn->parsed()) return cmd_learn(config, out);
    if (evaluate->parsed()) return cmd_evaluate(config, out);
    if (simulate->parsed()) return cmd_simulate(config, out);
    return cmd_predict(config, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {  // includes TauBoundError
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const FitError& e) {
    err << "fit error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace cbandit::cli
