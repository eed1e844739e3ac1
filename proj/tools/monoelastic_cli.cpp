/*
 * Copyright 2026 The monoelastic Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// monoelastic command-line driver: synth, build, train, evaluate,
// elasticity and gradcheck subcommands.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "monoelastic/elasticity.hpp"
#include "monoelastic/model_io.hpp"
#include "monoelastic/pairs.hpp"
#include "monoelastic/synthetic.hpp"
#include "monoelastic/trainer.hpp"
#include "monoelastic/transactions.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace monoelastic::cli {
namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kMismatch = 3,
  kNumeric = 4,
};

constexpr const char* kResolvedConfig = "resolved_config.json";

void log(const std::string& msg) { std::cerr << "monoelastic: " << msg << '\n'; }

std::string dashed(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return key;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Binds CLI11 options to config-file keys. Values from --config apply only
// where the flag was not given explicitly.
class OptionSet {
 public:
  OptionSet(CLI::App* app, std::string command) : app_(app), command_(std::move(command)) {
    app_->add_option("--config", config_path_, "JSON config file; explicit flags win");
  }

  template <typename T>
  CLI::Option* add(const std::string& key, T& target, const std::string& help) {
    CLI::Option* opt = app_->add_option("--" + dashed(key), target, help)->capture_default_str();
    entries_.push_back({key, opt, [&target](const nlohmann::json& j) { target = j.get<T>(); },
                        [&target] { return json(target); }});
    return opt;
  }

  CLI::Option* flag(const std::string& key, bool& target, const std::string& help) {
    CLI::Option* opt = app_->add_flag("--" + dashed(key), target, help);
    entries_.push_back({key, opt, [&target](const nlohmann::json& j) { target = j.get<bool>(); },
                        [&target] { return json(target); }});
    return opt;
  }

  void merge_config() {
    if (config_path_.empty()) return;
    std::ifstream in(config_path_);
    if (!in) throw ConfigError("cannot open config file '" + config_path_ + "'");
    nlohmann::json cfg;
    try {
      cfg = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file '" + config_path_ + "' is not valid JSON: " + e.what());
    }
    if (!cfg.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [key, value] : cfg.items()) {
      if (key == "command") {
        if (value != command_) {
          throw ConfigError("config file is for command '" + value.dump() + "', not '" +
                            command_ + "'");
        }
        continue;
      }
      auto it = std::find_if(entries_.begin(), entries_.end(),
                             [&](const Entry& e) { return e.key == key; });
      if (it == entries_.end()) {
        throw ConfigError("unknown config key '" + key + "' for command " + command_);
      }
      if (it->option->count() > 0) continue;
      try {
        it->from_json(value);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config key '" + key + "' has the wrong type: " + e.what());
      }
    }
  }

  json resolved() const {
    json j;
    j["command"] = command_;
    for (const auto& e : entries_) j[e.key] = e.to_json();
    return j;
  }

  CLI::App* app() const { return app_; }

 private:
  struct Entry {
    std::string key;
    CLI::Option* option;
    std::function<void(const nlohmann::json&)> from_json;
    std::function<json()> to_json;
  };
  CLI::App* app_;
  std::string command_;
  std::string config_path_;
  std::vector<Entry> entries_;
};

std::string require_path(const std::string& value, const std::string& flag) {
  if (value.empty()) throw ConfigError("missing required option --" + flag);
  return value;
}

fs::path prepare_out_dir(const std::string& out, const OptionSet& opts) {
  const fs::path dir = require_path(out, "out");
  fs::create_directories(dir);
  write_json(dir / kResolvedConfig, opts.resolved());
  return dir;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t items = 200;
  int months = 27;
  std::uint64_t seed = 7;
  std::string start = "2022-01";
  double epsilon_min = -3.0;
  double epsilon_max = -0.5;
  double noise_sigma = 0.1;
  double price_volatility = 0.15;
  double stockout_rate = 0.0;
  bool kinked = false;
  bool no_season = false;

  void bind(OptionSet& o) {
    o.add("out", out, "output directory");
    o.add("items", items, "number of items");
    o.add("months", months, "number of months");
    o.add("seed", seed, "random seed");
    o.add("start", start, "first month (YYYY-MM)");
    o.add("epsilon_min", epsilon_min, "lowest true elasticity");
    o.add("epsilon_max", epsilon_max, "highest true elasticity");
    o.add("noise_sigma", noise_sigma, "lognormal demand noise");
    o.add("price_volatility", price_volatility, "monthly log-price volatility");
    o.add("stockout_rate", stockout_rate, "share of item-months with zero inventory");
    o.flag("kinked", kinked, "two-segment demand law");
    o.flag("no_season", no_season, "disable seasonality and events");
  }

  int run(const OptionSet& opts) const {
    SyntheticWorld w;
    w.items = items;
    w.months = months;
    w.seed = seed;
    w.start = YearMonth::parse(start);
    w.epsilon_min = epsilon_min;
    w.epsilon_max = epsilon_max;
    w.noise_sigma = noise_sigma;
    w.price_volatility = price_volatility;
    w.stockout_rate = stockout_rate;
    w.kinked = kinked;
    w.seasonal = !no_season;
    w.validate();
    const fs::path dir = prepare_out_dir(out, opts);
    const SyntheticData data = generate(w);
    {
      std::ofstream f(dir / "transactions.csv", std::ios::binary);
      write_transactions(f, data.records);
    }
    {
      std::ofstream f(dir / "truth.csv", std::ios::binary);
      write_truth(f, data.truth);
    }
    log("synth: " + std::to_string(data.records.size()) + " records for " +
        std::to_string(data.truth.size()) + " items -> " + dir.string());
    return kOk;
  }
};

struct BuildArgs {
  std::string transactions;
  std::string out;
  std::uint64_t seed = 1;
  int out_of_time_months = 3;
  double train_fraction = 0.8;
  bool by_item = false;

  void bind(OptionSet& o) {
    o.add("transactions", transactions, "transactions CSV");
    o.add("out", out, "dataset output directory");
    o.add("seed", seed, "split seed");
    o.add("out_of_time_months", out_of_time_months, "months held out at the end");
    o.add("train_fraction", train_fraction, "train share of the remaining pairs");
    o.flag("by_item", by_item, "split train/validation by item instead of by pair");
  }

  int run(const OptionSet& opts) const {
    const auto records = ingest_file(require_path(transactions, "transactions"));
    SplitPolicy policy;
    policy.out_of_time_months = out_of_time_months;
    policy.train_fraction = train_fraction;
    policy.by_item = by_item;
    const DatasetSplit ds = split(build_pairs(records), policy, seed);
    const fs::path dir = prepare_out_dir(out, opts);
    write_dataset(dir, ds);
    log("build: " + std::to_string(ds.train.size()) + " train, " +
        std::to_string(ds.validation.size()) + " validation, " +
        std::to_string(ds.out_of_time.size()) + " out-of-time pairs; boundary " +
        ds.manifest.boundary_month.str());
    return kOk;
  }
};

struct TrainArgs {
  std::string dataset;
  std::string out;
  TrainConfig train;
  ArchitectureConfig arch;
  std::string activation = to_string(ArchitectureConfig{}.activation);
  std::vector<int> split = {7, 7, 2};

  void bind(OptionSet& o) {
    o.add("dataset", dataset, "dataset directory from `build`");
    o.add("out", out, "model output directory");
    o.add("epochs", train.epochs, "training epochs");
    o.add("batch_size", train.batch_size, "minibatch size");
    o.add("learning_rate", train.learning_rate, "Adam learning rate");
    o.add("l2_decay", train.l2_decay, "L2 weight decay");
    o.add("seed", train.seed, "initialization and shuffling seed");
    o.add("activation", activation, "base activation: relu, elu or selu");
    o.add("continuous_width", arch.continuous_width, "per-feature encoder width");
    o.add("trunk_widths", arch.trunk_widths, "dense trunk widths")->delimiter(',');
    o.add("injection_width", arch.injection_width, "price injection width");
    o.add("post_widths", arch.post_widths, "post-injection widths")->delimiter(',');
    o.add("split", split, "convex,concave,bounded activation parts")->delimiter(',');
    o.add("unknown_level_rate", arch.unknown_level_rate, "categorical unknown-level dropout");
  }

  int run(const OptionSet& opts) {
    arch.activation = parse_base_activation(activation);
    if (split.size() != 3) throw ConfigError("--split needs three parts");
    arch.split = ActivationSplit{split[0], split[1], split[2]};
    train.validate();
    const DatasetSplit ds = read_dataset(require_path(dataset, "dataset"));
    const fs::path dir = prepare_out_dir(out, opts);
    DemandModel model =
        build_model(default_feature_schema(ds.train, ds.event_vocabulary), arch, train.seed);
    log("train: " + std::to_string(model.parameter_count()) + " parameters, " +
        std::to_string(ds.train.size()) + " training rows");
    const TrainReport report = monoelastic::train(
        model, ds, train, [](int epoch, const DemandModel&) {
          log("train: epoch " + std::to_string(epoch) + " done");
        });
    save_model(model, dir / "model.mdnm");
    json j = report.to_json();
    j.erase("wall_seconds");  // timings stay in the log
    write_json(dir / "train_report.json", j);
    std::ostringstream loss;
    report.write_loss_csv(loss);
    write_text(dir / "loss.csv", loss.str());
    const auto& last = report.epochs.back();
    log("train: final train loss " + csv::format_double(last.train_loss) +
        (last.validation_loss ? ", validation loss " + csv::format_double(*last.validation_loss)
                              : std::string()) +
        " in " + csv::format_double(report.wall_seconds) + " s");
    return kOk;
  }
};

std::vector<ElasticityQuery> default_queries(const InferenceSet& set, double fraction) {
  std::vector<ElasticityQuery> qs;
  for (const auto& r : set.rows) qs.push_back(default_query(r, fraction));
  return qs;
}

YearMonth as_of_month(const std::string& as_of, const std::vector<TransactionMonth>& records) {
  return as_of.empty() ? latest_month(records) : YearMonth::parse(as_of);
}

std::map<std::string, double> truth_elasticities(const std::vector<TruthRow>& truth,
                                                 const ElasticityReport& report) {
  std::map<std::string, const DemandLaw*> laws;
  for (const auto& t : truth) laws[t.item_id] = &t.law;
  std::map<std::string, double> out;
  for (const auto& e : report.entries) {
    auto it = laws.find(e.item_id);
    if (it != laws.end() && e.valid()) {
      out[e.item_id] = it->second->arc_elasticity(e.price, e.price_change);
    }
  }
  return out;
}

json counts_json(const ElasticityReport& report) {
  json j;
  for (const char* s : {"ok", "skipped", "degenerate_demand", "invalid_query"}) {
    j[s] = report.count(s);
  }
  return j;
}

struct EvaluateArgs {
  std::string model;
  std::string dataset;
  std::string out;
  std::string transactions;
  std::string truth;
  std::string as_of;
  double dp_fraction = kDefaultPriceChangeFraction;
  std::string wmape_form = "standard";

  void bind(OptionSet& o) {
    o.add("model", model, "model file from `train`");
    o.add("dataset", dataset, "dataset directory from `build`");
    o.add("out", out, "metrics output directory");
    o.add("transactions", transactions, "transactions CSV (for elasticity MAE)");
    o.add("truth", truth, "truth table CSV (for elasticity MAE)");
    o.add("as_of", as_of, "as-of month for elasticities (default: latest)");
    o.add("dp_fraction", dp_fraction, "price change as a fraction of price");
    o.add("wmape_form", wmape_form, "standard or printed");
  }

  int run(const OptionSet& opts) const {
    WmapeForm form;
    if (wmape_form == "standard") {
      form = WmapeForm::kStandard;
    } else if (wmape_form == "printed") {
      form = WmapeForm::kPrinted;
    } else {
      throw ConfigError("--wmape-form must be 'standard' or 'printed'");
    }
    if (truth.empty() != transactions.empty()) {
      throw ConfigError("--truth and --transactions must be given together");
    }
    const DemandModel m = load_model(require_path(model, "model"));
    const DatasetSplit ds = read_dataset(require_path(dataset, "dataset"));
    require_schema_match(m, ds.schema_hash);
    const fs::path dir = prepare_out_dir(out, opts);

    json metrics;
    metrics["wmape_form"] = wmape_form;
    auto split_wmape = [&](const std::vector<PairExample>& rows) -> json {
      if (rows.empty()) return nullptr;
      std::vector<double> actual;
      for (const auto& r : rows) actual.push_back(*r.target);
      return wmape(actual, m.predict_batch(rows), form);
    };
    metrics["rows"] = {{"validation", ds.validation.size()},
                       {"out_of_time", ds.out_of_time.size()}};
    metrics["wmape_validation"] = split_wmape(ds.validation);
    metrics["wmape_out_of_time"] = split_wmape(ds.out_of_time);

    if (!truth.empty()) {
      const auto records = ingest_file(transactions);
      const InferenceSet set = build_inference_set(records, as_of_month(as_of, records));
      const auto report =
          evaluate_elasticities(m, set.rows, default_queries(set, dp_fraction));
      const auto truth_rows = read_truth(truth);
      const auto truth_map = truth_elasticities(truth_rows, report);
      const MaeResult model_mae = mae_elasticity(truth_map, report.valid_elasticities());
      const BaselineResult base = loglog_baseline(ds.train);
      const MaeResult base_mae = mae_elasticity(truth_map, base.elasticity);
      metrics["as_of"] = set.as_of.str();
      metrics["dp_fraction"] = dp_fraction;
      metrics["elasticity_counts"] = counts_json(report);
      metrics["mae_model"] = {{"mae", model_mae.mae}, {"coverage", model_mae.coverage}};
      metrics["mae_loglog"] = {{"mae", base_mae.mae}, {"coverage", base_mae.coverage}};
    }
    write_json(dir / "metrics.json", metrics);
    std::string summary = "evaluate: out-of-time WMAPE ";
    summary += metrics["wmape_out_of_time"].is_null()
                   ? std::string("n/a")
                   : csv::format_double(metrics["wmape_out_of_time"].get<double>());
    if (metrics.contains("mae_model")) {
      summary += ", elasticity MAE " +
                 csv::format_double(metrics["mae_model"]["mae"].get<double>()) + " (loglog " +
                 csv::format_double(metrics["mae_loglog"]["mae"].get<double>()) + ")";
    }
    log(summary);
    return kOk;
  }
};

struct ElasticityArgs {
  std::string model;
  std::string transactions;
  std::string out;
  std::string as_of;
  std::string queries;
  double dp_fraction = kDefaultPriceChangeFraction;

  void bind(OptionSet& o) {
    o.add("model", model, "model file from `train`");
    o.add("transactions", transactions, "transactions CSV");
    o.add("out", out, "report output directory");
    o.add("as_of", as_of, "as-of month (default: latest)");
    o.add("queries", queries, "optional CSV item_id,p,dp; default is every item at -5%");
    o.add("dp_fraction", dp_fraction, "default price change as a fraction of price");
  }

  static std::vector<ElasticityQuery> read_queries(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open queries file '" + path + "'");
    std::string line;
    if (!csv::read_line(in, line) ||
        csv::split_record(line) != std::vector<std::string>{"item_id", "p", "dp"}) {
      throw ParseError("queries file must start with header item_id,p,dp");
    }
    std::vector<ElasticityQuery> out;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = csv::split_record(line);
      const auto p = f.size() == 3 ? csv::parse_double(f[1]) : std::nullopt;
      const auto dp = f.size() == 3 ? csv::parse_double(f[2]) : std::nullopt;
      if (!p || !dp) throw ParseError("queries line " + std::to_string(line_no) + ": bad row");
      out.push_back({f[0], *p, *dp});
    }
    return out;
  }

  int run(const OptionSet& opts) const {
    const DemandModel m = load_model(require_path(model, "model"));
    const auto records = ingest_file(require_path(transactions, "transactions"));
    require_schema_match(m, dataset_schema_hash(event_vocabulary(records)));
    const InferenceSet set = build_inference_set(records, as_of_month(as_of, records));
    const auto qs = queries.empty() ? default_queries(set, dp_fraction) : read_queries(queries);
    const fs::path dir = prepare_out_dir(out, opts);
    const ElasticityReport report = evaluate_elasticities(m, set.rows, qs);
    std::ostringstream csv_out;
    report.write_csv(csv_out);
    write_text(dir / "elasticity.csv", csv_out.str());
    json summary;
    summary["as_of"] = set.as_of.str();
    summary["counts"] = counts_json(report);
    summary["skipped_items"] = json::array();
    for (const auto& s : set.skipped) {
      summary["skipped_items"].push_back({{"item_id", s.item_id}, {"reason", s.reason}});
    }
    write_json(dir / "summary.json", summary);
    log("elasticity: " + std::to_string(report.count("ok")) + " valid of " +
        std::to_string(report.entries.size()) + " queries");
    return kOk;
  }
};

struct GradcheckArgs {
  std::string out;
  std::size_t probes = 5;
  std::size_t rows = 16;
  std::uint64_t seed = 1;
  std::string activation = to_string(ArchitectureConfig{}.activation);
  double l2_decay = 1e-2;
  double tolerance = 1e-5;

  void bind(OptionSet& o) {
    o.add("out", out, "optional report directory");
    o.add("probes", probes, "probes per parameter");
    o.add("rows", rows, "batch rows");
    o.add("seed", seed, "seed for data, weights and probes");
    o.add("activation", activation, "base activation");
    o.add("l2_decay", l2_decay, "decay coefficient included in the checked loss");
    o.add("tolerance", tolerance, "maximum allowed relative error");
  }

  int run(const OptionSet& opts) const {
    SyntheticWorld w;
    w.items = 10;
    w.months = 12;
    w.seed = seed;
    const auto pairs = build_pairs(generate(w).records);
    if (rows == 0 || rows > pairs.size()) throw ConfigError("--rows out of range");
    ArchitectureConfig arch;
    arch.activation = parse_base_activation(activation);
    DemandModel m = build_model(default_feature_schema(pairs, event_vocabulary(pairs)), arch, seed);
    m.set_stats(fit_stats(m, pairs));
    const auto report =
        gradcheck_model(m, std::span<const PairExample>(pairs.data(), rows), l2_decay, probes, seed);
    json j;
    j["tolerance"] = tolerance;
    j["max_relative_error"] = report.max_relative_error();
    j["parameters"] = json::array();
    for (const auto& e : report.entries) {
      j["parameters"].push_back({{"name", e.parameter},
                                 {"probes", e.probes},
                                 {"max_relative_error", e.max_relative_error},
                                 {"worst_analytic", e.worst_analytic},
                                 {"worst_numeric", e.worst_numeric}});
    }
    if (!out.empty()) write_json(prepare_out_dir(out, opts) / "gradcheck.json", j);
    std::cout << j.dump(2) << '\n';
    const bool pass = report.max_relative_error() < tolerance;
    log(std::string("gradcheck: max relative error ") +
        csv::format_double(report.max_relative_error()) + (pass ? " (pass)" : " (FAIL)"));
    return pass ? kOk : kNumeric;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"monoelastic: monotone demand model and price elasticity toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "monoelastic 0.1.0");

  SynthArgs synth;
  BuildArgs build;
  TrainArgs train_args;
  EvaluateArgs evaluate;
  ElasticityArgs elasticity;
  GradcheckArgs gradcheck;

  OptionSet synth_opts(app.add_subcommand("synth", "generate a synthetic world"), "synth");
  OptionSet build_opts(app.add_subcommand("build", "build the pair dataset and splits"), "build");
  OptionSet train_opts(app.add_subcommand("train", "train the demand model"), "train");
  OptionSet eval_opts(app.add_subcommand("evaluate", "WMAPE and elasticity MAE"), "evaluate");
  OptionSet elast_opts(app.add_subcommand("elasticity", "per-item arc elasticities"),
                       "elasticity");
  OptionSet grad_opts(app.add_subcommand("gradcheck", "check analytic gradients"), "gradcheck");
  synth.bind(synth_opts);
  build.bind(build_opts);
  train_args.bind(train_opts);
  evaluate.bind(eval_opts);
  elasticity.bind(elast_opts);
  gradcheck.bind(grad_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    auto dispatch = [](OptionSet& o, auto& args) {
      o.merge_config();
      return args.run(o);
    };
    if (synth_opts.app()->parsed()) return dispatch(synth_opts, synth);
    if (build_opts.app()->parsed()) return dispatch(build_opts, build);
    if (train_opts.app()->parsed()) return dispatch(train_opts, train_args);
    if (eval_opts.app()->parsed()) return dispatch(eval_opts, evaluate);
    if (elast_opts.app()->parsed()) return dispatch(elast_opts, elasticity);
    if (grad_opts.app()->parsed()) return dispatch(grad_opts, gradcheck);
    return kUsage;
  } catch (const SchemaMismatchError& e) {
    log(std::string("error: ") + e.what());
    return kMismatch;
  } catch (const LoadError& e) {
    log(std::string("error: ") + e.what());
    return kMismatch;
  } catch (const NumericError& e) {
    log(std::string("numeric failure: ") + e.what());
    return kNumeric;
  } catch (const DomainError& e) {
    log(std::string("numeric failure: ") + e.what());
    return kNumeric;
  } catch (const Error& e) {
    // config, parse, integrity, lookup and dimension errors
    log(std::string("error: ") + e.what());
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    log(std::string("error: ") + e.what());
    return kUsage;
  } catch (const std::exception& e) {
    log(std::string("unexpected error: ") + e.what());
    return kFailure;
  }
}

}  // namespace
}  // namespace monoelastic::cli

int main(int argc, char** argv) { return monoelastic::cli::run(argc, argv); }
