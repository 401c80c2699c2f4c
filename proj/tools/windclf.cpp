// windclf command-line tool: generate synthetic farms, learn baselines, fit
// alignments, train and apply classifiers, and run transfer experiments.
//
// Every command reads a JSON config (--config), writes into --out, and stamps
// its outputs with a provenance header. Relative paths inside a config are
// resolved against the config file's directory.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "windclf/baseline.hpp"
#include "windclf/classifiers.hpp"
#include "windclf/errors.hpp"
#include "windclf/eval.hpp"
#include "windclf/provenance.hpp"
#include "windclf/scada_data.hpp"
#include "windclf/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace windclf;

namespace {

struct Context {
  std::string command;
  fs::path config_path;
  fs::path out_dir;
  std::optional<std::uint64_t> seed_override;

  json config;
  Provenance provenance;

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : config_path.parent_path() / path;
  }
  std::uint64_t seed() const {
    if (seed_override) return *seed_override;
    if (!config.contains("seed")) throw ConfigError("seed is required (config field 'seed' or --seed)");
    return config.at("seed").get<std::uint64_t>();
  }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::ofstream open_out(const fs::path& p, bool binary = false) {
  std::ofstream out(p, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  return out;
}

void write_json(const fs::path& p, json j, const Context& ctx) {
  j["provenance"] = to_json(ctx.provenance);
  auto out = open_out(p);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + p.string() + "'");
}

void note_input(Context& ctx, const fs::path& p) {
  ctx.provenance.inputs.emplace_back(p.filename().string(), content_hash(read_file(p)));
}

FarmDataset load_farm(Context& ctx, const std::string& path) {
  const auto p = ctx.resolve(path);
  note_input(ctx, p);
  return ensure_normalized(load_csv(p));
}

std::vector<std::string> string_list(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError("config field '" + std::string(key) + "' is required");
  const auto& v = j.at(key);
  if (v.is_string()) return {v.get<std::string>()};
  return v.get<std::vector<std::string>>();
}

AlignmentSearch search_from(const json& cfg) {
  AlignmentSearch s;
  if (!cfg.contains("search")) return s;
  const auto& j = cfg.at("search");
  s.alpha_min = j.value("alpha_min", s.alpha_min);
  s.alpha_max = j.value("alpha_max", s.alpha_max);
  s.alpha_steps = j.value("alpha_steps", s.alpha_steps);
  s.beta_min = j.value("beta_min", s.beta_min);
  s.beta_max = j.value("beta_max", s.beta_max);
  s.beta_steps = j.value("beta_steps", s.beta_steps);
  s.n_ws = j.value("n_ws", s.n_ws);
  s.n_pw = j.value("n_pw", s.n_pw);
  s.max_evaluations = j.value("max_evaluations", s.max_evaluations);
  return s;
}

ModelConfig model_from(const Context& ctx) {
  if (!ctx.config.contains("model")) throw ConfigError("config field 'model' is required");
  auto m = model_config_from_json(ctx.config.at("model"));
  m.seed = ctx.seed();
  return m;
}

// generate: {"seed", "normalize": false, "profiles": [profile | {"derive_from", "shift": [a, b], ...}]}
void cmd_generate(Context& ctx) {
  const auto master = ctx.seed();
  const bool normalize = ctx.config.value("normalize", false);
  if (!ctx.config.contains("profiles") || !ctx.config.at("profiles").is_array())
    throw ConfigError("config field 'profiles' must be an array");

  std::map<std::string, FarmProfile> by_id;
  json echo = json::array();
  for (const auto& entry : ctx.config.at("profiles")) {
    json fields = entry;
    if (entry.contains("derive_from")) {
      const auto base_id = entry.at("derive_from").get<std::string>();
      const auto it = by_id.find(base_id);
      if (it == by_id.end()) throw ConfigError("derive_from names unknown profile '" + base_id + "'");
      const auto shift = entry.value("shift", std::vector<double>{1.0, 0.0});
      if (shift.size() != 2) throw ConfigError("shift must be [a, b]");
      fields = to_json(paired_profiles(it->second, {shift[0], shift[1]}).second);
      fields.erase("seed");
      for (const auto& [k, v] : entry.items())
        if (k != "derive_from" && k != "shift") fields[k] = v;
    }
    auto profile = profile_from_json(fields);
    if (!fields.contains("farm_id")) throw ConfigError("every profile needs a farm_id");
    if (!fields.contains("seed") || ctx.seed_override) profile.seed = mix_seed(master, fnv1a64(profile.farm_id));
    profile.validate();
    if (by_id.count(profile.farm_id)) throw ConfigError("duplicate farm_id '" + profile.farm_id + "'");
    by_id[profile.farm_id] = profile;
    ctx.provenance.seeds.emplace_back(profile.farm_id, profile.seed);
    echo.push_back(to_json(profile));
  }

  fs::create_directories(ctx.out_dir);
  for (const auto& e : echo) {
    const auto& profile = by_id.at(e.at("farm_id").get<std::string>());
    auto ds = generate_farm(profile);
    if (normalize) ds = min_max_normalize(ds);
    save_csv(ctx.out_dir / (profile.farm_id + ".csv"), ds, header_lines(ctx.provenance));
    std::cout << profile.farm_id << ": " << ds.size() << " records\n";
  }
  write_json(ctx.out_dir / "profiles.json", {{"profiles", echo}, {"normalized", normalize}}, ctx);
}

// baseline: {"farm", "n_ws": 64, "n_pw": 64, "min_support": 20}
void cmd_baseline(Context& ctx) {
  const auto path = string_list(ctx.config, "farm").at(0);
  const auto ds = load_farm(ctx, path);
  const auto n_ws = ctx.config.value("n_ws", std::size_t{64});
  const auto n_pw = ctx.config.value("n_pw", std::size_t{64});
  const auto min_support = ctx.config.value("min_support", std::uint64_t{20});
  const auto b = learn_baseline(ds, n_ws, n_pw, min_support);
  fs::create_directories(ctx.out_dir);
  auto out = open_out(ctx.out_dir / (ds.farm_id + ".baseline.csv"));
  write_baseline_csv(out, b, header_lines(ctx.provenance));
  std::cout << ds.farm_id << ": " << b.supported_bins() << " of " << b.pw_bin_centers.size() << " power bins supported\n";
}

// align: {"source", "reference", "search": {...}, "write_aligned": false}
void cmd_align(Context& ctx) {
  const auto source = load_farm(ctx, string_list(ctx.config, "source").at(0));
  const auto reference = load_farm(ctx, string_list(ctx.config, "reference").at(0));
  const auto p = fit_alignment(source, reference, search_from(ctx.config));
  fs::create_directories(ctx.out_dir);
  write_json(ctx.out_dir / "alignment.json", to_json(p), ctx);
  if (ctx.config.value("write_aligned", false))
    save_csv(ctx.out_dir / (source.farm_id + ".aligned.csv"), apply_alignment(source, p), header_lines(ctx.provenance));
  std::cout << "alpha " << p.alpha << " beta " << p.beta << " objective " << p.objective_value << '\n';
}

// train: {"train_farms": [..], "reference": id, "align_to": path, "model": {...}, "seed", "test_fraction": 0}
void cmd_train(Context& ctx) {
  auto config = model_from(ctx);
  ctx.provenance.seeds.emplace_back("model", config.seed);
  std::vector<FarmDataset> farms;
  for (const auto& p : string_list(ctx.config, "train_farms")) farms.push_back(load_farm(ctx, p));

  FarmDataset data;
  std::optional<AlignmentParams> alignment;
  json mix_info = nullptr;
  if (farms.size() == 1) {
    data = farms.front();
    if (ctx.config.contains("align_to")) {
      const auto reference = load_farm(ctx, ctx.config.at("align_to").get<std::string>());
      alignment = fit_alignment(data, reference, search_from(ctx.config));
      data = apply_alignment(data, *alignment);
    }
  } else {
    const auto reference = ctx.config.value("reference", farms.front().farm_id);
    MixOptions mo;
    mo.search = search_from(ctx.config);
    mo.objective_ceiling = ctx.config.value("objective_ceiling", mo.objective_ceiling);
    auto mixed = build_mixed(farms, reference, mo);
    data = std::move(mixed.data);
    mix_info = json::array();
    for (const auto& a : mixed.alignments) mix_info.push_back(to_json(a));
  }

  const double test_fraction = ctx.config.value("test_fraction", 0.0);
  FarmDataset held_out;
  if (test_fraction > 0.0) {
    SplitSpec spec;
    spec.test_fraction = test_fraction;
    spec.seed = mix_seed(config.seed, fnv1a64("split"));
    spec.strategy = config.kind == ModelKind::cnn ? SplitStrategy::by_contiguous_block : SplitStrategy::by_record;
    std::tie(data, held_out) = split(data, spec);
  }

  auto bundle = train_model(config, data, alignment);
  bundle.provenance = to_json(ctx.provenance);
  if (!mix_info.is_null()) bundle.provenance["mixed_alignments"] = mix_info;
  fs::create_directories(ctx.out_dir);
  save_bundle(ctx.out_dir / "model.wcm", bundle);

  json report{{"model", to_json(config)},
              {"n_train", bundle.metadata.n_train},
              {"loss_history", bundle.metadata.loss_history},
              {"warnings", bundle.metadata.warnings}};
  if (!mix_info.is_null()) report["mixed_alignments"] = mix_info;
  if (test_fraction > 0.0) {
    const auto e = evaluate(bundle, held_out);
    report["held_out"] = to_json(e.report);
    std::cout << "held-out " << format_cell(e.report) << '\n';
  }
  write_json(ctx.out_dir / "train_report.json", report, ctx);
  for (const auto& w : bundle.metadata.warnings) std::cerr << "warning: " << w << '\n';
}

// predict: {"model", "farm", "align_to": optional reference farm}
void cmd_predict(Context& ctx) {
  const auto model_path = ctx.resolve(string_list(ctx.config, "model").at(0));
  note_input(ctx, model_path);
  const auto bundle = load_bundle(model_path);
  auto ds = load_farm(ctx, string_list(ctx.config, "farm").at(0));
  json alignment = nullptr;
  if (ctx.config.contains("align_to")) {
    const auto reference = load_farm(ctx, ctx.config.at("align_to").get<std::string>());
    const auto p = fit_alignment(ds, reference, search_from(ctx.config));
    ds = apply_alignment(ds, p);
    alignment = to_json(p);
  }
  const auto pred = predict(bundle, ds);

  fs::create_directories(ctx.out_dir);
  auto out = open_out(ctx.out_dir / "predictions.csv");
  for (const auto& line : header_lines(ctx.provenance)) out << "# " << line << '\n';
  out << "timestamp,turbine_id,label,predicted";
  for (const auto& c : bundle.label_vocab) out << ",p_" << c;
  out << '\n';
  std::vector<std::size_t> truth, predicted;
  for (std::size_t i = 0; i < pred.eligible(); ++i) {
    const auto& turbine = ds.turbines[pred.turbine_index[i]];
    out << turbine.records[pred.record_index[i]].timestamp << ',' << turbine.turbine_id << ','
        << (pred.truth[i] ? bundle.label_vocab[*pred.truth[i]] : std::string()) << ','
        << bundle.label_vocab[pred.predicted[i]];
    for (double p : pred.proba(i)) out << ',' << json(p).dump();
    out << '\n';
    if (pred.truth[i]) {
      truth.push_back(*pred.truth[i]);
      predicted.push_back(pred.predicted[i]);
    }
  }
  const auto cm = confusion_matrix(truth, predicted, bundle.label_vocab);
  const auto report = score(cm);
  auto cm_out = open_out(ctx.out_dir / "confusion.csv");
  write_confusion_csv(cm_out, cm, header_lines(ctx.provenance));
  write_json(ctx.out_dir / "predict_report.json",
             {{"eligible_records", pred.eligible()},
              {"ineligible_records", pred.ineligible()},
              {"alignment", alignment},
              {"report", to_json(report)}},
             ctx);
  std::cout << pred.eligible() << " of " << pred.total_records << " records predicted";
  if (report.n) std::cout << "; accuracy " << format_cell(report);
  std::cout << '\n';
}

// transfer: {"train_farms", "test_farms", "model", "align_test_to_train", "test_fraction", "split_strategy", "seed"}
void cmd_transfer(Context& ctx) {
  TransferOptions o;
  o.model = model_from(ctx);
  o.seed = ctx.seed();
  o.align_test_to_train = ctx.config.value("align_test_to_train", false);
  o.test_fraction = ctx.config.value("test_fraction", o.test_fraction);
  o.search = search_from(ctx.config);
  if (ctx.config.contains("split_strategy"))
    o.split_strategy = split_strategy_from_string(ctx.config.at("split_strategy").get<std::string>());
  ctx.provenance.seeds.emplace_back("master", o.seed);

  std::vector<FarmDataset> train, test;
  for (const auto& p : string_list(ctx.config, "train_farms")) train.push_back(load_farm(ctx, p));
  if (ctx.config.contains("test_farms"))
    for (const auto& p : string_list(ctx.config, "test_farms")) test.push_back(load_farm(ctx, p));
  else
    test = train;

  const auto t = transfer_experiment(train, test, o);
  fs::create_directories(ctx.out_dir);
  {
    auto out = open_out(ctx.out_dir / "transfer.txt");
    write_transfer_table(out, t, header_lines(ctx.provenance));
  }
  write_json(ctx.out_dir / "transfer.json", to_json(t), ctx);
  for (const auto& c : t.cells) {
    auto out = open_out(ctx.out_dir / ("confusion_" + c.train_farm + "_" + c.test_farm + ".csv"));
    write_confusion_csv(out, c.confusion, header_lines(ctx.provenance));
  }
  write_transfer_table(std::cout, t);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wind-turbine status classification and cross-farm transfer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  Context ctx;
  std::string config, out = ".";
  std::uint64_t seed = 0;
  using Handler = void (*)(Context&);
  const std::vector<std::tuple<const char*, const char*, Handler>> commands{
      {"generate", "Generate synthetic farms from profiles", cmd_generate},
      {"baseline", "Extract the power-curve baseline of a farm", cmd_baseline},
      {"align", "Fit the wind-speed alignment of a farm onto a reference", cmd_align},
      {"train", "Train a classifier on one farm or a mixed set", cmd_train},
      {"predict", "Apply a trained model to a farm", cmd_predict},
      {"transfer", "Run a train-on-j / test-on-k transfer experiment", cmd_transfer},
  };
  std::map<std::string, Handler> handlers;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Override the config seed");
    handlers[name] = fn;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto* sub = app.get_subcommands().front();
    ctx.command = sub->get_name();
    ctx.config_path = config;
    ctx.out_dir = out;
    if (sub->count("--seed")) ctx.seed_override = seed;
    const auto text = read_file(ctx.config_path);
    try {
      ctx.config = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ctx.provenance.command = ctx.command;
    ctx.provenance.config_hash = content_hash(text);
    if (ctx.seed_override) ctx.provenance.seeds.emplace_back("override", *ctx.seed_override);
    handlers.at(ctx.command)(ctx);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
