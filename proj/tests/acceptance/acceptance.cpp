// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"
#include "windclf/baseline.hpp"
#include "windclf/classifiers.hpp"
#include "windclf/eval.hpp"
#include "windclf/synth.hpp"
#include "windclf/windowing.hpp"

using namespace windclf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Finite-difference gradients of the full CNN and the FFN.
Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (int which = 0; which < 2; ++which) {
      auto net = which == 0 ? nn::make_cnn(4, 9, {32, 32}, 3, {64, 32}, 6) : nn::make_ffn(3, {12, 6, 6}, 6);
      net.initialize(seed);
      // Nonzero biases so the check covers them away from the init value.
      for (std::size_t b = 1; b < net.parameters().size(); b += 2)
        for (double& v : net.parameters()[b]) v = 0.05;
      const std::size_t batch = 3;
      const auto x = oracle::uniform(batch * net.input_size(), 1000 + seed);
      std::vector<std::size_t> targets{seed % 6, (seed + 2) % 6, (seed + 5) % 6};
      std::vector<std::size_t> shape{batch};
      shape.insert(shape.end(), net.input_shape().begin(), net.input_shape().end());
      const auto g = net.backward(nn::Tensor(shape, x), targets);
      const auto fd = oracle::finite_difference_check(net, x, batch, targets, g.blocks, 1e-5, 1e-6);
      worst = std::max(worst, fd.max_relative_error);
      checked += fd.checked;
      skipped += fd.skipped;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 60.0 && checked > 0,
          "max rel err " + fmt(worst, 3) + " over " + std::to_string(checked) + " params (" +
              std::to_string(skipped) + " at ReLU kinks), " + fmt(secs, 3) + " s"};
}

// 2. KD-tree KNN against brute force.
Outcome knn_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(17);
  std::size_t mismatches = 0, queries = 0;
  for (bool grid : {false, true}) {
    const std::size_t n = 500, dims = 3;
    auto draw = [&] {
      return grid ? static_cast<double>(rng() % 5) / 4.0 : std::uniform_real_distribution<double>()(rng);
    };
    std::vector<double> pts(n * dims);
    std::vector<std::size_t> labels(n);
    for (auto& v : pts) v = draw();
    for (auto& l : labels) l = rng() % 4;
    for (std::size_t k : {1u, 4u, 50u}) {
      const KnnModel m(k, dims, pts, labels, 4);
      for (int q = 0; q < 50; ++q) {
        std::vector<double> x(dims);
        for (auto& v : x) v = draw();
        const auto want = oracle::brute_knn(pts, labels, dims, k, 4, x);
        const auto got = m.predict_proba(x);
        mismatches += got != want || argmax(got) != oracle::first_max(want);
        ++queries;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0,
          std::to_string(mismatches) + " mismatches in " + std::to_string(queries) + " queries, " + fmt(secs, 3) + " s"};
}

// 3. Accuracy metrics against an independent confusion count.
Outcome metrics() {
  std::mt19937_64 rng(3);
  std::vector<std::size_t> t(1000), p(1000);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = rng() % 6;
    p[i] = rng() % 6;
  }
  const std::vector<std::string> vocab{"normal", "C1", "C2", "C3", "C4", "other"};
  const auto r = score(t, p, vocab);
  const auto counts = oracle::confusion(t, p);
  std::size_t trace = 0;
  for (const auto& [key, c] : counts)
    if (key.first == key.second) trace += c;
  const bool overall_ok = r.overall == static_cast<double>(trace) / 1000.0;

  const std::vector<std::size_t> wt{0, 0, 1, 1}, wp{0, 1, 1, 1};
  const auto w = score(wt, wp, {"normal", "C1"});
  const bool worked = w.overall == 0.75 && w.per_class[0].recall == 0.5 && w.per_class[1].recall == 1.0 && w.macro == 0.75;
  return {overall_ok && worked, "overall " + fmt(r.overall) + " vs trace/total " + std::to_string(trace) +
                                    "/1000; worked example macro " + fmt(w.macro.value_or(-1))};
}

// 4. Power-curve baseline against the generator's analytic inverse.
Outcome baseline_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  FarmProfile p;
  p.months = 6;
  p.n_turbines = 2;
  p.seed = 41;
  p.class_mix = {{"normal", 0.85}, {"C1", 0.05}, {"C2", 0.05}, {"C3", 0.05}};
  const auto ds = min_max_normalize(generate_farm(p));
  const auto wr = ds.normalization_ranges[ds.signal_index("wind_speed")];
  const auto pr = ds.normalization_ranges[ds.signal_index("power")];
  const std::size_t n = 64;
  const auto b = learn_baseline(ds, n, n);
  double worst = 0.0;
  std::size_t bins = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double power = pr.min + b.pw_bin_centers[j] * (pr.max - pr.min);
    // The inverse is only defined strictly inside the ramp.
    if (!b.ws_mode[j] || power <= 0.0 || power >= p.rated_power) continue;
    const double expected = (ideal_curve_inverse(p, power) - wr.min) / (wr.max - wr.min);
    worst = std::max(worst, std::abs(*b.ws_mode[j] - expected) * static_cast<double>(n));
    ++bins;
  }
  const double secs = seconds_since(t0);
  return {bins > 0 && worst <= 2.0 && secs < 30.0, "worst deviation " + fmt(worst, 3) + " bins over " +
                                                      std::to_string(bins) + " ramp bins, " + fmt(secs, 3) + " s"};
}

// 5. Alignment recovers known affine shifts.
Outcome alignment_recovery() {
  FarmProfile ref;
  ref.farm_id = "R";
  ref.months = 6;
  ref.seed = 11;
  ref.class_mix = {{"normal", 0.85}, {"C1", 0.05}, {"C2", 0.05}, {"C3", 0.05}};
  const auto r = ensure_normalized(generate_farm(ref));
  bool ok = true;
  std::ostringstream d;
  for (double a : {0.8, 1.2})
    for (double b : {-0.1, 0.1}) {
      // Source speeds are (v - b * ws_max) / a, so a * ws + b maps them back in normalized units.
      auto [rp, sp] = paired_profiles(ref, {1.0 / a, -b * ref.ws_max / a});
      sp.farm_id = "S";
      sp.seed = 23;
      const auto fit = fit_alignment(ensure_normalized(generate_farm(sp)), r);
      const bool hit = std::abs(fit.alpha - a) <= 0.05 * a && std::abs(fit.beta - b) <= 0.02;
      ok = ok && hit;
      d << "(" << a << "," << b << ")->(" << fmt(fit.alpha) << "," << fmt(fit.beta) << ") ";
    }
  auto [rp, sp] = paired_profiles(ref, {1.0, 0.0});
  sp.farm_id = "S";
  sp.seed = 23;
  const auto id = fit_alignment(ensure_normalized(generate_farm(sp)), r);
  ok = ok && std::abs(id.alpha - 1.0) <= 0.02 && std::abs(id.beta) <= 0.02;
  d << "identity->(" << fmt(id.alpha) << "," << fmt(id.beta) << ")";
  return {ok, d.str()};
}

// 6. Alignment lifts cross-farm accuracy of KNN and FFN.
Outcome normalization_helps() {
  FarmProfile ref;
  ref.farm_id = "A";
  ref.months = 6;
  ref.weibull_scale = 10.0;
  ref.seed = 11;
  ref.class_mix = {{"normal", 0.8}, {"C1", 0.05}, {"C2", 0.03}, {"C4", 0.12}};
  auto [pa, pb] = paired_profiles(ref, {0.75, 0.0});
  pb.farm_id = "B";
  pb.seed = 23;
  const std::vector<FarmDataset> farms{ensure_normalized(generate_farm(pa)), ensure_normalized(generate_farm(pb))};
  const std::vector<std::string> classes{"normal", "C1", "C4"};  // C2 is spurious
  bool ok = true;
  std::ostringstream d;
  for (auto kind : {ModelKind::knn, ModelKind::ffn}) {
    const auto t0 = std::chrono::steady_clock::now();
    TransferOptions o;
    o.model.kind = kind;
    o.model.knn_k = 50;
    o.model.signals = {"wind_speed", "power", "pitch"};
    o.seed = 5;
    const auto raw = transfer_experiment(farms, farms, o);
    o.align_test_to_train = true;
    const auto aligned = transfer_experiment(farms, farms, o);
    const double secs = seconds_since(t0);
    d << to_string(kind) << ":";
    for (std::size_t i = 0; i < 2; ++i) {
      const double in = macro_over(raw.cell(i, i).report, classes).value_or(0.0);
      const double without = macro_over(raw.cell(i, 1 - i).report, classes).value_or(0.0);
      const double with = macro_over(aligned.cell(i, 1 - i).report, classes).value_or(0.0);
      ok = ok && in >= 0.9 && with - without >= 0.10;
      d << " " << raw.train_farms[i] << " in " << fmt(in, 3) << " cross " << fmt(without, 3) << "->" << fmt(with, 3)
        << ";";
    }
    ok = ok && secs < 300.0;
    d << " " << fmt(secs, 3) << " s. ";
  }
  return {ok, d.str()};
}

// 7. CNN transfers without alignment.
Outcome cnn_robust() {
  const auto t0 = std::chrono::steady_clock::now();
  FarmProfile ref;
  ref.farm_id = "A";
  ref.months = 3;
  ref.seed = 11;
  ref.class_mix = {{"normal", 0.78}, {"C1", 0.08}, {"C2", 0.02}, {"C3", 0.12}};
  auto [pa, pb] = paired_profiles(ref, {0.75, 0.0});
  pb.farm_id = "B";
  pb.seed = 23;
  const std::vector<FarmDataset> farms{ensure_normalized(generate_farm(pa)), ensure_normalized(generate_farm(pb))};
  TransferOptions o;
  o.model.kind = ModelKind::cnn;
  o.model.window_half_width = 4;
  o.model.signals = {"wind_speed", "power", "rotor_speed", "pitch"};
  o.seed = 5;
  const auto t = transfer_experiment(farms, farms, o);
  const std::vector<std::string> classes{"normal", "C1", "C3"};
  bool ok = true;
  std::ostringstream d;
  for (std::size_t i = 0; i < 2; ++i) {
    const double in = macro_over(t.cell(i, i).report, classes).value_or(0.0);
    const double cross = macro_over(t.cell(i, 1 - i).report, classes).value_or(0.0);
    ok = ok && in - cross <= 0.10;
    d << t.train_farms[i] << " in " << fmt(in, 3) << " cross " << fmt(cross, 3) << "; ";
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 900.0;
  d << fmt(secs, 3) << " s";
  return {ok, d.str()};
}

// 8. Mixed aligned training set against single-farm CNNs.
Outcome mixed_training() {
  FarmProfile base;
  base.months = 3;
  base.seed = 11;
  struct Spec {
    std::string id;
    std::pair<double, double> shift;
    std::map<std::string, double> mix;
    std::uint64_t seed;
  };
  const std::vector<Spec> specs{
      {"F1", {1.0, 0.0}, {{"normal", 0.8}, {"C1", 0.08}, {"C2", 0.02}, {"C3", 0.10}}, 11},
      {"F2", {0.85, 0.5}, {{"normal", 0.8}, {"C1", 0.06}, {"C2", 0.02}, {"C3", 0.06}, {"C4", 0.06}}, 12},
      {"F3", {1.15, -0.5}, {{"normal", 0.8}, {"C1", 0.05}, {"C2", 0.02}, {"C3", 0.08}, {"other", 0.05}}, 13},
      {"F4", {0.9, 0.3}, {{"normal", 0.8}, {"C1", 0.06}, {"C2", 0.02}, {"C3", 0.08}, {"C4", 0.04}}, 14}};
  std::vector<FarmDataset> farms;
  for (const auto& s : specs) {
    auto p = paired_profiles(base, s.shift).second;
    p.farm_id = s.id;
    p.class_mix = s.mix;
    p.seed = s.seed;
    farms.push_back(ensure_normalized(generate_farm(p)));
  }
  farms = unify_label_space(farms);

  // F1..F3 train on two thirds and test on the rest; F4 is never trained on.
  std::vector<FarmDataset> train, test;
  for (const auto& f : farms) {
    SplitSpec s;
    s.strategy = SplitStrategy::by_contiguous_block;
    s.seed = fnv1a64(f.farm_id);
    auto [a, b] = split(f, s);
    train.push_back(std::move(a));
    test.push_back(std::move(b));
  }
  test[3] = farms[3];

  ModelConfig mc;
  mc.kind = ModelKind::cnn;
  std::vector<ModelBundle> models;
  for (std::size_t i = 0; i < 3; ++i) {
    mc.seed = 100 + i;
    models.push_back(train_model(mc, train[i]));
  }
  const auto mixed = build_mixed({train[0], train[1], train[2]}, "F1");
  mc.seed = 200;
  models.push_back(train_model(mc, mixed.data));

  bool ok = true, dash = false;
  std::ostringstream d;
  for (std::size_t j = 0; j < test.size(); ++j) {
    const auto aligned = apply_alignment(test[j], fit_alignment(test[j], train[0]));
    std::vector<Evaluation> evals;
    for (std::size_t m = 0; m < models.size(); ++m) evals.push_back(evaluate(models[m], m == 3 ? aligned : test[j]));
    // Shared: supported on this farm and seen in training by every model.
    std::vector<std::string> shared;
    for (std::size_t c = 0; c < farms[j].label_vocab.size(); ++c) {
      bool seen = evals[0].report.per_class[c].support > 0;
      for (const auto& m : models) seen = seen && m.metadata.class_support[c] > 0;
      if (seen) shared.push_back(farms[j].label_vocab[c]);
    }
    double best = 0.0;
    for (std::size_t m = 0; m < 3; ++m) best = std::max(best, macro_over(evals[m].report, shared).value_or(0.0));
    const double mix = macro_over(evals[3].report, shared).value_or(0.0);
    ok = ok && mix >= best - 0.02;
    const auto cell = format_cell(evals[3].report);
    dash = dash || cell.find('-') != std::string::npos;
    d << farms[j].farm_id << " mixed " << fmt(mix, 3) << " best single " << fmt(best, 3) << " " << cell << "; ";
  }
  // F1 has no C4 or other records, so its row must show "-" somewhere.
  return {ok && dash, d.str()};
}

// 9. Windowing against direct enumeration on a gapped series.
Outcome windowing_oracle() {
  FarmProfile p;
  p.months = 1;
  p.seed = 4;
  p.class_mix = {{"normal", 0.8}, {"C1", 0.1}, {"C3", 0.1}};
  auto ds = generate_farm(p);
  for (std::size_t t = 0; t < ds.turbines.size(); ++t) {
    auto& r = ds.turbines[t].records;
    for (std::size_t at : {400 + 50 * t, 2000 + 7 * t}) r.erase(r.begin() + static_cast<std::ptrdiff_t>(at),
                                                                r.begin() + static_cast<std::ptrdiff_t>(at + 3 + t));
    for (std::size_t i = 0; i < r.size(); i += 101) r[i].label.reset();
  }
  std::size_t mismatches = 0, samples = 0;
  const std::vector<std::string> signals{"wind_speed", "power", "rotor_speed", "pitch"};
  for (bool centered : {true, false})
    for (std::size_t k : {0u, 1u, 4u})
      for (bool unlabeled : {false, true}) {
        const auto got = make_windows(ds, {k, centered ? WindowMode::centered : WindowMode::causal, signals}, unlabeled);
        const auto want = oracle::enumerate_windows(ds, k, centered, signals, unlabeled);
        if (got.size() != want.size()) {
          ++mismatches;
          continue;
        }
        for (std::size_t i = 0; i < got.size(); ++i)
          mismatches += got[i].turbine_index != want[i].turbine || got[i].record_index != want[i].record ||
                        got[i].matrix != want[i].matrix;
        samples += got.size();
      }
  // k = 0 windows are the raw feature vectors.
  const auto w0 = make_windows(ds, {0, WindowMode::centered, ds.signal_names}, true);
  for (const auto& s : w0) mismatches += s.matrix != ds.turbines[s.turbine_index].records[s.record_index].signals;
  return {mismatches == 0, std::to_string(mismatches) + " mismatches over " + std::to_string(samples + w0.size()) +
                               " windows"};
}

// 10. CLI artifacts are byte-identical across reruns.
Outcome determinism() {
  const auto root = fs::temp_directory_path() / "windclf_acceptance_determinism";
  fs::remove_all(root);
  const json profile{{"months", 1}, {"n_turbines", 2}, {"class_mix", {{"normal", 0.8}, {"C1", 0.1}, {"C3", 0.1}}}};
  auto a = profile, b = profile;
  a["farm_id"] = "A";
  b["farm_id"] = "B";
  const json configs[] = {
      {{"seed", 9}, {"profiles", {a, b}}},
      {{"seed", 9}, {"train_farms", {"A.csv"}}, {"model", {{"kind", "cnn"}, {"epochs", 2}}}},
      {{"seed", 9}, {"train_farms", {"A.csv", "B.csv"}}, {"model", {{"kind", "ffn"}, {"epochs", 3}}}}};
  const char* commands[] = {"generate", "train", "transfer"};
  for (const char* run : {"r1", "r2"}) {
    const auto dir = root / run;
    fs::create_directories(dir);
    for (int c = 0; c < 3; ++c) {
      const auto cfg = dir / (std::string(commands[c]) + ".json");
      std::ofstream(cfg) << configs[c].dump(2);
      const std::string cmd = std::string(WINDCLF_CLI) + " " + commands[c] + " --config " + cfg.string() + " --out " +
                              (dir / (c == 0 ? "" : commands[c])).string() + " > /dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) return {false, std::string(commands[c]) + " failed"};
    }
  }
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "r1")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root / "r1");
    auto read = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      std::ostringstream s;
      s << in.rdbuf();
      return s.str();
    };
    ++files;
    differing += !fs::exists(root / "r2" / rel) || read(e.path()) != read(root / "r2" / rel);
  }
  fs::remove_all(root);
  return {files > 0 && differing == 0, std::to_string(differing) + " of " + std::to_string(files) + " artifacts differ"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradients},
      {"knn oracle equivalence", knn_oracle},
      {"metric exactness", metrics},
      {"baseline recovery", baseline_recovery},
      {"alignment recovery", alignment_recovery},
      {"alignment helps knn and ffn", normalization_helps},
      {"cnn transfers without alignment", cnn_robust},
      {"mixed training set", mixed_training},
      {"windowing oracle", windowing_oracle},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed ? 1 : 0;
}
