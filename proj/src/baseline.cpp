#include "windclf/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "windclf/errors.hpp"

namespace windclf {

namespace {

// Soft-binning weights are accumulated as integers so the objective depends
// only on the multiset of records, not on their order.
constexpr double kWeightScale = 65536.0;

std::vector<double> uniform_edges(std::size_t n) {
  std::vector<double> e(n + 1);
  for (std::size_t i = 0; i <= n; ++i) e[i] = static_cast<double>(i) / static_cast<double>(n);
  return e;
}

void soft_bin(double x, std::size_t n, std::size_t& lo, std::size_t& hi, std::uint64_t& w_hi) {
  const double f = std::clamp(x, 0.0, 1.0) * static_cast<double>(n) - 0.5;
  if (f <= 0.0) {
    lo = hi = 0;
    w_hi = 0;
    return;
  }
  const double top = static_cast<double>(n - 1);
  if (f >= top) {
    lo = hi = n - 1;
    w_hi = 0;
    return;
  }
  const double fl = std::floor(f);
  lo = static_cast<std::size_t>(fl);
  hi = lo + 1;
  w_hi = static_cast<std::uint64_t>(std::llround((f - fl) * kWeightScale));
}

std::vector<double> soft_density(std::span<const double> ws, std::span<const std::uint32_t> pw_bin,
                                 std::size_t n_ws, std::size_t n_pw) {
  std::vector<std::uint64_t> acc(n_ws * n_pw, 0);
  const auto full = static_cast<std::uint64_t>(kWeightScale);
  for (std::size_t i = 0; i < ws.size(); ++i) {
    std::size_t lo, hi;
    std::uint64_t w;
    soft_bin(ws[i], n_ws, lo, hi, w);
    acc[lo * n_pw + pw_bin[i]] += full - w;
    acc[hi * n_pw + pw_bin[i]] += w;
  }
  const double total = static_cast<double>(ws.size()) * kWeightScale;
  std::vector<double> d(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) d[k] = static_cast<double>(acc[k]) / total;
  return d;
}

struct PowerWind {
  std::vector<double> ws;
  std::vector<std::uint32_t> pw_bin;
};

PowerWind extract_columns(const FarmDataset& ds, std::size_t n_pw) {
  const auto iw = ds.signal_index(signals::wind_speed);
  const auto ip = ds.signal_index(signals::power);
  PowerWind out;
  out.ws.reserve(ds.size());
  out.pw_bin.reserve(ds.size());
  for (const auto& t : ds.turbines)
    for (const auto& r : t.records) {
      out.ws.push_back(r.signals[iw]);
      out.pw_bin.push_back(static_cast<std::uint32_t>(unit_bin(r.signals[ip], n_pw)));
    }
  return out;
}

}  // namespace

std::uint64_t Histogram2D::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::size_t unit_bin(double x, std::size_t n_bins) {
  if (!(x > 0.0)) return 0;
  if (x >= 1.0) return n_bins - 1;
  return std::min(n_bins - 1, static_cast<std::size_t>(x * static_cast<double>(n_bins)));
}

Histogram2D histogram2d(const FarmDataset& ds, std::size_t n_ws, std::size_t n_pw, RecordSelection selection) {
  if (n_ws < 2 || n_pw < 2) throw ConfigError("histogram needs at least 2 bins per axis");
  const auto iw = ds.signal_index(signals::wind_speed);
  const auto ip = ds.signal_index(signals::power);

  std::optional<std::size_t> only_label;
  if (selection == RecordSelection::normal_if_labeled) {
    const auto normal = ds.find_label(kNormalClass);
    bool any_labeled = false;
    for (const auto& t : ds.turbines)
      for (const auto& r : t.records)
        if (r.label) {
          any_labeled = true;
          break;
        }
    if (any_labeled && normal) only_label = *normal;
  }

  Histogram2D h;
  h.ws_edges = uniform_edges(n_ws);
  h.pw_edges = uniform_edges(n_pw);
  h.counts.assign(n_ws * n_pw, 0);
  for (const auto& t : ds.turbines)
    for (const auto& r : t.records) {
      if (only_label && r.label != only_label) continue;
      ++h.counts[unit_bin(r.signals[iw], n_ws) * n_pw + unit_bin(r.signals[ip], n_pw)];
    }
  return h;
}

std::size_t PowerCurveBaseline::supported_bins() const {
  return static_cast<std::size_t>(
      std::count_if(ws_mode.begin(), ws_mode.end(), [](const auto& m) { return m.has_value(); }));
}

PowerCurveBaseline extract_baseline(const Histogram2D& h, std::uint64_t min_support) {
  const auto n_ws = h.n_ws(), n_pw = h.n_pw();
  PowerCurveBaseline b;
  b.pw_bin_centers.resize(n_pw);
  b.ws_mode.resize(n_pw);
  b.support_counts.resize(n_pw);
  for (std::size_t j = 0; j < n_pw; ++j) {
    b.pw_bin_centers[j] = 0.5 * (h.pw_edges[j] + h.pw_edges[j + 1]);
    std::uint64_t column = 0, best = 0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < n_ws; ++i) {
      const auto c = h.count(i, j);
      column += c;
      if (c > best) {  // strict: ties keep the lower wind speed
        best = c;
        best_i = i;
      }
    }
    b.support_counts[j] = column;
    if (column > 0 && column >= min_support)
      b.ws_mode[j] = 0.5 * (h.ws_edges[best_i] + h.ws_edges[best_i + 1]);
  }
  return b;
}

PowerCurveBaseline learn_baseline(const FarmDataset& ds, std::size_t n_ws, std::size_t n_pw,
                                  std::uint64_t min_support) {
  return extract_baseline(histogram2d(ds, n_ws, n_pw, RecordSelection::normal_if_labeled), min_support);
}

void write_baseline_csv(std::ostream& out, const PowerCurveBaseline& b, const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "power,wind_speed,support\n";
  for (std::size_t j = 0; j < b.pw_bin_centers.size(); ++j)
    if (b.ws_mode[j]) out << b.pw_bin_centers[j] << ',' << *b.ws_mode[j] << ',' << b.support_counts[j] << '\n';
}

std::optional<double> baseline_distance_bins(const PowerCurveBaseline& a, const PowerCurveBaseline& b,
                                             std::size_t n_ws) {
  if (a.ws_mode.size() != b.ws_mode.size()) throw ShapeError("baselines have different power binning");
  std::optional<double> worst;
  for (std::size_t j = 0; j < a.ws_mode.size(); ++j) {
    if (!a.ws_mode[j] || !b.ws_mode[j]) continue;
    const double d = std::abs(*a.ws_mode[j] - *b.ws_mode[j]) * static_cast<double>(n_ws);
    worst = std::max(worst.value_or(0.0), d);
  }
  return worst;
}

nlohmann::json to_json(const AlignmentParams& p) {
  return {{"alpha", p.alpha},
          {"beta", p.beta},
          {"objective_value", p.objective_value},
          {"reference_farm_id", p.reference_farm_id},
          {"source_farm_id", p.source_farm_id}};
}

AlignmentParams alignment_from_json(const nlohmann::json& j) {
  try {
    AlignmentParams p;
    p.alpha = j.at("alpha").get<double>();
    p.beta = j.at("beta").get<double>();
    p.objective_value = j.value("objective_value", 0.0);
    p.reference_farm_id = j.value("reference_farm_id", "");
    p.source_farm_id = j.value("source_farm_id", "");
    if (!(p.alpha > 0.0)) throw ConfigError("alignment alpha must be positive");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid alignment JSON: ") + e.what());
  }
}

AlignmentObjective::AlignmentObjective(const FarmDataset& source, const FarmDataset& reference, std::size_t n_ws,
                                       std::size_t n_pw)
    : n_ws_(n_ws), n_pw_(n_pw) {
  if (source.empty() || reference.empty())
    throw InsufficientDataError("alignment needs non-empty source and reference farms");
  if (n_ws < 2 || n_pw < 2) throw ConfigError("histogram needs at least 2 bins per axis");
  auto src = extract_columns(source, n_pw);
  source_ws_ = std::move(src.ws);
  source_pw_bin_ = std::move(src.pw_bin);
  const auto ref = extract_columns(reference, n_pw);
  reference_density_ = soft_density(ref.ws, ref.pw_bin, n_ws, n_pw);
}

double AlignmentObjective::operator()(double alpha, double beta) const {
  std::vector<double> mapped(source_ws_.size());
  for (std::size_t i = 0; i < mapped.size(); ++i) mapped[i] = alpha * source_ws_[i] + beta;
  const auto d = soft_density(mapped, source_pw_bin_, n_ws_, n_pw_);
  double l1 = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) l1 += std::abs(d[k] - reference_density_[k]);
  return l1;
}

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> start,
                             std::vector<double> step, std::size_t max_evaluations, double tolerance) {
  const std::size_t n = start.size();
  std::vector<std::vector<double>> simplex(n + 1, start);
  for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += step[i];
  std::vector<double> values(n + 1);
  std::size_t evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    return f(x);
  };
  for (std::size_t i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  while (evals < max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    const auto best = order.front(), worst = order.back(), second = order[n - 1];
    if (std::abs(values[worst] - values[best]) <= tolerance) {
      double spread = 0.0;
      for (std::size_t i = 0; i < n; ++i) spread = std::max(spread, std::abs(simplex[worst][i] - simplex[best][i]));
      if (spread <= 1e-9) break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t k = 0; k <= n; ++k)
      if (k != worst)
        for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[k][i] / static_cast<double>(n);
    auto along = [&](double t) {
      std::vector<double> x(n);
      for (std::size_t i = 0; i < n; ++i) x[i] = centroid[i] + t * (simplex[worst][i] - centroid[i]);
      return x;
    };

    auto reflected = along(-1.0);
    const double fr = eval(reflected);
    if (fr < values[best]) {
      auto expanded = along(-2.0);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[worst] = std::move(expanded);
        values[worst] = fe;
      } else {
        simplex[worst] = std::move(reflected);
        values[worst] = fr;
      }
    } else if (fr < values[second]) {
      simplex[worst] = std::move(reflected);
      values[worst] = fr;
    } else {
      const bool outside = fr < values[worst];
      auto contracted = along(outside ? -0.5 : 0.5);
      const double fc = eval(contracted);
      if (fc < (outside ? fr : values[worst])) {
        simplex[worst] = std::move(contracted);
        values[worst] = fc;
      } else {
        for (std::size_t k = 0; k <= n; ++k) {
          if (k == best) continue;
          for (std::size_t i = 0; i < n; ++i) simplex[k][i] = simplex[best][i] + 0.5 * (simplex[k][i] - simplex[best][i]);
          values[k] = eval(simplex[k]);
        }
      }
    }
  }
  const auto best_it = std::min_element(values.begin(), values.end());
  const auto b = static_cast<std::size_t>(best_it - values.begin());
  return {simplex[b], values[b], evals};
}

AlignmentParams fit_alignment(const FarmDataset& source, const FarmDataset& reference,
                              const AlignmentSearch& search) {
  if (search.alpha_steps < 2 || search.beta_steps < 2) throw ConfigError("alignment grid needs >= 2 steps per axis");
  if (!(search.alpha_min > 0.0 && search.alpha_min < search.alpha_max && search.beta_min < search.beta_max))
    throw ConfigError("alignment search bounds are invalid");
  const AlignmentObjective objective(source, reference, search.n_ws, search.n_pw);

  const double da = (search.alpha_max - search.alpha_min) / static_cast<double>(search.alpha_steps - 1);
  const double db = (search.beta_max - search.beta_min) / static_cast<double>(search.beta_steps - 1);
  double best_a = 1.0, best_b = 0.0, best_v = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < search.alpha_steps; ++i)
    for (std::size_t j = 0; j < search.beta_steps; ++j) {
      const double a = search.alpha_min + da * static_cast<double>(i);
      const double b = search.beta_min + db * static_cast<double>(j);
      const double v = objective(a, b);
      if (v < best_v) {
        best_v = v;
        best_a = a;
        best_b = b;
      }
    }

  auto bounded = [&](std::span<const double> x) {
    if (x[0] < search.alpha_min || x[0] > search.alpha_max || x[1] < search.beta_min || x[1] > search.beta_max)
      return std::numeric_limits<double>::infinity();
    return objective(x[0], x[1]);
  };
  auto res = nelder_mead(bounded, {best_a, best_b}, {0.5 * da, 0.5 * db}, search.max_evaluations, search.tolerance);

  AlignmentParams p;
  if (res.value <= best_v) {
    p.alpha = res.x[0];
    p.beta = res.x[1];
    p.objective_value = res.value;
  } else {
    p.alpha = best_a;
    p.beta = best_b;
    p.objective_value = best_v;
  }
  p.reference_farm_id = reference.farm_id;
  p.source_farm_id = source.farm_id;
  return p;
}

FarmDataset apply_alignment(const FarmDataset& ds, const AlignmentParams& p) {
  const auto iw = ds.signal_index(signals::wind_speed);
  FarmDataset out = ds;
  if (p.alpha == 1.0 && p.beta == 0.0) return out;
  for (auto& t : out.turbines)
    for (auto& r : t.records) r.signals[iw] = std::clamp(p.alpha * r.signals[iw] + p.beta, 0.0, 1.0);
  return out;
}

}  // namespace windclf
