#include "windclf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "windclf/errors.hpp"

namespace windclf {

namespace {

constexpr std::size_t kRecordsPerDay = 144;
constexpr std::size_t kDaysPerMonth = 30;
constexpr double kNoiseTruncation = 3.5;  // in standard deviations

const std::vector<std::pair<EpisodeEffect, std::string>>& effect_names() {
  static const std::vector<std::pair<EpisodeEffect, std::string>> names{
      {EpisodeEffect::icing_bias, "icing_bias"},
      {EpisodeEffect::derate_cap, "derate_cap"},
      {EpisodeEffect::zero_power, "zero_power"},
      {EpisodeEffect::partial_power, "partial_power"},
      {EpisodeEffect::spurious_scatter, "spurious_scatter"}};
  return names;
}

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return normal_(rng_); }
  double truncated_normal(double sd) {
    if (sd <= 0.0) return 0.0;
    double z;
    do z = normal_(rng_);
    while (std::abs(z) > kNoiseTruncation);
    return sd * z;
  }
  double exponential() { return std::exponential_distribution<double>(1.0)(rng_); }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

struct TurbineModel {
  const FarmProfile& p;

  double pitch(double v) const {
    if (v >= p.cut_out) return p.feather_pitch;
    if (v < p.rated_speed) return 0.0;
    return std::min(p.feather_pitch, p.pitch_slope * (v - p.rated_speed));
  }
  double rotor(double v) const {
    if (v < p.cut_in || v >= p.cut_out) return 0.0;
    if (v >= p.rated_speed) return p.rotor_rated;
    return p.rotor_rated * (v - p.cut_in) / (p.rated_speed - p.cut_in);
  }
};

struct EpisodeDraw {
  std::string class_name;
  EpisodeEffect effect;
  std::size_t length;
};

// Weibull quantile of the standard-normal AR(1) state.
double weibull_from_gaussian(double z, double shape, double scale) {
  const double survival = 0.5 * std::erfc(z / std::sqrt(2.0));  // 1 - Phi(z)
  const double tail = -std::log(std::max(survival, 1e-300));
  return scale * std::pow(tail, 1.0 / shape);
}

}  // namespace

std::string to_string(EpisodeEffect e) {
  for (const auto& [k, v] : effect_names())
    if (k == e) return v;
  return "unknown";
}

EpisodeEffect episode_effect_from_string(std::string_view s) {
  for (const auto& [k, v] : effect_names())
    if (v == s) return k;
  throw ConfigError("unknown episode effect '" + std::string(s) + "'");
}

std::map<std::string, EpisodeEffect> default_class_effects() {
  return {{"C1", EpisodeEffect::zero_power},
          {"C2", EpisodeEffect::spurious_scatter},
          {"C3", EpisodeEffect::derate_cap},
          {"C4", EpisodeEffect::icing_bias},
          {"other", EpisodeEffect::partial_power}};
}

std::vector<std::string> generated_signal_names() {
  return {std::string(signals::wind_speed), std::string(signals::power),
          std::string(signals::pitch), std::string(signals::rotor_speed)};
}

double FarmProfile::noise(std::string_view signal) const {
  const auto it = noise_sd.find(std::string(signal));
  return it == noise_sd.end() ? 0.0 : it->second;
}

void FarmProfile::validate() const {
  auto fail = [&](const std::string& field, const std::string& why) {
    throw ConfigError("profile '" + farm_id + "': " + field + " " + why);
  };
  if (!(cut_in > 0.0)) fail("cut_in", "must be positive");
  if (!(cut_in < rated_speed)) fail("cut_in", "must be below rated_speed");
  if (!(rated_speed < cut_out)) fail("rated_speed", "must be below cut_out");
  if (!(rated_power > 0.0)) fail("rated_power", "must be positive");
  if (n_turbines < 1) fail("n_turbines", "must be at least 1");
  if (months < 1) fail("months", "must be at least 1");
  if (!(weibull_shape > 0.0) || !(weibull_scale > 0.0)) fail("weibull_shape/weibull_scale", "must be positive");
  if (!(ar_coefficient >= 0.0 && ar_coefficient < 1.0)) fail("ar_coefficient", "must lie in [0, 1)");
  if (!(ws_max > 0.0)) fail("ws_max", "must be positive");
  if (!(episode_min_hours > 0.0 && episode_min_hours <= episode_max_hours))
    fail("episode_min_hours", "must be positive and not above episode_max_hours");
  if (!(derate_min > 0.0 && derate_min <= derate_max && derate_max < 1.0))
    fail("derate_min/derate_max", "must satisfy 0 < min <= max < 1");
  if (!(partial_min > 0.0 && partial_min <= partial_max && partial_max < 1.0))
    fail("partial_min/partial_max", "must satisfy 0 < min <= max < 1");
  for (const auto& [name, sd] : noise_sd)
    if (!(sd >= 0.0)) fail("noise_sd." + name, "must be non-negative");

  double total = 0.0;
  for (const auto& [name, f] : class_mix) {
    if (!(f >= 0.0)) fail("class_mix." + name, "must be non-negative");
    total += f;
    if (name != kNormalClass && f > 0.0 && !class_effects.contains(name))
      fail("class_mix." + name, "has no effect mapping");
  }
  if (std::abs(total - 1.0) > 1e-9) fail("class_mix", "fractions must sum to 1");
  const auto normal = class_mix.find(std::string(kNormalClass));
  if (normal == class_mix.end() || normal->second < 0.7) fail("class_mix.normal", "must be at least 0.7");
}

nlohmann::json to_json(const FarmProfile& p) {
  nlohmann::json effects = nlohmann::json::object();
  for (const auto& [k, v] : p.class_effects) effects[k] = to_string(v);
  return {{"farm_id", p.farm_id},
          {"cut_in", p.cut_in},
          {"rated_speed", p.rated_speed},
          {"cut_out", p.cut_out},
          {"rated_power", p.rated_power},
          {"n_turbines", p.n_turbines},
          {"months", p.months},
          {"class_mix", p.class_mix},
          {"class_effects", effects},
          {"noise_sd", p.noise_sd},
          {"seed", p.seed},
          {"weibull_shape", p.weibull_shape},
          {"weibull_scale", p.weibull_scale},
          {"weibull_loc", p.weibull_loc},
          {"ar_coefficient", p.ar_coefficient},
          {"ws_max", p.ws_max},
          {"rotor_rated", p.rotor_rated},
          {"pitch_slope", p.pitch_slope},
          {"feather_pitch", p.feather_pitch},
          {"episode_min_hours", p.episode_min_hours},
          {"episode_max_hours", p.episode_max_hours},
          {"icing_factor", p.icing_factor},
          {"derate_min", p.derate_min},
          {"derate_max", p.derate_max},
          {"partial_min", p.partial_min},
          {"partial_max", p.partial_max},
          {"partial_pitch_offset", p.partial_pitch_offset},
          {"start_timestamp", p.start_timestamp}};
}

FarmProfile profile_from_json(const nlohmann::json& j) {
  FarmProfile p;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("farm_id", p.farm_id);
    get("cut_in", p.cut_in);
    get("rated_speed", p.rated_speed);
    get("cut_out", p.cut_out);
    get("rated_power", p.rated_power);
    get("n_turbines", p.n_turbines);
    get("months", p.months);
    get("class_mix", p.class_mix);
    get("seed", p.seed);
    get("weibull_shape", p.weibull_shape);
    get("weibull_scale", p.weibull_scale);
    get("weibull_loc", p.weibull_loc);
    get("ar_coefficient", p.ar_coefficient);
    get("ws_max", p.ws_max);
    get("rotor_rated", p.rotor_rated);
    get("pitch_slope", p.pitch_slope);
    get("feather_pitch", p.feather_pitch);
    get("episode_min_hours", p.episode_min_hours);
    get("episode_max_hours", p.episode_max_hours);
    get("icing_factor", p.icing_factor);
    get("derate_min", p.derate_min);
    get("derate_max", p.derate_max);
    get("partial_min", p.partial_min);
    get("partial_max", p.partial_max);
    get("partial_pitch_offset", p.partial_pitch_offset);
    get("start_timestamp", p.start_timestamp);
    if (j.contains("noise_sd"))
      for (const auto& [k, v] : j.at("noise_sd").items()) p.noise_sd[k] = v.get<double>();
    if (j.contains("class_effects"))
      for (const auto& [k, v] : j.at("class_effects").items())
        p.class_effects[k] = episode_effect_from_string(v.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid profile JSON: ") + e.what());
  }
  return p;
}

double ideal_power_curve(const FarmProfile& p, double v) {
  if (v < p.cut_in || v >= p.cut_out) return 0.0;
  if (v >= p.rated_speed) return p.rated_power;
  const double x = (v - p.cut_in) / (p.rated_speed - p.cut_in);
  return p.rated_power * x * x * x;
}

double ideal_curve_inverse(const FarmProfile& p, double power) {
  const double x = std::cbrt(std::clamp(power / p.rated_power, 0.0, 1.0));
  return p.cut_in + (p.rated_speed - p.cut_in) * x;
}

std::size_t records_per_turbine(const FarmProfile& p) {
  return static_cast<std::size_t>(p.months) * kDaysPerMonth * kRecordsPerDay;
}

GeneratedFarm generate_farm_detailed(const FarmProfile& profile) {
  profile.validate();
  const auto n = records_per_turbine(profile);
  const auto period = kDefaultSamplingPeriodMinutes;
  const TurbineModel model{profile};

  GeneratedFarm out;
  auto& ds = out.data;
  ds.farm_id = profile.farm_id;
  ds.signal_names = generated_signal_names();
  {
    std::vector<std::string> names;
    for (const auto& [name, f] : profile.class_mix) names.push_back(name);
    ds.label_vocab = canonical_vocab(std::move(names));
  }

  const double min_len = profile.episode_min_hours * 6.0;
  const double max_len = profile.episode_max_hours * 6.0;
  const double sd_ws = profile.noise("wind_speed");
  const double sd_pw = profile.noise("power");
  const double sd_pitch = profile.noise("pitch");
  const double sd_rotor = profile.noise("rotor_speed");

  for (int t = 0; t < profile.n_turbines; ++t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "_T%02d", t + 1);
    const std::string turbine_id = profile.farm_id + buf;
    Sampler rng(mix_seed(profile.seed, fnv1a64(turbine_id)));

    // Wind: Gaussian AR(1) mapped through the Weibull quantile function.
    std::vector<double> wind(n);
    const double phi = profile.ar_coefficient;
    const double innovation = std::sqrt(1.0 - phi * phi);
    double z = rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) z = phi * z + innovation * rng.normal();
      const double v = profile.weibull_loc +
                       weibull_from_gaussian(z, profile.weibull_shape, profile.weibull_scale);
      wind[i] = std::clamp(v, 0.0, profile.ws_max);
    }

    // Episode layout: exact per-class record budgets, shuffled, separated by
    // normal gaps with Dirichlet-distributed lengths.
    std::vector<EpisodeDraw> draws;
    std::size_t abnormal_total = 0;
    for (const auto& [name, fraction] : profile.class_mix) {
      if (name == kNormalClass || fraction <= 0.0) continue;
      const auto budget = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
      const auto effect = profile.class_effects.at(name);
      std::size_t used = 0;
      while (used < budget) {
        const double len = std::exp(rng.uniform(std::log(min_len), std::log(max_len)));
        auto l = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(len)));
        l = std::min(l, budget - used);
        draws.push_back({name, effect, l});
        used += l;
      }
      abnormal_total += budget;
    }
    std::shuffle(draws.begin(), draws.end(), rng.engine());
    const std::size_t normal_total = n - abnormal_total;
    std::vector<double> weights(draws.size() + 1);
    for (auto& w : weights) w = rng.exponential();
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::size_t> gaps(weights.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t g = 0; g < weights.size(); ++g) {
      const double exact = static_cast<double>(normal_total) * weights[g] / wsum;
      gaps[g] = static_cast<std::size_t>(std::floor(exact));
      assigned += gaps[g];
      remainders.emplace_back(exact - std::floor(exact), g);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < normal_total; ++r, ++assigned) ++gaps[remainders[r].second];

    // Per-record class assignment.
    std::vector<std::size_t> label(n, ds.label_index(kNormalClass));
    std::vector<int> episode_of(n, -1);
    std::size_t pos = 0;
    for (std::size_t e = 0; e < draws.size(); ++e) {
      pos += gaps[e];
      const auto& d = draws[e];
      StatusEpisode ep{d.class_name, turbine_id,
                       profile.start_timestamp + static_cast<std::int64_t>(pos) * period,
                       profile.start_timestamp + static_cast<std::int64_t>(pos + d.length) * period,
                       d.effect};
      out.episodes.push_back(ep);
      const auto cls = ds.label_index(d.class_name);
      for (std::size_t i = pos; i < pos + d.length; ++i) {
        label[i] = cls;
        episode_of[i] = static_cast<int>(out.episodes.size() - 1);
      }
      pos += d.length;
    }

    // Episode-level parameters.
    const std::size_t first_episode = out.episodes.size() - draws.size();
    std::vector<double> episode_param(draws.size(), 0.0);
    for (std::size_t e = 0; e < draws.size(); ++e) {
      if (draws[e].effect == EpisodeEffect::derate_cap)
        episode_param[e] = rng.uniform(profile.derate_min, profile.derate_max);
      else if (draws[e].effect == EpisodeEffect::partial_power)
        episode_param[e] = rng.uniform(profile.partial_min, profile.partial_max);
    }

    TurbineSeries series{turbine_id, {}};
    series.records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = wind[i];
      double ws = v + rng.truncated_normal(sd_ws);
      double pw = ideal_power_curve(profile, v);
      double pitch = model.pitch(v);
      double rotor = model.rotor(v);
      const double n_pw = rng.truncated_normal(sd_pw);
      const double n_pitch = rng.truncated_normal(sd_pitch);
      const double n_rotor = rng.truncated_normal(sd_rotor);

      if (episode_of[i] >= 0) {
        const auto e = static_cast<std::size_t>(episode_of[i]) - first_episode;
        switch (draws[e].effect) {
          case EpisodeEffect::icing_bias:
            ws = profile.icing_factor * v + (ws - v);
            break;
          case EpisodeEffect::derate_cap: {
            const double cap = episode_param[e] * profile.rated_power;
            const double v_cap = ideal_curve_inverse(profile, cap);
            if (v > v_cap && v < profile.cut_out) {
              pw = std::min(pw, cap);
              pitch = std::max(pitch, std::min(profile.feather_pitch, profile.pitch_slope * (v - v_cap)));
              rotor = std::min(rotor, model.rotor(v_cap));
            }
            break;
          }
          case EpisodeEffect::zero_power:
            pw = 0.0;
            pitch = profile.feather_pitch;
            rotor = 0.0;
            break;
          case EpisodeEffect::partial_power: {
            const double factor = episode_param[e];
            pw *= factor;
            pitch += profile.partial_pitch_offset * (1.0 - factor);
            break;
          }
          case EpisodeEffect::spurious_scatter:
            ws = rng.uniform(0.0, profile.ws_max);
            pw = rng.uniform(0.0, profile.rated_power);
            pitch = rng.uniform(0.0, profile.feather_pitch);
            rotor = rng.uniform(0.0, profile.rotor_rated);
            series.records.push_back(
                {profile.start_timestamp + static_cast<std::int64_t>(i) * period, {ws, pw, pitch, rotor}, label[i]});
            continue;
        }
      }
      ScadaRecord rec;
      rec.timestamp = profile.start_timestamp + static_cast<std::int64_t>(i) * period;
      rec.signals = {std::clamp(ws, 0.0, profile.ws_max),
                     std::clamp(pw + n_pw, 0.0, profile.rated_power),
                     std::clamp(pitch + n_pitch, 0.0, profile.feather_pitch),
                     std::clamp(rotor + n_rotor, 0.0, profile.rotor_rated)};
      rec.label = label[i];
      series.records.push_back(std::move(rec));
    }
    ds.turbines.push_back(std::move(series));
    out.true_wind.push_back(std::move(wind));
  }
  return out;
}

FarmDataset generate_farm(const FarmProfile& profile) { return generate_farm_detailed(profile).data; }

std::pair<FarmProfile, FarmProfile> paired_profiles(const FarmProfile& base,
                                                    std::pair<double, double> shift) {
  const auto [a, b] = shift;
  if (!(a > 0.0)) throw ConfigError("paired_profiles: scale must be positive");
  FarmProfile second = base;
  second.cut_in = a * base.cut_in + b;
  second.rated_speed = a * base.rated_speed + b;
  second.cut_out = a * base.cut_out + b;
  second.weibull_scale = a * base.weibull_scale;
  second.weibull_loc = a * base.weibull_loc + b;
  second.pitch_slope = base.pitch_slope / a;
  if (!(second.cut_in > 0.0 && second.cut_in < second.rated_speed && second.rated_speed < second.cut_out))
    throw ConfigError("paired_profiles: shifted speeds violate 0 < cut_in < rated_speed < cut_out");
  return {base, second};
}

}  // namespace windclf
