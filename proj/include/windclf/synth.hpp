#pragma once

// Synthetic farm generator: AR(1) wind with Weibull marginals, an ideal
// power curve, and injected abnormal-status episodes.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "windclf/scada_data.hpp"

namespace windclf {

enum class EpisodeEffect { icing_bias, derate_cap, zero_power, partial_power, spurious_scatter };

std::string to_string(EpisodeEffect e);
EpisodeEffect episode_effect_from_string(std::string_view s);

/// Default class -> effect mapping: C1 unavailability, C2 spurious, C3 derating,
/// C4 anemometer icing, other partial unavailability.
std::map<std::string, EpisodeEffect> default_class_effects();

struct FarmProfile {
  std::string farm_id = "farm";
  double cut_in = 3.0;       // m/s
  double rated_speed = 12.0;  // m/s
  double cut_out = 25.0;     // m/s
  double rated_power = 2000.0;  // kW
  int n_turbines = 5;
  int months = 18;  // 30-day months
  std::map<std::string, double> class_mix{{"normal", 1.0}};
  std::map<std::string, EpisodeEffect> class_effects = default_class_effects();
  /// Per-signal measurement noise (wind_speed m/s, power kW, pitch deg, rotor_speed rpm).
  std::map<std::string, double> noise_sd{
      {"wind_speed", 0.15}, {"power", 10.0}, {"pitch", 0.3}, {"rotor_speed", 0.1}};
  std::uint64_t seed = 1;

  // Wind climate and turbine control. Speeds transform with paired_profiles.
  double weibull_shape = 2.0;
  double weibull_scale = 8.5;  // m/s
  double weibull_loc = 0.0;    // m/s
  double ar_coefficient = 0.95;
  double ws_max = 25.0;         // anemometer range upper bound, m/s
  double rotor_rated = 15.0;    // rpm
  double pitch_slope = 2.0;     // deg per m/s above rated
  double feather_pitch = 90.0;  // deg

  // Episode shape.
  double episode_min_hours = 1.0;
  double episode_max_hours = 72.0;
  double icing_factor = 0.6;
  double derate_min = 0.4, derate_max = 0.7;    // fraction of rated power
  double partial_min = 0.2, partial_max = 0.8;  // power scale factor
  double partial_pitch_offset = 20.0;  // deg at factor 0; scaled by (1 - factor)

  std::int64_t start_timestamp = 0;  // minutes since epoch

  double noise(std::string_view signal) const;
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const FarmProfile& p);
FarmProfile profile_from_json(const nlohmann::json& j);

struct StatusEpisode {
  std::string class_name;
  std::string turbine_id;
  std::int64_t start = 0;  // first timestamp inside the episode
  std::int64_t end = 0;    // one past the last (exclusive), minutes
  EpisodeEffect effect = EpisodeEffect::zero_power;
};

/// Output of the generator including the hidden ground truth.
struct GeneratedFarm {
  FarmDataset data;
  std::vector<std::vector<double>> true_wind;  // per turbine, per record
  std::vector<StatusEpisode> episodes;
};

double ideal_power_curve(const FarmProfile& profile, double wind_speed);
/// Inverse of the ramp: wind speed at which the ideal curve yields `power`
/// (power in (0, rated_power)).
double ideal_curve_inverse(const FarmProfile& profile, double power);

/// Records per turbine implied by `months`.
std::size_t records_per_turbine(const FarmProfile& profile);

GeneratedFarm generate_farm_detailed(const FarmProfile& profile);
FarmDataset generate_farm(const FarmProfile& profile);

/// Second profile has every speed parameter mapped by v -> a*v + b
/// (power curve knots and the wind climate); the anemometer range is shared.
std::pair<FarmProfile, FarmProfile> paired_profiles(const FarmProfile& base,
                                                    std::pair<double, double> shift);

/// Signals emitted by the generator, in column order.
std::vector<std::string> generated_signal_names();

}  // namespace windclf
