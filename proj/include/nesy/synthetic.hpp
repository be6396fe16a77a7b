#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nesy/data.hpp"
#include "nesy/symbolic.hpp"

namespace nesy {

/// Synthetic occupancy benchmark. Each segment follows a latent trajectory
///
///   v(t) = trend_rho * v(t-1) + trend_sigma * noise
///   x(t) = x(t-1) + v(t) + level_pull * (level(t) - x(t-1))     (reflected into [0.02, 0.98])
///
/// where level(t) is a segment-scaled daily profile, and the observed ratio is
/// clip(level(t) + s * (x(t) - level(t)) + obs_sigma * noise, 0, 1) with s = min(1, noise_scale).
/// Planted contexts replace the level and damp the deviation by planted_noise_factor. Under the weather types in disrupted_weather,
/// slots outside planted contexts take the value of a fixed hourly schedule (drawn once per seed)
/// with probability disrupted_schedule_p and a uniform draw otherwise.
/// All stochastic terms scale with `noise_scale`; at 0 the series tracks the levels.
struct GeneratorConfig {
    int segments = 4;
    int days = 56;
    std::string start_date = "2019-03-04";  // a Monday
    int min_bays = 12;
    int max_bays = 30;
    int holidays = 3;

    double noise_scale = 1.0;
    double level_pull = 0.03;
    double trend_rho = 0.97;
    double trend_sigma = 0.025;
    double obs_sigma = 0.01;
    double planted_noise_factor = 0.3;
    double segment_spread = 0.3;  // per-segment profile scale in [1-spread, 1+spread]
    std::vector<std::string> disrupted_weather{"rain", "other"};
    double disrupted_schedule_p = 0.4;
    double disrupted_jitter = 0.05;  // uniform jitter around the schedule value

    // Planted context rules.
    bool lunch_surge = true;  // weekday (non-holiday) hour in [lunch_start, lunch_end)
    int lunch_start = 12;
    int lunch_end = 14;
    double lunch_level = 0.9;
    bool weekend_morning_low = true;  // weekend or holiday, hour < weekend_morning_end
    int weekend_morning_end = 9;
    double weekend_morning_level = 0.08;
    bool rain_damping = true;  // rainfall above threshold scales the level
    double rain_threshold_mm = 1.0;
    double rain_factor = 0.75;

    double rain_block_probability = 0.25;  // weather is drawn per 6-hour block
    double rain_mean_mm = 2.5;

    void validate() const;
};

struct SyntheticData {
    std::vector<SegmentSlot> slots;  // sorted by (segment_id, slot_start)
    ContextTables context;
    RuleBase ground_truth;  // planted rules for PW1 stated over feature-slot conditions; not exclusive
};

/// Pure function of (config, seed).
SyntheticData generate_synthetic(const GeneratorConfig& config, std::uint64_t seed);

}  // namespace nesy
