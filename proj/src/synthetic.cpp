#include "nesy/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include <fmt/format.h>

#include "nesy/random.hpp"

namespace nesy {

namespace chr = std::chrono;

void GeneratorConfig::validate() const {
    if (segments < 1) throw config_error("generator: segments must be >= 1");
    if (days < 1) throw config_error("generator: days must be >= 1");
    if (min_bays < 1 || max_bays < min_bays) throw config_error("generator: need 1 <= min_bays <= max_bays");
    if (!parse_date(start_date)) throw config_error("generator: invalid start_date '" + start_date + "'");
    if (noise_scale < 0.0 || trend_sigma < 0.0 || obs_sigma < 0.0) {
        throw config_error("generator: noise parameters must be nonnegative");
    }
    if (!(trend_rho > -1.0 && trend_rho < 1.0)) throw config_error("generator: trend_rho must lie in (-1, 1)");
    if (level_pull < 0.0 || level_pull > 1.0) throw config_error("generator: level_pull must lie in [0,1]");
    if (disrupted_jitter < 0.0) throw config_error("generator: disrupted_jitter must be nonnegative");
    if (disrupted_schedule_p < 0.0 || disrupted_schedule_p > 1.0) {
        throw config_error("generator: disrupted_schedule_p must lie in [0,1]");
    }
    for (const auto& w : disrupted_weather) {
        if (weather_name(weather_from_name(w)) != w) throw config_error("generator: unknown weather type '" + w + "'");
    }
    if (rain_block_probability < 0.0 || rain_block_probability > 1.0) {
        throw config_error("generator: rain_block_probability must lie in [0,1]");
    }
    if (lunch_start < 0 || lunch_end > 24 || lunch_start >= lunch_end) throw config_error("generator: bad lunch window");
}

namespace {

using Knot = std::pair<double, double>;
constexpr std::array<Knot, 11> kWeekday{{{0, 0.12}, {6, 0.10}, {8, 0.45}, {10, 0.70}, {12, 0.72}, {14, 0.70},
                                          {16, 0.62}, {18, 0.50}, {20, 0.30}, {22, 0.18}, {24, 0.12}}};
constexpr std::array<Knot, 8> kWeekend{{{0, 0.15}, {8, 0.10}, {10, 0.30}, {12, 0.50}, {15, 0.55}, {18, 0.45},
                                         {21, 0.30}, {24, 0.15}}};

template <std::size_t N>
double interpolate(const std::array<Knot, N>& knots, double hour) {
    for (std::size_t i = 1; i < N; ++i) {
        if (hour <= knots[i].first) {
            const auto [x0, y0] = knots[i - 1];
            const auto [x1, y1] = knots[i];
            return y0 + (y1 - y0) * (hour - x0) / (x1 - x0);
        }
    }
    return knots[N - 1].second;
}

struct WeatherBlock {
    WeatherType type = WeatherType::Clear;
    double rainfall = 0.0;
};

// Mild seasonal cycle; a steep one would shift covariates between the temporal partitions.
constexpr std::array<double, 12> kMonthTemp{20, 20, 19.5, 19, 18.5, 18, 18, 18, 18.5, 19, 19.5, 20};

}  // namespace

SyntheticData generate_synthetic(const GeneratorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SyntheticData out;
    const Date start = *parse_date(cfg.start_date);
    const int slots_per_day = 96;
    const auto n_slots = static_cast<std::size_t>(cfg.days) * slots_per_day;

    // Calendar: holidays among the weekdays of the range.
    Rng cal = derived_stream(seed, 0xCA1);
    std::vector<Date> weekdays;
    for (int d = 0; d < cfg.days; ++d) {
        const Date day = start + chr::days{d};
        if (chr::weekday{day}.c_encoding() % 6 != 0) weekdays.push_back(day);
    }
    std::shuffle(weekdays.begin(), weekdays.end(), cal);
    for (int h = 0; h < cfg.holidays && h < static_cast<int>(weekdays.size()); ++h) out.context.holidays.insert(weekdays[static_cast<std::size_t>(h)]);

    // Weather: one state per 6-hour block, published hourly.
    Rng wx = derived_stream(seed, 0x3EA7);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::exponential_distribution<double> rain_amount(1.0 / cfg.rain_mean_mm);
    std::vector<WeatherBlock> blocks(static_cast<std::size_t>(cfg.days) * 4);
    for (auto& b : blocks) {
        if (u01(wx) < cfg.rain_block_probability) {
            b.type = WeatherType::Rain;
            b.rainfall = std::round(rain_amount(wx) * 10.0) / 10.0;
        } else {
            const double r = u01(wx);
            b.type = r < 0.55 ? WeatherType::Clear : (r < 0.88 ? WeatherType::Cloudy : WeatherType::Other);
        }
    }
    for (int d = 0; d < cfg.days; ++d) {
        const Date day = start + chr::days{d};
        const unsigned month = static_cast<unsigned>(chr::year_month_day{day}.month());
        for (int h = 0; h < 24; ++h) {
            const auto& b = blocks[static_cast<std::size_t>(d * 4 + h / 6)];
            WeatherRecord r;
            r.timestamp = Timestamp{day} + chr::hours{h};
            r.type = b.type;
            r.rainfall_mm = b.rainfall;
            const double diurnal = -5.0 * std::cos(2.0 * 3.141592653589793 * (h - 3) / 24.0);
            r.temperature_c = std::round((kMonthTemp[month - 1] + diurnal + 1.5 * n01(wx)) * 10.0) / 10.0;
            r.wind_kmh = std::round(std::abs(12.0 + 6.0 * n01(wx)) * 10.0) / 10.0;
            out.context.weather.push_back(r);
        }
    }

    auto rainfall_at = [&](std::size_t slot) { return blocks[slot / 24].rainfall; };
    std::vector<bool> disrupted_block(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const auto name = weather_name(blocks[b].type);
        disrupted_block[b] = std::find(cfg.disrupted_weather.begin(), cfg.disrupted_weather.end(), name) !=
                             cfg.disrupted_weather.end();
    }
    // Hourly schedule followed under disrupted weather, one class centre per hour.
    std::array<double, 24> schedule{};
    {
        Rng sched = derived_stream(seed, 0x5C4ED);
        std::uniform_int_distribution<int> pick(0, static_cast<int>(kNumClasses) - 1);
        for (auto& v : schedule) v = 0.1 + 0.2 * pick(sched);
    }

    for (int s = 0; s < cfg.segments; ++s) {
        Rng rng = derived_stream(seed, static_cast<std::uint64_t>(s) + 1);
        std::uniform_int_distribution<int> bays(cfg.min_bays, cfg.max_bays);
        const int total = bays(rng);
        const double scale = 1.0 + cfg.segment_spread * (2.0 * u01(rng) - 1.0);
        const std::string id = fmt::format("seg{:02d}", s);
        double x = -1.0, velocity = 0.0;
        for (std::size_t t = 0; t < n_slots; ++t) {
            const Date day = start + chr::days{static_cast<int>(t / slots_per_day)};
            const int slot_of_day = static_cast<int>(t % slots_per_day);
            const int hour = slot_of_day / 4;
            const double mid_hour = (slot_of_day + 0.5) / 4.0;
            const bool holiday = out.context.holidays.count(day) > 0;
            const unsigned wd = chr::weekday{day}.c_encoding();
            const bool weekend = wd == 0 || wd == 6;

            double level = weekend || holiday ? interpolate(kWeekend, mid_hour) : interpolate(kWeekday, mid_hour);
            level = std::min(0.95, level * scale);
            if (x < 0.0) x = level;
            velocity = cfg.trend_rho * velocity + cfg.trend_sigma * cfg.noise_scale * n01(rng);
            x += velocity + cfg.level_pull * (level - x);
            // Reflect off the bounds so trajectories turn around instead of sticking.
            if (x > 0.98) { x = 1.96 - x; velocity = -std::abs(velocity); }
            if (x < 0.02) { x = 0.04 - x; velocity = std::abs(velocity); }
            // The lag of x behind the profile is part of the noise; it vanishes with noise_scale.
            double deviation = (x - level) * std::min(1.0, cfg.noise_scale);

            bool planted = false;
            if (cfg.lunch_surge && !weekend && !holiday && hour >= cfg.lunch_start && hour < cfg.lunch_end) {
                level = cfg.lunch_level;
                planted = true;
            }
            if (cfg.weekend_morning_low && (weekend || holiday) && hour < cfg.weekend_morning_end) {
                level = cfg.weekend_morning_level;
                planted = true;
            }
            if (cfg.rain_damping && rainfall_at(t) > cfg.rain_threshold_mm) level *= cfg.rain_factor;
            if (planted) deviation *= cfg.planted_noise_factor;

            double ratio = std::clamp(level + deviation + cfg.obs_sigma * cfg.noise_scale * n01(rng), 0.0, 1.0);
            const double jitter = (2.0 * u01(rng) - 1.0) * cfg.disrupted_jitter * cfg.noise_scale;
            const double follow = u01(rng), draw = u01(rng);
            if (disrupted_block[t / 24] && !planted) {
                const double p = 1.0 - (1.0 - cfg.disrupted_schedule_p) * std::min(1.0, cfg.noise_scale);
                ratio = follow < p ? std::clamp(schedule[static_cast<std::size_t>(hour)] + jitter, 0.0, 1.0) : draw;
            }

            const int occupied = std::clamp(static_cast<int>(std::lround(ratio * total)), 0, total);
            out.slots.push_back({id, Timestamp{day} + kSlotLength * slot_of_day, occupied, total,
                                 static_cast<double>(occupied) / static_cast<double>(total)});
        }
    }

    // Planted structure for PW1, phrased over the feature slot.
    auto& gt = out.ground_truth;
    gt.window = 1;
    gt.lag_depth = 4;
    gt.exclusive = false;
    const double lunch_last = cfg.lunch_end - 1 + 0.5;
    const double lunch_first = cfg.lunch_start - 0.5;
    if (cfg.lunch_surge) {
        std::vector<Condition> base{Condition::in("day_of_week", {0, 1, 2, 3, 4}), Condition::eq("is_holiday", 0),
                                    Condition::gt("hour", lunch_first), Condition::le("hour", lunch_last)};
        Rule dry{"weekday_lunch_surge", base, {}, 1};
        dry.conditions.push_back(Condition::le("rainfall_mm", cfg.rain_threshold_mm));
        dry.distribution = normalized({0.01, 0.01, 0.01, 0.02, 0.95});
        gt.rules.push_back(dry);
        if (cfg.rain_damping) {
            Rule wet{"weekday_lunch_rain", base, {}, 1};
            wet.conditions.push_back(Condition::gt("rainfall_mm", cfg.rain_threshold_mm));
            wet.distribution = normalized({0.01, 0.01, 0.03, 0.90, 0.05});
            gt.rules.push_back(wet);
        }
    }
    if (cfg.weekend_morning_low) {
        Rule r{"weekend_morning_low",
               {Condition::in("day_of_week", {5, 6}), Condition::le("hour", cfg.weekend_morning_end - 1.5)},
               normalized({0.95, 0.02, 0.01, 0.01, 0.01}),
               1};
        gt.rules.push_back(r);
    }
    return out;
}

}  // namespace nesy
