#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nesy/core.hpp"

namespace nesy {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;

inline constexpr std::chrono::seconds kSlotLength{15 * 60};

/// Parses `YYYY-MM-DDTHH:MM:SS` with an optional `Z` or `+00:00` suffix.
/// On failure returns nullopt and, when `reason` is given, a short human-readable cause.
std::optional<Timestamp> parse_timestamp(std::string_view text, std::string* reason = nullptr);
std::optional<Date> parse_date(std::string_view text, std::string* reason = nullptr);
std::string format_timestamp(Timestamp t);
std::string format_date(Date d);
Timestamp floor_to_slot(Timestamp t);

struct SensorEvent {
    std::string bay_id;
    std::string segment_id;
    Timestamp timestamp{};
    bool occupied = false;
    std::optional<double> duration_s;
    std::optional<bool> overstay;

    auto operator<=>(const SensorEvent&) const = default;
};

struct RowReject {
    std::size_t line = 0;  // 1-based line number in the source, header is line 1
    std::string reason;
};

struct EventParseResult {
    std::vector<SensorEvent> events;
    std::vector<RowReject> rejects;
};

/// Reads the event CSV (`bay_id,segment_id,timestamp,status[,duration_s,overstay]`).
/// Bad rows go to `rejects`; a header missing a required column is a data error.
EventParseResult parse_events(std::istream& in);

/// Drops exact duplicates and negative durations, orders by (bay, time) and
/// collapses runs of same-status events per bay to their first event. Idempotent.
std::vector<SensorEvent> clean_events(std::vector<SensorEvent> events);

struct SegmentSlot {
    std::string segment_id;
    Timestamp slot_start{};
    int occupied_bays = 0;
    int total_bays = 1;
    double occupancy_ratio = 0.0;

    bool operator==(const SegmentSlot&) const = default;
};

struct AggregateOptions {
    bool initial_occupied = false;  // status of a bay before its first event
};

/// Samples each bay's last-known status at every slot midpoint spanned by the events.
/// Every segment present in `total_bays` is emitted for each slot in the range.
std::vector<SegmentSlot> aggregate_slots(std::span<const SensorEvent> events,
                                         const std::map<std::string, std::string>& bay_to_segment,
                                         const std::map<std::string, int>& total_bays,
                                         AggregateOptions options = {});

/// Half-open 20% bins with the top bin closed; throws a domain error outside [0,1].
OccupancyClass discretize_ratio(double ratio);

enum class WeatherType : int { Clear = 0, Cloudy = 1, Rain = 2, Other = 3 };
inline constexpr int kNumWeatherTypes = 4;
std::string_view weather_name(WeatherType w) noexcept;
/// Unknown names map to Other.
WeatherType weather_from_name(std::string_view name) noexcept;

struct WeatherRecord {
    Timestamp timestamp{};
    WeatherType type = WeatherType::Clear;
    double temperature_c = 0.0;
    double wind_kmh = 0.0;
    double rainfall_mm = 0.0;

    bool operator==(const WeatherRecord&) const = default;
};

struct ContextTables {
    std::vector<WeatherRecord> weather;  // sorted by timestamp
    std::set<Date> holidays;

    /// Nearest preceding record no more than one hour before `t`.
    std::optional<WeatherRecord> weather_at(Timestamp t) const;
    bool is_holiday(Timestamp t) const;
};

std::vector<WeatherRecord> parse_weather(std::istream& in);
std::set<Date> parse_holidays(std::istream& in);

struct FeatureVector {
    double current_ratio = 0.0;
    std::vector<double> past_ratios;  // past_ratios[k] is the ratio k+1 slots before the current one
    int hour = 0;
    int day_of_week = 0;  // 0 = Monday
    int month = 1;
    bool is_holiday = false;
    WeatherType weather_type = WeatherType::Clear;
    double temperature_c = 0.0;
    double wind_kmh = 0.0;
    double rainfall_mm = 0.0;

    bool operator==(const FeatureVector&) const = default;
};

struct LabeledExample {
    FeatureVector features;
    std::array<OccupancyClass, kNumWindows> targets{};  // slots t+1, t+2, t+3
    std::string segment_id;
    Timestamp slot_start{};

    bool operator==(const LabeledExample&) const = default;
};

struct ContinuousRange {
    std::string name;
    double min = 0.0;
    double max = 1.0;

    bool operator==(const ContinuousRange&) const = default;
};

/// Encoding layout: normalized continuous block, then one-hot day_of_week, month, weather_type.
struct FeatureSchema {
    int lag_depth = 4;
    std::vector<ContinuousRange> continuous;
    int day_of_week_width = 7;
    int month_width = 12;
    int weather_width = kNumWeatherTypes;

    std::size_t width() const noexcept {
        return continuous.size() + static_cast<std::size_t>(day_of_week_width + month_width + weather_width);
    }
    bool operator==(const FeatureSchema&) const = default;
};

/// Names of the continuous block in encoding order for the given lag depth.
std::vector<std::string> continuous_feature_names(int lag_depth);
/// Continuous value by name (`current_ratio`, `past_ratio_3`, `hour`, `is_holiday`, ...).
double continuous_value(const FeatureVector& fv, std::string_view name);

/// Min/max constants computed over `examples`. Degenerate ranges are kept and encode to 0.
FeatureSchema fit_schema(std::span<const LabeledExample> examples, int lag_depth);
std::string schema_hash(const FeatureSchema& schema);

struct Dataset {
    std::vector<LabeledExample> examples;  // sorted by (segment_id, slot_start)
    FeatureSchema schema;

    bool operator==(const Dataset&) const = default;
};

struct AssembleReport {
    std::size_t candidate_slots = 0;    // slots with full history and future
    std::size_t dropped_gap = 0;        // windows crossing a gap
    std::size_t dropped_no_context = 0; // no weather record within the join tolerance
};

struct AssembleResult {
    Dataset dataset;
    AssembleReport report;
};

AssembleResult assemble_dataset(std::span<const SegmentSlot> slots, const ContextTables& context, int lag_depth = 4);

std::vector<SegmentSlot> parse_slots(std::istream& in);
void write_slots(std::ostream& out, std::span<const SegmentSlot> slots);
void write_weather(std::ostream& out, std::span<const WeatherRecord> records);
void write_holidays(std::ostream& out, const std::set<Date>& holidays);

std::string serialize_dataset(const Dataset& ds);
Dataset parse_dataset(std::string_view json_text);

}  // namespace nesy
