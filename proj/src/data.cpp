#include "nesy/data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "json_codec.hpp"

namespace nesy {

using json = nlohmann::json;
namespace chr = std::chrono;

namespace {

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

int to_small_int(std::string_view s) {
    int v = 0;
    for (char c : s) v = v * 10 + (c - '0');
    return v;
}

void set_reason(std::string* reason, const char* text) {
    if (reason) *reason = text;
}

}  // namespace

std::optional<Date> parse_date(std::string_view text, std::string* reason) {
    text = csv::trim(text);
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !all_digits(text.substr(0, 4)) ||
        !all_digits(text.substr(5, 2)) || !all_digits(text.substr(8, 2))) {
        set_reason(reason, "malformed date");
        return std::nullopt;
    }
    const int y = to_small_int(text.substr(0, 4));
    const unsigned m = static_cast<unsigned>(to_small_int(text.substr(5, 2)));
    const unsigned d = static_cast<unsigned>(to_small_int(text.substr(8, 2)));
    if (m < 1 || m > 12) {
        set_reason(reason, "invalid month");
        return std::nullopt;
    }
    const chr::year_month_day ymd{chr::year{y}, chr::month{m}, chr::day{d}};
    if (!ymd.ok()) {
        set_reason(reason, "invalid day");
        return std::nullopt;
    }
    return Date{ymd};
}

std::optional<Timestamp> parse_timestamp(std::string_view text, std::string* reason) {
    text = csv::trim(text);
    if (text.size() < 19 || (text[10] != 'T' && text[10] != ' ') || text[13] != ':' || text[16] != ':' ||
        !all_digits(text.substr(11, 2)) || !all_digits(text.substr(14, 2)) || !all_digits(text.substr(17, 2))) {
        set_reason(reason, "malformed timestamp");
        return std::nullopt;
    }
    const auto suffix = text.substr(19);
    if (!(suffix.empty() || suffix == "Z" || suffix == "+00:00")) {
        set_reason(reason, "timestamp is not UTC");
        return std::nullopt;
    }
    std::string date_reason;
    auto date = parse_date(text.substr(0, 10), &date_reason);
    if (!date) {
        if (reason) *reason = date_reason == "malformed date" ? "malformed timestamp" : date_reason;
        return std::nullopt;
    }
    const int hh = to_small_int(text.substr(11, 2));
    const int mm = to_small_int(text.substr(14, 2));
    const int ss = to_small_int(text.substr(17, 2));
    if (hh > 23 || mm > 59 || ss > 59) {
        set_reason(reason, "invalid time of day");
        return std::nullopt;
    }
    return Timestamp{*date} + chr::hours{hh} + chr::minutes{mm} + chr::seconds{ss};
}

std::string format_date(Date d) {
    const chr::year_month_day ymd{d};
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                       static_cast<unsigned>(ymd.day()));
}

std::string format_timestamp(Timestamp t) {
    const auto day = chr::floor<chr::days>(t);
    const chr::hh_mm_ss tod{t - day};
    return fmt::format("{}T{:02d}:{:02d}:{:02d}Z", format_date(day), tod.hours().count(), tod.minutes().count(),
                       tod.seconds().count());
}

Timestamp floor_to_slot(Timestamp t) {
    auto rem = t.time_since_epoch() % kSlotLength;
    if (rem < chr::seconds{0}) rem += kSlotLength;
    return t - rem;
}

EventParseResult parse_events(std::istream& in) {
    EventParseResult result;
    std::string line;
    if (!std::getline(in, line)) return result;

    const auto header = csv::split(line);
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col.emplace(std::string(header[i]), i);
    for (const char* required : {"bay_id", "segment_id", "timestamp", "status"}) {
        if (!col.count(required)) throw data_error(fmt::format("event CSV header lacks column '{}'", required));
    }
    const auto at = [&](const std::vector<std::string_view>& f, const char* name) -> std::optional<std::string_view> {
        auto it = col.find(name);
        if (it == col.end() || it->second >= f.size()) return std::nullopt;
        return f[it->second];
    };

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (csv::trim(line).empty()) continue;
        const auto fields = csv::split(line);
        auto reject = [&](std::string reason) { result.rejects.push_back({lineno, std::move(reason)}); };

        auto bay = at(fields, "bay_id");
        auto seg = at(fields, "segment_id");
        auto ts = at(fields, "timestamp");
        auto status = at(fields, "status");
        if (!bay || !seg || !ts || !status || bay->empty() || seg->empty()) {
            reject("missing required column");
            continue;
        }
        SensorEvent ev;
        ev.bay_id = std::string(*bay);
        ev.segment_id = std::string(*seg);
        std::string why;
        auto parsed = parse_timestamp(*ts, &why);
        if (!parsed) {
            reject(why);
            continue;
        }
        ev.timestamp = *parsed;
        if (*status == "occupied") {
            ev.occupied = true;
        } else if (*status == "unoccupied") {
            ev.occupied = false;
        } else {
            reject(fmt::format("invalid status '{}'", *status));
            continue;
        }
        if (auto dur = at(fields, "duration_s"); dur && !dur->empty()) {
            auto v = csv::to_double(*dur);
            if (!v) {
                reject("invalid duration_s");
                continue;
            }
            ev.duration_s = *v;
        }
        if (auto ov = at(fields, "overstay"); ov && !ov->empty()) {
            if (*ov == "true" || *ov == "1") {
                ev.overstay = true;
            } else if (*ov == "false" || *ov == "0") {
                ev.overstay = false;
            } else {
                reject("invalid overstay flag");
                continue;
            }
        }
        result.events.push_back(std::move(ev));
    }
    return result;
}

std::vector<SensorEvent> clean_events(std::vector<SensorEvent> events) {
    std::erase_if(events, [](const SensorEvent& e) { return e.duration_s && *e.duration_s < 0.0; });
    std::sort(events.begin(), events.end(), [](const SensorEvent& a, const SensorEvent& b) {
        if (a.bay_id != b.bay_id) return a.bay_id < b.bay_id;
        if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
        return a < b;
    });
    events.erase(std::unique(events.begin(), events.end()), events.end());

    std::vector<SensorEvent> out;
    out.reserve(events.size());
    for (auto& e : events) {
        if (!out.empty() && out.back().bay_id == e.bay_id && out.back().occupied == e.occupied) continue;
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<SegmentSlot> aggregate_slots(std::span<const SensorEvent> events,
                                         const std::map<std::string, std::string>& bay_to_segment,
                                         const std::map<std::string, int>& total_bays, AggregateOptions options) {
    for (const auto& [segment, count] : total_bays) {
        if (count < 1) throw data_error(fmt::format("segment '{}' has total_bays = {}", segment, count));
    }
    std::map<std::string, std::vector<const SensorEvent*>> timeline;
    for (const auto& e : events) {
        auto it = bay_to_segment.find(e.bay_id);
        if (it == bay_to_segment.end()) throw data_error(fmt::format("bay '{}' has no segment mapping", e.bay_id));
        if (!total_bays.count(it->second)) {
            throw data_error(fmt::format("segment '{}' (bay '{}') has no total_bays entry", it->second, e.bay_id));
        }
        timeline[e.bay_id].push_back(&e);
    }
    if (events.empty()) return {};
    for (auto& [bay, evs] : timeline) {
        std::stable_sort(evs.begin(), evs.end(),
                         [](const SensorEvent* a, const SensorEvent* b) { return a->timestamp < b->timestamp; });
    }

    auto [lo, hi] = std::minmax_element(events.begin(), events.end(),
                                        [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    const Timestamp first = floor_to_slot(lo->timestamp);
    const Timestamp last = floor_to_slot(hi->timestamp);
    const auto n_slots = static_cast<std::size_t>((last - first) / kSlotLength) + 1;

    // Occupancy per bay per slot, by replaying each bay's timeline against the slot midpoints.
    std::map<std::string, std::vector<int>> occupied;
    for (const auto& [seg, _] : total_bays) occupied[seg].assign(n_slots, 0);
    for (const auto& [bay, seg] : bay_to_segment) {
        auto seg_it = occupied.find(seg);
        if (seg_it == occupied.end()) continue;
        auto tl = timeline.find(bay);
        std::size_t next = 0;
        bool status = options.initial_occupied;
        for (std::size_t s = 0; s < n_slots; ++s) {
            const Timestamp mid = first + kSlotLength * static_cast<int>(s) + kSlotLength / 2;
            if (tl != timeline.end()) {
                const auto& evs = tl->second;
                while (next < evs.size() && evs[next]->timestamp <= mid) status = evs[next++]->occupied;
            }
            seg_it->second[s] += status ? 1 : 0;
        }
    }

    std::vector<SegmentSlot> out;
    out.reserve(total_bays.size() * n_slots);
    for (const auto& [seg, counts] : occupied) {
        const int total = total_bays.at(seg);
        for (std::size_t s = 0; s < n_slots; ++s) {
            if (counts[s] > total) {
                throw data_error(fmt::format("segment '{}' has {} occupied bays but total_bays = {}", seg, counts[s], total));
            }
            out.push_back({seg, first + kSlotLength * static_cast<int>(s), counts[s], total,
                           static_cast<double>(counts[s]) / static_cast<double>(total)});
        }
    }
    return out;
}

OccupancyClass discretize_ratio(double ratio) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw domain_error(fmt::format("occupancy ratio {} outside [0,1]", ratio));
    if (ratio < 0.2) return OccupancyClass::VeryLow;
    if (ratio < 0.4) return OccupancyClass::Low;
    if (ratio < 0.6) return OccupancyClass::Moderate;
    if (ratio < 0.8) return OccupancyClass::High;
    return OccupancyClass::VeryHigh;
}

std::string_view weather_name(WeatherType w) noexcept {
    switch (w) {
        case WeatherType::Clear: return "clear";
        case WeatherType::Cloudy: return "cloudy";
        case WeatherType::Rain: return "rain";
        case WeatherType::Other: return "other";
    }
    return "other";
}

WeatherType weather_from_name(std::string_view name) noexcept {
    if (name == "clear") return WeatherType::Clear;
    if (name == "cloudy") return WeatherType::Cloudy;
    if (name == "rain") return WeatherType::Rain;
    return WeatherType::Other;
}

std::optional<WeatherRecord> ContextTables::weather_at(Timestamp t) const {
    auto it = std::upper_bound(weather.begin(), weather.end(), t,
                               [](Timestamp v, const WeatherRecord& r) { return v < r.timestamp; });
    if (it == weather.begin()) return std::nullopt;
    --it;
    if (t - it->timestamp > chr::hours{1}) return std::nullopt;
    return *it;
}

bool ContextTables::is_holiday(Timestamp t) const { return holidays.count(chr::floor<chr::days>(t)) > 0; }

std::vector<WeatherRecord> parse_weather(std::istream& in) {
    std::vector<WeatherRecord> out;
    std::string line;
    if (!std::getline(in, line)) return out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (csv::trim(line).empty()) continue;
        const auto f = csv::split(line);
        if (f.size() < 5) throw data_error(fmt::format("weather CSV line {}: expected 5 columns", lineno));
        std::string why;
        auto ts = parse_timestamp(f[0], &why);
        auto temp = csv::to_double(f[2]);
        auto wind = csv::to_double(f[3]);
        auto rain = csv::to_double(f[4]);
        if (!ts) throw data_error(fmt::format("weather CSV line {}: {}", lineno, why));
        if (!temp || !wind || !rain || *wind < 0.0 || *rain < 0.0) {
            throw data_error(fmt::format("weather CSV line {}: invalid numeric field", lineno));
        }
        out.push_back({*ts, weather_from_name(f[1]), *temp, *wind, *rain});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    return out;
}

std::set<Date> parse_holidays(std::istream& in) {
    std::set<Date> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (csv::trim(line).empty()) continue;
        std::string why;
        auto d = parse_date(line, &why);
        if (!d) throw data_error(fmt::format("holiday file line {}: {}", lineno, why));
        out.insert(*d);
    }
    return out;
}

std::vector<std::string> continuous_feature_names(int lag_depth) {
    std::vector<std::string> names{"current_ratio"};
    for (int k = 1; k <= lag_depth; ++k) names.push_back(fmt::format("past_ratio_{}", k));
    for (const char* n : {"hour", "is_holiday", "temperature_c", "wind_kmh", "rainfall_mm"}) names.emplace_back(n);
    return names;
}

double continuous_value(const FeatureVector& fv, std::string_view name) {
    if (name == "current_ratio") return fv.current_ratio;
    if (name.starts_with("past_ratio_")) {
        auto k = csv::to_int(name.substr(11));
        if (!k || *k < 1 || static_cast<std::size_t>(*k) > fv.past_ratios.size()) {
            throw dimension_error(fmt::format("feature '{}' exceeds lag depth {}", name, fv.past_ratios.size()));
        }
        return fv.past_ratios[static_cast<std::size_t>(*k - 1)];
    }
    if (name == "hour") return fv.hour;
    if (name == "is_holiday") return fv.is_holiday ? 1.0 : 0.0;
    if (name == "temperature_c") return fv.temperature_c;
    if (name == "wind_kmh") return fv.wind_kmh;
    if (name == "rainfall_mm") return fv.rainfall_mm;
    throw config_error(fmt::format("unknown continuous feature '{}'", name));
}

FeatureSchema fit_schema(std::span<const LabeledExample> examples, int lag_depth) {
    FeatureSchema schema;
    schema.lag_depth = lag_depth;
    for (auto& name : continuous_feature_names(lag_depth)) {
        ContinuousRange r{name, 0.0, 1.0};
        if (!examples.empty()) {
            r.min = r.max = continuous_value(examples.front().features, name);
            for (const auto& e : examples) {
                const double v = continuous_value(e.features, name);
                r.min = std::min(r.min, v);
                r.max = std::max(r.max, v);
            }
        }
        schema.continuous.push_back(std::move(r));
    }
    return schema;
}

namespace codec {

json schema_to_json(const FeatureSchema& s) {
    json cont = json::array();
    for (const auto& r : s.continuous) cont.push_back({{"name", r.name}, {"min", r.min}, {"max", r.max}});
    return {{"lag_depth", s.lag_depth},
            {"continuous", cont},
            {"one_hot", {{"day_of_week", s.day_of_week_width}, {"month", s.month_width}, {"weather_type", s.weather_width}}}};
}

FeatureSchema schema_from_json(const json& j) {
    FeatureSchema s;
    s.lag_depth = j.at("lag_depth").get<int>();
    for (const auto& r : j.at("continuous")) {
        s.continuous.push_back({r.at("name").get<std::string>(), r.at("min").get<double>(), r.at("max").get<double>()});
    }
    const auto& oh = j.at("one_hot");
    s.day_of_week_width = oh.at("day_of_week").get<int>();
    s.month_width = oh.at("month").get<int>();
    s.weather_width = oh.at("weather_type").get<int>();
    return s;
}

json features_to_json(const FeatureVector& f) {
    return {{"current_ratio", f.current_ratio}, {"past_ratios", f.past_ratios},  {"hour", f.hour},
            {"day_of_week", f.day_of_week},     {"month", f.month},             {"is_holiday", f.is_holiday},
            {"weather_type", weather_name(f.weather_type)},                    {"temperature_c", f.temperature_c},
            {"wind_kmh", f.wind_kmh},           {"rainfall_mm", f.rainfall_mm}};
}

FeatureVector features_from_json(const json& j) {
    FeatureVector f;
    f.current_ratio = j.at("current_ratio").get<double>();
    f.past_ratios = j.at("past_ratios").get<std::vector<double>>();
    f.hour = j.at("hour").get<int>();
    f.day_of_week = j.at("day_of_week").get<int>();
    f.month = j.at("month").get<int>();
    f.is_holiday = j.at("is_holiday").get<bool>();
    f.weather_type = weather_from_name(j.at("weather_type").get<std::string>());
    f.temperature_c = j.at("temperature_c").get<double>();
    f.wind_kmh = j.at("wind_kmh").get<double>();
    f.rainfall_mm = j.at("rainfall_mm").get<double>();
    return f;
}

}  // namespace codec

using codec::schema_to_json;
using codec::schema_from_json;
using codec::features_to_json;
using codec::features_from_json;

std::string schema_hash(const FeatureSchema& schema) { return fnv1a64_hex(schema_to_json(schema).dump()); }

AssembleResult assemble_dataset(std::span<const SegmentSlot> slots, const ContextTables& context, int lag_depth) {
    if (lag_depth < 0) throw config_error("lag_depth must be nonnegative");
    std::map<std::string, std::vector<const SegmentSlot*>> by_segment;
    for (const auto& s : slots) by_segment[s.segment_id].push_back(&s);

    AssembleResult result;
    auto& examples = result.dataset.examples;
    const auto L = static_cast<std::size_t>(lag_depth);
    for (auto& [seg, series] : by_segment) {
        std::stable_sort(series.begin(), series.end(),
                         [](const SegmentSlot* a, const SegmentSlot* b) { return a->slot_start < b->slot_start; });
        if (series.size() < L + 1 + kNumWindows) continue;
        for (std::size_t t = L; t + kNumWindows < series.size(); ++t) {
            ++result.report.candidate_slots;
            bool contiguous = true;
            for (std::size_t i = t - L; i < t + kNumWindows; ++i) {
                if (series[i + 1]->slot_start - series[i]->slot_start != kSlotLength) {
                    contiguous = false;
                    break;
                }
            }
            if (!contiguous) {
                ++result.report.dropped_gap;
                continue;
            }
            const Timestamp start = series[t]->slot_start;
            auto weather = context.weather_at(start);
            if (!weather) {
                ++result.report.dropped_no_context;
                continue;
            }
            LabeledExample ex;
            ex.segment_id = seg;
            ex.slot_start = start;
            auto& f = ex.features;
            f.current_ratio = series[t]->occupancy_ratio;
            for (std::size_t k = 1; k <= L; ++k) f.past_ratios.push_back(series[t - k]->occupancy_ratio);
            const auto day = chr::floor<chr::days>(start);
            const chr::year_month_day ymd{day};
            f.hour = static_cast<int>(chr::duration_cast<chr::hours>(start - day).count());
            f.day_of_week = static_cast<int>((chr::weekday{day}.c_encoding() + 6) % 7);
            f.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
            f.is_holiday = context.is_holiday(start);
            f.weather_type = weather->type;
            f.temperature_c = weather->temperature_c;
            f.wind_kmh = weather->wind_kmh;
            f.rainfall_mm = weather->rainfall_mm;
            for (std::size_t w = 0; w < kNumWindows; ++w) ex.targets[w] = discretize_ratio(series[t + 1 + w]->occupancy_ratio);
            examples.push_back(std::move(ex));
        }
    }
    result.dataset.schema = fit_schema(examples, lag_depth);
    return result;
}

std::vector<SegmentSlot> parse_slots(std::istream& in) {
    std::vector<SegmentSlot> out;
    std::string line;
    if (!std::getline(in, line)) return out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (csv::trim(line).empty()) continue;
        const auto f = csv::split(line);
        if (f.size() < 4) throw data_error(fmt::format("slot CSV line {}: expected at least 4 columns", lineno));
        std::string why;
        auto ts = parse_timestamp(f[1], &why);
        auto occ = csv::to_int(f[2]);
        auto tot = csv::to_int(f[3]);
        if (!ts) throw data_error(fmt::format("slot CSV line {}: {}", lineno, why));
        if (!occ || !tot || *tot < 1 || *occ < 0 || *occ > *tot) {
            throw data_error(fmt::format("slot CSV line {}: invalid bay counts", lineno));
        }
        if (*ts != floor_to_slot(*ts)) throw data_error(fmt::format("slot CSV line {}: slot_start not 15-minute aligned", lineno));
        out.push_back({std::string(f[0]), *ts, static_cast<int>(*occ), static_cast<int>(*tot),
                       static_cast<double>(*occ) / static_cast<double>(*tot)});
    }
    return out;
}

void write_slots(std::ostream& out, std::span<const SegmentSlot> slots) {
    out << "segment_id,slot_start,occupied_bays,total_bays,occupancy_ratio\n";
    for (const auto& s : slots) {
        out << fmt::format("{},{},{},{},{}\n", s.segment_id, format_timestamp(s.slot_start), s.occupied_bays,
                           s.total_bays, s.occupancy_ratio);
    }
}

void write_weather(std::ostream& out, std::span<const WeatherRecord> records) {
    out << "timestamp,weather_type,temperature_c,wind_kmh,rainfall_mm\n";
    for (const auto& r : records) {
        out << fmt::format("{},{},{},{},{}\n", format_timestamp(r.timestamp), weather_name(r.type), r.temperature_c,
                           r.wind_kmh, r.rainfall_mm);
    }
}

void write_holidays(std::ostream& out, const std::set<Date>& holidays) {
    for (auto d : holidays) out << format_date(d) << '\n';
}

std::string serialize_dataset(const Dataset& ds) {
    json examples = json::array();
    for (const auto& e : ds.examples) {
        json targets = json::array();
        for (auto t : e.targets) targets.push_back(class_name(t));
        examples.push_back({{"segment_id", e.segment_id},
                            {"slot_start", format_timestamp(e.slot_start)},
                            {"features", features_to_json(e.features)},
                            {"targets", targets}});
    }
    return json{{"schema", schema_to_json(ds.schema)}, {"examples", examples}}.dump();
}

Dataset parse_dataset(std::string_view json_text) {
    Dataset ds;
    try {
        const auto doc = json::parse(json_text);
        ds.schema = schema_from_json(doc.at("schema"));
        for (const auto& e : doc.at("examples")) {
            LabeledExample ex;
            ex.segment_id = e.at("segment_id").get<std::string>();
            auto ts = parse_timestamp(e.at("slot_start").get<std::string>());
            if (!ts) throw data_error("dataset: invalid slot_start");
            ex.slot_start = *ts;
            ex.features = features_from_json(e.at("features"));
            const auto& targets = e.at("targets");
            if (targets.size() != kNumWindows) throw data_error("dataset: expected 3 targets per example");
            for (std::size_t w = 0; w < kNumWindows; ++w) {
                auto c = class_from_name(targets[w].get<std::string>());
                if (!c) throw data_error("dataset: unknown class name");
                ex.targets[w] = *c;
            }
            ds.examples.push_back(std::move(ex));
        }
    } catch (const json::exception& ex) {
        throw data_error(std::string("dataset JSON: ") + ex.what());
    }
    return ds;
}

}  // namespace nesy
