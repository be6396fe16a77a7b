#include "nesy/cli.hpp"

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "json_codec.hpp"

namespace nesy::cli {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// JSON <-> typed config. Every struct is rendered to JSON for the defaults; user input is
// merged onto that rendering, so a key the defaults lack is unknown by construction.

template <class T>
void read(const json& j, const char* key, T& v, const std::string& path) {
    try {
        v = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw config_error(fmt::format("config: '{}{}' has the wrong type", path, key));
    }
}

std::string_view refinement_name(RefinementMode m) {
    return m == RefinementMode::Renormalize ? "renormalize" : "restricted_resample";
}

RefinementMode refinement_from_name(const std::string& s) {
    if (s == "renormalize") return RefinementMode::Renormalize;
    if (s == "restricted_resample") return RefinementMode::RestrictedResample;
    throw config_error("config: predict.refinement must be renormalize or restricted_resample, got '" + s + "'");
}

json to_json(const RunConfig& c) {
    const auto& g = c.generator;
    const auto& e = c.experiment;
    const auto& d = c.data;
    json gen{{"segments", g.segments},
             {"days", g.days},
             {"start_date", g.start_date},
             {"min_bays", g.min_bays},
             {"max_bays", g.max_bays},
             {"holidays", g.holidays},
             {"noise_scale", g.noise_scale},
             {"level_pull", g.level_pull},
             {"trend_rho", g.trend_rho},
             {"trend_sigma", g.trend_sigma},
             {"obs_sigma", g.obs_sigma},
             {"planted_noise_factor", g.planted_noise_factor},
             {"segment_spread", g.segment_spread},
             {"disrupted_weather", g.disrupted_weather},
             {"disrupted_schedule_p", g.disrupted_schedule_p},
             {"disrupted_jitter", g.disrupted_jitter},
             {"lunch_surge", g.lunch_surge},
             {"lunch_start", g.lunch_start},
             {"lunch_end", g.lunch_end},
             {"lunch_level", g.lunch_level},
             {"weekend_morning_low", g.weekend_morning_low},
             {"weekend_morning_end", g.weekend_morning_end},
             {"weekend_morning_level", g.weekend_morning_level},
             {"rain_damping", g.rain_damping},
             {"rain_threshold_mm", g.rain_threshold_mm},
             {"rain_factor", g.rain_factor},
             {"rain_block_probability", g.rain_block_probability},
             {"rain_mean_mm", g.rain_mean_mm}};
    json data{{"source", d.source},
              {"slots", d.slots.string()},
              {"weather", d.weather.string()},
              {"holidays", d.holidays.string()},
              {"dataset", d.dataset.string()},
              {"events", d.events.string()},
              {"total_bays", d.total_bays},
              {"initial_occupied", d.initial_occupied},
              {"lag_depth", d.lag_depth}};
    json exp{{"split", {{"train", e.split.train}, {"validation", e.split.validation}, {"test", e.split.test}}},
             {"scarcity_fractions", e.scarcity_fractions},
             {"noise",
              {{"feature_sigma_scale", e.noise.feature_sigma_scale},
               {"categorical_flip_p", e.noise.categorical_flip_p},
               {"label_flip_p", e.noise.label_flip_p}}},
             {"threshold", e.threshold},
             {"tau_p", e.tau_p},
             {"seeds", e.seeds},
             {"windows", e.windows},
             {"sweep_thresholds", e.sweep_thresholds}};
    json model{{"hidden", e.shape.hidden}, {"prior_sigma", e.shape.prior_sigma}, {"init_sigma", e.shape.init_sigma}};
    const auto& t = e.train;
    json train{{"learning_rate", t.learning_rate},         {"batch_size", t.batch_size},
               {"max_epochs", t.max_epochs},               {"patience", t.patience},
               {"mc_train_samples", t.mc_train_samples},   {"mc_predict_samples", t.mc_predict_samples},
               {"mc_val_samples", t.mc_val_samples}};
    json tree{{"max_depth", e.tree.max_depth}, {"min_leaf", e.tree.min_leaf}, {"min_gain", e.tree.min_gain}};
    json predict{{"models", c.predict.models.string()},
                 {"input", c.predict.input.string()},
                 {"window", c.predict.window},
                 {"refinement", refinement_name(c.predict.refinement)}};
    return json{{"seed", c.seed},   {"out", c.out.string()}, {"generator", gen},     {"data", data},
                {"experiment", exp}, {"model", model},        {"train", train},       {"tree", tree},
                {"predict", predict}};
}

RunConfig from_json(const json& j) {
    RunConfig c;
    read(j, "seed", c.seed, "");
    std::string s;
    read(j, "out", s, "");
    c.out = s;

    const json& g = j.at("generator");
    auto& gc = c.generator;
    const std::string gp = "generator.";
    read(g, "segments", gc.segments, gp);
    read(g, "days", gc.days, gp);
    read(g, "start_date", gc.start_date, gp);
    read(g, "min_bays", gc.min_bays, gp);
    read(g, "max_bays", gc.max_bays, gp);
    read(g, "holidays", gc.holidays, gp);
    read(g, "noise_scale", gc.noise_scale, gp);
    read(g, "level_pull", gc.level_pull, gp);
    read(g, "trend_rho", gc.trend_rho, gp);
    read(g, "trend_sigma", gc.trend_sigma, gp);
    read(g, "obs_sigma", gc.obs_sigma, gp);
    read(g, "planted_noise_factor", gc.planted_noise_factor, gp);
    read(g, "segment_spread", gc.segment_spread, gp);
    read(g, "disrupted_weather", gc.disrupted_weather, gp);
    read(g, "disrupted_schedule_p", gc.disrupted_schedule_p, gp);
    read(g, "disrupted_jitter", gc.disrupted_jitter, gp);
    read(g, "lunch_surge", gc.lunch_surge, gp);
    read(g, "lunch_start", gc.lunch_start, gp);
    read(g, "lunch_end", gc.lunch_end, gp);
    read(g, "lunch_level", gc.lunch_level, gp);
    read(g, "weekend_morning_low", gc.weekend_morning_low, gp);
    read(g, "weekend_morning_end", gc.weekend_morning_end, gp);
    read(g, "weekend_morning_level", gc.weekend_morning_level, gp);
    read(g, "rain_damping", gc.rain_damping, gp);
    read(g, "rain_threshold_mm", gc.rain_threshold_mm, gp);
    read(g, "rain_factor", gc.rain_factor, gp);
    read(g, "rain_block_probability", gc.rain_block_probability, gp);
    read(g, "rain_mean_mm", gc.rain_mean_mm, gp);

    const json& d = j.at("data");
    const std::string dp = "data.";
    read(d, "source", c.data.source, dp);
    for (auto [key, field] : {std::pair{"slots", &c.data.slots}, {"weather", &c.data.weather},
                              {"holidays", &c.data.holidays}, {"dataset", &c.data.dataset}, {"events", &c.data.events}}) {
        read(d, key, s, dp);
        *field = s;
    }
    read(d, "total_bays", c.data.total_bays, dp);
    read(d, "initial_occupied", c.data.initial_occupied, dp);
    read(d, "lag_depth", c.data.lag_depth, dp);

    const json& e = j.at("experiment");
    auto& ec = c.experiment;
    const std::string ep = "experiment.";
    read(e.at("split"), "train", ec.split.train, ep + "split.");
    read(e.at("split"), "validation", ec.split.validation, ep + "split.");
    read(e.at("split"), "test", ec.split.test, ep + "split.");
    read(e, "scarcity_fractions", ec.scarcity_fractions, ep);
    read(e.at("noise"), "feature_sigma_scale", ec.noise.feature_sigma_scale, ep + "noise.");
    read(e.at("noise"), "categorical_flip_p", ec.noise.categorical_flip_p, ep + "noise.");
    read(e.at("noise"), "label_flip_p", ec.noise.label_flip_p, ep + "noise.");
    read(e, "threshold", ec.threshold, ep);
    read(e, "tau_p", ec.tau_p, ep);
    read(e, "seeds", ec.seeds, ep);
    read(e, "windows", ec.windows, ep);
    read(e, "sweep_thresholds", ec.sweep_thresholds, ep);

    const json& m = j.at("model");
    read(m, "hidden", ec.shape.hidden, "model.");
    read(m, "prior_sigma", ec.shape.prior_sigma, "model.");
    read(m, "init_sigma", ec.shape.init_sigma, "model.");

    const json& t = j.at("train");
    auto& tc = ec.train;
    read(t, "learning_rate", tc.learning_rate, "train.");
    read(t, "batch_size", tc.batch_size, "train.");
    read(t, "max_epochs", tc.max_epochs, "train.");
    read(t, "patience", tc.patience, "train.");
    read(t, "mc_train_samples", tc.mc_train_samples, "train.");
    read(t, "mc_predict_samples", tc.mc_predict_samples, "train.");
    read(t, "mc_val_samples", tc.mc_val_samples, "train.");

    const json& tr = j.at("tree");
    read(tr, "max_depth", ec.tree.max_depth, "tree.");
    read(tr, "min_leaf", ec.tree.min_leaf, "tree.");
    read(tr, "min_gain", ec.tree.min_gain, "tree.");

    const json& p = j.at("predict");
    read(p, "models", s, "predict.");
    c.predict.models = s;
    read(p, "input", s, "predict.");
    c.predict.input = s;
    read(p, "window", c.predict.window, "predict.");
    read(p, "refinement", s, "predict.");
    c.predict.refinement = refinement_from_name(s);
    return c;
}

// Open maps accept arbitrary keys.
const std::set<std::string> kOpenMaps{"data.total_bays"};

void check_known(const json& defaults, const json& given, const std::string& path) {
    if (!given.is_object()) throw config_error(fmt::format("config: '{}' must be an object", path.empty() ? "<root>" : path));
    for (const auto& [key, value] : given.items()) {
        const std::string full = path.empty() ? key : path + "." + key;
        if (!defaults.contains(key)) throw config_error("config: unknown key '" + full + "'");
        if (defaults[key].is_object() && !kOpenMaps.count(full)) check_known(defaults[key], value, full);
    }
}

void apply_override(json& root, const std::string& expr) {
    const auto eq = expr.find('=');
    if (eq == std::string::npos || eq == 0) throw config_error("config: override '" + expr + "' is not key=value");
    const std::string key = expr.substr(0, eq), text = expr.substr(eq + 1);
    json* node = &root;
    std::string walked;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        walked += (walked.empty() ? "" : ".") + part;
        const bool last = dot == std::string::npos;
        if (!node->is_object() || (!node->contains(part) && !kOpenMaps.count(walked.substr(0, walked.rfind('.'))))) {
            throw config_error("config: unknown key '" + key + "'");
        }
        node = &(*node)[part];
        if (last) break;
        start = dot + 1;
    }
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    *node = std::move(value);
}

// ---------------------------------------------------------------------------
// Output helpers

struct Outputs {
    fs::path dir;
    std::vector<ManifestEntry> files;

    void write(const std::string& rel, const std::string& content) {
        const fs::path path = dir / rel;
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        std::ofstream f(path, std::ios::binary);
        f << content;
        f.close();
        if (!f) throw config_error("cannot write '" + path.string() + "'");
        files.push_back({rel, fnv1a64_hex(content), content.size()});
    }

    void manifest(const std::string& command, const RunConfig& config, json extra = json::object()) {
        json files_json = json::array();
        for (const auto& f : files) files_json.push_back({{"path", f.path}, {"fnv1a64", f.fnv1a64}, {"bytes", f.bytes}});
        json m{{"command", command}, {"seed", config.seed}, {"config", to_json(config)}, {"files", files_json}};
        for (auto& [k, v] : extra.items()) m[k] = v;
        const std::string text = m.dump(2) + "\n";
        const fs::path path = dir / ("manifest_" + command + ".json");
        std::ofstream f(path, std::ios::binary);
        f << text;
        if (!f) throw config_error("cannot write '" + path.string() + "'");
    }
};

std::string read_file(const fs::path& path, const std::string& what) {
    if (path.empty()) throw config_error("config: " + what + " path is not set");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot read " + what + " '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::ifstream open_input(const fs::path& path, const std::string& what) {
    if (path.empty()) throw config_error("config: " + what + " path is not set");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot read " + what + " '" + path.string() + "'");
    return f;
}

template <class F>
std::string to_text(F&& writer) {
    std::ostringstream ss;
    writer(ss);
    return ss.str();
}

ContextTables load_context(const DataConfig& d) {
    ContextTables ctx;
    auto w = open_input(d.weather, "data.weather");
    ctx.weather = parse_weather(w);
    if (!d.holidays.empty()) {
        auto h = open_input(d.holidays, "data.holidays");
        ctx.holidays = parse_holidays(h);
    }
    return ctx;
}

// Seed families used by the single-run commands.
enum : std::uint64_t { kTrainInit = 0x71, kTrainStream = 0x72, kPredictStream = 0x73 };

std::uint64_t run_seed(std::uint64_t seed, std::uint64_t tag, int window) {
    return derived_stream(seed, tag * 16 + static_cast<std::uint64_t>(window))();
}

std::string suite_name(Suite s) {
    switch (s) {
        case Suite::Baseline: return "baseline";
        case Suite::Scarcity: return "scarcity";
        case Suite::Noise: return "noise";
        case Suite::Sweep: return "sweep";
        case Suite::All: return "all";
    }
    return "all";
}

ErrorKind kind_from_code(const std::string& code) {
    for (auto k : {ErrorKind::Config, ErrorKind::Data, ErrorKind::Integrity, ErrorKind::Dimension, ErrorKind::Domain}) {
        if (error_code(k) == code) return k;
    }
    return ErrorKind::Integrity;
}

json distribution_json(const ClassDistribution& d) { return json(d.probs); }

json classes_json(const std::vector<OccupancyClass>& cs) {
    json a = json::array();
    for (auto c : cs) a.push_back(class_name(c));
    return a;
}

}  // namespace

void RunConfig::validate() const {
    static const std::set<std::string> sources{"generator", "slots", "dataset"};
    if (!sources.count(data.source)) throw config_error("config: data.source must be generator, slots or dataset");
    if (data.lag_depth < 1) throw config_error("config: data.lag_depth must be >= 1");
    if (predict.window < 1 || predict.window > static_cast<int>(kNumWindows)) {
        throw config_error("config: predict.window must be 1, 2 or 3");
    }
    if (out.empty()) throw config_error("config: out must be set");
    if (data.source == "generator") generator.validate();
    experiment.validate();
}

RunConfig config_from_json(const std::string& text, const std::vector<std::string>& overrides) {
    json root = to_json(RunConfig{});
    if (!text.empty()) {
        json given = json::parse(text, nullptr, false);
        if (given.is_discarded()) throw config_error("config: file is not valid JSON");
        check_known(root, given, "");
        root.merge_patch(given);
    }
    for (const auto& o : overrides) apply_override(root, o);
    RunConfig c = from_json(root);
    c.validate();
    return c;
}

RunConfig load_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
    std::string text;
    if (file) {
        std::ifstream f(*file, std::ios::binary);
        if (!f) throw config_error("config: cannot read '" + file->string() + "'");
        std::ostringstream ss;
        ss << f.rdbuf();
        text = ss.str();
    }
    return config_from_json(text, overrides);
}

std::string dump_config(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

Dataset load_data(const RunConfig& config) {
    const auto& d = config.data;
    if (d.source == "generator") {
        const auto syn = generate_synthetic(config.generator, config.seed);
        return assemble_dataset(syn.slots, syn.context, d.lag_depth).dataset;
    }
    if (d.source == "slots") {
        auto in = open_input(d.slots, "data.slots");
        const auto slots = parse_slots(in);
        return assemble_dataset(slots, load_context(d), d.lag_depth).dataset;
    }
    Dataset ds = parse_dataset(read_file(d.dataset, "data.dataset"));
    if (ds.schema.lag_depth != d.lag_depth) {
        throw config_error(fmt::format("config: dataset lag depth {} does not match data.lag_depth {}",
                                       ds.schema.lag_depth, d.lag_depth));
    }
    return ds;
}

CommandResult cmd_generate(const RunConfig& config) {
    const auto syn = generate_synthetic(config.generator, config.seed);
    Outputs o{config.out, {}};
    o.write("slots.csv", to_text([&](std::ostream& s) { write_slots(s, syn.slots); }));
    o.write("weather.csv", to_text([&](std::ostream& s) { write_weather(s, syn.context.weather); }));
    o.write("holidays.csv", to_text([&](std::ostream& s) { write_holidays(s, syn.context.holidays); }));
    o.write("ground_truth_rules.json", serialize_rules(syn.ground_truth));
    o.manifest("generate", config);
    return {o.files};
}

CommandResult cmd_ingest(const RunConfig& config) {
    const auto& d = config.data;
    auto in = open_input(d.events, "data.events");
    auto parsed = parse_events(in);

    // Checked before cleaning, which may collapse the conflicting event away.
    std::map<std::string, std::string> bay_to_segment;
    std::map<std::string, std::set<std::string>> bays_per_segment;
    for (const auto& e : parsed.events) {
        auto [it, fresh] = bay_to_segment.emplace(e.bay_id, e.segment_id);
        if (!fresh && it->second != e.segment_id) {
            throw data_error("bay '" + e.bay_id + "' appears under segments '" + it->second + "' and '" + e.segment_id + "'");
        }
        bays_per_segment[e.segment_id].insert(e.bay_id);
    }
    const auto events = clean_events(std::move(parsed.events));
    std::map<std::string, int> totals = d.total_bays;
    for (const auto& [seg, bays] : bays_per_segment) totals.emplace(seg, static_cast<int>(bays.size()));
    const auto slots = aggregate_slots(events, bay_to_segment, totals, {d.initial_occupied});

    Outputs o{config.out, {}};
    o.write("slots.csv", to_text([&](std::ostream& s) { write_slots(s, slots); }));
    o.write("rejects.csv", to_text([&](std::ostream& s) {
                s << "line,reason\n";
                for (const auto& r : parsed.rejects) s << r.line << "," << csv::sanitize(r.reason) << "\n";
            }));
    json extra{{"events_kept", events.size()}, {"rows_rejected", parsed.rejects.size()}, {"slots", slots.size()}};
    if (!d.weather.empty()) {
        const auto assembled = assemble_dataset(slots, load_context(d), d.lag_depth);
        o.write("dataset.json", serialize_dataset(assembled.dataset));
        extra["examples"] = assembled.dataset.examples.size();
        extra["candidate_slots"] = assembled.report.candidate_slots;
        extra["dropped_gap"] = assembled.report.dropped_gap;
        extra["dropped_no_context"] = assembled.report.dropped_no_context;
    }
    o.manifest("ingest", config, extra);
    return {o.files};
}

CommandResult cmd_train(const RunConfig& config) {
    const Dataset ds = load_data(config);
    const auto split = temporal_split(ds, config.experiment.split);
    const int lag = ds.schema.lag_depth;
    const FeatureSchema schema = fit_schema(split.train.examples, lag);
    const auto& ec = config.experiment;

    Outputs o{config.out, {}};
    json epochs = json::object();
    for (int w = 1; w <= static_cast<int>(kNumWindows); ++w) {
        TrainConfig tc = ec.train;
        tc.seed = run_seed(config.seed, kTrainStream, w);
        const BnnModel init = make_model(schema, ec.shape, run_seed(config.seed, kTrainInit, w));
        const auto result = train(init, split.train.examples, split.validation.examples, w, tc);
        const RuleBase rules = extract_rules(induce_tree(split.train.examples, w, lag, ec.tree));
        o.write(fmt::format("model_pw{}.json", w), serialize_checkpoint(result.model, tc, w));
        o.write(fmt::format("rules_pw{}.json", w), serialize_rules(rules));
        o.write(fmt::format("train_log_pw{}.csv", w), to_text([&](std::ostream& s) { write_training_log(s, result.log); }));
        epochs[fmt::format("pw{}", w)] = result.log.size();
    }
    o.manifest("train", config,
               {{"epochs", epochs},
                {"train_examples", split.train.examples.size()},
                {"validation_examples", split.validation.examples.size()},
                {"schema_hash", schema_hash(schema)}});
    return {o.files};
}

CommandResult cmd_extract_rules(const RunConfig& config) {
    const Dataset ds = load_data(config);
    const auto split = temporal_split(ds, config.experiment.split);
    Outputs o{config.out, {}};
    json trees = json::object();
    for (int w = 1; w <= static_cast<int>(kNumWindows); ++w) {
        const DecisionTree tree = induce_tree(split.train.examples, w, ds.schema.lag_depth, config.experiment.tree);
        const RuleBase rules = extract_rules(tree);
        o.write(fmt::format("rules_pw{}.json", w), serialize_rules(rules));
        trees[fmt::format("pw{}", w)] = {{"structural_hash", tree.structural_hash()}, {"rules", rules.rules.size()}};
    }
    o.manifest("extract-rules", config, {{"trees", trees}});
    return {o.files};
}

CommandResult cmd_predict(const RunConfig& config, const std::string& method) {
    static const std::set<std::string> methods{"bnn", "symbolic", "m1", "m2", "persistence"};
    if (!methods.count(method)) throw config_error("config: --method must be bnn, symbolic, m1, m2 or persistence");
    const int w = config.predict.window;
    const fs::path models = config.predict.models.empty() ? config.out : config.predict.models;

    const Checkpoint ck = parse_checkpoint(read_file(models / fmt::format("model_pw{}.json", w), "checkpoint"));
    const RuleBase rules = parse_rules(read_file(models / fmt::format("rules_pw{}.json", w), "rule base"));
    if (ck.window != w || rules.window != w) {
        throw config_error(fmt::format("config: window mismatch (requested PW{}, checkpoint PW{}, rules PW{})", w,
                                       ck.window, rules.window));
    }
    if (rules.lag_depth != ck.model.schema.lag_depth) throw config_error("config: checkpoint and rule base lag depths differ");

    std::vector<LabeledExample> examples;
    if (!config.predict.input.empty()) {
        examples = parse_dataset(read_file(config.predict.input, "predict.input")).examples;
    } else {
        const Dataset ds = load_data(config);
        examples = temporal_split(ds, config.experiment.split).test.examples;
    }
    for (const auto& ex : examples) {
        if (static_cast<int>(ex.features.past_ratios.size()) != ck.model.schema.lag_depth) {
            throw config_error("config: input lag depth does not match the checkpoint schema");
        }
    }

    HybridConfig hc;
    hc.threshold = config.experiment.threshold;
    hc.tau_p = config.experiment.tau_p;
    hc.mc_samples = ck.config.mc_predict_samples;
    hc.seed = run_seed(config.seed, kPredictStream, w);
    hc.refinement = config.predict.refinement;
    const HybridPredictor predictor(ck.model, rules, hc);
    const auto neural = examples.empty() ? std::vector<ClassDistribution>{} : predictor.neural_batch(examples);

    std::string lines;
    const auto wi = static_cast<std::size_t>(w - 1);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        json line{{"segment_id", ex.segment_id},
                  {"slot_start", format_timestamp(ex.slot_start)},
                  {"window", w},
                  {"method", method}};
        if (method == "persistence") {
            line["predicted"] = class_name(predict_persistence(ex.features));
            line["source"] = "persistence";
        } else {
            PredictionOutcome out;
            if (method == "bnn") {
                out.predicted = neural[i].argmax();
                out.neural_distribution = neural[i];
                out.confidence = neural[i].max();
            } else if (method == "symbolic") {
                out = decide_symbolic(neural[i], rule_infer(rules, ex.features));
            } else if (method == "m1") {
                out = decide_method1(neural[i], rule_infer(rules, ex.features), hc.threshold);
            } else {
                out = predictor.method2_given(neural[i], ex.features);
            }
            line["predicted"] = class_name(out.predicted);
            line["source"] = source_name(out.source);
            line["confidence"] = out.confidence;
            line["neural_distribution"] = distribution_json(out.neural_distribution);
            if (method == "bnn") line["abstained"] = !confident_prediction(neural[i], hc.threshold).has_value();
            if (out.refined_distribution) line["refined_distribution"] = distribution_json(*out.refined_distribution);
            if (out.plausible_set) line["plausible_set"] = classes_json(*out.plausible_set);
            if (out.matched_rule) line["rule_id"] = *out.matched_rule;
        }
        line["observed"] = class_name(ex.targets[wi]);
        lines += line.dump() + "\n";
    }
    Outputs o{config.out, {}};
    o.write(fmt::format("predictions_{}_pw{}.jsonl", method, w), lines);
    o.manifest("predict", config, {{"method", method}, {"window", w}, {"instances", examples.size()}});
    return {o.files};
}

CommandResult cmd_experiment(const RunConfig& config, Suite suite) {
    const Dataset ds = load_data(config);
    const auto result = run_suite(config.experiment, ds, suite);
    const std::string name = suite_name(suite);
    Outputs o{config.out, {}};
    if (suite != Suite::Sweep) {
        o.write("report_" + name + ".csv", to_text([&](std::ostream& s) { write_report(s, result.rows); }));
        o.write("plot_" + name + ".csv", to_text([&](std::ostream& s) { write_plot_data(s, result.cells); }));
    }
    if (!result.sweep.empty()) {
        o.write("sweep.csv", to_text([&](std::ostream& s) { write_sweep(s, result.sweep); }));
    }
    if (!result.failures.empty()) {
        o.write("failures_" + name + ".csv", to_text([&](std::ostream& s) { write_failures(s, result.failures); }));
    }
    o.manifest(suite == Suite::Sweep ? "sweep" : "experiment", config,
               {{"suite", name}, {"cells", result.cells.size() / kModels.size()}, {"failures", result.failures.size()}});
    if (!result.failures.empty()) {
        const auto& f = result.failures.front();
        throw Error(kind_from_code(f.code),
                    fmt::format("{} cell(s) failed, first {} PW{} seed {}: {}", result.failures.size(), f.condition,
                                f.window, f.seed, f.message));
    }
    return {o.files};
}

CommandResult cmd_sweep(const RunConfig& config) { return cmd_experiment(config, Suite::Sweep); }

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Neuro-symbolic parking occupancy prediction"};
    app.require_subcommand(1);
    app.fallthrough();
    std::optional<std::string> config_path, out_dir, method, suite;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed, "run seed");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--method", method, "predict: bnn|symbolic|m1|m2|persistence");
    app.add_option("--suite", suite, "experiment: baseline|scarcity|noise|sweep|all");
    app.add_option("--set", overrides, "dotted config override key=value (repeatable)");
    const std::pair<const char*, const char*> commands[] = {
        {"generate", "write a planted-rule synthetic dataset"},
        {"ingest", "turn sensor events into slot data"},
        {"train", "fit the BNN and rule base per window"},
        {"extract-rules", "induce trees and write rule bases only"},
        {"predict", "score a dataset with one method"},
        {"experiment", "run an experiment suite and write reports"},
        {"sweep", "deferral and accuracy over thresholds"},
    };
    for (auto [name, help] : commands) app.add_subcommand(name, help);

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return 0;
        } catch (const CLI::ParseError& e) {
            throw config_error(std::string("usage: ") + e.what());
        }
        if (seed) overrides.push_back(fmt::format("seed={}", *seed));
        if (out_dir) overrides.push_back("out=" + json(*out_dir).dump());
        const RunConfig config = load_config(config_path ? std::optional<fs::path>(*config_path) : std::nullopt, overrides);
        const std::string cmd = app.get_subcommands().front()->get_name();

        CommandResult r;
        if (cmd == "generate") r = cmd_generate(config);
        else if (cmd == "ingest") r = cmd_ingest(config);
        else if (cmd == "train") r = cmd_train(config);
        else if (cmd == "extract-rules") r = cmd_extract_rules(config);
        else if (cmd == "predict") {
            if (!method) throw config_error("usage: predict requires --method");
            r = cmd_predict(config, *method);
        } else if (cmd == "experiment") {
            r = cmd_experiment(config, suite_from_name(suite.value_or("all")));
        } else {
            r = cmd_sweep(config);
        }
        for (const auto& f : r.files) out << (config.out / f.path).string() << " " << f.fnv1a64 << "\n";
        return 0;
    } catch (const Error& e) {
        err << "error: " << error_code(e.kind()) << ": " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const json::exception& e) {
        err << "error: " << error_code(ErrorKind::Config) << ": " << e.what() << "\n";
        return exit_code(ErrorKind::Config);
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace nesy::cli
