#include "cotsfa/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "cotsfa/errors.hpp"

namespace cotsfa::config {
namespace {

using Value = Document::value_type;

struct KeySpec {
    const char* key;
    Value value;
    const char* help;
};

const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs = {
        {"dataset.source", "synthetic", "synthetic | csv"},
        {"dataset.path", "", "CSV file (source=csv)"},
        {"dataset.layout", "wide", "CSV layout: wide | long"},
        {"dataset.n_series", 20u, "synthetic series count"},
        {"dataset.length", 2000u, "synthetic series length"},
        {"dataset.channels", 1u, "synthetic channels per series"},
        {"dataset.seed", 0u, "synthetic generator seed"},
        {"dataset.noise_fraction", 0.1, "noise std as a fraction of the sinusoid amplitude"},
        {"dataset.train_fraction", 0.7, "chronological train share"},
        {"dataset.val_fraction", 0.1, "chronological validation share"},
        {"dataset.test_fraction", 0.2, "chronological test share"},
        {"dataset.stride", 1u, "stride between training windows"},
        {"dataset.eval_stride", 1u, "stride between validation/test windows"},
        {"model.window", 16u, "input length L"},
        {"model.horizon", 4u, "forecast horizon H"},
        {"model.latent_dim", 16u, "latent width D"},
        {"model.latent_length", 16u, "latent length T' (<= window)"},
        {"model.hidden", 64u, "hidden width of the residual MLP"},
        {"model.seed", 0u, "parameter initialisation seed"},
        {"train.batch_size", 128u, "mini-batch size"},
        {"train.epochs", 10u, "maximum epochs"},
        {"train.lr", 1e-3, "initial Adam learning rate"},
        {"train.lr_halving", true, "halve the learning rate every epoch"},
        {"train.early_stopping", true, "stop after `patience` epochs without validation improvement"},
        {"train.patience", 3u, "early-stopping patience in epochs"},
        {"train.lambda_align", 0.1, "alignment loss weight (0 = baseline)"},
        {"train.views", 5u, "augmented views per mode per sample"},
        {"train.modes", Value::array({"input_only", "input_output"}), "augmentation modes"},
        {"train.temperature", 1.0, "similarity temperature"},
        {"train.forecast_on_augmented", false, "also fit forecasts of augmented samples"},
        {"train.log_every", 10u, "optimizer steps per log record"},
        {"train.seed", 0u, "shuffle and augmentation seed"},
        {"augment.jitter", 0.05, "relative std of per-sample curve jitter"},
        {"augment.symmetric_sign", false, "draw anomaly sign from {-1, +1}"},
        {"augment.regime", "none", "training contamination: none | continuous | pointwise"},
        {"augment.mode", "input_only", "continuous contamination mode: input_only | input_output"},
        {"augment.pointwise_kind", "const", "pointwise corruption: const | missing | gaussian"},
        {"augment.pointwise_ratio", 0.1, "share of corrupted time steps per window"},
        {"augment.pointwise_scale", nullptr, "pointwise magnitude (null = 0.5 const, 2.0 gaussian)"},
        {"augment.fraction", 0.0, "share of training windows to contaminate"},
        {"eval.conditions", Value::array({"clean", "input_only", "input_output"}),
         "test conditions: clean | input_only | input_output | pointwise:<kind>:<ratio>"},
        {"eval.train_contaminations", Value::array({"none"}),
         "training sets: none | continuous:<mode>:<fraction> | pointwise:<kind>:<ratio>:<fraction>"},
        {"eval.seeds", Value::array({0u, 1u, 2u}), "seeds per grid cell"},
        {"eval.lambdas", Value::array({0.001, 0.01, 0.1, 0.5, 1.0, 2.0}), "lambda sweep values"},
        {"eval.metric_space", "auto", "auto | normalized | denormalized (auto: normalized for synthetic)"},
        {"eval.threads", 0u, "parallel training jobs (0 = all cores; capped by COTSFA_THREADS)"},
    };
    return specs;
}

std::pair<std::string, std::string> split_key(std::string_view key) {
    const auto dot = key.find('.');
    if (dot == std::string_view::npos) throw ValidationError("config key '" + std::string(key) + "' needs a section");
    return {std::string(key.substr(0, dot)), std::string(key.substr(dot + 1))};
}

const KeySpec& spec_for(std::string_view key) {
    for (const auto& s : key_specs()) {
        if (key == s.key) return s;
    }
    throw ValidationError("unknown config key '" + std::string(key) + "'");
}

bool is_integral_number(const Value& v) {
    if (v.is_number_unsigned()) return true;
    if (v.is_number_integer()) return v.get<std::int64_t>() >= 0;
    if (v.is_number_float()) {
        const double d = v.get<double>();
        return d >= 0.0 && std::floor(d) == d && d < 1.8e19;
    }
    return false;
}

// Checks `v` against the type of `def`, converting integral floats.
Value coerce(std::string_view key, const Value& def, const Value& v) {
    auto fail = [&](const char* expected) -> Value {
        throw ValidationError("config key '" + std::string(key) + "' expects " + expected + ", got " + v.dump());
    };
    if (def.is_null()) {
        if (v.is_null() || v.is_number()) return v;
        return fail("a number or null");
    }
    if (def.is_string()) return v.is_string() ? v : fail("a string");
    if (def.is_boolean()) return v.is_boolean() ? v : fail("a boolean");
    if (def.is_number_unsigned()) {
        if (!is_integral_number(v)) return fail("a non-negative integer");
        return v.is_number_float() ? Value(static_cast<std::uint64_t>(v.get<double>())) : Value(v.get<std::uint64_t>());
    }
    if (def.is_number_float()) return v.is_number() ? Value(v.get<double>()) : fail("a number");
    if (def.is_array()) {
        if (!v.is_array()) return fail("an array");
        const Value& elem = def.empty() ? Value("") : def.front();
        Value out = Value::array();
        for (const auto& item : v) out.push_back(coerce(key, elem, item));
        return out;
    }
    return v;
}

Value parse_scalar(std::string_view key, const Value& def, std::string_view text) {
    const std::string s(text);
    if (def.is_string()) return s;
    if (def.is_boolean()) {
        if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "off" || s == "no") return false;
        throw ValidationError("config key '" + std::string(key) + "' expects a boolean, got '" + s + "'");
    }
    if (def.is_null() && s == "null") return nullptr;
    Value parsed;
    try {
        parsed = Value::parse(s);
    } catch (const std::exception&) {
        throw ValidationError("config key '" + std::string(key) + "' expects a number, got '" + s + "'");
    }
    return coerce(key, def.is_null() ? Value(0.0) : def, parsed);
}

template <typename T>
T get(const Document& doc, std::string_view key) {
    const auto [section, name] = split_key(key);
    return doc.at(section).at(name).get<T>();
}

std::vector<std::string> get_strings(const Document& doc, std::string_view key) {
    return get<std::vector<std::string>>(doc, key);
}

}  // namespace

const Document& defaults() {
    static const Document doc = [] {
        Document d = Document::object();
        for (const auto& s : key_specs()) {
            const auto [section, name] = split_key(s.key);
            d[section][name] = s.value;
        }
        return d;
    }();
    return doc;
}

std::string format_default(const Value& value) {
    if (value.is_string()) return value.get<std::string>().empty() ? "\"\"" : value.get<std::string>();
    if (value.is_array()) {
        std::string out;
        for (const auto& item : value) {
            if (!out.empty()) out += ",";
            out += format_default(item);
        }
        return out;
    }
    if (value.is_number_float()) return data::format_double(value.get<double>());
    return value.dump();
}

std::vector<KeyInfo> keys() {
    std::vector<KeyInfo> out;
    for (const auto& s : key_specs()) out.push_back({s.key, format_default(s.value), s.help});
    return out;
}

Document merge(const Document& overlay) {
    Document doc = defaults();
    if (overlay.is_null()) return doc;
    if (!overlay.is_object()) throw ValidationError("config document must be a JSON object");
    for (const auto& [section, body] : overlay.items()) {
        if (!doc.contains(section)) throw ValidationError("unknown config section '" + section + "'");
        if (!body.is_object()) throw ValidationError("config section '" + section + "' must be an object");
        for (const auto& [name, value] : body.items()) {
            const std::string key = section + "." + name;
            doc[section][name] = coerce(key, spec_for(key).value, value);
        }
    }
    return doc;
}

Value parse_value(std::string_view key, std::string_view text) {
    const Value& def = spec_for(key).value;
    if (!def.is_array()) return parse_scalar(key, def, text);
    const Value elem = def.empty() ? Value("") : def.front();
    Value out = Value::array();
    std::size_t start = 0;
    const std::string s(text);
    if (s.empty()) return out;
    while (true) {
        const auto comma = s.find(',', start);
        out.push_back(parse_scalar(key, elem, s.substr(start, comma == std::string::npos ? comma : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

void set_value(Document& doc, std::string_view key, std::string_view text) {
    const auto [section, name] = split_key(key);
    doc[section][name] = parse_value(key, text);
}

RunConfig from_document(const Document& doc) {
    RunConfig c;
    c.document = doc;

    auto& ds = c.dataset;
    ds.source = get<std::string>(doc, "dataset.source");
    if (ds.source != "synthetic" && ds.source != "csv") {
        throw ValidationError("dataset.source must be synthetic or csv, got '" + ds.source + "'");
    }
    ds.path = get<std::string>(doc, "dataset.path");
    ds.layout = data::parse_layout(get<std::string>(doc, "dataset.layout"));
    if (ds.source == "csv" && ds.path.empty()) throw ValidationError("dataset.path is required when source=csv");
    ds.synthetic.n_series = get<std::size_t>(doc, "dataset.n_series");
    ds.synthetic.length = get<std::size_t>(doc, "dataset.length");
    ds.synthetic.channels = get<std::size_t>(doc, "dataset.channels");
    ds.synthetic.seed = get<std::uint64_t>(doc, "dataset.seed");
    ds.synthetic.noise_fraction = get<double>(doc, "dataset.noise_fraction");
    if (ds.source == "synthetic") ds.synthetic.validate();
    ds.split.train_fraction = get<double>(doc, "dataset.train_fraction");
    ds.split.val_fraction = get<double>(doc, "dataset.val_fraction");
    ds.split.test_fraction = get<double>(doc, "dataset.test_fraction");
    ds.split.stride = get<std::size_t>(doc, "dataset.stride");
    ds.eval_stride = get<std::size_t>(doc, "dataset.eval_stride");
    if (ds.eval_stride < 1) throw ValidationError("dataset.eval_stride must be >= 1");

    auto& m = c.model;
    m.window = get<std::size_t>(doc, "model.window");
    m.horizon = get<std::size_t>(doc, "model.horizon");
    m.channels = ds.synthetic.channels;
    m.latent_dim = get<std::size_t>(doc, "model.latent_dim");
    m.latent_length = get<std::size_t>(doc, "model.latent_length");
    m.hidden = get<std::size_t>(doc, "model.hidden");
    m.seed = get<std::uint64_t>(doc, "model.seed");
    m.validate();
    ds.split.window = m.window;
    ds.split.horizon = m.horizon;
    ds.split.validate();

    auto& t = c.train;
    t.batch_size = get<std::size_t>(doc, "train.batch_size");
    t.epochs = get<std::size_t>(doc, "train.epochs");
    t.lr = get<double>(doc, "train.lr");
    t.lr_halving = get<bool>(doc, "train.lr_halving");
    t.early_stopping = get<bool>(doc, "train.early_stopping");
    t.patience = get<std::size_t>(doc, "train.patience");
    t.lambda_align = get<double>(doc, "train.lambda_align");
    t.views = get<std::size_t>(doc, "train.views");
    t.modes.clear();
    for (const auto& name : get_strings(doc, "train.modes")) {
        const auto mode = augment::parse_mode(name);
        if (std::find(t.modes.begin(), t.modes.end(), mode) != t.modes.end()) {
            throw ValidationError("train.modes lists '" + name + "' twice");
        }
        t.modes.push_back(mode);
    }
    t.temperature = get<double>(doc, "train.temperature");
    t.forecast_on_augmented = get<bool>(doc, "train.forecast_on_augmented");
    t.log_every = get<std::size_t>(doc, "train.log_every");
    t.seed = get<std::uint64_t>(doc, "train.seed");
    t.augment.jitter = get<double>(doc, "augment.jitter");
    t.augment.symmetric_sign = get<bool>(doc, "augment.symmetric_sign");
    if (t.epochs < 1) throw ValidationError("train.epochs must be >= 1");
    t.validate();

    auto& k = c.contamination;
    k.regime = augment::parse_regime(get<std::string>(doc, "augment.regime"));
    k.continuous_mode = augment::parse_mode(get<std::string>(doc, "augment.mode"));
    k.pointwise = augment::PointwiseSpec::with_defaults(
        augment::parse_pointwise_kind(get<std::string>(doc, "augment.pointwise_kind")),
        get<double>(doc, "augment.pointwise_ratio"));
    if (const auto& scale = doc.at("augment").at("pointwise_scale"); !scale.is_null()) {
        k.pointwise.scale = scale.get<double>();
    }
    if (k.regime == augment::Regime::pointwise) k.continuous_mode = augment::Mode::pointwise;
    k.fraction = get<double>(doc, "augment.fraction");
    k.symmetric_sign = t.augment.symmetric_sign;
    k.validate();

    auto& e = c.eval;
    for (const auto& name : get_strings(doc, "eval.conditions")) e.conditions.push_back(eval::parse_condition(name));
    for (const auto& name : get_strings(doc, "eval.train_contaminations")) {
        e.train_contaminations.push_back(eval::parse_contamination(name));
    }
    e.seeds = get<std::vector<std::uint64_t>>(doc, "eval.seeds");
    e.lambdas = get<std::vector<double>>(doc, "eval.lambdas");
    for (double l : e.lambdas) {
        if (!(l >= 0.0)) throw ValidationError("eval.lambdas must be >= 0");
    }
    const auto space = get<std::string>(doc, "eval.metric_space");
    if (space == "auto") {
        e.metric_space = ds.source == "csv" ? eval::MetricSpace::denormalized : eval::MetricSpace::normalized;
    } else {
        e.metric_space = eval::parse_metric_space(space);
    }
    e.threads = get<std::size_t>(doc, "eval.threads");
    if (e.conditions.empty()) throw ValidationError("eval.conditions must not be empty");
    if (e.train_contaminations.empty()) throw ValidationError("eval.train_contaminations must not be empty");
    if (e.seeds.empty()) throw ValidationError("eval.seeds must not be empty");
    return c;
}

std::vector<eval::Variant> RunConfig::variants() const {
    train::TrainConfig base = train;
    base.lambda_align = 0.0;
    return {{"base", base}, {"co", train}};
}

std::vector<eval::Scenario> RunConfig::scenarios() const {
    std::vector<eval::Scenario> out;
    for (const auto& k : eval.train_contaminations) {
        for (const auto& cond : eval.conditions) out.push_back({k, cond});
    }
    return out;
}

Document load_document(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    Document overlay;
    try {
        overlay = Document::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config file " + path.string() + ": " + e.what());
    }
    return merge(overlay);
}

RunConfig load(const std::filesystem::path& path) { return from_document(load_document(path)); }

}  // namespace cotsfa::config
