#include "cotsfa/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "cotsfa/errors.hpp"

namespace cotsfa::augment {
namespace {

using data::WindowPair;

int draw_sign(Rng& rng, bool symmetric) {
    if (!symmetric) return 1;
    return std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
}

void check_start(std::size_t t0, StartRange range, const char* what) {
    if (t0 < range.lo || t0 > range.hi) {
        throw ContractError(std::string(what) + ": start index " + std::to_string(t0) +
                            " outside [" + std::to_string(range.lo) + ", " +
                            std::to_string(range.hi) + "]");
    }
}

// Adds sign * mu_c * a(t - t0) to rows [first, last) of m, where t is the
// absolute position of row r given by offset + r.
void add_curve(Matrix& m, std::size_t offset, std::size_t t0, const CurveParams& params, int sign,
               std::span<const double> mu) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        const std::size_t t = offset + r;
        if (t < t0) continue;
        const double a = anomaly_curve(params, static_cast<double>(t - t0));
        for (std::size_t c = 0; c < m.cols; ++c) m(r, c) += sign * mu[c] * a;
    }
}

AugmentedPair corrupt_continuous(const WindowPair& pair, Mode mode, const AugmentOptions& options,
                                 Rng& rng) {
    const std::size_t L = pair.x.rows;
    const CurveParams params = sample_curve_params(rng, L + pair.y.rows);
    const auto range = mode == Mode::input_only ? input_only_starts(L) : input_output_starts(L);
    const std::size_t t0 = sample_start(rng, range);
    const int sign = draw_sign(rng, options.symmetric_sign);
    return mode == Mode::input_only ? inject_input_only(pair, params, t0, sign)
                                    : inject_input_output(pair, params, t0, sign);
}

}  // namespace

double anomaly_curve(const CurveParams& p, double t) {
    if (!(t >= 0.0)) throw DomainError("anomaly_curve: t must be >= 0, got " + std::to_string(t));
    if (t == 0.0) return 0.0;
    return p.A * t * std::exp(-p.B * std::pow(t, p.C)) / p.Z;
}

std::size_t constraint_grid_end(std::size_t horizon_span) { return std::max<std::size_t>(horizon_span, 30); }

ConstraintCheck check_constraints(const CurveParams& params, std::size_t horizon_span) {
    ConstraintCheck check;
    const std::size_t end = constraint_grid_end(horizon_span);
    for (std::size_t t = 0; t <= end; ++t) {
        const double a = anomaly_curve(params, static_cast<double>(t));
        if (!(a >= 0.0)) check.non_negative = false;
        if (!(a < kPeakLimit)) check.below_peak_limit = false;
    }
    check.below_day30_limit = anomaly_curve(params, 30.0) < kDay30Limit;
    return check;
}

CurveParams sample_curve_params(Rng& rng, std::size_t horizon_span) {
    if (horizon_span < 1) throw ContractError("sample_curve_params: horizon span must be >= 1");
    std::normal_distribution<double> amplitude(kMeanA, kStdA);
    std::normal_distribution<double> exponent(kMeanC, kStdC);
    for (std::size_t attempt = 0; attempt < kMaxSamplingAttempts; ++attempt) {
        CurveParams p{amplitude(rng), kFixedB, exponent(rng), kFixedZ};
        if (check_constraints(p, horizon_span).ok()) return p;
    }
    throw SamplingError("sample_curve_params: no admissible curve after " +
                        std::to_string(kMaxSamplingAttempts) + " attempts");
}

CurveParams jitter_params(const CurveParams& base, Rng& rng, double relative_sd,
                          std::size_t horizon_span) {
    if (relative_sd <= 0.0) return base;
    std::normal_distribution<double> factor(1.0, relative_sd);
    CurveParams p = base;
    p.A *= factor(rng);
    p.C *= factor(rng);
    return check_constraints(p, horizon_span).ok() ? p : base;
}

std::string_view to_string(Mode mode) {
    switch (mode) {
        case Mode::input_only: return "input_only";
        case Mode::input_output: return "input_output";
        case Mode::pointwise: return "pointwise";
    }
    return "?";
}

Mode parse_mode(std::string_view text) {
    if (text == "input_only") return Mode::input_only;
    if (text == "input_output") return Mode::input_output;
    if (text == "pointwise") return Mode::pointwise;
    throw ValidationError("unknown augmentation mode '" + std::string(text) + "'");
}

StartRange input_only_starts(std::size_t window) {
    return {0, static_cast<std::size_t>(std::floor(0.5 * static_cast<double>(window)))};
}

StartRange input_output_starts(std::size_t window) {
    const double L = static_cast<double>(window);
    return {static_cast<std::size_t>(std::floor(0.85 * L)),
            static_cast<std::size_t>(std::floor(0.95 * L))};
}

std::size_t sample_start(Rng& rng, StartRange range) {
    return std::uniform_int_distribution<std::size_t>(range.lo, range.hi)(rng);
}

std::vector<double> sequence_means(const WindowPair& pair) {
    const std::size_t C = pair.x.cols;
    std::vector<double> mu(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t t = 0; t < pair.x.rows; ++t) s += pair.x(t, c);
        for (std::size_t t = 0; t < pair.y.rows; ++t) s += pair.y(t, c);
        mu[c] = s / static_cast<double>(pair.x.rows + pair.y.rows);
    }
    return mu;
}

AugmentedPair inject_input_only(const WindowPair& pair, const CurveParams& params, std::size_t t0,
                                int sign) {
    check_start(t0, input_only_starts(pair.x.rows), "inject_input_only");
    AugmentedPair out{pair.x, pair.y, Mode::input_only, params, t0, sign};
    add_curve(out.x, 0, t0, params, sign, sequence_means(pair));
    return out;
}

AugmentedPair inject_input_output(const WindowPair& pair, const CurveParams& params, std::size_t t0,
                                  int sign) {
    check_start(t0, input_output_starts(pair.x.rows), "inject_input_output");
    AugmentedPair out{pair.x, pair.y, Mode::input_output, params, t0, sign};
    const auto mu = sequence_means(pair);
    add_curve(out.x, 0, t0, params, sign, mu);
    add_curve(out.y, pair.x.rows, t0, params, sign, mu);
    return out;
}

std::string_view to_string(PointwiseKind kind) {
    switch (kind) {
        case PointwiseKind::constant: return "const";
        case PointwiseKind::missing: return "missing";
        case PointwiseKind::gaussian: return "gaussian";
    }
    return "?";
}

PointwiseKind parse_pointwise_kind(std::string_view text) {
    if (text == "const" || text == "constant") return PointwiseKind::constant;
    if (text == "missing") return PointwiseKind::missing;
    if (text == "gaussian") return PointwiseKind::gaussian;
    throw ValidationError("unknown pointwise anomaly kind '" + std::string(text) + "'");
}

double PointwiseSpec::default_scale(PointwiseKind kind) {
    switch (kind) {
        case PointwiseKind::constant: return 0.5;
        case PointwiseKind::gaussian: return 2.0;
        case PointwiseKind::missing: return 1.0;
    }
    return 1.0;
}

PointwiseSpec PointwiseSpec::with_defaults(PointwiseKind kind, double ratio) {
    return {kind, ratio, default_scale(kind)};
}

void PointwiseSpec::validate() const {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw ValidationError("pointwise ratio must lie in (0, 1], got " + std::to_string(ratio));
    }
    if (kind != PointwiseKind::missing && !(scale > 0.0)) {
        throw ValidationError("pointwise scale must be > 0");
    }
}

PointwiseResult inject_pointwise(const Matrix& x, const PointwiseSpec& spec, Rng& rng) {
    spec.validate();
    PointwiseResult out{x, {}};
    const auto count = static_cast<std::size_t>(std::lround(spec.ratio * static_cast<double>(x.rows)));
    std::vector<std::size_t> all(x.rows);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::sample(all.begin(), all.end(), std::back_inserter(out.steps), std::min(count, x.rows), rng);
    std::normal_distribution<double> noise(0.0, spec.scale);
    for (std::size_t t : out.steps) {
        for (std::size_t c = 0; c < x.cols; ++c) {
            switch (spec.kind) {
                case PointwiseKind::constant: out.x(t, c) += spec.scale; break;
                case PointwiseKind::missing: out.x(t, c) = 0.0; break;
                case PointwiseKind::gaussian: out.x(t, c) += noise(rng); break;
            }
        }
    }
    return out;
}

std::vector<AugmentedPair> augment_batch(std::span<const WindowPair> batch, Mode mode,
                                         std::size_t views, const AugmentOptions& options, Rng& rng) {
    if (mode == Mode::pointwise) throw ContractError("augment_batch: only continuous modes apply");
    std::vector<AugmentedPair> out;
    if (batch.empty()) return out;
    out.reserve(views * batch.size());
    const std::size_t L = batch.front().x.rows;
    const std::size_t span = L + batch.front().y.rows;
    const auto range = mode == Mode::input_only ? input_only_starts(L) : input_output_starts(L);
    for (std::size_t a = 0; a < views; ++a) {
        const CurveParams base = sample_curve_params(rng, span);
        for (const auto& pair : batch) {
            const CurveParams p = jitter_params(base, rng, options.jitter, span);
            const std::size_t t0 = sample_start(rng, range);
            const int sign = draw_sign(rng, options.symmetric_sign);
            out.push_back(mode == Mode::input_only ? inject_input_only(pair, p, t0, sign)
                                                   : inject_input_output(pair, p, t0, sign));
        }
    }
    return out;
}

AugmentedPair random_continuous(const WindowPair& pair, Mode mode, const AugmentOptions& options,
                                Rng& rng) {
    if (mode == Mode::pointwise) throw ContractError("random_continuous: mode must be continuous");
    return corrupt_continuous(pair, mode, options, rng);
}

std::string_view to_string(Regime regime) {
    switch (regime) {
        case Regime::none: return "none";
        case Regime::continuous: return "continuous";
        case Regime::pointwise: return "pointwise";
    }
    return "?";
}

Regime parse_regime(std::string_view text) {
    if (text == "none") return Regime::none;
    if (text == "continuous") return Regime::continuous;
    if (text == "pointwise") return Regime::pointwise;
    throw ValidationError("unknown contamination regime '" + std::string(text) + "'");
}

void ContaminationConfig::validate() const {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw ContractError("contamination fraction must lie in [0, 1], got " + std::to_string(fraction));
    }
    if (regime == Regime::continuous && continuous_mode == Mode::pointwise) {
        throw ValidationError("continuous contamination needs mode input_only or input_output");
    }
    if (regime == Regime::pointwise) pointwise.validate();
}

namespace {

void apply_record(WindowPair& pair, ContaminationRecord& record) {
    Rng rng(record.seed);
    if (record.mode == Mode::pointwise) {
        auto result = inject_pointwise(pair.x, *record.pointwise, rng);
        pair.x = std::move(result.x);
        record.steps = std::move(result.steps);
        return;
    }
    auto aug = corrupt_continuous(pair, record.mode, AugmentOptions{0.0, record.symmetric_sign}, rng);
    pair.x = std::move(aug.x);
    pair.y = std::move(aug.y);
    record.params = aug.params;
    record.t0 = aug.t0;
    record.sign = aug.sign;
}

}  // namespace

ContaminationResult contaminate_training_set(std::vector<WindowPair> pairs,
                                             const ContaminationConfig& config, Rng& rng) {
    config.validate();
    ContaminationResult out;
    if (config.regime == Regime::none || pairs.empty()) {
        out.pairs = std::move(pairs);
        return out;
    }
    const auto count = static_cast<std::size_t>(
        std::llround(config.fraction * static_cast<double>(pairs.size())));
    std::vector<std::size_t> all(pairs.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> chosen;
    std::sample(all.begin(), all.end(), std::back_inserter(chosen), count, rng);
    for (std::size_t index : chosen) {
        ContaminationRecord record;
        record.index = index;
        record.origin = pairs[index].origin;
        record.seed = rng();
        record.symmetric_sign = config.symmetric_sign;
        if (config.regime == Regime::pointwise) {
            record.mode = Mode::pointwise;
            record.pointwise = config.pointwise;
        } else {
            record.mode = config.continuous_mode;
        }
        apply_record(pairs[index], record);
        out.manifest.push_back(std::move(record));
    }
    out.pairs = std::move(pairs);
    return out;
}

std::vector<WindowPair> replay_contamination(std::vector<WindowPair> pairs,
                                             std::span<const ContaminationRecord> manifest) {
    for (const auto& entry : manifest) {
        if (entry.index >= pairs.size()) {
            throw DataError("manifest refers to pair " + std::to_string(entry.index) + " of " +
                            std::to_string(pairs.size()));
        }
        if (!(pairs[entry.index].origin == entry.origin)) {
            throw DataError("manifest origin mismatch for pair " + std::to_string(entry.index));
        }
        ContaminationRecord replayed = entry;
        apply_record(pairs[entry.index], replayed);
        if (replayed.params != entry.params || replayed.t0 != entry.t0 ||
            (entry.mode == Mode::pointwise && replayed.steps != entry.steps)) {
            throw DataError("manifest entry for pair " + std::to_string(entry.index) +
                            " does not reproduce from its seed");
        }
    }
    return pairs;
}

std::string manifest_to_json(std::span<const ContaminationRecord> manifest) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& r : manifest) {
        nlohmann::ordered_json e;
        e["index"] = r.index;
        e["origin"] = {{"series_id", r.origin.series_id},
                       {"series_index", r.origin.series_index},
                       {"start", r.origin.start}};
        e["mode"] = std::string(to_string(r.mode));
        e["seed"] = r.seed;
        e["symmetric_sign"] = r.symmetric_sign;
        if (r.params) {
            e["params"] = {{"A", r.params->A}, {"B", r.params->B}, {"C", r.params->C}, {"Z", r.params->Z}};
        }
        if (r.t0) e["t0"] = *r.t0;
        e["sign"] = r.sign;
        if (r.pointwise) {
            e["pointwise"] = {{"kind", std::string(to_string(r.pointwise->kind))},
                              {"ratio", r.pointwise->ratio},
                              {"scale", r.pointwise->scale}};
            e["steps"] = r.steps;
        }
        doc.push_back(std::move(e));
    }
    return doc.dump(2) + "\n";
}

std::vector<ContaminationRecord> manifest_from_json(std::string_view text) {
    std::vector<ContaminationRecord> out;
    try {
        const auto doc = nlohmann::json::parse(text);
        for (const auto& e : doc) {
            ContaminationRecord r;
            r.index = e.at("index").get<std::size_t>();
            const auto& o = e.at("origin");
            r.origin = {o.at("series_id").get<std::string>(), o.at("series_index").get<std::size_t>(),
                        o.at("start").get<std::size_t>()};
            r.mode = parse_mode(e.at("mode").get<std::string>());
            r.seed = e.at("seed").get<std::uint64_t>();
            r.symmetric_sign = e.value("symmetric_sign", false);
            if (e.contains("params")) {
                const auto& p = e["params"];
                r.params = CurveParams{p.at("A").get<double>(), p.at("B").get<double>(),
                                       p.at("C").get<double>(), p.at("Z").get<double>()};
            }
            if (e.contains("t0")) r.t0 = e["t0"].get<std::size_t>();
            r.sign = e.value("sign", 1);
            if (e.contains("pointwise")) {
                const auto& p = e["pointwise"];
                r.pointwise = PointwiseSpec{parse_pointwise_kind(p.at("kind").get<std::string>()),
                                            p.at("ratio").get<double>(), p.at("scale").get<double>()};
                r.steps = e.value("steps", std::vector<std::size_t>{});
            }
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("malformed contamination manifest: ") + ex.what());
    }
    return out;
}

}  // namespace cotsfa::augment
