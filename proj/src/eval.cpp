#include "cotsfa/eval.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/students_t.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cotsfa/errors.hpp"
#include "cotsfa/random.hpp"

namespace cotsfa::eval {
namespace {

using data::WindowPair;
using json = nlohmann::ordered_json;

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        parts.emplace_back(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

double parse_number(const std::string& text, std::string_view what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || text.empty()) {
        throw ValidationError("invalid " + std::string(what) + " '" + text + "'");
    }
    return v;
}

// FNV-1a, used to turn names into RNG stream tags.
std::uint64_t name_tag(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

json metrics_json(const Metrics& m) {
    json j;
    j["mae"] = m.mae;
    j["mse"] = m.mse;
    j["smape"] = m.smape ? json(*m.smape) : json(nullptr);
    return j;
}

json summary_json(const Summary& s) { return {{"n", s.n}, {"mean", s.mean}, {"std", s.std}}; }

json comparison_json(const MetricComparison& c) {
    json j;
    j["base_mean"] = c.base_mean;
    j["co_mean"] = c.co_mean;
    j["delta_percent"] = c.delta ? json(*c.delta) : json(nullptr);
    if (c.t_test) {
        const auto& t = *c.t_test;
        j["t_test"] = {{"n", t.n},
                       {"t", std::isfinite(t.t) ? json(t.t) : json(t.t > 0 ? "inf" : "-inf")},
                       {"p", t.p},
                       {"tier", std::string(to_string(t.tier))},
                       {"degenerate", t.degenerate},
                       {"infinite_t", t.infinite_t}};
    } else {
        j["t_test"] = nullptr;
    }
    return j;
}

MetricComparison compare(std::span<const double> base, std::span<const double> co) {
    MetricComparison c;
    c.base_mean = summarize(base).mean;
    c.co_mean = summarize(co).mean;
    c.delta = delta_improvement(c.base_mean, c.co_mean);
    if (base.size() >= 2) c.t_test = paired_t_test(co, base);
    return c;
}

std::string format_optional(const std::optional<double>& v, int digits) {
    return v ? fixed(*v, digits) : std::string("n/a");
}

std::string tier_mark(const std::optional<TTestResult>& t) {
    if (!t) return "";
    switch (t->tier) {
        case Tier::strong: return " ✓✓";
        case Tier::weak: return " ✓";
        case Tier::none: return "";
    }
    return "";
}

}  // namespace

Metrics compute_metrics(const Matrix& prediction, const Matrix& target) {
    MetricAccumulator acc;
    acc.add(prediction, target);
    return acc.result();
}

void MetricAccumulator::add(const Matrix& prediction, const Matrix& target) {
    if (prediction.rows != target.rows || prediction.cols != target.cols) {
        throw DimensionError("compute_metrics: prediction is " + std::to_string(prediction.rows) + "x" +
                             std::to_string(prediction.cols) + ", target is " + std::to_string(target.rows) +
                             "x" + std::to_string(target.cols));
    }
    for (std::size_t k = 0; k < target.values.size(); ++k) {
        const double p = prediction.values[k];
        const double y = target.values[k];
        const double d = p - y;
        abs_sum_ += std::abs(d);
        sq_sum_ += d * d;
        if (y > 0.0) {
            smape_sum_ += 2.0 * std::abs(d) / (std::abs(p) + std::abs(y));
            ++smape_n_;
        }
    }
    n_ += target.values.size();
}

Metrics MetricAccumulator::result() const {
    Metrics m;
    if (n_ == 0) return m;
    m.mae = abs_sum_ / static_cast<double>(n_);
    m.mse = sq_sum_ / static_cast<double>(n_);
    if (smape_n_ > 0) m.smape = 100.0 * smape_sum_ / static_cast<double>(smape_n_);
    return m;
}

std::optional<double> delta_improvement(double err_base, double err_cotsfa) {
    if (!(err_base > 0.0) || !std::isfinite(err_base)) return std::nullopt;
    return (err_cotsfa - err_base) / err_base * 100.0;
}

std::string_view to_string(Tier tier) {
    switch (tier) {
        case Tier::none: return "none";
        case Tier::weak: return "weak";
        case Tier::strong: return "strong";
    }
    return "?";
}

double student_t_two_sided_p(double t, double dof) {
    if (!(dof > 0.0)) throw DomainError("student_t_two_sided_p: dof must be > 0");
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(t)) return 0.0;
    const boost::math::students_t dist(dof);
    return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("paired_t_test: samples differ in length");
    if (a.size() < 2) throw ContractError("paired_t_test: need at least 2 pairs");
    TTestResult r;
    r.n = a.size();
    const double n = static_cast<double>(r.n);
    std::vector<double> d(r.n);
    for (std::size_t i = 0; i < r.n; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
        r.degenerate = true;
        return r;
    }
    if (sd == 0.0) {
        r.infinite_t = true;
        r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p = 0.0;
        r.tier = Tier::strong;
        return r;
    }
    r.t = mean / (sd / std::sqrt(n));
    r.p = student_t_two_sided_p(r.t, n - 1.0);
    r.tier = r.p < 0.01 ? Tier::strong : r.p < 0.05 ? Tier::weak : Tier::none;
    return r;
}

std::string_view to_string(MetricSpace space) {
    return space == MetricSpace::normalized ? "normalized" : "denormalized";
}

MetricSpace parse_metric_space(std::string_view text) {
    if (text == "normalized") return MetricSpace::normalized;
    if (text == "denormalized") return MetricSpace::denormalized;
    throw ValidationError("unknown metric space '" + std::string(text) + "' (normalized|denormalized)");
}

std::string TestCondition::name() const {
    std::string base;
    switch (kind) {
        case ConditionKind::clean: return "clean";
        case ConditionKind::input_only: base = "input_only"; break;
        case ConditionKind::input_output: base = "input_output"; break;
        case ConditionKind::pointwise:
            base = "pointwise:" + std::string(augment::to_string(pointwise.kind)) + ":" +
                   data::format_double(pointwise.ratio);
            if (pointwise.scale != augment::PointwiseSpec::default_scale(pointwise.kind)) {
                base += ":scale=" + data::format_double(pointwise.scale);
            }
            break;
    }
    if (fraction != 1.0) base += "@" + data::format_double(fraction);
    return base;
}

void TestCondition::validate() const {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("test anomaly fraction must lie in (0, 1]");
    if (kind == ConditionKind::pointwise) pointwise.validate();
}

TestCondition parse_condition(std::string_view text) {
    TestCondition c;
    std::string body(text);
    if (const auto at = body.find('@'); at != std::string::npos) {
        c.fraction = parse_number(body.substr(at + 1), "test anomaly fraction");
        body.resize(at);
    }
    const auto parts = split(body, ':');
    if (parts[0] == "clean" && parts.size() == 1) {
        c.kind = ConditionKind::clean;
    } else if (parts[0] == "input_only" && parts.size() == 1) {
        c.kind = ConditionKind::input_only;
    } else if (parts[0] == "input_output" && parts.size() == 1) {
        c.kind = ConditionKind::input_output;
    } else if (parts[0] == "pointwise" && (parts.size() == 3 || parts.size() == 4)) {
        c.kind = ConditionKind::pointwise;
        c.pointwise = augment::PointwiseSpec::with_defaults(augment::parse_pointwise_kind(parts[1]),
                                                            parse_number(parts[2], "pointwise ratio"));
        if (parts.size() == 4) {
            if (parts[3].rfind("scale=", 0) != 0) {
                throw ValidationError("invalid test condition '" + std::string(text) + "'");
            }
            c.pointwise.scale = parse_number(parts[3].substr(6), "pointwise scale");
        }
    } else {
        throw ValidationError("invalid test condition '" + std::string(text) +
                              "' (clean|input_only|input_output|pointwise:<kind>:<ratio>)");
    }
    c.validate();
    return c;
}

std::string contamination_name(const augment::ContaminationConfig& config) {
    switch (config.regime) {
        case augment::Regime::none: return "none";
        case augment::Regime::continuous:
            return "continuous:" + std::string(augment::to_string(config.continuous_mode)) + ":" +
                   data::format_double(config.fraction);
        case augment::Regime::pointwise:
            return "pointwise:" + std::string(augment::to_string(config.pointwise.kind)) + ":" +
                   data::format_double(config.pointwise.ratio) + ":" + data::format_double(config.fraction);
    }
    return "?";
}

augment::ContaminationConfig parse_contamination(std::string_view text) {
    augment::ContaminationConfig c;
    const auto parts = split(text, ':');
    if (parts[0] == "none" && parts.size() == 1) return c;
    if (parts[0] == "continuous" && parts.size() == 3) {
        c.regime = augment::Regime::continuous;
        c.continuous_mode = augment::parse_mode(parts[1]);
        c.fraction = parse_number(parts[2], "contamination fraction");
    } else if (parts[0] == "pointwise" && parts.size() == 4) {
        c.regime = augment::Regime::pointwise;
        c.pointwise = augment::PointwiseSpec::with_defaults(augment::parse_pointwise_kind(parts[1]),
                                                            parse_number(parts[2], "pointwise ratio"));
        c.continuous_mode = augment::Mode::pointwise;
        c.fraction = parse_number(parts[3], "contamination fraction");
    } else {
        throw ValidationError("invalid training contamination '" + std::string(text) +
                              "' (none|continuous:<mode>:<fraction>|pointwise:<kind>:<ratio>:<fraction>)");
    }
    c.validate();
    return c;
}

std::string Scenario::name() const {
    if (train_contamination.regime == augment::Regime::none) return test.name();
    return test.name() + "|train=" + contamination_name(train_contamination);
}

PreparedData prepare_windows(std::span<const data::SeriesFrame> frames, const data::SplitSpec& split,
                             std::size_t eval_stride) {
    split.validate();
    if (eval_stride < 1) throw ValidationError("eval_stride must be >= 1");
    PreparedData out;
    for (std::size_t s = 0; s < frames.size(); ++s) {
        const auto bounds = data::split_bounds(frames[s].length(), split);
        const auto stats = data::fit_normalizer(frames[s], bounds.train);
        const auto frame = data::normalize(frames[s], stats);
        auto append = [&](std::vector<WindowPair>& dst, data::IndexRange range, std::size_t stride) {
            auto w = data::windows_in(frame, range, split.window, split.horizon, stride, s);
            std::move(w.begin(), w.end(), std::back_inserter(dst));
        };
        append(out.train, bounds.train, split.stride);
        append(out.val, bounds.val, eval_stride);
        append(out.test, bounds.test, eval_stride);
        out.stats.push_back(stats);
    }
    return out;
}

std::vector<WindowPair> apply_condition(std::span<const WindowPair> windows, const TestCondition& condition,
                                        std::uint64_t seed) {
    condition.validate();
    std::vector<WindowPair> out(windows.begin(), windows.end());
    if (condition.kind == ConditionKind::clean || out.empty()) return out;
    Rng rng = make_rng(seed, name_tag(condition.name()));
    std::vector<std::size_t> chosen(out.size());
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    if (condition.fraction < 1.0) {
        const auto k = static_cast<std::size_t>(std::llround(condition.fraction * static_cast<double>(out.size())));
        std::vector<std::size_t> picked;
        std::sample(chosen.begin(), chosen.end(), std::back_inserter(picked), k, rng);
        chosen = std::move(picked);
    }
    for (std::size_t i : chosen) {
        switch (condition.kind) {
            case ConditionKind::input_only:
            case ConditionKind::input_output: {
                const auto mode = condition.kind == ConditionKind::input_only ? augment::Mode::input_only
                                                                              : augment::Mode::input_output;
                auto aug = augment::random_continuous(out[i], mode, augment::AugmentOptions{0.0, false}, rng);
                out[i].x = std::move(aug.x);
                out[i].y = std::move(aug.y);
                break;
            }
            case ConditionKind::pointwise:
                out[i].x = augment::inject_pointwise(out[i].x, condition.pointwise, rng).x;
                break;
            case ConditionKind::clean: break;
        }
    }
    return out;
}

Metrics evaluate(const model::ModelParams& params, std::span<const WindowPair> windows, MetricSpace space,
                 std::span<const data::NormStats> stats) {
    if (windows.empty()) throw ContractError("evaluate: no test windows");
    std::vector<Matrix> xs;
    xs.reserve(windows.size());
    for (const auto& w : windows) xs.push_back(w.x);
    auto preds = model::predict(params, xs);
    MetricAccumulator acc;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (space == MetricSpace::denormalized) {
            const auto idx = windows[i].origin.series_index;
            if (idx >= stats.size()) throw ContractError("evaluate: missing normalisation stats");
            Matrix target = windows[i].y;
            data::denormalize_in_place(preds[i], stats[idx]);
            data::denormalize_in_place(target, stats[idx]);
            acc.add(preds[i], target);
        } else {
            acc.add(preds[i], windows[i].y);
        }
    }
    return acc.result();
}

Summary summarize(std::span<const double> values) {
    Summary s;
    s.n = values.size();
    if (s.n == 0) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return s;
}

std::vector<std::string> ScenarioReport::variants() const {
    std::vector<std::string> out;
    for (const auto& c : cells) {
        if (std::find(out.begin(), out.end(), c.variant) == out.end()) out.push_back(c.variant);
    }
    return out;
}

std::vector<std::string> ScenarioReport::scenarios() const {
    std::vector<std::string> out;
    for (const auto& c : cells) {
        if (std::find(out.begin(), out.end(), c.scenario) == out.end()) out.push_back(c.scenario);
    }
    return out;
}

std::vector<Aggregate> ScenarioReport::aggregates() const {
    std::vector<Aggregate> out;
    for (const auto& v : variants()) {
        for (const auto& s : scenarios()) {
            std::vector<double> mae, mse, smape;
            bool smape_complete = true;
            for (const auto& c : cells) {
                if (c.variant != v || c.scenario != s || c.failed) continue;
                mae.push_back(c.metrics.mae);
                mse.push_back(c.metrics.mse);
                if (c.metrics.smape) {
                    smape.push_back(*c.metrics.smape);
                } else {
                    smape_complete = false;
                }
            }
            if (mae.empty()) continue;
            Aggregate a{v, s, mae.size(), summarize(mae), summarize(mse), std::nullopt};
            if (smape_complete) a.smape = summarize(smape);
            out.push_back(std::move(a));
        }
    }
    return out;
}

std::vector<Comparison> ScenarioReport::comparisons() const {
    std::vector<Comparison> out;
    for (const auto& v : variants()) {
        if (v == baseline) continue;
        for (const auto& s : scenarios()) {
            std::map<std::uint64_t, const CellResult*> base_by_seed;
            for (const auto& c : cells) {
                if (c.variant == baseline && c.scenario == s && !c.failed) base_by_seed[c.seed] = &c;
            }
            std::vector<double> bm, cm, bs, cs;
            bool smape_complete = true;
            for (const auto& c : cells) {
                if (c.variant != v || c.scenario != s || c.failed) continue;
                const auto it = base_by_seed.find(c.seed);
                if (it == base_by_seed.end()) continue;
                bm.push_back(it->second->metrics.mae);
                cm.push_back(c.metrics.mae);
                if (c.metrics.smape && it->second->metrics.smape) {
                    bs.push_back(*it->second->metrics.smape);
                    cs.push_back(*c.metrics.smape);
                } else {
                    smape_complete = false;
                }
            }
            if (bm.empty()) continue;
            std::vector<double> bmse, cmse;
            for (const auto& c : cells) {
                if (c.variant != v || c.scenario != s || c.failed) continue;
                const auto it = base_by_seed.find(c.seed);
                if (it == base_by_seed.end()) continue;
                bmse.push_back(it->second->metrics.mse);
                cmse.push_back(c.metrics.mse);
            }
            Comparison cmp{s, baseline, v, compare(bm, cm), compare(bmse, cmse), std::nullopt};
            if (smape_complete) cmp.smape = compare(bs, cs);
            out.push_back(std::move(cmp));
        }
    }
    return out;
}

std::string ScenarioReport::to_json() const {
    json j;
    j["baseline"] = baseline;
    j["metric_space"] = std::string(to_string(metric_space));
    json cells_j = json::array();
    for (const auto& c : cells) {
        json e;
        e["variant"] = c.variant;
        e["scenario"] = c.scenario;
        e["seed"] = c.seed;
        e["failed"] = c.failed;
        if (c.failed) {
            e["error"] = c.error;
        } else {
            e["metrics"] = metrics_json(c.metrics);
        }
        cells_j.push_back(std::move(e));
    }
    j["cells"] = std::move(cells_j);
    json agg = json::array();
    for (const auto& a : aggregates()) {
        json e;
        e["variant"] = a.variant;
        e["scenario"] = a.scenario;
        e["seeds"] = a.seeds;
        e["mae"] = summary_json(a.mae);
        e["mse"] = summary_json(a.mse);
        e["smape"] = a.smape ? summary_json(*a.smape) : json(nullptr);
        agg.push_back(std::move(e));
    }
    j["aggregates"] = std::move(agg);
    json cmp = json::array();
    for (const auto& c : comparisons()) {
        json e;
        e["scenario"] = c.scenario;
        e["baseline"] = c.baseline;
        e["variant"] = c.variant;
        e["mae"] = comparison_json(c.mae);
        e["mse"] = comparison_json(c.mse);
        e["smape"] = c.smape ? comparison_json(*c.smape) : json(nullptr);
        cmp.push_back(std::move(e));
    }
    j["comparisons"] = std::move(cmp);
    json runs = json::array();
    for (const auto& r : training_runs) {
        json e;
        e["variant"] = r.variant;
        e["contamination"] = r.contamination;
        e["seed"] = r.seed;
        e["failed"] = r.failed;
        if (r.failed) e["error"] = r.error;
        e["epochs_run"] = r.epochs_run;
        e["optimizer_steps"] = r.optimizer_steps;
        e["best_epoch"] = r.best_epoch ? json(*r.best_epoch + 1) : json(nullptr);
        runs.push_back(std::move(e));
    }
    j["training_runs"] = std::move(runs);
    return j.dump(2) + "\n";
}

void ScenarioReport::write_csv(std::ostream& out) const {
    out << "variant,scenario,seed,mae,mse,smape\n";
    for (const auto& c : cells) {
        out << c.variant << ',' << c.scenario << ',' << c.seed << ',';
        if (c.failed) {
            out << ",,\n";
            continue;
        }
        out << data::format_double(c.metrics.mae) << ',' << data::format_double(c.metrics.mse) << ','
            << (c.metrics.smape ? data::format_double(*c.metrics.smape) : std::string()) << '\n';
    }
}

std::string ScenarioReport::to_markdown() const {
    std::ostringstream os;
    const auto cmps = comparisons();
    const auto aggs = aggregates();
    os << "Metrics in " << to_string(metric_space) << " units, mean over seeds. "
       << "Delta = (co - base) / base * 100, negative is better. "
       << "✓✓ p < 0.01, ✓ p < 0.05 (paired t-test over seeds).\n\n";
    if (cmps.empty()) {
        os << "| Variant | Scenario | Seeds | MAE | MSE | SMAPE |\n|---|---|---|---|---|---|\n";
        for (const auto& a : aggs) {
            os << "| " << a.variant << " | " << a.scenario << " | " << a.seeds << " | " << fixed(a.mae.mean, 4)
               << " | " << fixed(a.mse.mean, 4) << " | "
               << (a.smape ? fixed(a.smape->mean, 2) : std::string("n/a")) << " |\n";
        }
        return os.str();
    }
    std::string current;
    for (const auto& c : cmps) {
        if (c.variant != current) {
            if (!current.empty()) os << "\n";
            current = c.variant;
            os << "### " << c.baseline << " vs " << c.variant << "\n\n"
               << "| Scenario | MAE Base | MAE +Co | MAE Δ% | MSE Base | MSE +Co | MSE Δ% | SMAPE Base | "
                  "SMAPE +Co | SMAPE Δ% |\n"
               << "|---|---|---|---|---|---|---|---|---|---|\n";
        }
        os << "| " << c.scenario << " | " << fixed(c.mae.base_mean, 4) << " | " << fixed(c.mae.co_mean, 4) << " | "
           << format_optional(c.mae.delta, 2) << tier_mark(c.mae.t_test) << " | " << fixed(c.mse.base_mean, 4)
           << " | " << fixed(c.mse.co_mean, 4) << " | " << format_optional(c.mse.delta, 2)
           << tier_mark(c.mse.t_test) << " | ";
        if (c.smape) {
            os << fixed(c.smape->base_mean, 2) << " | " << fixed(c.smape->co_mean, 2) << " | "
               << format_optional(c.smape->delta, 2) << tier_mark(c.smape->t_test) << " |\n";
        } else {
            os << "n/a | n/a | n/a |\n";
        }
    }
    return os.str();
}

ScenarioReport read_report_csv(std::istream& in, std::string_view baseline) {
    ScenarioReport report;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("report CSV is empty", 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "variant,scenario,seed,mae,mse,smape") {
        throw ParseError("unexpected report CSV header '" + line + "'", line_no);
    }
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 6) throw ParseError("expected 6 fields", line_no);
        CellResult c;
        c.variant = f[0];
        c.scenario = f[1];
        try {
            std::size_t used = 0;
            c.seed = std::stoull(f[2], &used);
            if (used != f[2].size()) throw std::invalid_argument("seed");
            if (f[3].empty() && f[4].empty()) {
                c.failed = true;
                c.error = "failed";
            } else {
                c.metrics.mae = parse_number(f[3], "mae");
                c.metrics.mse = parse_number(f[4], "mse");
                if (!f[5].empty()) c.metrics.smape = parse_number(f[5], "smape");
            }
        } catch (const std::exception& e) {
            throw ParseError(std::string("malformed report row: ") + e.what(), line_no);
        }
        report.cells.push_back(std::move(c));
    }
    const auto vs = report.variants();
    if (!baseline.empty()) {
        report.baseline = std::string(baseline);
    } else if (std::find(vs.begin(), vs.end(), "base") != vs.end()) {
        report.baseline = "base";
    } else if (!vs.empty()) {
        report.baseline = vs.front();
    }
    return report;
}

void GridSpec::validate() const {
    model.validate();
    if (variants.empty()) throw ValidationError("grid needs at least one variant");
    if (scenarios.empty()) throw ValidationError("grid needs at least one scenario");
    if (seeds.empty()) throw ValidationError("grid needs at least one seed");
    for (std::size_t i = 0; i < variants.size(); ++i) {
        variants[i].train.validate();
        for (std::size_t j = 0; j < i; ++j) {
            if (variants[j].name == variants[i].name) {
                throw ValidationError("duplicate variant name '" + variants[i].name + "'");
            }
        }
    }
    for (const auto& s : scenarios) {
        s.test.validate();
        s.train_contamination.validate();
    }
}

std::size_t resolve_threads(std::size_t requested) {
    std::size_t n = requested > 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("COTSFA_THREADS"); env && *env) {
        char* end = nullptr;
        const unsigned long long cap = std::strtoull(env, &end, 10);
        if (end && *end == '\0' && cap > 0) n = std::min<std::size_t>(n, cap);
    }
    return n;
}

ScenarioReport run_scenario_grid(const PreparedData& data, const GridSpec& spec) {
    spec.validate();
    if (data.train.empty() || data.test.empty()) throw ContractError("run_scenario_grid: no train or test windows");

    // One training job per (variant, contamination, seed); scenarios that share
    // a training set reuse its model.
    struct Job {
        std::size_t variant = 0;
        augment::ContaminationConfig contamination;
        std::string contamination_name;
        std::uint64_t seed = 0;
        std::vector<std::size_t> cells;
    };
    std::vector<Job> jobs;
    ScenarioReport report;
    report.baseline = spec.variants.front().name;
    report.metric_space = spec.metric_space;
    std::vector<std::size_t> cell_scenario;
    for (std::size_t v = 0; v < spec.variants.size(); ++v) {
        for (std::size_t s = 0; s < spec.scenarios.size(); ++s) {
            for (auto seed : spec.seeds) {
                const auto cname = contamination_name(spec.scenarios[s].train_contamination);
                auto it = std::find_if(jobs.begin(), jobs.end(), [&](const Job& j) {
                    return j.variant == v && j.seed == seed && j.contamination_name == cname;
                });
                if (it == jobs.end()) {
                    jobs.push_back({v, spec.scenarios[s].train_contamination, cname, seed, {}});
                    it = std::prev(jobs.end());
                }
                it->cells.push_back(report.cells.size());
                cell_scenario.push_back(s);
                report.cells.push_back({spec.variants[v].name, spec.scenarios[s].name(), seed, false, {}, {}});
            }
        }
    }
    report.training_runs.resize(jobs.size());

    std::mutex callback_mutex;
    auto run_job = [&](std::size_t j) {
        const Job& job = jobs[j];
        TrainingRun& run = report.training_runs[j];
        run.variant = spec.variants[job.variant].name;
        run.contamination = job.contamination_name;
        run.seed = job.seed;
        const auto start = std::chrono::steady_clock::now();
        try {
            std::vector<WindowPair> train_windows = data.train;
            if (job.contamination.regime != augment::Regime::none) {
                Rng rng = make_rng(job.seed, name_tag("train:" + job.contamination_name));
                train_windows =
                    augment::contaminate_training_set(std::move(train_windows), job.contamination, rng).pairs;
            }
            model::ModelConfig mc = spec.model;
            mc.seed = job.seed;
            train::TrainConfig tc = spec.variants[job.variant].train;
            tc.seed = job.seed;
            const auto result = train::train_model(train_windows, data.val, mc, tc);
            run.epochs_run = result.epochs_run;
            run.optimizer_steps = result.optimizer_steps;
            run.best_epoch = result.best_epoch;
            for (std::size_t cell : job.cells) {
                const auto& condition = spec.scenarios[cell_scenario[cell]].test;
                const auto test = apply_condition(data.test, condition, job.seed);
                report.cells[cell].metrics = evaluate(result.params, test, spec.metric_space, data.stats);
            }
        } catch (const TrainingAborted& e) {
            run.failed = true;
            run.error = e.what();
            for (std::size_t cell : job.cells) {
                report.cells[cell].failed = true;
                report.cells[cell].error = e.what();
            }
        }
        run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (spec.on_run_complete) {
            std::lock_guard lock(callback_mutex);
            spec.on_run_complete(run);
        }
    };

    const std::size_t workers = std::min(resolve_threads(spec.threads), jobs.size());
    if (workers <= 1) {
        for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
        return report;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t j = next++; j < jobs.size(); j = next++) {
                try {
                    run_job(j);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return report;
}

std::vector<SweepRow> lambda_sweep(const PreparedData& data, const SweepSpec& spec) {
    if (spec.lambdas.empty()) throw ValidationError("lambda sweep needs at least one lambda");
    if (spec.conditions.empty()) throw ValidationError("lambda sweep needs at least one condition");
    std::vector<double> lambdas = spec.lambdas;
    for (double l : lambdas) {
        if (!(l >= 0.0)) throw ValidationError("lambda values must be >= 0");
    }
    std::sort(lambdas.begin(), lambdas.end());
    if (std::adjacent_find(lambdas.begin(), lambdas.end()) != lambdas.end()) {
        throw ValidationError("lambda values must be distinct");
    }

    GridSpec grid;
    grid.model = spec.model;
    grid.seeds = spec.seeds;
    grid.metric_space = spec.metric_space;
    grid.threads = spec.threads;
    grid.on_run_complete = spec.on_run_complete;
    for (double l : lambdas) {
        train::TrainConfig tc = spec.train;
        tc.lambda_align = l;
        grid.variants.push_back({"lambda=" + data::format_double(l), tc});
    }
    for (const auto& c : spec.conditions) grid.scenarios.push_back({augment::ContaminationConfig{}, c});
    const auto report = run_scenario_grid(data, grid);

    std::vector<SweepRow> rows;
    rows.reserve(report.cells.size());
    std::size_t k = 0;
    for (double l : lambdas) {
        for (const auto& c : spec.conditions) {
            for (auto seed : spec.seeds) {
                const auto& cell = report.cells[k++];
                rows.push_back({l, c.name(), seed, cell.failed, cell.metrics});
            }
        }
    }
    return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
    out << "lambda,condition,seed,mae,mse,smape\n";
    for (const auto& r : rows) {
        out << data::format_double(r.lambda) << ',' << r.condition << ',' << r.seed << ',';
        if (r.failed) {
            out << ",,\n";
            continue;
        }
        out << data::format_double(r.metrics.mae) << ',' << data::format_double(r.metrics.mse) << ','
            << (r.metrics.smape ? data::format_double(*r.metrics.smape) : std::string()) << '\n';
    }
}

}  // namespace cotsfa::eval
