#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotsfa/augment.hpp"
#include "cotsfa/dataset.hpp"
#include "cotsfa/model.hpp"
#include "cotsfa/train.hpp"

namespace cotsfa::eval {

struct Metrics {
    double mae = 0.0;
    double mse = 0.0;
    /// Absent when no target entry is strictly positive.
    std::optional<double> smape;
};

/// MAE, MSE and masked SMAPE (0-200 scale, entries with y > 0 only).
Metrics compute_metrics(const Matrix& prediction, const Matrix& target);

/// Pools entries over many windows, so the result equals compute_metrics on
/// their concatenation.
class MetricAccumulator {
public:
    void add(const Matrix& prediction, const Matrix& target);
    Metrics result() const;
    std::size_t entries() const noexcept { return n_; }

private:
    double abs_sum_ = 0.0;
    double sq_sum_ = 0.0;
    double smape_sum_ = 0.0;
    std::size_t n_ = 0;
    std::size_t smape_n_ = 0;
};

/// (co - base) / base * 100; negative means the regularised model is better.
/// Absent when base is not strictly positive.
std::optional<double> delta_improvement(double err_base, double err_cotsfa);

enum class Tier { none, weak, strong };
std::string_view to_string(Tier tier);

struct TTestResult {
    std::size_t n = 0;
    double t = 0.0;
    double p = 1.0;
    Tier tier = Tier::none;
    /// All differences are zero.
    bool degenerate = false;
    /// Differences are constant and non-zero.
    bool infinite_t = false;
};

/// Two-sided paired t-test on a - b. Requires equal lengths >= 2.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `dof`.
double student_t_two_sided_p(double t, double dof);

enum class MetricSpace { normalized, denormalized };
std::string_view to_string(MetricSpace space);
MetricSpace parse_metric_space(std::string_view text);

enum class ConditionKind { clean, input_only, input_output, pointwise };

struct TestCondition {
    ConditionKind kind = ConditionKind::clean;
    augment::PointwiseSpec pointwise;
    /// Fraction of test windows that receive an anomaly.
    double fraction = 1.0;

    /// "clean", "input_only", "input_output" or "pointwise:<kind>:<ratio>".
    std::string name() const;
    void validate() const;
};

/// Inverse of TestCondition::name().
TestCondition parse_condition(std::string_view text);

/// "none", "continuous:<mode>:<fraction>" or "pointwise:<kind>:<ratio>:<fraction>".
std::string contamination_name(const augment::ContaminationConfig& config);
augment::ContaminationConfig parse_contamination(std::string_view text);

struct Scenario {
    augment::ContaminationConfig train_contamination;
    TestCondition test;

    /// "<test condition>" for clean training, else "<test>|train=<contamination>".
    std::string name() const;
};

/// Windows of every series, normalised with per-series train-split statistics.
struct PreparedData {
    std::vector<data::WindowPair> train;
    std::vector<data::WindowPair> val;
    std::vector<data::WindowPair> test;
    std::vector<data::NormStats> stats;
};

/// Train windows use split.stride; val and test windows use eval_stride.
PreparedData prepare_windows(std::span<const data::SeriesFrame> frames, const data::SplitSpec& split,
                             std::size_t eval_stride);

/// Applies a test condition with a seed that depends on (seed, condition) only,
/// so every model variant sees the same anomaly realisation.
std::vector<data::WindowPair> apply_condition(std::span<const data::WindowPair> windows,
                                              const TestCondition& condition, std::uint64_t seed);

/// Metrics of `params` on `windows`, optionally mapped back to data units.
Metrics evaluate(const model::ModelParams& params, std::span<const data::WindowPair> windows,
                 MetricSpace space, std::span<const data::NormStats> stats);

struct Variant {
    std::string name;
    train::TrainConfig train;
};

struct CellResult {
    std::string variant;
    std::string scenario;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    Metrics metrics;
};

struct TrainingRun {
    std::string variant;
    std::string contamination;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    std::size_t epochs_run = 0;
    std::size_t optimizer_steps = 0;
    std::optional<std::size_t> best_epoch;
    double seconds = 0.0;
};

struct Summary {
    std::size_t n = 0;
    double mean = 0.0;
    /// Sample standard deviation; 0 for a single value.
    double std = 0.0;
};

Summary summarize(std::span<const double> values);

struct Aggregate {
    std::string variant;
    std::string scenario;
    std::size_t seeds = 0;
    Summary mae;
    Summary mse;
    std::optional<Summary> smape;
};

struct MetricComparison {
    double base_mean = 0.0;
    double co_mean = 0.0;
    std::optional<double> delta;
    std::optional<TTestResult> t_test;
};

struct Comparison {
    std::string scenario;
    std::string baseline;
    std::string variant;
    MetricComparison mae;
    MetricComparison mse;
    std::optional<MetricComparison> smape;
};

struct ScenarioReport {
    std::string baseline;
    MetricSpace metric_space = MetricSpace::normalized;
    std::vector<CellResult> cells;
    std::vector<TrainingRun> training_runs;

    std::vector<std::string> variants() const;
    std::vector<std::string> scenarios() const;
    /// Mean/std over the successful seeds of every (variant, scenario).
    std::vector<Aggregate> aggregates() const;
    /// Every non-baseline variant against the baseline, paired by seed.
    std::vector<Comparison> comparisons() const;

    std::string to_json() const;
    void write_csv(std::ostream& out) const;
    std::string to_markdown() const;
};

/// Rebuilds a report from the flat CSV (variant,scenario,seed,mae,mse,smape).
/// The baseline is `baseline` when given, else a variant named "base", else
/// the first variant seen.
ScenarioReport read_report_csv(std::istream& in, std::string_view baseline = {});

struct GridSpec {
    model::ModelConfig model;
    /// The first variant is the baseline.
    std::vector<Variant> variants;
    std::vector<Scenario> scenarios;
    std::vector<std::uint64_t> seeds;
    MetricSpace metric_space = MetricSpace::normalized;
    /// 0 picks the hardware concurrency; COTSFA_THREADS caps it either way.
    std::size_t threads = 0;
    std::function<void(const TrainingRun&)> on_run_complete;

    void validate() const;
};

/// Worker count after applying the COTSFA_THREADS cap.
std::size_t resolve_threads(std::size_t requested);

/// Trains one model per (variant, training contamination, seed) and evaluates
/// it on every test condition that shares that training set.
ScenarioReport run_scenario_grid(const PreparedData& data, const GridSpec& spec);

struct SweepSpec {
    model::ModelConfig model;
    train::TrainConfig train;
    std::vector<double> lambdas;
    std::vector<TestCondition> conditions;
    std::vector<std::uint64_t> seeds;
    MetricSpace metric_space = MetricSpace::normalized;
    std::size_t threads = 0;
    std::function<void(const TrainingRun&)> on_run_complete;
};

struct SweepRow {
    double lambda = 0.0;
    std::string condition;
    std::uint64_t seed = 0;
    bool failed = false;
    Metrics metrics;
};

/// One model per (lambda, seed) on clean training data; rows sorted by lambda,
/// then condition order, then seed.
std::vector<SweepRow> lambda_sweep(const PreparedData& data, const SweepSpec& spec);

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

}  // namespace cotsfa::eval
