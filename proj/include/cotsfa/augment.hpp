#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotsfa/dataset.hpp"
#include "cotsfa/matrix.hpp"
#include "cotsfa/random.hpp"

namespace cotsfa::augment {

/// a(t) = A * t * exp(-B * t^C) / Z
struct CurveParams {
    double A = 74120.0;
    double B = 0.385;
    double C = 0.806;
    double Z = 90409.0;

    friend bool operator==(const CurveParams&, const CurveParams&) = default;
};

inline constexpr double kFixedB = 0.385;
inline constexpr double kFixedZ = 90409.0;
inline constexpr double kMeanA = 74120.0;
inline constexpr double kStdA = 20000.0;
inline constexpr double kMeanC = 0.806;
inline constexpr double kStdC = 0.2;
inline constexpr double kPeakLimit = 2.0;
inline constexpr double kDay30Limit = 0.4;
inline constexpr std::size_t kMaxSamplingAttempts = 1000;

double anomaly_curve(const CurveParams& params, double t);

/// Upper end of the integer grid the curve constraints are checked on:
/// max(horizon_span, 30).
std::size_t constraint_grid_end(std::size_t horizon_span);

struct ConstraintCheck {
    bool non_negative = true;
    bool below_peak_limit = true;
    bool below_day30_limit = true;

    bool ok() const noexcept { return non_negative && below_peak_limit && below_day30_limit; }
};

ConstraintCheck check_constraints(const CurveParams& params, std::size_t horizon_span);

/// Draws A ~ N(74120, 20000^2), C ~ N(0.806, 0.2^2) with B and Z fixed,
/// rejecting draws that violate the curve constraints.
/// Throws SamplingError after kMaxSamplingAttempts rejections.
CurveParams sample_curve_params(Rng& rng, std::size_t horizon_span);

/// Scales A and C by independent N(1, relative_sd^2) factors; falls back to
/// `base` when the result violates a constraint.
CurveParams jitter_params(const CurveParams& base, Rng& rng, double relative_sd = 0.05,
                          std::size_t horizon_span = 30);

enum class Mode { input_only, input_output, pointwise };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

struct AugmentedPair {
    Matrix x;
    Matrix y;
    Mode mode = Mode::input_only;
    CurveParams params;
    std::size_t t0 = 0;
    int sign = 1;
};

/// Inclusive range of admissible anomaly start indices.
struct StartRange {
    std::size_t lo = 0;
    std::size_t hi = 0;
};

/// [0, floor(0.5 L)]
StartRange input_only_starts(std::size_t window);
/// [floor(0.85 L), floor(0.95 L)]
StartRange input_output_starts(std::size_t window);
std::size_t sample_start(Rng& rng, StartRange range);

/// Per-channel mean over the concatenated input and target values.
std::vector<double> sequence_means(const data::WindowPair& pair);

/// x'[t] = x[t] + sign * mu_c * a(t - t0) for t in [t0, L); y unchanged.
AugmentedPair inject_input_only(const data::WindowPair& pair, const CurveParams& params,
                                std::size_t t0, int sign = 1);

/// As input-only on x, and y'[h] = y[h] + sign * mu_c * a(L + h - t0).
AugmentedPair inject_input_output(const data::WindowPair& pair, const CurveParams& params,
                                  std::size_t t0, int sign = 1);

enum class PointwiseKind { constant, missing, gaussian };

std::string_view to_string(PointwiseKind kind);
PointwiseKind parse_pointwise_kind(std::string_view text);

struct PointwiseSpec {
    PointwiseKind kind = PointwiseKind::constant;
    double ratio = 0.1;
    double scale = 0.5;

    /// 0.5 for constant, 2.0 for gaussian, unused (1.0) for missing.
    static double default_scale(PointwiseKind kind);
    static PointwiseSpec with_defaults(PointwiseKind kind, double ratio);
    void validate() const;

    friend bool operator==(const PointwiseSpec&, const PointwiseSpec&) = default;
};

struct PointwiseResult {
    Matrix x;
    /// Sorted time steps that were corrupted.
    std::vector<std::size_t> steps;
};

/// Corrupts round(ratio * L) distinct time steps (all channels):
/// constant adds +scale, missing sets 0, gaussian adds N(0, scale^2).
PointwiseResult inject_pointwise(const Matrix& x, const PointwiseSpec& spec, Rng& rng);

struct AugmentOptions {
    /// Relative std of the per-sample multiplicative jitter of A and C.
    double jitter = 0.05;
    /// Draw the anomaly sign uniformly from {-1, +1} instead of always +1.
    bool symmetric_sign = false;
};

/// Training-time views for one mode. For each view index a, one base
/// CurveParams is drawn for the batch; every sample jitters it and draws its
/// own start index. Result is ordered view-major: element a * B + i is view
/// a of sample i.
std::vector<AugmentedPair> augment_batch(std::span<const data::WindowPair> batch, Mode mode,
                                         std::size_t views, const AugmentOptions& options,
                                         Rng& rng);

/// Applies one random continuous anomaly (fresh params, start and sign).
AugmentedPair random_continuous(const data::WindowPair& pair, Mode mode,
                                const AugmentOptions& options, Rng& rng);

enum class Regime { none, continuous, pointwise };

std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view text);

struct ContaminationConfig {
    Regime regime = Regime::none;
    Mode continuous_mode = Mode::input_only;
    PointwiseSpec pointwise;
    double fraction = 0.0;
    bool symmetric_sign = false;

    void validate() const;
};

/// Replayable description of one corrupted pair.
struct ContaminationRecord {
    std::size_t index = 0;
    data::Origin origin;
    Mode mode = Mode::input_only;
    std::uint64_t seed = 0;
    bool symmetric_sign = false;
    std::optional<CurveParams> params;
    std::optional<std::size_t> t0;
    int sign = 1;
    std::optional<PointwiseSpec> pointwise;
    std::vector<std::size_t> steps;
};

struct ContaminationResult {
    std::vector<data::WindowPair> pairs;
    std::vector<ContaminationRecord> manifest;
};

/// Replaces exactly round(fraction * n) uniformly chosen pairs by corrupted
/// versions. Each corruption draws from its own seed, recorded in the manifest.
ContaminationResult contaminate_training_set(std::vector<data::WindowPair> pairs,
                                             const ContaminationConfig& config, Rng& rng);

/// Re-applies a manifest to the clean pairs it was produced from.
std::vector<data::WindowPair> replay_contamination(std::vector<data::WindowPair> pairs,
                                                   std::span<const ContaminationRecord> manifest);

std::string manifest_to_json(std::span<const ContaminationRecord> manifest);
std::vector<ContaminationRecord> manifest_from_json(std::string_view text);

}  // namespace cotsfa::augment
