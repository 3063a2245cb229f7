#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotsfa/matrix.hpp"

namespace cotsfa::data {

struct ChannelStats {
    double mean = 0.0;
    double std = 1.0;
    /// Set when the observed std fell below the floor and was replaced.
    bool degenerate = false;
};

struct NormStats {
    std::vector<ChannelStats> channels;
};

inline constexpr double kStdFloor = 1e-8;

/// One multivariate series: `values` is T_total x C.
struct SeriesFrame {
    std::string series_id;
    std::vector<std::string> channel_names;
    Matrix values;
    /// Strictly increasing ordering keys (integer index, or seconds since
    /// the Unix epoch for ISO-8601 timestamps) and their original text.
    std::vector<std::int64_t> time_keys;
    std::vector<std::string> time_labels;
    std::optional<NormStats> norm_stats;

    std::size_t length() const noexcept { return values.rows; }
    std::size_t channels() const noexcept { return values.cols; }
};

enum class CsvLayout { long_format, wide };

CsvLayout parse_layout(std::string_view name);

/// Long layout: header with columns series_id,timestamp,value and an optional
/// channel column, in any order. Wide layout: timestamp followed by one
/// column per channel; the series id is taken from `series_id`.
std::vector<SeriesFrame> read_csv(std::istream& in, CsvLayout layout,
                                  const std::string& series_id = "series");
std::vector<SeriesFrame> load_csv(const std::filesystem::path& path, CsvLayout layout);

void write_wide_csv(std::ostream& out, const SeriesFrame& frame);
void write_long_csv(std::ostream& out, std::span<const SeriesFrame> frames);

/// Shortest text that parses back to exactly `v`.
std::string format_double(double v);

/// Returns the parsed timestamp key, or nullopt when `text` is neither an
/// integer nor an ISO-8601 date/datetime.
std::optional<std::int64_t> parse_timestamp(std::string_view text);

/// Half-open index range [begin, end).
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
};

/// Per-channel mean and population std over `train` only. Channels whose std
/// is below kStdFloor get the floor and are flagged, with a warning.
NormStats fit_normalizer(const SeriesFrame& frame, IndexRange train);

/// Returns a copy with values standardised and `norm_stats` attached.
SeriesFrame normalize(const SeriesFrame& frame, const NormStats& stats);
SeriesFrame denormalize(const SeriesFrame& frame);
void normalize_in_place(Matrix& m, const NormStats& stats);
void denormalize_in_place(Matrix& m, const NormStats& stats);

struct Origin {
    std::string series_id;
    std::size_t series_index = 0;
    std::size_t start = 0;

    friend bool operator==(const Origin&, const Origin&) = default;
};

/// Adjacent slices of a frame: x = rows [start, start+L), y = [start+L, start+L+H).
struct WindowPair {
    Matrix x;
    Matrix y;
    Origin origin;

    friend bool operator==(const WindowPair&, const WindowPair&) = default;
};

struct SplitSpec {
    double train_fraction = 0.7;
    double val_fraction = 0.1;
    double test_fraction = 0.2;
    std::size_t window = 16;
    std::size_t horizon = 4;
    std::size_t stride = 1;

    void validate() const;
};

struct SplitBounds {
    IndexRange train;
    IndexRange val;
    IndexRange test;
};

/// Chronological train -> val -> test partition of [0, length).
SplitBounds split_bounds(std::size_t length, const SplitSpec& spec);

/// floor((span - L - H) / stride) + 1 when span >= L + H, else 0.
std::size_t window_count(std::size_t span, std::size_t window, std::size_t horizon,
                         std::size_t stride);

std::vector<WindowPair> windows_in(const SeriesFrame& frame, IndexRange range, std::size_t window,
                                   std::size_t horizon, std::size_t stride,
                                   std::size_t series_index = 0);

struct WindowSplits {
    std::vector<WindowPair> train;
    std::vector<WindowPair> val;
    std::vector<WindowPair> test;
};

/// Windows never cross a split boundary. A split shorter than L + H yields
/// no windows and a warning.
WindowSplits make_windows(const SeriesFrame& frame, const SplitSpec& spec,
                          std::size_t series_index = 0);

struct SyntheticOptions {
    std::size_t n_series = 20;
    std::size_t length = 2000;
    std::size_t channels = 1;
    std::uint64_t seed = 0;
    /// Noise standard deviation as a fraction of the sinusoid amplitude.
    double noise_fraction = 0.1;

    void validate() const;
};

/// Generating parameters of one synthetic channel:
/// level + slope * t + amplitude * sin(2 pi t / period + phase) + noise.
struct SyntheticChannel {
    double period = 0.0;
    double phase = 0.0;
    double amplitude = 0.0;
    double slope = 0.0;
    double level = 0.0;
    double noise_sigma = 0.0;
};

struct SyntheticSeries {
    SeriesFrame frame;
    std::vector<SyntheticChannel> channels;
};

std::vector<SyntheticSeries> gen_synthetic_detailed(const SyntheticOptions& options);
std::vector<SeriesFrame> gen_synthetic(std::size_t n_series, std::size_t length,
                                       std::size_t channels, std::uint64_t seed);

}  // namespace cotsfa::data
