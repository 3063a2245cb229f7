#include "cotsfa/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "cotsfa/errors.hpp"
#include "cotsfa/log.hpp"
#include "cotsfa/random.hpp"

namespace cotsfa::data {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

double parse_value(std::string_view text, std::size_t line) {
    if (text.empty()) throw ParseError("missing value", line);
    double v = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw ParseError("malformed number '" + std::string(text) + "'", line);
    }
    if (!std::isfinite(v)) throw ParseError("non-finite value '" + std::string(text) + "'", line);
    return v;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view text) {
    Int v{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
    return v;
}

std::int64_t checked_timestamp(std::string_view text, std::size_t line) {
    auto key = parse_timestamp(text);
    if (!key) throw ParseError("malformed timestamp '" + std::string(text) + "'", line);
    return *key;
}

struct Row {
    std::int64_t key;
    std::string label;
    std::vector<double> values;
    std::vector<bool> present;
};

}  // namespace

CsvLayout parse_layout(std::string_view name) {
    if (name == "long") return CsvLayout::long_format;
    if (name == "wide") return CsvLayout::wide;
    throw ValidationError("unknown CSV layout '" + std::string(name) + "' (expected long|wide)");
}

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
    if (auto i = parse_int<std::int64_t>(text)) return i;
    // YYYY-MM-DD with optional [T ]HH:MM[:SS]
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    auto y = parse_int<int>(text.substr(0, 4));
    auto m = parse_int<unsigned>(text.substr(5, 2));
    auto d = parse_int<unsigned>(text.substr(8, 2));
    if (!y || !m || !d) return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month{*m},
                                          std::chrono::day{*d}};
    if (!ymd.ok()) return std::nullopt;
    std::int64_t seconds = static_cast<std::int64_t>(
                               std::chrono::sys_days(ymd).time_since_epoch().count()) * 86400;
    std::string_view rest = text.substr(10);
    if (rest.empty()) return seconds;
    if (rest.front() != 'T' && rest.front() != ' ') return std::nullopt;
    rest.remove_prefix(1);
    if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
    if (rest.size() != 5 && rest.size() != 8) return std::nullopt;
    auto hh = parse_int<int>(rest.substr(0, 2));
    auto mm = parse_int<int>(rest.substr(3, 2));
    std::optional<int> ss = 0;
    if (rest[2] != ':') return std::nullopt;
    if (rest.size() == 8) {
        if (rest[5] != ':') return std::nullopt;
        ss = parse_int<int>(rest.substr(6, 2));
    }
    if (!hh || !mm || !ss || *hh > 23 || *mm > 59 || *ss > 60) return std::nullopt;
    return seconds + *hh * 3600 + *mm * 60 + *ss;
}

std::vector<SeriesFrame> read_csv(std::istream& in, CsvLayout layout, const std::string& series_id) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        for (auto f : split_fields(line)) header.emplace_back(f);
        break;
    }
    if (header.empty()) throw ParseError("missing header", line_no);

    if (layout == CsvLayout::wide) {
        if (header.size() < 2 || header[0] != "timestamp") {
            throw ParseError("wide layout header must be timestamp,c0,...", line_no);
        }
        SeriesFrame frame;
        frame.series_id = series_id;
        frame.channel_names.assign(header.begin() + 1, header.end());
        const std::size_t channels = frame.channel_names.size();
        std::vector<double> values;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            auto fields = split_fields(line);
            if (fields.size() != channels + 1) {
                throw ParseError("expected " + std::to_string(channels + 1) + " fields, got " +
                                     std::to_string(fields.size()),
                                 line_no);
            }
            const auto key = checked_timestamp(fields[0], line_no);
            if (!frame.time_keys.empty()) {
                if (key == frame.time_keys.back()) {
                    throw DataError("duplicate timestamp '" + std::string(fields[0]) + "' at line " +
                                    std::to_string(line_no));
                }
                if (key < frame.time_keys.back()) {
                    throw DataError("non-monotone timestamp '" + std::string(fields[0]) +
                                    "' at line " + std::to_string(line_no));
                }
            }
            frame.time_keys.push_back(key);
            frame.time_labels.emplace_back(fields[0]);
            for (std::size_t c = 0; c < channels; ++c) values.push_back(parse_value(fields[c + 1], line_no));
        }
        frame.values = Matrix(frame.time_keys.size(), channels, std::move(values));
        return {std::move(frame)};
    }

    auto column = [&](std::string_view name) -> std::optional<std::size_t> {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto id_col = column("series_id");
    const auto ts_col = column("timestamp");
    const auto value_col = column("value");
    const auto channel_col = column("channel");
    if (!id_col || !ts_col || !value_col) {
        throw ParseError("long layout header needs series_id,timestamp,value[,channel]", line_no);
    }

    std::vector<std::string> series_order;
    std::unordered_map<std::string, std::size_t> series_index;
    std::vector<std::string> channel_order;
    std::unordered_map<std::string, std::size_t> channel_index;
    // series -> time key -> row
    std::vector<std::map<std::int64_t, Row>> rows;

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        const std::string sid(fields[*id_col]);
        if (sid.empty()) throw ParseError("empty series_id", line_no);
        const std::string channel = channel_col ? std::string(fields[*channel_col]) : "value";
        if (channel.empty()) throw ParseError("empty channel", line_no);
        const auto key = checked_timestamp(fields[*ts_col], line_no);
        const double value = parse_value(fields[*value_col], line_no);

        auto [sit, new_series] = series_index.try_emplace(sid, series_order.size());
        if (new_series) {
            series_order.push_back(sid);
            rows.emplace_back();
        }
        auto [cit, new_channel] = channel_index.try_emplace(channel, channel_order.size());
        if (new_channel) channel_order.push_back(channel);

        Row& row = rows[sit->second][key];
        if (row.label.empty()) {
            row.key = key;
            row.label = std::string(fields[*ts_col]);
        }
        const std::size_t c = cit->second;
        if (row.values.size() <= c) {
            row.values.resize(c + 1, 0.0);
            row.present.resize(c + 1, false);
        }
        if (row.present[c]) {
            throw DataError("duplicate timestamp '" + std::string(fields[*ts_col]) + "' for series '" +
                            sid + "' channel '" + channel + "' at line " + std::to_string(line_no));
        }
        row.values[c] = value;
        row.present[c] = true;
    }

    const std::size_t channels = channel_order.size();
    std::vector<SeriesFrame> frames;
    for (std::size_t s = 0; s < series_order.size(); ++s) {
        SeriesFrame frame;
        frame.series_id = series_order[s];
        frame.channel_names = channel_order;
        std::vector<double> values;
        for (auto& [key, row] : rows[s]) {
            row.present.resize(channels, false);
            row.values.resize(channels, 0.0);
            for (std::size_t c = 0; c < channels; ++c) {
                if (!row.present[c]) {
                    throw DataError("missing value for series '" + frame.series_id + "' channel '" +
                                    channel_order[c] + "' at timestamp '" + row.label + "'");
                }
            }
            frame.time_keys.push_back(key);
            frame.time_labels.push_back(row.label);
            values.insert(values.end(), row.values.begin(), row.values.end());
        }
        frame.values = Matrix(frame.time_keys.size(), channels, std::move(values));
        frames.push_back(std::move(frame));
    }
    return frames;
}

std::vector<SeriesFrame> load_csv(const std::filesystem::path& path, CsvLayout layout) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return read_csv(in, layout, path.stem().string());
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void write_wide_csv(std::ostream& out, const SeriesFrame& frame) {
    out << "timestamp";
    for (const auto& name : frame.channel_names) out << ',' << name;
    out << '\n';
    for (std::size_t t = 0; t < frame.length(); ++t) {
        out << frame.time_labels[t];
        for (std::size_t c = 0; c < frame.channels(); ++c) out << ',' << format_double(frame.values(t, c));
        out << '\n';
    }
}

void write_long_csv(std::ostream& out, std::span<const SeriesFrame> frames) {
    out << "series_id,timestamp,channel,value\n";
    for (const auto& frame : frames) {
        for (std::size_t t = 0; t < frame.length(); ++t) {
            for (std::size_t c = 0; c < frame.channels(); ++c) {
                out << frame.series_id << ',' << frame.time_labels[t] << ',' << frame.channel_names[c]
                    << ',' << format_double(frame.values(t, c)) << '\n';
            }
        }
    }
}

NormStats fit_normalizer(const SeriesFrame& frame, IndexRange train) {
    if (train.size() == 0 || train.end > frame.length()) {
        throw ContractError("fit_normalizer: training range must be non-empty and inside the frame");
    }
    NormStats stats;
    const double n = static_cast<double>(train.size());
    for (std::size_t c = 0; c < frame.channels(); ++c) {
        double mean = 0.0;
        for (std::size_t t = train.begin; t < train.end; ++t) mean += frame.values(t, c);
        mean /= n;
        double var = 0.0;
        for (std::size_t t = train.begin; t < train.end; ++t) {
            const double d = frame.values(t, c) - mean;
            var += d * d;
        }
        ChannelStats cs{mean, std::sqrt(var / n), false};
        if (!(cs.std >= kStdFloor)) {
            warn("series '" + frame.series_id + "' channel " + std::to_string(c) +
                 " is constant over the training range; std floored to 1e-8");
            cs.std = kStdFloor;
            cs.degenerate = true;
        }
        stats.channels.push_back(cs);
    }
    return stats;
}

void normalize_in_place(Matrix& m, const NormStats& stats) {
    if (stats.channels.size() != m.cols) throw DimensionError("normalize: channel count mismatch");
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            m(r, c) = (m(r, c) - stats.channels[c].mean) / stats.channels[c].std;
        }
    }
}

void denormalize_in_place(Matrix& m, const NormStats& stats) {
    if (stats.channels.size() != m.cols) throw DimensionError("denormalize: channel count mismatch");
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            m(r, c) = m(r, c) * stats.channels[c].std + stats.channels[c].mean;
        }
    }
}

SeriesFrame normalize(const SeriesFrame& frame, const NormStats& stats) {
    SeriesFrame out = frame;
    normalize_in_place(out.values, stats);
    out.norm_stats = stats;
    return out;
}

SeriesFrame denormalize(const SeriesFrame& frame) {
    if (!frame.norm_stats) throw ContractError("denormalize: frame carries no normalization stats");
    SeriesFrame out = frame;
    denormalize_in_place(out.values, *frame.norm_stats);
    out.norm_stats.reset();
    return out;
}

void SplitSpec::validate() const {
    for (double f : {train_fraction, val_fraction, test_fraction}) {
        if (!(f > 0.0 && f < 1.0)) throw ValidationError("split fractions must lie in (0, 1)");
    }
    if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
        throw ValidationError("split fractions must sum to 1");
    }
    if (window < 1 || horizon < 1 || stride < 1) {
        throw ValidationError("window, horizon and stride must be >= 1");
    }
}

SplitBounds split_bounds(std::size_t length, const SplitSpec& spec) {
    spec.validate();
    const double n = static_cast<double>(length);
    const auto train_end = static_cast<std::size_t>(std::floor(spec.train_fraction * n));
    const auto val_end =
        std::min(length, train_end + static_cast<std::size_t>(std::floor(spec.val_fraction * n)));
    return {{0, train_end}, {train_end, val_end}, {val_end, length}};
}

std::size_t window_count(std::size_t span, std::size_t window, std::size_t horizon,
                         std::size_t stride) {
    if (span < window + horizon) return 0;
    return (span - window - horizon) / stride + 1;
}

std::vector<WindowPair> windows_in(const SeriesFrame& frame, IndexRange range, std::size_t window,
                                   std::size_t horizon, std::size_t stride,
                                   std::size_t series_index) {
    std::vector<WindowPair> out;
    const std::size_t count = window_count(range.size(), window, horizon, stride);
    const std::size_t c = frame.channels();
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t start = range.begin + k * stride;
        const auto* base = frame.values.values.data() + start * c;
        WindowPair w;
        w.x = Matrix(window, c, std::vector<double>(base, base + window * c));
        w.y = Matrix(horizon, c, std::vector<double>(base + window * c, base + (window + horizon) * c));
        w.origin = {frame.series_id, series_index, start};
        out.push_back(std::move(w));
    }
    return out;
}

WindowSplits make_windows(const SeriesFrame& frame, const SplitSpec& spec, std::size_t series_index) {
    if (frame.length() < spec.window + spec.horizon) {
        throw ContractError("make_windows: series '" + frame.series_id + "' has " +
                            std::to_string(frame.length()) + " steps, need at least L + H = " +
                            std::to_string(spec.window + spec.horizon));
    }
    const auto bounds = split_bounds(frame.length(), spec);
    WindowSplits out;
    const std::pair<const IndexRange*, std::vector<WindowPair>*> parts[] = {
        {&bounds.train, &out.train}, {&bounds.val, &out.val}, {&bounds.test, &out.test}};
    const char* names[] = {"train", "val", "test"};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& [range, dst] = parts[i];
        if (range->size() < spec.window + spec.horizon) {
            warn(std::string(names[i]) + " split of series '" + frame.series_id + "' has " +
                 std::to_string(range->size()) + " steps, fewer than L + H; no windows");
            continue;
        }
        *dst = windows_in(frame, *range, spec.window, spec.horizon, spec.stride, series_index);
    }
    return out;
}

void SyntheticOptions::validate() const {
    if (n_series == 0 || length == 0 || channels == 0) {
        throw ValidationError("synthetic generator needs positive n_series, length and channels");
    }
    if (!(noise_fraction >= 0.0)) throw ValidationError("noise fraction must be >= 0");
}

std::vector<SyntheticSeries> gen_synthetic_detailed(const SyntheticOptions& options) {
    options.validate();
    std::vector<SyntheticSeries> out;
    for (std::size_t s = 0; s < options.n_series; ++s) {
        Rng rng = make_rng(options.seed, s);
        std::uniform_real_distribution<double> period(8.0, 64.0);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        std::uniform_real_distribution<double> amplitude(0.5, 2.0);
        std::uniform_real_distribution<double> slope(-0.01, 0.01);
        std::uniform_real_distribution<double> level(-1.0, 1.0);
        std::normal_distribution<double> unit(0.0, 1.0);

        SyntheticSeries series;
        auto& frame = series.frame;
        char id[32];
        std::snprintf(id, sizeof id, "series_%03zu", s);
        frame.series_id = id;
        for (std::size_t c = 0; c < options.channels; ++c) {
            frame.channel_names.push_back("c" + std::to_string(c));
            SyntheticChannel ch;
            ch.period = period(rng);
            ch.phase = phase(rng);
            ch.amplitude = amplitude(rng);
            ch.slope = slope(rng);
            ch.level = level(rng);
            ch.noise_sigma = options.noise_fraction * ch.amplitude;
            series.channels.push_back(ch);
        }
        frame.values = Matrix(options.length, options.channels);
        for (std::size_t t = 0; t < options.length; ++t) {
            frame.time_keys.push_back(static_cast<std::int64_t>(t));
            frame.time_labels.push_back(std::to_string(t));
            const double td = static_cast<double>(t);
            for (std::size_t c = 0; c < options.channels; ++c) {
                const auto& ch = series.channels[c];
                double v = ch.level + ch.slope * td +
                           ch.amplitude * std::sin(2.0 * std::numbers::pi * td / ch.period + ch.phase);
                if (ch.noise_sigma > 0.0) v += ch.noise_sigma * unit(rng);
                frame.values(t, c) = v;
            }
        }
        out.push_back(std::move(series));
    }
    return out;
}

std::vector<SeriesFrame> gen_synthetic(std::size_t n_series, std::size_t length, std::size_t channels,
                                       std::uint64_t seed) {
    std::vector<SeriesFrame> frames;
    for (auto& s : gen_synthetic_detailed({n_series, length, channels, seed, 0.1})) {
        frames.push_back(std::move(s.frame));
    }
    return frames;
}

}  // namespace cotsfa::data
