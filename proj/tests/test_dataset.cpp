#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cotsfa/dataset.hpp"
#include "cotsfa/errors.hpp"
#include "helpers.hpp"

using namespace cotsfa;
using namespace cotsfa::data;

namespace {

SeriesFrame ramp_frame(std::size_t length, std::size_t channels = 1) {
    SeriesFrame f;
    f.series_id = "s";
    for (std::size_t c = 0; c < channels; ++c) f.channel_names.push_back("c" + std::to_string(c));
    f.values = Matrix(length, channels);
    for (std::size_t t = 0; t < length; ++t) {
        f.time_keys.push_back(static_cast<std::int64_t>(t));
        f.time_labels.push_back(std::to_string(t));
        for (std::size_t c = 0; c < channels; ++c) f.values(t, c) = static_cast<double>(t * 10 + c);
    }
    return f;
}

std::vector<SeriesFrame> read(const std::string& text, CsvLayout layout) {
    std::istringstream in(text);
    return read_csv(in, layout);
}

}  // namespace

TEST_SUITE("csv") {
    TEST_CASE("long layout, one series") {
        const auto frames = read("series_id,timestamp,value\na,0,1.5\na,1,2.5\na,2,3.5\n", CsvLayout::long_format);
        REQUIRE(frames.size() == 1);
        CHECK(frames[0].length() == 3);
        CHECK(frames[0].values(2, 0) == 3.5);
    }

    TEST_CASE("long layout sorts by timestamp and splits series") {
        const auto frames =
            read("timestamp,value,series_id\n2,3,a\n0,1,a\n1,2,a\n0,9,b\n", CsvLayout::long_format);
        REQUIRE(frames.size() == 2);
        CHECK(frames[0].values.values == std::vector<double>{1, 2, 3});
        CHECK(frames[1].length() == 1);
    }

    TEST_CASE("wide layout with two channels") {
        const auto frames =
            read("timestamp,c0,c1\n2024-01-01,1,2\n2024-01-02,3,4\n2024-01-03,5,6\n2024-01-04,7,8\n2024-01-05,9,10\n",
                 CsvLayout::wide);
        REQUIRE(frames.size() == 1);
        CHECK(frames[0].length() == 5);
        CHECK(frames[0].channels() == 2);
        CHECK(frames[0].values(4, 1) == 10);
    }

    TEST_CASE("duplicate timestamp names the timestamp") {
        try {
            read("series_id,timestamp,value\na,2024-01-01,1\na,2024-01-01,2\n", CsvLayout::long_format);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("2024-01-01") != std::string::npos);
        }
    }

    TEST_CASE("malformed row carries its line number") {
        try {
            read("timestamp,c0\n0,1\n1,abc\n", CsvLayout::wide);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 3);
        }
        CHECK_THROWS_AS(read("timestamp,c0\n1,1\n0,2\n", CsvLayout::wide), DataError);
        CHECK_THROWS_AS(read("timestamp,c0\n0,\n", CsvLayout::wide), ParseError);
    }

    TEST_CASE("wide round trip preserves every value bit for bit") {
        Rng rng = make_rng(4, 4);
        SeriesFrame f = ramp_frame(7, 3);
        f.values = testing::random_matrix(7, 3, rng, -1e6, 1e6);
        std::ostringstream out;
        write_wide_csv(out, f);
        std::istringstream in(out.str());
        const auto back = read_csv(in, CsvLayout::wide, "s");
        REQUIRE(back.size() == 1);
        CHECK(back[0].values == f.values);
    }

    TEST_CASE("timestamps") {
        CHECK(parse_timestamp("17") == 17);
        CHECK(parse_timestamp("1970-01-02") == 86400);
        CHECK(parse_timestamp("1970-01-01T00:01:00") == 60);
        CHECK_FALSE(parse_timestamp("yesterday").has_value());
    }
}

TEST_SUITE("normalizer") {
    TEST_CASE("population statistics over the training range") {
        SeriesFrame f = ramp_frame(3);
        f.values = Matrix(3, 1, {1, 2, 3});
        const auto stats = fit_normalizer(f, {0, 3});
        CHECK(stats.channels[0].mean == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(stats.channels[0].std == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
        CHECK_FALSE(stats.channels[0].degenerate);
    }

    TEST_CASE("constant channel is floored and flagged") {
        SeriesFrame f = ramp_frame(3);
        f.values = Matrix(3, 1, {5, 5, 5});
        const auto stats = fit_normalizer(f, {0, 3});
        CHECK(stats.channels[0].std == kStdFloor);
        CHECK(stats.channels[0].degenerate);
    }

    TEST_CASE("already standardised data gives mean 0, std 1") {
        const auto frames = gen_synthetic(1, 500, 2, 3);
        const auto stats = fit_normalizer(frames[0], {0, 500});
        const auto z = normalize(frames[0], stats);
        const auto again = fit_normalizer(z, {0, 500});
        for (const auto& ch : again.channels) {
            CHECK(std::abs(ch.mean) < 1e-12);
            CHECK(std::abs(ch.std - 1.0) < 1e-12);
        }
    }

    TEST_CASE("normalize then denormalize is the identity") {
        Rng rng = make_rng(5, 5);
        for (int k = 0; k < 50; ++k) {
            SeriesFrame f = ramp_frame(20, 2);
            f.values = testing::random_matrix(20, 2, rng, -1e3, 1e3);
            const auto stats = fit_normalizer(f, {0, 14});
            const auto back = denormalize(normalize(f, stats));
            for (std::size_t i = 0; i < f.values.values.size(); ++i) {
                CHECK(std::abs(back.values.values[i] - f.values.values[i]) <= 1e-10 * std::max(1.0, std::abs(f.values.values[i])));
            }
        }
    }

    TEST_CASE("test-region values never affect the statistics") {
        SeriesFrame f = gen_synthetic(1, 200, 2, 9)[0];
        SplitSpec spec;
        const auto bounds = split_bounds(f.length(), spec);
        const auto before = fit_normalizer(f, bounds.train);
        for (std::size_t t = bounds.test.begin; t < bounds.test.end; ++t) {
            f.values(t, 0) = 1e9;
            f.values(t, 1) = -7;
        }
        const auto after = fit_normalizer(f, bounds.train);
        for (std::size_t c = 0; c < 2; ++c) {
            CHECK(after.channels[c].mean == before.channels[c].mean);
            CHECK(after.channels[c].std == before.channels[c].std);
        }
    }

    TEST_CASE("empty training range is a contract violation") {
        CHECK_THROWS_AS(fit_normalizer(ramp_frame(5), {2, 2}), ContractError);
    }
}

TEST_SUITE("windows") {
    TEST_CASE("count formula") {
        CHECK(window_count(10, 4, 2, 1) == 5);
        CHECK(window_count(6, 4, 2, 1) == 1);
        CHECK(window_count(5, 4, 2, 1) == 0);
        CHECK(window_count(100, 16, 4, 8) == 11);
        const auto w = windows_in(ramp_frame(10), {0, 10}, 4, 2, 1);
        REQUIRE(w.size() == 5);
        CHECK(w[4].origin.start == 4);
        CHECK(w[4].y.values == std::vector<double>{80, 90});
    }

    TEST_CASE("count formula holds for random shapes") {
        Rng rng = make_rng(6, 6);
        std::uniform_int_distribution<std::size_t> d(1, 12);
        for (int k = 0; k < 200; ++k) {
            const std::size_t L = d(rng), H = d(rng), s = d(rng), span = d(rng) * 5;
            const auto w = windows_in(ramp_frame(span), {0, span}, L, H, s);
            const std::size_t expect = span >= L + H ? (span - L - H) / s + 1 : 0;
            CHECK(w.size() == expect);
        }
    }

    TEST_CASE("windows never cross a split boundary") {
        const SeriesFrame f = ramp_frame(300);
        SplitSpec spec;
        spec.window = 16;
        spec.horizon = 4;
        const auto bounds = split_bounds(300, spec);
        const auto splits = make_windows(f, spec);
        CHECK(splits.train.size() == window_count(bounds.train.size(), 16, 4, 1));
        CHECK(splits.val.size() == window_count(bounds.val.size(), 16, 4, 1));
        CHECK(splits.test.size() == window_count(bounds.test.size(), 16, 4, 1));
        for (const auto& w : splits.train) CHECK(w.origin.start + 20 <= bounds.train.end);
        for (const auto& w : splits.val) {
            CHECK(w.origin.start >= bounds.val.begin);
            CHECK(w.origin.start + 20 <= bounds.val.end);
        }
        for (const auto& w : splits.test) CHECK(w.origin.start >= bounds.test.begin);
    }

    TEST_CASE("short split yields no windows, short series is rejected") {
        SplitSpec spec;
        spec.window = 4;
        spec.horizon = 2;
        const auto splits = make_windows(ramp_frame(20), spec);
        CHECK(splits.val.empty());
        CHECK_FALSE(splits.train.empty());
        CHECK_THROWS_AS(make_windows(ramp_frame(5), spec), ContractError);
    }

    TEST_CASE("stride L+H tiles the split exactly") {
        const SeriesFrame f = ramp_frame(60, 2);
        const auto w = windows_in(f, {0, 60}, 7, 3, 10);
        REQUIRE(w.size() == 6);
        std::vector<double> rebuilt;
        for (const auto& p : w) {
            rebuilt.insert(rebuilt.end(), p.x.values.begin(), p.x.values.end());
            rebuilt.insert(rebuilt.end(), p.y.values.begin(), p.y.values.end());
        }
        CHECK(rebuilt == f.values.values);
    }

    TEST_CASE("split validation") {
        SplitSpec spec;
        spec.train_fraction = 0.8;
        CHECK_THROWS_AS(spec.validate(), ValidationError);
        spec = {};
        spec.stride = 0;
        CHECK_THROWS_AS(spec.validate(), ValidationError);
    }
}

TEST_SUITE("synthetic") {
    TEST_CASE("same seed is bit identical, different seed differs") {
        const auto a = gen_synthetic(3, 100, 2, 11);
        const auto b = gen_synthetic(3, 100, 2, 11);
        const auto c = gen_synthetic(3, 100, 2, 12);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(a[i].values == b[i].values);
            CHECK(a[i].values != c[i].values);
        }
        CHECK_THROWS_AS(gen_synthetic(0, 100, 1, 0), ValidationError);
    }

    TEST_CASE("generator parameters lie in their ranges") {
        SyntheticOptions opt;
        opt.n_series = 10;
        opt.length = 10;
        opt.channels = 3;
        for (const auto& s : gen_synthetic_detailed(opt)) {
            for (const auto& ch : s.channels) {
                CHECK(ch.period >= 8.0);
                CHECK(ch.period <= 64.0);
                CHECK(std::abs(ch.slope) <= 0.01);
                CHECK(ch.noise_sigma == doctest::Approx(0.1 * ch.amplitude));
            }
        }
    }

    TEST_CASE("noise-free series is an exact sinusoid plus trend") {
        SyntheticOptions opt;
        opt.n_series = 4;
        opt.length = 400;
        opt.channels = 2;
        opt.noise_fraction = 0.0;
        opt.seed = 21;
        for (const auto& s : gen_synthetic_detailed(opt)) {
            for (std::size_t c = 0; c < opt.channels; ++c) {
                const double period = s.channels[c].period;
                Eigen::MatrixXd X(opt.length, 4);
                Eigen::VectorXd y(opt.length);
                for (std::size_t t = 0; t < opt.length; ++t) {
                    const double w = 2.0 * std::numbers::pi * static_cast<double>(t) / period;
                    X.row(static_cast<Eigen::Index>(t)) << 1.0, static_cast<double>(t), std::sin(w), std::cos(w);
                    y(static_cast<Eigen::Index>(t)) = s.frame.values(t, c);
                }
                const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
                const double residual = (X * beta - y).cwiseAbs().maxCoeff();
                CHECK(residual < 1e-9);
                CHECK(beta(1) == doctest::Approx(s.channels[c].slope).epsilon(1e-8));
                CHECK(std::hypot(beta(2), beta(3)) == doctest::Approx(s.channels[c].amplitude).epsilon(1e-8));
            }
        }
    }
}
