#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cotsfa/augment.hpp"
#include "cotsfa/errors.hpp"
#include "helpers.hpp"
#include "oracles/curve_oracle.hpp"

using namespace cotsfa;
using namespace cotsfa::augment;

namespace {

data::WindowPair constant_pair(std::size_t L, std::size_t H, std::size_t C, double v) {
    data::WindowPair p;
    p.x = testing::constant_matrix(L, C, v);
    p.y = testing::constant_matrix(H, C, v);
    return p;
}

std::vector<data::WindowPair> random_pairs(std::size_t n, std::size_t L, std::size_t H, std::size_t C,
                                           std::uint64_t seed) {
    Rng rng = make_rng(seed, 99);
    std::vector<data::WindowPair> out;
    for (std::size_t i = 0; i < n; ++i) {
        data::WindowPair p;
        p.x = testing::random_matrix(L, C, rng, 0.5, 2.0);
        p.y = testing::random_matrix(H, C, rng, 0.5, 2.0);
        p.origin = {"s", 0, i};
        out.push_back(std::move(p));
    }
    return out;
}

bool curve_valid(const CurveParams& p, std::size_t span) {
    const std::size_t end = std::max<std::size_t>(span, 30);
    double peak = 0.0;
    for (std::size_t t = 0; t <= end; ++t) {
        const double a = anomaly_curve(p, static_cast<double>(t));
        if (a < 0.0) return false;
        peak = std::max(peak, a);
    }
    return peak < 2.0 && anomaly_curve(p, 30.0) < 0.4;
}

}  // namespace

TEST_SUITE("curve") {
    TEST_CASE("spot values against a 50-digit evaluation") {
        const CurveParams mean;
        CHECK(anomaly_curve(mean, 0.0) == 0.0);
        CHECK(std::abs(anomaly_curve(mean, 1.0) - 0.5577) < 5e-4);
        CHECK(std::abs(anomaly_curve(mean, 30.0) - 0.0627) < 1e-4);
        for (double t : {0.5, 1.0, 2.0, 7.25, 19.0, 30.0, 100.0}) {
            CHECK(std::abs(anomaly_curve(mean, t) - oracle::mean_curve(t)) <= 1e-13);
        }
        CHECK_THROWS_AS(anomaly_curve(mean, -1.0), DomainError);
    }

    TEST_CASE("mean parameters pass, ten-fold amplitude fails the peak limit") {
        const CurveParams mean;
        CHECK(check_constraints(mean, 20).ok());
        CurveParams big = mean;
        big.A *= 10.0;
        const auto c = check_constraints(big, 20);
        CHECK_FALSE(c.below_peak_limit);
        CHECK(c.non_negative);
        CHECK(constraint_grid_end(20) == 30);
        CHECK(constraint_grid_end(64) == 64);
    }

    TEST_CASE("sampled parameters always satisfy the constraints") {
        Rng rng = make_rng(0, 0);
        for (int k = 0; k < 1000; ++k) {
            const auto p = sample_curve_params(rng, 20);
            CHECK(p.B == kFixedB);
            CHECK(p.Z == kFixedZ);
            CHECK(curve_valid(p, 20));
        }
        CHECK_THROWS_AS(sample_curve_params(rng, 0), ContractError);
    }

    TEST_CASE("jitter keeps validity and has the stated spread") {
        const CurveParams mean;
        Rng rng = make_rng(1, 1);
        CHECK(jitter_params(mean, rng, 0.0) == mean);
        std::vector<double> a;
        for (int k = 0; k < 10000; ++k) {
            const auto p = jitter_params(mean, rng);
            if (k < 100) CHECK(curve_valid(p, 30));
            a.push_back(p.A);
        }
        double m = 0.0;
        for (double v : a) m += v;
        m /= static_cast<double>(a.size());
        double ss = 0.0;
        for (double v : a) ss += (v - m) * (v - m);
        const double sd = std::sqrt(ss / static_cast<double>(a.size() - 1));
        CHECK(sd == doctest::Approx(0.05 * mean.A).epsilon(0.10));
    }

    TEST_CASE("mode and kind names round trip") {
        for (Mode m : {Mode::input_only, Mode::input_output, Mode::pointwise}) CHECK(parse_mode(to_string(m)) == m);
        for (auto k : {PointwiseKind::constant, PointwiseKind::missing, PointwiseKind::gaussian})
            CHECK(parse_pointwise_kind(to_string(k)) == k);
        CHECK_THROWS_AS(parse_mode("sideways"), ValidationError);
    }
}

TEST_SUITE("injection") {
    TEST_CASE("input-only fixture on a constant series") {
        const auto pair = constant_pair(16, 4, 1, 1.0);
        const auto out = inject_input_only(pair, CurveParams{}, 4);
        CHECK(out.x(4, 0) == 1.0);
        CHECK(std::abs(out.x(5, 0) - 1.0 - oracle::mean_curve(1.0)) < 1e-12);
        CHECK(out.x(3, 0) == 1.0);
        CHECK(out.y == pair.y);
        CHECK_THROWS_AS(inject_input_only(pair, CurveParams{}, 9), ContractError);
    }

    TEST_CASE("input-output fixture and continuity across the boundary") {
        const auto pair = constant_pair(16, 4, 1, 1.0);
        const CurveParams mean;
        const auto out = inject_input_output(pair, mean, 15);
        CHECK(std::abs(out.y(0, 0) - 1.0 - oracle::mean_curve(1.0)) < 1e-12);
        CHECK(out.x(15, 0) == 1.0);
        for (std::size_t h = 0; h < 4; ++h) {
            CHECK(out.y(h, 0) - 1.0 == doctest::Approx(anomaly_curve(mean, 1.0 + static_cast<double>(h))));
        }
        const auto early = inject_input_output(pair, mean, 13);
        CHECK(early.x(15, 0) - 1.0 == doctest::Approx(anomaly_curve(mean, 2.0)));
        CHECK(early.y(0, 0) - 1.0 == doctest::Approx(anomaly_curve(mean, 3.0)));
        CHECK_THROWS_AS(inject_input_output(pair, mean, 12), ContractError);
    }

    TEST_CASE("zero amplitude is the identity") {
        const auto pair = random_pairs(1, 16, 4, 2, 3)[0];
        CurveParams zero;
        zero.A = 0.0;
        CHECK(inject_input_only(pair, zero, 3).x == pair.x);
        const auto io = inject_input_output(pair, zero, 14);
        CHECK(io.x == pair.x);
        CHECK(io.y == pair.y);
    }

    TEST_CASE("perturbation scales with each channel's own mean") {
        data::WindowPair p = constant_pair(16, 4, 2, 1.0);
        for (std::size_t t = 0; t < 16; ++t) p.x(t, 1) = 3.0;
        for (std::size_t h = 0; h < 4; ++h) p.y(h, 1) = 3.0;
        const auto m = sequence_means(p);
        CHECK(m == std::vector<double>{1.0, 3.0});
        const auto out = inject_input_only(p, CurveParams{}, 0, -1);
        CHECK(out.x(1, 1) - 3.0 == doctest::Approx(-3.0 * anomaly_curve(CurveParams{}, 1.0)));
    }

    TEST_CASE("input-only never touches targets, for random draws") {
        Rng rng = make_rng(7, 7);
        AugmentOptions opt;
        opt.symmetric_sign = true;
        for (const auto& p : random_pairs(200, 16, 4, 2, 7)) {
            CHECK(random_continuous(p, Mode::input_only, opt, rng).y == p.y);
        }
    }

    TEST_CASE("x support shrinks as the start moves later") {
        const auto pair = constant_pair(20, 4, 1, 1.0);
        std::size_t prev = 21;
        for (std::size_t t0 = 17; t0 <= 19; ++t0) {
            const auto out = inject_input_output(pair, CurveParams{}, t0);
            std::size_t touched = 0;
            for (std::size_t t = 0; t < 20; ++t) touched += out.x(t, 0) != 1.0;
            CHECK(touched < prev);
            prev = touched;
        }
    }

    TEST_CASE("start ranges") {
        CHECK(input_only_starts(16).lo == 0);
        CHECK(input_only_starts(16).hi == 8);
        CHECK(input_output_starts(16).lo == 13);
        CHECK(input_output_starts(16).hi == 15);
    }
}

TEST_SUITE("pointwise") {
    TEST_CASE("constant shifts exactly round(ratio L) steps") {
        Rng rng = make_rng(2, 2);
        const Matrix x = testing::constant_matrix(16, 2, 1.0);
        const auto r = inject_pointwise(x, PointwiseSpec::with_defaults(PointwiseKind::constant, 0.1), rng);
        REQUIRE(r.steps.size() == 2);
        std::size_t shifted = 0;
        for (std::size_t t = 0; t < 16; ++t) {
            const bool hit = std::find(r.steps.begin(), r.steps.end(), t) != r.steps.end();
            for (std::size_t c = 0; c < 2; ++c) CHECK(r.x(t, c) == (hit ? 1.5 : 1.0));
            shifted += hit;
        }
        CHECK(shifted == 2);
    }

    TEST_CASE("missing at full ratio zeroes everything, tiny ratio is identity") {
        Rng rng = make_rng(3, 3);
        const Matrix x = testing::random_matrix(16, 3, rng);
        const auto all = inject_pointwise(x, PointwiseSpec::with_defaults(PointwiseKind::missing, 1.0), rng);
        for (double v : all.x.values) CHECK(v == 0.0);
        const auto none = inject_pointwise(x, PointwiseSpec::with_defaults(PointwiseKind::gaussian, 0.01), rng);
        CHECK(none.x == x);
        CHECK(none.steps.empty());
    }

    TEST_CASE("same seed gives identical corruption") {
        const Matrix x = testing::constant_matrix(16, 1, 0.0);
        const auto spec = PointwiseSpec::with_defaults(PointwiseKind::gaussian, 0.3);
        Rng a = make_rng(4, 4), b = make_rng(4, 4);
        const auto ra = inject_pointwise(x, spec, a);
        const auto rb = inject_pointwise(x, spec, b);
        CHECK(ra.x == rb.x);
        CHECK(ra.steps == rb.steps);
        CHECK(ra.steps.size() == 5);
    }

    TEST_CASE("pointwise validation and defaults") {
        CHECK(PointwiseSpec::default_scale(PointwiseKind::constant) == 0.5);
        CHECK(PointwiseSpec::default_scale(PointwiseKind::gaussian) == 2.0);
        PointwiseSpec s;
        s.ratio = 0.0;
        CHECK_THROWS_AS(s.validate(), ValidationError);
        s.ratio = 0.2;
        s.scale = -1;
        CHECK_THROWS_AS(s.validate(), ValidationError);
    }
}

TEST_SUITE("batch views") {
    TEST_CASE("view-major layout with per-view shared base params") {
        const auto pairs = random_pairs(6, 16, 4, 1, 8);
        Rng rng = make_rng(8, 8);
        AugmentOptions opt;
        opt.jitter = 0.0;
        const auto views = augment_batch(pairs, Mode::input_output, 3, opt, rng);
        REQUIRE(views.size() == 18);
        for (std::size_t a = 0; a < 3; ++a) {
            for (std::size_t i = 0; i < 6; ++i) {
                CHECK(views[a * 6 + i].params == views[a * 6].params);
                CHECK(views[a * 6 + i].mode == Mode::input_output);
                CHECK(views[a * 6 + i].t0 >= 13);
                CHECK(views[a * 6 + i].t0 <= 15);
            }
        }
        CHECK_THROWS_AS(augment_batch(pairs, Mode::pointwise, 1, opt, rng), ContractError);
    }
}

TEST_SUITE("contamination") {
    TEST_CASE("exact count over 100 pairs") {
        const auto pairs = random_pairs(100, 16, 4, 1, 10);
        ContaminationConfig cfg;
        cfg.regime = Regime::continuous;
        cfg.continuous_mode = Mode::input_output;
        cfg.fraction = 0.5;
        Rng rng = make_rng(10, 10);
        const auto out = contaminate_training_set(pairs, cfg, rng);
        CHECK(out.manifest.size() == 50);
        std::size_t changed = 0;
        for (std::size_t i = 0; i < pairs.size(); ++i) changed += !(out.pairs[i] == pairs[i]);
        CHECK(changed == 50);
    }

    TEST_CASE("fraction zero is the identity, out of range is rejected") {
        const auto pairs = random_pairs(10, 16, 4, 1, 11);
        ContaminationConfig cfg;
        cfg.regime = Regime::pointwise;
        cfg.fraction = 0.0;
        Rng rng = make_rng(11, 11);
        CHECK(contaminate_training_set(pairs, cfg, rng).pairs == pairs);
        cfg.fraction = 1.5;
        CHECK_THROWS_AS(contaminate_training_set(pairs, cfg, rng), ContractError);
    }

    TEST_CASE("full missing contamination zeroes round(0.3 L) steps everywhere") {
        const auto pairs = random_pairs(20, 16, 4, 2, 12);
        ContaminationConfig cfg;
        cfg.regime = Regime::pointwise;
        cfg.pointwise = PointwiseSpec::with_defaults(PointwiseKind::missing, 0.3);
        cfg.fraction = 1.0;
        Rng rng = make_rng(12, 12);
        const auto out = contaminate_training_set(pairs, cfg, rng);
        for (const auto& p : out.pairs) {
            std::size_t zero_rows = 0;
            for (std::size_t t = 0; t < 16; ++t) zero_rows += p.x(t, 0) == 0.0 && p.x(t, 1) == 0.0;
            CHECK(zero_rows == 5);
        }
    }

    TEST_CASE("manifest replays to identical pairs after a JSON round trip") {
        const auto pairs = random_pairs(40, 16, 4, 2, 13);
        for (Regime regime : {Regime::continuous, Regime::pointwise}) {
            ContaminationConfig cfg;
            cfg.regime = regime;
            cfg.continuous_mode = Mode::input_output;
            cfg.pointwise = PointwiseSpec::with_defaults(PointwiseKind::gaussian, 0.2);
            cfg.symmetric_sign = true;
            cfg.fraction = 0.3;
            Rng rng = make_rng(13, 13);
            const auto out = contaminate_training_set(pairs, cfg, rng);
            const auto manifest = manifest_from_json(manifest_to_json(out.manifest));
            CHECK(manifest.size() == 12);
            CHECK(replay_contamination(pairs, manifest) == out.pairs);
        }
        CHECK_THROWS_AS(manifest_from_json("{not json"), DataError);
    }
}
