#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cotsfa/errors.hpp"
#include "cotsfa/gradcheck.hpp"
#include "cotsfa/loss.hpp"
#include "cotsfa/ops.hpp"
#include "helpers.hpp"
#include "oracles/similarity_oracle.hpp"

using namespace cotsfa;
using namespace cotsfa::loss;
namespace o = cotsfa::ops;

namespace {

oracle::Field to_field(const Tensor& t) {
    oracle::Field f(t.dim(0), std::vector<std::vector<double>>(t.dim(1), std::vector<double>(t.dim(2))));
    for (std::size_t s = 0; s < t.dim(0); ++s)
        for (std::size_t n = 0; n < t.dim(1); ++n)
            for (std::size_t k = 0; k < t.dim(2); ++k) f[s][n][k] = t[(s * t.dim(1) + n) * t.dim(2) + k];
    return f;
}

SimilarityBatch random_batch(std::size_t B, std::size_t A, std::size_t S, std::size_t H, std::size_t D,
                             std::size_t C, Rng& rng) {
    SimilarityBatch b;
    b.latent_orig = testing::random_tensor({S, B, D}, rng);
    b.latent_aug = testing::random_tensor({S, A * B, D}, rng);
    b.target_orig = testing::random_tensor({H, B, C}, rng);
    b.target_aug = testing::random_tensor({H, A * B, C}, rng);
    b.views = A;
    return b;
}

// Reorders the batch axis of originals and of every view block by `perm`.
Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm, std::size_t views) {
    const std::size_t S = t.dim(0), R = t.dim(1), F = t.dim(2), B = perm.size();
    std::vector<double> out(t.size());
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < views && a * B < R; ++a)
            for (std::size_t i = 0; i < B; ++i)
                for (std::size_t k = 0; k < F; ++k)
                    out[(s * R + a * B + i) * F + k] = t[(s * R + a * B + perm[i]) * F + k];
    return Tensor(t.shape(), std::move(out));
}

}  // namespace

TEST_SUITE("forecast loss") {
    TEST_CASE("fixtures") {
        const Tensor y({2}, {2, 4});
        CHECK(forecast_loss(y, y).item() == 0.0);
        CHECK(forecast_loss(o::add_scalar(y, 1), y).item() == 1.0);
        CHECK(forecast_loss(Tensor({2}, {1, 2}), y).item() == 2.5);
        CHECK_THROWS_AS(forecast_loss(Tensor({3}, {1, 2, 3}), y), DimensionError);
    }
}

TEST_SUITE("similarity") {
    TEST_CASE("single pair gives log 2") {
        SimilarityBatch b;
        b.latent_orig = Tensor({1, 1, 1}, {1});
        b.latent_aug = Tensor({1, 1, 1}, {1});
        b.target_orig = Tensor({1, 1, 1}, {0.3});
        b.target_aug = Tensor({1, 1, 1}, {0.3});
        CHECK(latent_similarity(b, 0, 0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
        CHECK(output_similarity(b, 0, 0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
        // log 2 on both sides, reached through different logits.
        CHECK(std::abs(alignment_loss(b).item()) <= 1e-15);
    }

    TEST_CASE("identical items give log(2B + A - 1)") {
        for (std::size_t B : {1u, 2u, 5u}) {
            for (std::size_t A : {1u, 3u}) {
                const Tensor orig = Tensor::filled({2, B, 3}, 0.4);
                const Tensor aug = Tensor::filled({2, A * B, 3}, 0.4);
                const Tensor sim = sequence_similarity(orig, aug, A, 1.0);
                for (double v : sim.data())
                    CHECK(v == doctest::Approx(std::log(static_cast<double>(2 * B + A - 1))).epsilon(1e-13));
                const Tensor zeros = sequence_similarity(Tensor::zeros({1, B, 2}), Tensor::zeros({1, A * B, 2}), A, 1.0);
                for (double v : zeros.data())
                    CHECK(v == doctest::Approx(std::log(static_cast<double>(2 * B + A - 1))).epsilon(1e-13));
            }
        }
    }

    TEST_CASE("matches the double-loop enumeration") {
        Rng rng = make_rng(1, 1);
        for (std::size_t B : {1u, 2u, 3u}) {
            for (std::size_t A : {1u, 2u}) {
                for (double tau : {1.0, 0.5}) {
                    SimilarityBatch b = random_batch(B, A, 2, 2, 2, 2, rng);
                    b.temperature = tau;
                    const auto z = to_field(b.latent_orig), za = to_field(b.latent_aug);
                    const auto y = to_field(b.target_orig), ya = to_field(b.target_aug);
                    for (std::size_t i = 0; i < B; ++i)
                        for (std::size_t a = 0; a < A; ++a)
                            for (std::size_t t = 0; t < 2; ++t) {
                                CHECK(std::abs(latent_similarity(b, i, a, t) -
                                               oracle::step_similarity(z, za, A, tau, t, i, a)) <= 1e-12);
                                CHECK(std::abs(output_similarity(b, i, a, t) -
                                               oracle::step_similarity(y, ya, A, tau, t, i, a)) <= 1e-12);
                            }
                    CHECK(std::abs(alignment_loss(b).item() - oracle::alignment_loss(z, za, y, ya, A, tau)) <= 1e-12);
                }
            }
        }
    }

    TEST_CASE("similarities never fall below log 2") {
        Rng rng = make_rng(2, 2);
        for (int k = 0; k < 50; ++k) {
            const auto b = random_batch(4, 3, 3, 2, 4, 1, rng);
            const Tensor sim = sequence_similarity(o::scale(b.latent_orig, 5), o::scale(b.latent_aug, 5), 3, 1.0);
            for (double v : sim.data()) CHECK(v >= std::log(2.0) - 1e-12);
            CHECK(alignment_loss(b).item() >= 0.0);
        }
    }

    TEST_CASE("scaling by c with temperature c squared changes nothing") {
        Rng rng = make_rng(3, 3);
        const auto b = random_batch(3, 2, 2, 2, 3, 2, rng);
        for (double c : {2.0, 0.5, 3.0}) {
            const Tensor base = sequence_similarity(b.latent_orig, b.latent_aug, 2, 1.0);
            const Tensor scaled = sequence_similarity(o::scale(b.latent_orig, c), o::scale(b.latent_aug, c), 2, c * c);
            for (std::size_t k = 0; k < base.size(); ++k) CHECK(std::abs(base[k] - scaled[k]) <= 1e-12);
        }
    }

    TEST_CASE("extreme logits stay finite") {
        const Tensor sim = sequence_similarity(Tensor::filled({1, 2, 1}, 40.0), Tensor::filled({1, 2, 1}, 40.0), 1, 1.0);
        for (double v : sim.data()) CHECK(std::isfinite(v));
    }
}

TEST_SUITE("alignment") {
    TEST_CASE("latents equal to targets give exactly zero") {
        Rng rng = make_rng(4, 4);
        SimilarityBatch b = random_batch(4, 3, 2, 2, 2, 2, rng);
        b.target_orig = b.latent_orig;
        b.target_aug = b.latent_aug;
        CHECK(alignment_loss(b).item() == 0.0);
    }

    TEST_CASE("a single perturbed view moves the loss by the similarity shift") {
        Rng rng = make_rng(5, 5);
        SimilarityBatch b = random_batch(2, 1, 1, 1, 2, 2, rng);
        b.target_orig = b.latent_orig;
        b.target_aug = b.latent_aug;
        const double before0 = latent_similarity(b, 0, 0, 0);
        const double before1 = latent_similarity(b, 1, 0, 0);
        std::vector<double> v = b.latent_aug.to_vector();
        v[0] += 0.7;
        b.latent_aug = Tensor(b.latent_aug.shape(), v);
        const double d0 = latent_similarity(b, 0, 0, 0) - before0;
        const double d1 = latent_similarity(b, 1, 0, 0) - before1;
        CHECK(d0 != 0.0);
        CHECK(alignment_loss(b).item() == doctest::Approx((std::abs(d0) + std::abs(d1)) / 2).epsilon(1e-13));
    }

    TEST_CASE("consistent batch permutation leaves the loss unchanged") {
        Rng rng = make_rng(6, 6);
        for (int k = 0; k < 20; ++k) {
            const std::size_t B = 5, A = 2;
            SimilarityBatch b = random_batch(B, A, 3, 2, 2, 3, rng);
            std::vector<std::size_t> perm(B);
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            SimilarityBatch p = b;
            p.latent_orig = permute_rows(b.latent_orig, perm, 1);
            p.latent_aug = permute_rows(b.latent_aug, perm, A);
            p.target_orig = permute_rows(b.target_orig, perm, 1);
            p.target_aug = permute_rows(b.target_aug, perm, A);
            CHECK(std::abs(alignment_loss(p).item() - alignment_loss(b).item()) <= 1e-12);
        }
    }

    TEST_CASE("latent and target time axes are averaged separately") {
        Rng rng = make_rng(7, 7);
        const auto b = random_batch(3, 2, 5, 2, 2, 1, rng);
        CHECK(std::isfinite(alignment_loss(b).item()));
        SimilarityBatch bad = b;
        bad.target_aug = testing::random_tensor({2, 5, 1}, rng);
        CHECK_THROWS_AS(alignment_loss(bad), DimensionError);
        bad = b;
        bad.temperature = 0.0;
        CHECK_THROWS_AS(alignment_loss(bad), ContractError);
    }

    TEST_CASE("gradients through both branches match finite differences") {
        Rng rng = make_rng(8, 8);
        const auto b = random_batch(2, 2, 2, 2, 2, 2, rng);
        const double lambda = 0.3;
        auto objective = [&](const SimilarityBatch& sb) {
            return total_loss(forecast_loss(sb.target_orig, o::scale(sb.latent_orig, 0.5)), alignment_loss(sb), lambda);
        };
        CHECK(grad_check([&](const Tensor& z) { auto s = b; s.latent_orig = z; return objective(s); }, b.latent_orig,
                         1e-6).passed(1e-4));
        CHECK(grad_check([&](const Tensor& z) { auto s = b; s.latent_aug = z; return objective(s); }, b.latent_aug,
                         1e-6).passed(1e-4));
        CHECK(grad_check([&](const Tensor& y) { auto s = b; s.target_aug = y; return objective(s); }, b.target_aug,
                         1e-6).passed(1e-4));
    }
}

TEST_SUITE("total loss") {
    TEST_CASE("fixtures") {
        const Tensor f = Tensor::scalar(1.0), a = Tensor::scalar(2.0);
        CHECK(total_loss(f, a, 0.0).item() == 1.0);
        CHECK(total_loss(f, a, 0.1).item() == doctest::Approx(1.2).epsilon(1e-15));
        CHECK(total_loss(f, Tensor::scalar(0.0), 1.0).item() == 1.0);
        CHECK_THROWS_AS(total_loss(f, a, -1.0), ContractError);
    }
}
