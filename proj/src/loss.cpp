#include "cotsfa/loss.hpp"

#include <vector>

#include "cotsfa/errors.hpp"
#include "cotsfa/ops.hpp"

namespace cotsfa::loss {
namespace {

// Added to the self-similarity entries so they vanish under exp.
constexpr double kMasked = -1e300;

void check_field(const Tensor& orig, const Tensor& aug, std::size_t views, const char* what) {
    if (orig.rank() != 3 || aug.rank() != 3) {
        throw DimensionError(std::string(what) + ": expected rank-3 [steps, rows, features] tensors");
    }
    if (views == 0) throw ContractError(std::string(what) + ": at least one augmented view required");
    if (aug.dim(0) != orig.dim(0) || aug.dim(2) != orig.dim(2) || aug.dim(1) != views * orig.dim(1)) {
        throw DimensionError(std::string(what) + ": originals " + shape_string(orig.shape()) +
                             " incompatible with augmented " + shape_string(aug.shape()) + " for " +
                             std::to_string(views) + " views");
    }
    if (orig.dim(1) == 0 || orig.dim(0) == 0) throw DimensionError(std::string(what) + ": empty batch");
}

Tensor self_mask(std::size_t b) {
    std::vector<double> m(b * b, 0.0);
    for (std::size_t i = 0; i < b; ++i) m[i * b + i] = kMasked;
    return Tensor({b, b}, std::move(m));
}

}  // namespace

void SimilarityBatch::validate() const {
    if (!(temperature > 0.0)) throw ContractError("similarity temperature must be > 0");
    check_field(latent_orig, latent_aug, views, "latent similarity");
    check_field(target_orig, target_aug, views, "output similarity");
    if (latent_orig.dim(1) != target_orig.dim(1)) {
        throw DimensionError("latent and target batches differ in size");
    }
}

Tensor forecast_loss(const Tensor& prediction, const Tensor& target) {
    if (prediction.shape() != target.shape()) {
        throw DimensionError("forecast_loss: prediction " + shape_string(prediction.shape()) +
                             " vs target " + shape_string(target.shape()));
    }
    return ops::mean(ops::square(ops::sub(prediction, target)));
}

Tensor step_similarity(const Tensor& orig, const Tensor& aug, std::size_t views, double temperature,
                       std::size_t step) {
    check_field(orig, aug, views, "similarity");
    if (!(temperature > 0.0)) throw ContractError("similarity temperature must be > 0");
    if (step >= orig.dim(0)) throw DimensionError("similarity: step out of range");
    using namespace ops;
    const std::size_t B = orig.dim(1), F = orig.dim(2);
    const double inv_tau = 1.0 / temperature;

    const Tensor o = reshape(slice(orig, 0, step, step + 1), {B, F});
    const Tensor v_all = reshape(slice(aug, 0, step, step + 1), {views * B, F});
    std::vector<Tensor> v;
    std::vector<Tensor> own;  // <o_i, v_i^k> as [B, 1] columns
    for (std::size_t k = 0; k < views; ++k) {
        v.push_back(slice(v_all, 0, k * B, (k + 1) * B));
        own.push_back(reshape(sum(mul(o, v.back()), 1), {B, 1}));
    }
    const Tensor own_all = concat(own, 1);
    const Tensor among_orig = add(matmul(o, transpose(o)), self_mask(B));

    std::vector<Tensor> per_view;
    for (std::size_t a = 0; a < views; ++a) {
        const Tensor cross = matmul(o, transpose(v[a]));
        const Tensor parts[] = {cross, among_orig, own_all};
        const Tensor log_denominator = logsumexp(scale(concat(parts, 1), inv_tau), 1);
        const Tensor log_numerator = reshape(scale(own[a], inv_tau), {B});
        per_view.push_back(reshape(sub(log_denominator, log_numerator), {B, 1}));
    }
    return concat(per_view, 1);
}

Tensor sequence_similarity(const Tensor& orig, const Tensor& aug, std::size_t views, double temperature) {
    check_field(orig, aug, views, "similarity");
    const std::size_t steps = orig.dim(0);
    Tensor acc = step_similarity(orig, aug, views, temperature, 0);
    for (std::size_t t = 1; t < steps; ++t) {
        acc = ops::add(acc, step_similarity(orig, aug, views, temperature, t));
    }
    return ops::scale(acc, 1.0 / static_cast<double>(steps));
}

double latent_similarity(const SimilarityBatch& batch, std::size_t i, std::size_t a, std::size_t t) {
    batch.validate();
    if (i >= batch.batch_size() || a >= batch.views) throw DimensionError("latent_similarity: index out of range");
    const Tensor s = step_similarity(batch.latent_orig.detach(), batch.latent_aug.detach(), batch.views,
                                     batch.temperature, t);
    return s[i * batch.views + a];
}

double output_similarity(const SimilarityBatch& batch, std::size_t i, std::size_t a, std::size_t t) {
    batch.validate();
    if (i >= batch.batch_size() || a >= batch.views) throw DimensionError("output_similarity: index out of range");
    const Tensor s = step_similarity(batch.target_orig.detach(), batch.target_aug.detach(), batch.views,
                                     batch.temperature, t);
    return s[i * batch.views + a];
}

Tensor alignment_loss(const SimilarityBatch& batch) {
    batch.validate();
    const Tensor latent = sequence_similarity(batch.latent_orig, batch.latent_aug, batch.views, batch.temperature);
    const Tensor output = sequence_similarity(batch.target_orig, batch.target_aug, batch.views, batch.temperature);
    return ops::mean(ops::abs(ops::sub(latent, output)));
}

Tensor total_loss(const Tensor& forecast, const Tensor& align, double lambda) {
    if (!(lambda >= 0.0)) throw ContractError("alignment weight must be >= 0");
    return ops::add(forecast, ops::scale(align, lambda));
}

}  // namespace cotsfa::loss
