#pragma once

#include <cstddef>

#include "cotsfa/tensor.hpp"

namespace cotsfa::loss {

/// Mean squared error over all entries; shapes must match.
Tensor forecast_loss(const Tensor& prediction, const Tensor& target);

/// Originals and their augmented views, in latent and target space.
/// Step-major layout: latent [T', B, D], target [H, B, C]; augmented tensors
/// hold A*B rows per step where row a*B + i is view a of original i.
struct SimilarityBatch {
    Tensor latent_orig;
    Tensor latent_aug;
    Tensor target_orig;
    Tensor target_aug;
    std::size_t views = 1;
    double temperature = 1.0;

    std::size_t batch_size() const { return latent_orig.dim(1); }
    void validate() const;
};

/// Softmax-normalised similarity of every (original i, view a) pair at step t:
///   -log( exp(<o_i, v_i^a>/tau) /
///         ( sum_j [ exp(<o_i, v_j^a>/tau) + [i != j] exp(<o_i, o_j>/tau) ]
///           + sum_k exp(<o_i, v_i^k>/tau) ) )
/// `orig` is [S, B, F], `aug` is [S, A*B, F]; returns [B, A].
Tensor step_similarity(const Tensor& orig, const Tensor& aug, std::size_t views, double temperature,
                       std::size_t step);

/// Step similarities averaged over the S steps; returns [B, A].
Tensor sequence_similarity(const Tensor& orig, const Tensor& aug, std::size_t views,
                           double temperature);

double latent_similarity(const SimilarityBatch& batch, std::size_t i, std::size_t a, std::size_t t);
double output_similarity(const SimilarityBatch& batch, std::size_t i, std::size_t a, std::size_t t);

/// Mean over (i, a) of |sim(z_i, z'_i^a) - sim(y_i, y'_i^a)|, each side
/// averaged over its own time axis.
Tensor alignment_loss(const SimilarityBatch& batch);

/// forecast + lambda * align.
Tensor total_loss(const Tensor& forecast, const Tensor& align, double lambda);

}  // namespace cotsfa::loss
