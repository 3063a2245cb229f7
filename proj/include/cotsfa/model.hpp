#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cotsfa/dataset.hpp"
#include "cotsfa/matrix.hpp"
#include "cotsfa/tensor.hpp"

namespace cotsfa::model {

struct ModelConfig {
    std::size_t window = 16;         // L
    std::size_t horizon = 4;         // H
    std::size_t channels = 1;        // C
    std::size_t latent_dim = 16;     // D
    std::size_t latent_length = 16;  // T'
    std::size_t hidden = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

/// Encoder (embed, mlp1, mlp2, mix) and head parameters, in a fixed order.
struct ModelParams {
    ModelConfig config;
    std::vector<NamedTensor> tensors;

    const Tensor& get(std::string_view name) const;
    Tensor& get(std::string_view name);
    std::size_t parameter_count() const;
};

/// Uniform(-s, s) with s = sqrt(1 / fan_in) for every weight and bias.
ModelParams init_model(const ModelConfig& config);

/// Returns a copy whose tensors are watched on `tape`.
ModelParams track(const ModelParams& params, Tape& tape);

/// x: [N, L, C] -> z: [T', N, D].
/// Per time step: h = E x + e, h <- h + W2 tanh(W1 h + b1) + b2; then the
/// mixing map M (T' x L) combines time steps: z = M h + m.
Tensor encode(const ModelParams& params, const Tensor& x);

/// z: [T', N, D] -> y_hat: [N, H, C] (flatten + affine).
Tensor forecast(const ModelParams& params, const Tensor& z);

/// Convenience single-sample forms: L x C -> T' x D -> H x C.
Matrix encode_one(const ModelParams& params, const Matrix& x);
Matrix forecast_one(const ModelParams& params, const Matrix& z);

/// Packs window inputs / targets into [N, L, C] / [N, H, C] tensors.
Tensor stack_inputs(std::span<const Matrix> xs);

/// Forecasts for many inputs without recording a tape.
std::vector<Matrix> predict(const ModelParams& params, std::span<const Matrix> xs,
                            std::size_t batch_size = 512);

inline constexpr char kCheckpointMagic[] = "COTSFA1";

/// Binary checkpoint: magic "COTSFA1\n", u64 length + JSON metadata (model
/// config plus `metadata`), u64 tensor count, then per tensor: u64 name
/// length, name, u64 rank, u64 dims, little-endian f64 values.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::string& metadata_json = "{}");
void write_checkpoint(std::ostream& out, const ModelParams& params,
                      const std::string& metadata_json = "{}");

struct Checkpoint {
    ModelParams params;
    std::string metadata_json;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace cotsfa::model
