#include "cotsfa/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "cotsfa/errors.hpp"
#include "cotsfa/ops.hpp"
#include "cotsfa/random.hpp"

namespace cotsfa::model {
namespace {

struct ParamSpec {
    const char* name;
    Shape shape;
    std::size_t fan_in;
};

std::vector<ParamSpec> layout(const ModelConfig& c) {
    const std::size_t L = c.window, H = c.horizon, C = c.channels, D = c.latent_dim,
                      T = c.latent_length, K = c.hidden;
    return {
        {"embed.weight", {C, D}, C},      {"embed.bias", {D}, C},
        {"mlp1.weight", {D, K}, D},       {"mlp1.bias", {K}, D},
        {"mlp2.weight", {K, D}, K},       {"mlp2.bias", {D}, K},
        {"mix.weight", {T, L}, L},        {"mix.bias", {T, 1}, L},
        {"head.weight", {T * D, H * C}, T * D}, {"head.bias", {H * C}, T * D},
    };
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& out, double d) { write_u64(out, std::bit_cast<std::uint64_t>(d)); }

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

nlohmann::ordered_json config_json(const ModelConfig& c) {
    return {{"window", c.window},         {"horizon", c.horizon}, {"channels", c.channels},
            {"latent_dim", c.latent_dim}, {"latent_length", c.latent_length},
            {"hidden", c.hidden},         {"seed", c.seed}};
}

void check_input(const ModelConfig& c, const Tensor& x) {
    if (x.rank() != 3 || x.dim(1) != c.window || x.dim(2) != c.channels) {
        throw DimensionError("encode: expected input [N, " + std::to_string(c.window) + ", " +
                             std::to_string(c.channels) + "], got " + shape_string(x.shape()));
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (!window || !horizon || !channels || !latent_dim || !latent_length || !hidden) {
        throw ValidationError("model dimensions must all be positive");
    }
    if (latent_length > window) {
        throw ValidationError("latent_length must not exceed the input window");
    }
}

const Tensor& ModelParams::get(std::string_view name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t.value;
    }
    throw ContractError("no parameter named '" + std::string(name) + "'");
}

Tensor& ModelParams::get(std::string_view name) {
    return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.value.size();
    return n;
}

ModelParams init_model(const ModelConfig& config) {
    config.validate();
    Rng rng = make_rng(config.seed, 0x6d6f64656cULL);
    ModelParams params{config, {}};
    for (const auto& spec : layout(config)) {
        const double s = std::sqrt(1.0 / static_cast<double>(spec.fan_in));
        std::uniform_real_distribution<double> dist(-s, s);
        std::vector<double> values(shape_size(spec.shape));
        for (double& v : values) v = dist(rng);
        params.tensors.push_back({spec.name, Tensor(spec.shape, std::move(values))});
    }
    return params;
}

ModelParams track(const ModelParams& params, Tape& tape) {
    ModelParams out = params;
    for (auto& t : out.tensors) t.value = tape.watch(t.value);
    return out;
}

Tensor encode(const ModelParams& params, const Tensor& x) {
    const auto& c = params.config;
    check_input(c, x);
    const std::size_t N = x.dim(0);
    using namespace ops;
    const Tensor rows = reshape(x, {N * c.window, c.channels});
    const Tensor h0 = add(matmul(rows, params.get("embed.weight")), params.get("embed.bias"));
    const Tensor u = tanh(add(matmul(h0, params.get("mlp1.weight")), params.get("mlp1.bias")));
    const Tensor h = add(h0, add(matmul(u, params.get("mlp2.weight")), params.get("mlp2.bias")));
    const Tensor by_time =
        reshape(permute(reshape(h, {N, c.window, c.latent_dim}), {1, 0, 2}), {c.window, N * c.latent_dim});
    const Tensor mixed = add(matmul(params.get("mix.weight"), by_time), params.get("mix.bias"));
    return reshape(mixed, {c.latent_length, N, c.latent_dim});
}

Tensor forecast(const ModelParams& params, const Tensor& z) {
    const auto& c = params.config;
    if (z.rank() != 3 || z.dim(0) != c.latent_length || z.dim(2) != c.latent_dim) {
        throw DimensionError("forecast: expected latent [" + std::to_string(c.latent_length) + ", N, " +
                             std::to_string(c.latent_dim) + "], got " + shape_string(z.shape()));
    }
    const std::size_t N = z.dim(1);
    using namespace ops;
    const Tensor flat = reshape(permute(z, {1, 0, 2}), {N, c.latent_length * c.latent_dim});
    const Tensor out = add(matmul(flat, params.get("head.weight")), params.get("head.bias"));
    return reshape(out, {N, c.horizon, c.channels});
}

Matrix encode_one(const ModelParams& params, const Matrix& x) {
    const auto& c = params.config;
    if (x.rows != c.window || x.cols != c.channels) {
        throw DimensionError("encode: expected input " + std::to_string(c.window) + "x" +
                             std::to_string(c.channels) + ", got " + std::to_string(x.rows) + "x" +
                             std::to_string(x.cols));
    }
    const Tensor z = encode(params, Tensor({1, c.window, c.channels}, x.values));
    return Matrix(c.latent_length, c.latent_dim, z.to_vector());
}

Matrix forecast_one(const ModelParams& params, const Matrix& z) {
    const auto& c = params.config;
    if (z.rows != c.latent_length || z.cols != c.latent_dim) {
        throw DimensionError("forecast: expected latent " + std::to_string(c.latent_length) + "x" +
                             std::to_string(c.latent_dim) + ", got " + std::to_string(z.rows) + "x" +
                             std::to_string(z.cols));
    }
    const Tensor y = forecast(params, Tensor({c.latent_length, 1, c.latent_dim}, z.values));
    return Matrix(c.horizon, c.channels, y.to_vector());
}

Tensor stack_inputs(std::span<const Matrix> xs) {
    if (xs.empty()) throw DimensionError("stack_inputs: no matrices");
    const std::size_t rows = xs.front().rows, cols = xs.front().cols;
    std::vector<double> values;
    values.reserve(xs.size() * rows * cols);
    for (const auto& m : xs) {
        if (m.rows != rows || m.cols != cols) throw DimensionError("stack_inputs: ragged inputs");
        values.insert(values.end(), m.values.begin(), m.values.end());
    }
    return Tensor({xs.size(), rows, cols}, std::move(values));
}

std::vector<Matrix> predict(const ModelParams& params, std::span<const Matrix> xs, std::size_t batch_size) {
    std::vector<Matrix> out;
    out.reserve(xs.size());
    const auto& c = params.config;
    // Parameters may be tape-tracked; prediction never records.
    ModelParams frozen = params;
    for (auto& t : frozen.tensors) t.value = t.value.detach();
    for (std::size_t start = 0; start < xs.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, xs.size() - start);
        const Tensor y = forecast(frozen, encode(frozen, stack_inputs(xs.subspan(start, n))));
        auto v = y.data();
        const std::size_t block = c.horizon * c.channels;
        for (std::size_t i = 0; i < n; ++i) {
            out.emplace_back(c.horizon, c.channels,
                             std::vector<double>(v.begin() + i * block, v.begin() + (i + 1) * block));
        }
    }
    return out;
}

void write_checkpoint(std::ostream& out, const ModelParams& params, const std::string& metadata_json) {
    nlohmann::ordered_json meta;
    try {
        meta = nlohmann::ordered_json::parse(metadata_json);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint metadata is not JSON: ") + e.what());
    }
    meta["model"] = config_json(params.config);
    const std::string meta_text = meta.dump();
    out.write(kCheckpointMagic, 7);
    out.put('\n');
    write_u64(out, meta_text.size());
    out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
    write_u64(out, params.tensors.size());
    for (const auto& [name, value] : params.tensors) {
        write_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u64(out, value.rank());
        for (std::size_t d : value.shape()) write_u64(out, d);
        for (double v : value.data()) write_f64(out, v);
    }
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::string& metadata_json) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    write_checkpoint(out, params, metadata_json);
    if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint read_checkpoint(std::istream& in) {
    char magic[8] = {};
    if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 7) != 0 || magic[7] != '\n') {
        throw DataError("not a checkpoint: magic header mismatch (expected COTSFA1)");
    }
    const auto meta_len = read_u64(in);
    if (meta_len > (1u << 24)) throw DataError("checkpoint metadata length implausible");
    std::string meta_text(meta_len, '\0');
    if (!in.read(meta_text.data(), static_cast<std::streamsize>(meta_len))) {
        throw DataError("checkpoint truncated");
    }
    Checkpoint ckpt;
    ckpt.metadata_json = meta_text;
    try {
        const auto meta = nlohmann::json::parse(meta_text);
        const auto& m = meta.at("model");
        auto& c = ckpt.params.config;
        c.window = m.at("window");
        c.horizon = m.at("horizon");
        c.channels = m.at("channels");
        c.latent_dim = m.at("latent_dim");
        c.latent_length = m.at("latent_length");
        c.hidden = m.at("hidden");
        c.seed = m.at("seed");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint metadata malformed: ") + e.what());
    }
    ckpt.params.config.validate();
    const auto expected = layout(ckpt.params.config);
    const auto count = read_u64(in);
    if (count != expected.size()) throw DataError("checkpoint tensor count does not match the model");
    for (const auto& spec : expected) {
        const auto name_len = read_u64(in);
        if (name_len > 4096) throw DataError("checkpoint tensor name implausible");
        std::string name(name_len, '\0');
        if (!in.read(name.data(), static_cast<std::streamsize>(name_len))) throw DataError("checkpoint truncated");
        const auto rank = read_u64(in);
        if (rank > 8) throw DataError("checkpoint tensor rank implausible");
        Shape shape(rank);
        for (auto& d : shape) d = read_u64(in);
        if (name != spec.name || shape != spec.shape) {
            throw DataError("checkpoint tensor '" + name + "' " + shape_string(shape) +
                            " does not match expected '" + spec.name + "' " + shape_string(spec.shape));
        }
        std::vector<double> values(shape_size(shape));
        for (double& v : values) v = read_f64(in);
        ckpt.params.tensors.push_back({name, Tensor(shape, std::move(values))});
    }
    return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint not found: '" + path.string() + "'");
    return read_checkpoint(in);
}

}  // namespace cotsfa::model
