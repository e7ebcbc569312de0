#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pillid/embedding.hpp"
#include "pillid/errors.hpp"
#include "pillid/loss.hpp"
#include "pillid/matrix.hpp"
#include "pillid/preprocess.hpp"
#include "pillid/proxy.hpp"
#include "pillid/rng.hpp"

namespace pillid {

// Pluggable training objective: loss and gradients for a batch of unit-norm
// embeddings against a proxy set. aux_params exposes extra trainable state
// (the PALFS piece weights).
class TrainingLoss {
public:
    struct Value {
        double loss = 0.0;
        Matrix grad_embeddings;
        Matrix grad_proxies;
        std::vector<double> grad_aux;
    };

    virtual ~TrainingLoss() = default;
    virtual Value evaluate(const Matrix& embeddings, std::span<const int> labels,
                           const ProxySet& proxies) const = 0;
    virtual std::span<double> aux_params() { return {}; }
};

class ProxyAnchorObjective final : public TrainingLoss {
public:
    explicit ProxyAnchorObjective(PalParams params) : params_(params) {}

    Value evaluate(const Matrix& embeddings, std::span<const int> labels,
                   const ProxySet& proxies) const override {
        PalResult r = proxy_anchor_loss(embeddings, labels, proxies, params_);
        return {r.loss, std::move(r.grad_embeddings), std::move(r.grad_proxies), {}};
    }

private:
    PalParams params_;
};

class PalfsObjective final : public TrainingLoss {
public:
    explicit PalfsObjective(PalParams params)
        : params_(params), weights_(params.pieces, 1.0) {}

    Value evaluate(const Matrix& embeddings, std::span<const int> labels,
                   const ProxySet& proxies) const override {
        PalfsResult r = palfs_loss(embeddings, labels, proxies, params_,
                                   params_.weighted ? std::span<const double>(weights_)
                                                    : std::span<const double>{});
        return {r.loss, std::move(r.grad_embeddings), std::move(r.grad_proxies),
                params_.weighted ? std::move(r.grad_weights) : std::vector<double>{}};
    }

    std::span<double> aux_params() override {
        return params_.weighted ? std::span<double>(weights_) : std::span<double>{};
    }

    std::span<const double> piece_weights() const { return weights_; }

private:
    PalParams params_;
    std::vector<double> weights_;
};

// --- the toy encoder ----------------------------------------------------------

struct EncoderConfig {
    int input_side = 64;
    int channels = 3;
    std::size_t hidden = 64;
    std::size_t dim = 32;

    std::size_t input_dim() const {
        return static_cast<std::size_t>(input_side) * input_side * channels;
    }
};

// flatten -> dense(H) -> ReLU -> dense(H) -> ReLU -> dense(D) -> L2 normalize
struct EncoderParams {
    EncoderConfig cfg;
    Matrix w1, w2, w3;                // (H x In), (H x H), (D x H)
    std::vector<double> b1, b2, b3;

    static EncoderParams init(const EncoderConfig& cfg, RngState& rng) {
        EncoderParams p;
        p.cfg = cfg;
        p.w1 = kaiming_normal_init(cfg.hidden, cfg.input_dim(), rng);
        p.w2 = kaiming_normal_init(cfg.hidden, cfg.hidden, rng);
        p.w3 = kaiming_normal_init(cfg.dim, cfg.hidden, rng);
        p.b1.assign(cfg.hidden, 0.0);
        p.b2.assign(cfg.hidden, 0.0);
        p.b3.assign(cfg.dim, 0.0);
        return p;
    }

    friend bool operator==(const EncoderParams& a, const EncoderParams& b) {
        return a.w1 == b.w1 && a.w2 == b.w2 && a.w3 == b.w3 && a.b1 == b.b1 &&
               a.b2 == b.b2 && a.b3 == b.b3;
    }
};

inline std::vector<std::uint8_t> flatten_image(const ImageRgb& img) {
    return img.pixels; // already y-major, interleaved channels
}

// Per-crop standardization: removes the global brightness offsets the light
// gradients introduce before the pixels reach the first dense layer.
inline void standardize_input_row(double* x, std::size_t n) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
    const double stddev = std::sqrt(var / static_cast<double>(n)) + 1e-6;
    for (std::size_t i = 0; i < n; ++i) x[i] = (x[i] - mean) / stddev;
}

// Flattened pixel dataset kept at 8-bit so large runs fit in memory; batches
// are lifted to doubles on demand.
struct PixelDataset {
    std::size_t input_dim = 0;
    std::vector<std::uint8_t> pixels;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }

    void add(const SinglePillImage& img) {
        const auto flat = flatten_image(img.raster);
        if (input_dim == 0) input_dim = flat.size();
        if (flat.size() != input_dim)
            throw DegenerateInputError("dataset: image size mismatch");
        pixels.insert(pixels.end(), flat.begin(), flat.end());
        labels.push_back(img.class_id);
    }

    Matrix batch_inputs(std::span<const std::size_t> indices) const {
        Matrix x(indices.size(), input_dim);
        for (std::size_t r = 0; r < indices.size(); ++r) {
            const std::uint8_t* src = pixels.data() + indices[r] * input_dim;
            double* dst = x.data.data() + r * input_dim;
            for (std::size_t j = 0; j < input_dim; ++j) dst[j] = src[j] / 255.0;
            standardize_input_row(dst, input_dim);
        }
        return x;
    }
};

namespace detail {

struct ForwardCache {
    Matrix a1, h1, a2, h2, z; // pre/post activations and the final linear output
};

inline Matrix add_bias_rows(Matrix m, std::span<const double> bias) {
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) m.at(i, j) += bias[j];
    return m;
}

inline Matrix relu(const Matrix& m) {
    Matrix r = m;
    for (double& v : r.data) v = v > 0.0 ? v : 0.0;
    return r;
}

inline ForwardCache forward_batch(const EncoderParams& p, const Matrix& x) {
    ForwardCache c;
    c.a1 = add_bias_rows(matmul_nt(x, p.w1), p.b1);
    c.h1 = relu(c.a1);
    c.a2 = add_bias_rows(matmul_nt(c.h1, p.w2), p.b2);
    c.h2 = relu(c.a2);
    c.z = add_bias_rows(matmul_nt(c.h2, p.w3), p.b3);
    return c;
}

// Row-wise L2 normalization; returns the pre-normalization norms.
inline std::vector<double> normalize_rows(Matrix& m) {
    std::vector<double> norms(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        norms[i] = row_norm(m, i);
        if (norms[i] == 0.0 || !std::isfinite(norms[i]))
            throw DegenerateInputError("encoder: degenerate embedding (zero pre-activation)");
        for (std::size_t j = 0; j < m.cols; ++j) m.at(i, j) /= norms[i];
    }
    return norms;
}

inline std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> s(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) s[j] += m.at(i, j);
    return s;
}

} // namespace detail

inline EmbeddingVector encode(const EncoderParams& p, const SinglePillImage& img) {
    if (img.raster.width != p.cfg.input_side || img.raster.height != p.cfg.input_side)
        throw DegenerateInputError("encode: image side does not match the encoder input");
    Matrix x(1, p.cfg.input_dim());
    const auto flat = flatten_image(img.raster);
    for (std::size_t j = 0; j < flat.size(); ++j) x.at(0, j) = flat[j] / 255.0;
    standardize_input_row(x.data.data(), x.cols);
    detail::ForwardCache c = detail::forward_batch(p, x);
    return normalized_embedding(c.z.row(0), img.class_id);
}

struct SgdOptions {
    double lr = 1e-2;
    std::size_t batch_size = 32;
};

// Loss and exact gradients of (encoder -> normalization -> loss) for one batch.
struct BatchGradients {
    double loss = 0.0;
    Matrix dw1, dw2, dw3;
    std::vector<double> db1, db2, db3;
    Matrix grad_proxies;
    std::vector<double> grad_aux;
};

inline BatchGradients compute_batch_gradients(const EncoderParams& params, const Matrix& x,
                                              std::span<const int> labels,
                                              const TrainingLoss& loss,
                                              const ProxySet& proxies) {
    detail::ForwardCache cache = detail::forward_batch(params, x);
    Matrix e = cache.z;
    const std::vector<double> z_norms = detail::normalize_rows(e);

    TrainingLoss::Value v = loss.evaluate(e, labels, proxies);

    BatchGradients g;
    g.loss = v.loss;
    g.grad_proxies = std::move(v.grad_proxies);
    g.grad_aux = std::move(v.grad_aux);

    // back through the row normalization
    Matrix dz(e.rows, e.cols);
    for (std::size_t i = 0; i < e.rows; ++i) {
        double gdot = 0.0;
        for (std::size_t j = 0; j < e.cols; ++j)
            gdot += v.grad_embeddings.at(i, j) * e.at(i, j);
        for (std::size_t j = 0; j < e.cols; ++j)
            dz.at(i, j) = (v.grad_embeddings.at(i, j) - gdot * e.at(i, j)) / z_norms[i];
    }

    g.dw3 = matmul_tn(dz, cache.h2);
    g.db3 = detail::column_sums(dz);
    Matrix dh2 = matmul(dz, params.w3);
    for (std::size_t i = 0; i < dh2.data.size(); ++i)
        if (cache.a2.data[i] <= 0.0) dh2.data[i] = 0.0;
    g.dw2 = matmul_tn(dh2, cache.h1);
    g.db2 = detail::column_sums(dh2);
    Matrix dh1 = matmul(dh2, params.w2);
    for (std::size_t i = 0; i < dh1.data.size(); ++i)
        if (cache.a1.data[i] <= 0.0) dh1.data[i] = 0.0;
    g.dw1 = matmul_tn(dh1, x);
    g.db1 = detail::column_sums(dh1);
    return g;
}

// One pass of minibatch SGD jointly updating encoder parameters, the trainable
// proxies and any auxiliary loss parameters. Returns the mean batch loss.
inline double train_epoch(EncoderParams& params, const PixelDataset& data, TrainingLoss& loss,
                          ProxySet& proxies, const SgdOptions& opt, RngState& rng) {
    if (data.size() == 0)
        throw DegenerateInputError("train_epoch: empty dataset");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_index(i)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
        const std::size_t count = std::min(opt.batch_size, order.size() - start);
        const std::span<const std::size_t> idx(order.data() + start, count);
        Matrix x = data.batch_inputs(idx);
        std::vector<int> labels(count);
        for (std::size_t i = 0; i < count; ++i) labels[i] = data.labels[idx[i]];

        BatchGradients g = compute_batch_gradients(params, x, labels, loss, proxies);
        if (!std::isfinite(g.loss)) {
            throw Error("train_epoch: non-finite loss at batch " + std::to_string(batches) +
                        " (|w1|=" + std::to_string(frobenius_norm(params.w1)) +
                        ", |w3|=" + std::to_string(frobenius_norm(params.w3)) + ")");
        }
        loss_sum += g.loss;
        ++batches;

        auto apply = [&](Matrix& w, const Matrix& grad) {
            for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] -= opt.lr * grad.data[i];
        };
        apply(params.w1, g.dw1);
        apply(params.w2, g.dw2);
        apply(params.w3, g.dw3);
        for (std::size_t j = 0; j < params.b1.size(); ++j) params.b1[j] -= opt.lr * g.db1[j];
        for (std::size_t j = 0; j < params.b2.size(); ++j) params.b2[j] -= opt.lr * g.db2[j];
        for (std::size_t j = 0; j < params.b3.size(); ++j) params.b3[j] -= opt.lr * g.db3[j];

        for (std::size_t c = 0; c < proxies.count(); ++c) {
            if (!proxies.trainable[c]) continue;
            for (std::size_t d = 0; d < proxies.dim(); ++d)
                proxies.proxies.at(c, d) -= opt.lr * g.grad_proxies.at(c, d);
        }
        auto aux = loss.aux_params();
        for (std::size_t k = 0; k < aux.size() && k < g.grad_aux.size(); ++k)
            aux[k] -= opt.lr * g.grad_aux[k];
    }
    return loss_sum / static_cast<double>(batches);
}

// Mean batch loss without any parameter update; batching matches train_epoch
// for an identical rng state.
inline double evaluate_epoch(const EncoderParams& params, const PixelDataset& data,
                             const TrainingLoss& loss, const ProxySet& proxies,
                             const SgdOptions& opt, RngState& rng) {
    if (data.size() == 0)
        throw DegenerateInputError("evaluate_epoch: empty dataset");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_index(i)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
        const std::size_t count = std::min(opt.batch_size, order.size() - start);
        const std::span<const std::size_t> idx(order.data() + start, count);
        Matrix x = data.batch_inputs(idx);
        std::vector<int> labels(count);
        for (std::size_t i = 0; i < count; ++i) labels[i] = data.labels[idx[i]];
        detail::ForwardCache cache = detail::forward_batch(params, x);
        Matrix e = cache.z;
        detail::normalize_rows(e);
        loss_sum += loss.evaluate(e, labels, proxies).loss;
        ++batches;
    }
    return loss_sum / static_cast<double>(batches);
}

// --- checkpoint persistence ---------------------------------------------------
//
// Layout: 8-byte magic, u64 little-endian header length, JSON header, then the
// six parameter blocks in the matrix binary format (biases as 1 x n).

inline constexpr std::array<char, 8> kCheckpointMagic = {'P', 'I', 'D', 'C', 'K', 'P', '0', '1'};

inline void save_checkpoint(const std::string& path, const EncoderParams& p,
                            const nlohmann::json& extra = {}) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    nlohmann::json header = {
        {"channels", p.cfg.channels},
        {"dim", p.cfg.dim},
        {"hidden", p.cfg.hidden},
        {"input_side", p.cfg.input_side},
    };
    if (!extra.is_null() && !extra.empty()) header["run"] = extra;
    const std::string head = header.dump();
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::put_u64_le(os, head.size());
    os.write(head.data(), static_cast<std::streamsize>(head.size()));

    auto bias_matrix = [](std::span<const double> b) {
        Matrix m(1, b.size());
        std::copy(b.begin(), b.end(), m.data.begin());
        return m;
    };
    write_matrix(os, p.w1);
    write_matrix(os, bias_matrix(p.b1));
    write_matrix(os, p.w2);
    write_matrix(os, bias_matrix(p.b2));
    write_matrix(os, p.w3);
    write_matrix(os, bias_matrix(p.b3));
    if (!os) throw IoError("write failed: " + path);
}

inline EncoderParams load_checkpoint(const std::string& path, nlohmann::json* extra = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kCheckpointMagic)
        throw CorruptArtifactError("checkpoint: bad magic");
    const std::uint64_t head_len = detail::get_u64_le(is);
    if (!is || head_len > (1u << 26))
        throw CorruptArtifactError("checkpoint: bad header length");
    std::string head(head_len, '\0');
    is.read(head.data(), static_cast<std::streamsize>(head_len));
    if (!is) throw CorruptArtifactError("checkpoint: truncated header");
    nlohmann::json j = nlohmann::json::parse(head, nullptr, false);
    if (j.is_discarded())
        throw CorruptArtifactError("checkpoint: malformed header");

    EncoderParams p;
    p.cfg.channels = j.at("channels").get<int>();
    p.cfg.dim = j.at("dim").get<std::size_t>();
    p.cfg.hidden = j.at("hidden").get<std::size_t>();
    p.cfg.input_side = j.at("input_side").get<int>();
    if (extra) *extra = j.value("run", nlohmann::json::object());

    auto read_bias = [&](std::size_t n) {
        Matrix m = read_matrix(is);
        if (m.rows != 1 || m.cols != n)
            throw CorruptArtifactError("checkpoint: bias block shape mismatch");
        return std::vector<double>(m.data.begin(), m.data.end());
    };
    p.w1 = read_matrix(is);
    p.b1 = read_bias(p.cfg.hidden);
    p.w2 = read_matrix(is);
    p.b2 = read_bias(p.cfg.hidden);
    p.w3 = read_matrix(is);
    p.b3 = read_bias(p.cfg.dim);
    if (p.w1.rows != p.cfg.hidden || p.w1.cols != p.cfg.input_dim() ||
        p.w2.rows != p.cfg.hidden || p.w3.rows != p.cfg.dim)
        throw CorruptArtifactError("checkpoint: weight block shape mismatch");
    return p;
}

} // namespace pillid
