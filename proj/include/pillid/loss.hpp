#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "pillid/embedding.hpp"
#include "pillid/errors.hpp"
#include "pillid/matrix.hpp"
#include "pillid/proxy.hpp"

namespace pillid {

struct PalParams {
    double alpha = 32.0;  // scaling
    double delta = 0.1;   // margin
    std::size_t pieces = 1;            // k; embedding dim must be divisible
    bool weighted = false;             // weighted piece sum (PALFS variant)
    bool normalize_reduced = true;     // renormalize the summed pieces

    void validate(std::size_t embed_dim) const {
        if (!(alpha > 0.0) || alpha > 200.0)
            throw ConfigError("pal: alpha must be in (0, 200]");
        if (!std::isfinite(delta))
            throw ConfigError("pal: delta must be finite");
        if (pieces == 0 || embed_dim % pieces != 0)
            throw ConfigError("pal: embedding dim must be divisible by piece count");
    }
};

struct PalResult {
    double loss = 0.0;
    Matrix grad_embeddings; // B x D
    Matrix grad_proxies;    // C x D, zero rows for frozen proxies
};

// Proxy Anchor Loss:
//   L = (1/|P+|) sum_{p in P+} log(1 + sum_{x: y(x)=p} exp(-alpha (cos(x,p) - delta)))
//     + (1/|P|)  sum_{p in P}  log(1 + sum_{x: y(x)!=p} exp( alpha (cos(x,p) + delta)))
// where P+ holds the proxies with at least one positive sample in the batch.
inline PalResult proxy_anchor_loss(const Matrix& embeddings, std::span<const int> labels,
                                   const ProxySet& proxies, const PalParams& params) {
    params.validate(embeddings.cols);
    proxies.validate();
    if (embeddings.rows == 0 || embeddings.rows != labels.size())
        throw DegenerateInputError("pal: need one label per embedding row");
    if (embeddings.cols != proxies.dim())
        throw DegenerateInputError("pal: embedding and proxy dimensions disagree");
    require_finite(embeddings, "pal embeddings");

    const std::size_t batch = embeddings.rows;
    const std::size_t n_proxies = proxies.count();

    std::vector<std::size_t> proxy_of_label(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        bool found = false;
        for (std::size_t c = 0; c < n_proxies; ++c)
            if (proxies.labels[c] == labels[b]) {
                proxy_of_label[b] = c;
                found = true;
                break;
            }
        if (!found)
            throw DegenerateInputError("pal: batch label " + std::to_string(labels[b]) +
                                       " has no proxy");
    }

    std::vector<double> emb_norm(batch), proxy_norm(n_proxies);
    for (std::size_t b = 0; b < batch; ++b) {
        emb_norm[b] = row_norm(embeddings, b);
        if (emb_norm[b] == 0.0)
            throw DegenerateInputError("pal: zero-norm embedding");
    }
    for (std::size_t c = 0; c < n_proxies; ++c) proxy_norm[c] = row_norm(proxies.proxies, c);

    Matrix cos_bc(batch, n_proxies);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < n_proxies; ++c) {
            double dot = 0.0;
            for (std::size_t d = 0; d < embeddings.cols; ++d)
                dot += embeddings.at(b, d) * proxies.proxies.at(c, d);
            cos_bc.at(b, c) = dot / (emb_norm[b] * proxy_norm[c]);
        }

    Matrix pos_exp(batch, n_proxies), neg_exp(batch, n_proxies);
    std::vector<double> pos_sum(n_proxies, 0.0), neg_sum(n_proxies, 0.0);
    std::vector<bool> has_positive(n_proxies, false);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < n_proxies; ++c) {
            if (proxy_of_label[b] == c) {
                pos_exp.at(b, c) = std::exp(-params.alpha * (cos_bc.at(b, c) - params.delta));
                pos_sum[c] += pos_exp.at(b, c);
                has_positive[c] = true;
            } else {
                neg_exp.at(b, c) = std::exp(params.alpha * (cos_bc.at(b, c) + params.delta));
                neg_sum[c] += neg_exp.at(b, c);
            }
        }

    std::size_t n_positive_proxies = 0;
    for (bool h : has_positive) n_positive_proxies += h;

    PalResult out;
    for (std::size_t c = 0; c < n_proxies; ++c) {
        if (has_positive[c]) out.loss += std::log1p(pos_sum[c]) / n_positive_proxies;
        out.loss += std::log1p(neg_sum[c]) / n_proxies;
    }

    out.grad_embeddings = Matrix(batch, embeddings.cols);
    out.grad_proxies = Matrix(n_proxies, proxies.dim());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < n_proxies; ++c) {
            double dcos;
            if (proxy_of_label[b] == c)
                dcos = -params.alpha * pos_exp.at(b, c) /
                       ((1.0 + pos_sum[c]) * n_positive_proxies);
            else
                dcos = params.alpha * neg_exp.at(b, c) / ((1.0 + neg_sum[c]) * n_proxies);
            const double cos_v = cos_bc.at(b, c);
            for (std::size_t d = 0; d < embeddings.cols; ++d) {
                const double xh = embeddings.at(b, d) / emb_norm[b];
                const double ph = proxies.proxies.at(c, d) / proxy_norm[c];
                out.grad_embeddings.at(b, d) += dcos * (ph - cos_v * xh) / emb_norm[b];
                if (proxies.trainable[c])
                    out.grad_proxies.at(c, d) += dcos * (xh - cos_v * ph) / proxy_norm[c];
            }
        }
    return out;
}

// Splits the embedding into k contiguous pieces, sums them (with the given
// weights when present) and L2-normalizes the sum.
inline std::vector<double> palfs_reduce(std::span<const double> e, const PalParams& params,
                                        std::span<const double> weights = {}) {
    params.validate(e.size());
    const std::size_t piece_len = e.size() / params.pieces;
    std::vector<double> reduced(piece_len, 0.0);
    for (std::size_t k = 0; k < params.pieces; ++k) {
        const double w = weights.empty() ? 1.0 : weights[k];
        for (std::size_t j = 0; j < piece_len; ++j) reduced[j] += w * e[k * piece_len + j];
    }
    if (params.normalize_reduced) {
        const double norm = l2_norm(reduced);
        if (norm == 0.0)
            throw DegenerateInputError("palfs_reduce: reduced vector is zero");
        for (double& v : reduced) v /= norm;
    }
    return reduced;
}

struct PalfsResult {
    double loss = 0.0;
    Matrix grad_embeddings;          // B x D (full embedding dim)
    Matrix grad_proxies;             // C x (D / k)
    std::vector<double> grad_weights; // k, zero when the unweighted variant runs
};

// PAL over the reduced vectors; proxies live in the D/k space.
inline PalfsResult palfs_loss(const Matrix& embeddings, std::span<const int> labels,
                              const ProxySet& proxies, const PalParams& params,
                              std::span<const double> weights = {}) {
    params.validate(embeddings.cols);
    const std::size_t piece_len = embeddings.cols / params.pieces;
    if (proxies.dim() != piece_len)
        throw DegenerateInputError("palfs: proxies must live in the reduced space");
    if (!weights.empty() && weights.size() != params.pieces)
        throw DegenerateInputError("palfs: weight count must equal piece count");

    const std::size_t batch = embeddings.rows;
    Matrix reduced(batch, piece_len);
    std::vector<double> reduced_norm(batch, 1.0);
    for (std::size_t b = 0; b < batch; ++b) {
        std::vector<double> raw(piece_len, 0.0);
        for (std::size_t k = 0; k < params.pieces; ++k) {
            const double w = weights.empty() ? 1.0 : weights[k];
            for (std::size_t j = 0; j < piece_len; ++j)
                raw[j] += w * embeddings.at(b, k * piece_len + j);
        }
        double norm = 1.0;
        if (params.normalize_reduced) {
            norm = l2_norm(raw);
            if (norm == 0.0)
                throw DegenerateInputError("palfs: reduced vector is zero");
        }
        reduced_norm[b] = norm;
        for (std::size_t j = 0; j < piece_len; ++j) reduced.at(b, j) = raw[j] / norm;
    }

    PalParams inner = params;
    inner.pieces = 1;
    const PalResult pal = proxy_anchor_loss(reduced, labels, proxies, inner);

    PalfsResult out;
    out.loss = pal.loss;
    out.grad_proxies = pal.grad_proxies;
    out.grad_embeddings = Matrix(batch, embeddings.cols);
    out.grad_weights.assign(params.pieces, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        // gradient w.r.t. the unnormalized reduced vector
        std::vector<double> grad_raw(piece_len);
        if (params.normalize_reduced) {
            double gdotr = 0.0;
            for (std::size_t j = 0; j < piece_len; ++j)
                gdotr += pal.grad_embeddings.at(b, j) * reduced.at(b, j);
            for (std::size_t j = 0; j < piece_len; ++j)
                grad_raw[j] = (pal.grad_embeddings.at(b, j) - gdotr * reduced.at(b, j)) /
                              reduced_norm[b];
        } else {
            for (std::size_t j = 0; j < piece_len; ++j)
                grad_raw[j] = pal.grad_embeddings.at(b, j);
        }
        for (std::size_t k = 0; k < params.pieces; ++k) {
            const double w = weights.empty() ? 1.0 : weights[k];
            for (std::size_t j = 0; j < piece_len; ++j) {
                out.grad_embeddings.at(b, k * piece_len + j) = w * grad_raw[j];
                out.grad_weights[k] += embeddings.at(b, k * piece_len + j) * grad_raw[j];
            }
        }
    }
    if (weights.empty()) out.grad_weights.assign(params.pieces, 0.0);
    return out;
}

} // namespace pillid
