#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "pillid/classify.hpp"
#include "pillid/errors.hpp"
#include "pillid/matrix.hpp"
#include "pillid/rng.hpp"
#include "pillid/similarity.hpp"

namespace pillid {

enum class ProxyGeneration { created, added, enhanced };

inline const char* to_string(ProxyGeneration g) {
    switch (g) {
        case ProxyGeneration::created: return "created";
        case ProxyGeneration::added: return "added";
        default: return "enhanced";
    }
}

inline ProxyGeneration proxy_generation_from_string(const std::string& s) {
    if (s == "created") return ProxyGeneration::created;
    if (s == "added") return ProxyGeneration::added;
    if (s == "enhanced") return ProxyGeneration::enhanced;
    throw CorruptArtifactError("unknown proxy generation tag: " + s);
}

// Class-representative vectors with per-proxy trainable flags.
struct ProxySet {
    Matrix proxies;                    // C x D
    std::vector<int> labels;           // C unique class ids
    std::vector<std::uint8_t> trainable;
    ProxyGeneration generation = ProxyGeneration::created;

    std::size_t count() const { return proxies.rows; }
    std::size_t dim() const { return proxies.cols; }

    void validate() const {
        if (proxies.rows == 0)
            throw DegenerateInputError("proxy set: empty");
        if (labels.size() != proxies.rows || trainable.size() != proxies.rows)
            throw DegenerateInputError("proxy set: metadata size mismatch");
        std::set<int> ids(labels.begin(), labels.end());
        if (ids.size() != labels.size())
            throw DegenerateInputError("proxy set: duplicate labels");
        for (std::size_t i = 0; i < proxies.rows; ++i)
            if (row_norm(proxies, i) == 0.0)
                throw DegenerateInputError("proxy set: zero-norm proxy");
    }
};

inline double max_abs_similarity(const ProxySet& p) {
    if (p.count() < 2) return 0.0;
    const SimilarityMatrix s = cosine_similarity_matrix(p.proxies);
    double m = 0.0;
    for (double v : s.pairs) m = std::max(m, std::abs(v));
    return m;
}

struct DecompositionValue {
    double loss = 0.0;
    Matrix gradient; // C x D, includes frozen rows
};

// Loss(s) = max|s| + mean|s| over the off-diagonal cosine pairs, pushed toward
// a zero similarity matrix. The max term subgradient is attributed to the
// single maximal pair; ties break toward the lowest pair index, and sign(0)
// contributes nothing.
inline DecompositionValue decomposition_loss(const ProxySet& p) {
    p.validate();
    if (p.count() < 2)
        throw DegenerateInputError("decomposition_loss: need at least 2 proxies");

    const std::size_t c = p.count(), d = p.dim();
    std::vector<double> norms(c);
    for (std::size_t i = 0; i < c; ++i) norms[i] = row_norm(p.proxies, i);

    const SimilarityMatrix sim = cosine_similarity_matrix(p.proxies);
    const std::size_t m = sim.pairs.size();
    std::size_t max_idx = 0;
    double max_abs = -1.0, sum_abs = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double a = std::abs(sim.pairs[k]);
        sum_abs += a;
        if (a > max_abs) {
            max_abs = a;
            max_idx = k;
        }
    }

    DecompositionValue out;
    out.loss = max_abs + sum_abs / static_cast<double>(m);
    out.gradient = Matrix(c, d);

    std::size_t k = 0;
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = i + 1; j < c; ++j, ++k) {
            const double s = sim.pairs[k];
            const double sg = s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0);
            if (sg == 0.0) continue;
            const double w = sg * ((k == max_idx ? 1.0 : 0.0) + 1.0 / static_cast<double>(m));
            for (std::size_t t = 0; t < d; ++t) {
                const double pi = p.proxies.at(i, t) / norms[i];
                const double pj = p.proxies.at(j, t) / norms[j];
                out.gradient.at(i, t) += w * (pj - s * pi) / norms[i];
                out.gradient.at(j, t) += w * (pi - s * pj) / norms[j];
            }
        }
    }
    return out;
}

struct OptimizeOptions {
    int steps = 2000;
    double lr = 0.05;
    int block = 50;       // safeguard granularity; also the checkpoint stride
    double floor_div = 4; // lowest step size is lr / floor_div
    int restarts = 5;     // random re-inits tried where the init is random
};

// Loss at block boundaries of the accepted trajectory (non-increasing).
struct OptimizeTrace {
    std::vector<double> checkpoints;
};

namespace detail {

inline void renormalize_trainable(ProxySet& p) {
    for (std::size_t i = 0; i < p.count(); ++i) {
        if (!p.trainable[i]) continue;
        const double norm = row_norm(p.proxies, i);
        if (norm == 0.0)
            throw DegenerateInputError("optimize_proxies: trainable proxy collapsed to zero");
        for (std::size_t t = 0; t < p.dim(); ++t) p.proxies.at(i, t) /= norm;
    }
}

} // namespace detail

// Projected subgradient descent on the decomposition loss. Trainable proxies
// are kept unit-norm (the objective is scale-free); frozen proxies are never
// touched. Every `block` steps the loss is compared against the last accepted
// state: a worse block is rolled back and the step size halved down to
// lr / floor_div, which makes the checkpoint sequence non-increasing.
inline ProxySet optimize_proxies(ProxySet p, int steps, double lr,
                                 const OptimizeOptions& opts = {},
                                 OptimizeTrace* trace = nullptr) {
    p.validate();
    const std::size_t c = p.count();
    std::size_t n_trainable = 0;
    for (auto f : p.trainable) n_trainable += f != 0;
    if (n_trainable == 0)
        throw DegenerateInputError("optimize_proxies: no trainable proxies");
    if (c < 2)
        throw DegenerateInputError("optimize_proxies: no pair involves a trainable proxy");

    detail::renormalize_trainable(p);

    double cur_lr = lr;
    const double floor = lr / opts.floor_div;
    ProxySet best = p;
    double best_loss = decomposition_loss(best).loss;
    const double initial_loss = best_loss;
    if (trace) trace->checkpoints.assign(1, best_loss);

    int done = 0;
    while (done < steps) {
        const int n = std::min(opts.block, steps - done);
        for (int t = 0; t < n; ++t) {
            const DecompositionValue v = decomposition_loss(p);
            if (v.loss > 10.0 * initial_loss + 1e-9)
                throw Error("optimize_proxies: diverged (loss " + std::to_string(v.loss) +
                            " vs initial " + std::to_string(initial_loss) + ")");
            for (std::size_t i = 0; i < c; ++i) {
                if (!p.trainable[i]) continue;
                for (std::size_t dcol = 0; dcol < p.dim(); ++dcol)
                    p.proxies.at(i, dcol) -= cur_lr * v.gradient.at(i, dcol);
            }
            detail::renormalize_trainable(p);
        }
        done += n;
        const double end_loss = decomposition_loss(p).loss;
        if (end_loss <= best_loss) {
            best = p;
            best_loss = end_loss;
        } else {
            p = best;
            cur_lr = std::max(cur_lr / 2.0, floor);
        }
        if (trace) trace->checkpoints.push_back(best_loss);
    }
    return best;
}

namespace detail {

// Runs the optimization from the given set, then from `restarts - 1`
// fresh Kaiming draws of the trainable rows, and keeps the lowest-loss
// result. The restarts step over the local minima the nonconvex objective
// has in low dimension (pairs of proxies collapsing onto one line).
inline ProxySet decompose_best_of(ProxySet p, RngState& rng, int steps, double lr,
                                  const OptimizeOptions& opts, OptimizeTrace* trace) {
    std::vector<std::size_t> train_rows;
    for (std::size_t i = 0; i < p.count(); ++i)
        if (p.trainable[i]) train_rows.push_back(i);

    ProxySet best;
    double best_loss = 0.0;
    OptimizeTrace best_trace;
    for (int r = 0; r < std::max(1, opts.restarts); ++r) {
        ProxySet candidate = p;
        if (r > 0) {
            const Matrix redraw = kaiming_normal_init(train_rows.size(), p.dim(), rng);
            for (std::size_t k = 0; k < train_rows.size(); ++k)
                for (std::size_t t = 0; t < p.dim(); ++t)
                    candidate.proxies.at(train_rows[k], t) = redraw.at(k, t);
        }
        OptimizeTrace run_trace;
        ProxySet result = optimize_proxies(std::move(candidate), steps, lr, opts, &run_trace);
        const double loss = decomposition_loss(result).loss;
        if (r == 0 || loss < best_loss) {
            best = std::move(result);
            best_loss = loss;
            best_trace = std::move(run_trace);
        }
    }
    if (trace) *trace = std::move(best_trace);
    return best;
}

} // namespace detail

// Kaiming-normal initial proxies, decomposed on request.
inline ProxySet create_proxy_set(std::size_t c, std::size_t d, RngState& rng, bool decompose,
                                 const OptimizeOptions& opts = {},
                                 OptimizeTrace* trace = nullptr) {
    if (c < 1 || d < 1)
        throw DegenerateInputError("create_proxy_set: need C >= 1 and D >= 1");
    ProxySet p;
    p.proxies = kaiming_normal_init(c, d, rng);
    p.labels.resize(c);
    for (std::size_t i = 0; i < c; ++i) p.labels[i] = static_cast<int>(i);
    p.trainable.assign(c, 1);
    p.generation = ProxyGeneration::created;
    if (decompose && c >= 2)
        p = detail::decompose_best_of(std::move(p), rng, opts.steps, opts.lr, opts, trace);
    return p;
}

// Candidate proxies for new classes are the per-class mean embeddings; the
// candidates are then decomposed against the frozen existing proxies.
inline ProxySet add_proxies(const ProxySet& old, const EmbeddingCollection& new_class_embeddings,
                            int steps, double lr, const OptimizeOptions& opts = {}) {
    old.validate();
    if (new_class_embeddings.empty())
        throw DegenerateInputError("add_proxies: empty embedding collection");
    if (new_class_embeddings.dim() != old.dim())
        throw DegenerateInputError("add_proxies: embedding dimension mismatch");

    const std::vector<int> new_ids = new_class_embeddings.class_ids();
    for (int id : new_ids)
        if (std::find(old.labels.begin(), old.labels.end(), id) != old.labels.end())
            throw DegenerateInputError("add_proxies: class " + std::to_string(id) +
                                       " already has a proxy");

    ProxySet merged;
    merged.proxies = Matrix(old.count() + new_ids.size(), old.dim());
    for (std::size_t i = 0; i < old.count(); ++i)
        for (std::size_t t = 0; t < old.dim(); ++t)
            merged.proxies.at(i, t) = old.proxies.at(i, t);
    merged.labels = old.labels;
    merged.trainable.assign(old.count(), 0);
    for (std::size_t k = 0; k < new_ids.size(); ++k) {
        const std::vector<double>& mean = new_class_embeddings.class_mean(new_ids[k]);
        for (std::size_t t = 0; t < old.dim(); ++t)
            merged.proxies.at(old.count() + k, t) = mean[t];
        merged.labels.push_back(new_ids[k]);
        merged.trainable.push_back(1);
    }

    merged = optimize_proxies(std::move(merged), steps, lr, opts);
    merged.generation = ProxyGeneration::added;
    return merged;
}

// Re-decomposes the whole set with every proxy trainable.
inline ProxySet enhance_proxies(ProxySet p, int steps, double lr,
                                const OptimizeOptions& opts = {}) {
    p.validate();
    if (p.count() < 2)
        throw DegenerateInputError("enhance_proxies: need at least 2 proxies");
    ProxySet all = std::move(p);
    all.trainable.assign(all.count(), 1);
    all = optimize_proxies(std::move(all), steps, lr, opts);
    all.generation = ProxyGeneration::enhanced;
    return all;
}

// The 2-D walkthrough: create and decompose 4 proxies, add 2 more, then
// enhance all 6, reporting the max pairwise |cos| before and after each stage.
struct Demo2dReport {
    double create_before = 0.0;
    double create_after = 0.0;
    double add_before = 0.0;
    double add_after = 0.0;
    double enhance_before = 0.0;
    double enhance_after = 0.0;
};

inline Demo2dReport demo_2d(RngState& rng, const OptimizeOptions& opts = {}) {
    Demo2dReport report;

    ProxySet initial;
    initial.proxies = kaiming_normal_init(4, 2, rng);
    initial.labels = {0, 1, 2, 3};
    initial.trainable.assign(4, 1);
    report.create_before = max_abs_similarity(initial);
    ProxySet created =
        detail::decompose_best_of(std::move(initial), rng, opts.steps, opts.lr, opts, nullptr);
    report.create_after = max_abs_similarity(created);

    ProxySet with_new = created;
    with_new.proxies = Matrix(6, 2);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t t = 0; t < 2; ++t)
            with_new.proxies.at(i, t) = created.proxies.at(i, t);
    const Matrix fresh = kaiming_normal_init(2, 2, rng);
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t t = 0; t < 2; ++t)
            with_new.proxies.at(4 + k, t) = fresh.at(k, t);
    with_new.labels = {0, 1, 2, 3, 4, 5};
    with_new.trainable = {0, 0, 0, 0, 1, 1};
    report.add_before = max_abs_similarity(with_new);
    ProxySet added =
        detail::decompose_best_of(std::move(with_new), rng, opts.steps, opts.lr, opts, nullptr);
    added.generation = ProxyGeneration::added;
    report.add_after = max_abs_similarity(added);

    report.enhance_before = report.add_after;
    ProxySet enhanced = enhance_proxies(std::move(added), opts.steps, opts.lr, opts);
    report.enhance_after = max_abs_similarity(enhanced);
    return report;
}

// --- persistence -------------------------------------------------------------
//
// Layout: 8-byte magic, u64 little-endian header length, JSON header with
// labels / trainable flags / generation tag, then the matrix binary block.

inline constexpr std::array<char, 8> kProxyMagic = {'P', 'I', 'D', 'P', 'R', 'X', '0', '1'};

inline void save_proxy_set(const std::string& path, const ProxySet& p,
                           const nlohmann::json& extra = {}) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    nlohmann::json header = {
        {"generation", to_string(p.generation)},
        {"labels", p.labels},
        {"trainable", p.trainable},
    };
    if (!extra.is_null() && !extra.empty()) header["run"] = extra;
    const std::string head = header.dump();
    os.write(kProxyMagic.data(), kProxyMagic.size());
    detail::put_u64_le(os, head.size());
    os.write(head.data(), static_cast<std::streamsize>(head.size()));
    write_matrix(os, p.proxies);
    if (!os) throw IoError("write failed: " + path);
}

inline ProxySet load_proxy_set(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kProxyMagic)
        throw CorruptArtifactError("proxy set: bad magic");
    const std::uint64_t head_len = detail::get_u64_le(is);
    if (!is || head_len > (1u << 26))
        throw CorruptArtifactError("proxy set: bad header length");
    std::string head(head_len, '\0');
    is.read(head.data(), static_cast<std::streamsize>(head_len));
    if (!is) throw CorruptArtifactError("proxy set: truncated header");
    nlohmann::json j = nlohmann::json::parse(head, nullptr, false);
    if (j.is_discarded() || !j.contains("labels") || !j.contains("trainable"))
        throw CorruptArtifactError("proxy set: malformed header");

    ProxySet p;
    p.labels = j["labels"].get<std::vector<int>>();
    p.trainable = j["trainable"].get<std::vector<std::uint8_t>>();
    p.generation = proxy_generation_from_string(j.value("generation", "created"));
    p.proxies = read_matrix(is);
    if (p.proxies.rows != p.labels.size() || p.trainable.size() != p.labels.size())
        throw CorruptArtifactError("proxy set: header/matrix size mismatch");
    p.validate();
    return p;
}

} // namespace pillid
