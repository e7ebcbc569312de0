#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pillid/aggregate.hpp"
#include "pillid/embedding.hpp"
#include "pillid/matrix.hpp"
#include "pillid/svd.hpp"

namespace pillid {

// Labeled reference embeddings. Values are quantized to 32-bit floats on
// insertion (the storage precision); all similarity math runs in doubles.
class EmbeddingCollection {
public:
    EmbeddingCollection() = default;
    explicit EmbeddingCollection(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return labels_.size(); }
    bool empty() const { return labels_.empty(); }

    void add(const EmbeddingVector& e) {
        if (dim_ == 0) dim_ = e.dim();
        if (e.dim() != dim_)
            throw DegenerateInputError("collection: dimension mismatch");
        if (e.label < 0)
            throw DegenerateInputError("collection: entry must be labeled");
        if (std::abs(l2_norm(e.values) - 1.0) > 1e-6)
            throw DegenerateInputError("collection: embedding is not unit-norm");
        for (double v : e.values) values_.push_back(static_cast<float>(v));
        labels_.push_back(e.label);
        means_dirty_ = true;
    }

    void merge(const EmbeddingCollection& other) {
        if (other.empty()) return;
        if (dim_ == 0) dim_ = other.dim_;
        if (other.dim_ != dim_)
            throw DegenerateInputError("collection merge: dimension mismatch");
        values_.insert(values_.end(), other.values_.begin(), other.values_.end());
        labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
        means_dirty_ = true;
    }

    int label(std::size_t i) const { return labels_[i]; }

    std::span<const float> values(std::size_t i) const {
        return {values_.data() + i * dim_, dim_};
    }

    std::vector<double> entry(std::size_t i) const {
        auto v = values(i);
        return std::vector<double>(v.begin(), v.end());
    }

    std::vector<int> class_ids() const {
        std::set<int> ids(labels_.begin(), labels_.end());
        return std::vector<int>(ids.begin(), ids.end());
    }

    // Unit-normalized per-class mean, cached until the next mutation.
    const std::vector<double>& class_mean(int label) const {
        refresh_means();
        auto it = means_.find(label);
        if (it == means_.end())
            throw DegenerateInputError("collection: unknown class " + std::to_string(label));
        return it->second;
    }

    Matrix to_matrix() const {
        Matrix m(size(), dim_);
        for (std::size_t i = 0; i < size(); ++i) {
            auto v = values(i);
            for (std::size_t j = 0; j < dim_; ++j) m.at(i, j) = v[j];
        }
        return m;
    }

    const std::vector<int>& labels() const { return labels_; }

    friend bool operator==(const EmbeddingCollection& a, const EmbeddingCollection& b) {
        return a.dim_ == b.dim_ && a.labels_ == b.labels_ && a.values_ == b.values_;
    }

    void save(const std::string& path, const nlohmann::json& extra = {}) const;
    static EmbeddingCollection load(const std::string& path);

private:
    void refresh_means() const {
        if (!means_dirty_) return;
        means_.clear();
        std::map<int, std::size_t> counts;
        for (std::size_t i = 0; i < size(); ++i) {
            auto& acc = means_[labels_[i]];
            if (acc.empty()) acc.assign(dim_, 0.0);
            auto v = values(i);
            for (std::size_t j = 0; j < dim_; ++j) acc[j] += v[j];
            counts[labels_[i]] += 1;
        }
        for (auto& [label, acc] : means_) {
            const double norm = l2_norm(acc);
            if (norm == 0.0)
                throw DegenerateInputError("collection: class mean collapsed to zero");
            for (double& v : acc) v /= norm;
        }
        means_dirty_ = false;
    }

    std::size_t dim_ = 0;
    std::vector<float> values_; // size() * dim_, row-major
    std::vector<int> labels_;
    mutable std::map<int, std::vector<double>> means_;
    mutable bool means_dirty_ = true;
};

// --- persistence -------------------------------------------------------------
//
// Layout: 8-byte magic, u64 little-endian header length, JSON header
// {"count", "dim", "labels"}, then count*dim 32-bit little-endian floats.

inline constexpr std::array<char, 8> kCollectionMagic = {'P', 'I', 'D', 'C', 'O', 'L', '0', '1'};

inline void EmbeddingCollection::save(const std::string& path,
                                      const nlohmann::json& extra) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    nlohmann::json header = {
        {"count", size()},
        {"dim", dim_},
        {"labels", labels_},
    };
    if (!extra.is_null() && !extra.empty()) header["run"] = extra;
    const std::string head = header.dump();
    os.write(kCollectionMagic.data(), kCollectionMagic.size());
    detail::put_u64_le(os, head.size());
    os.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (float v : values_) {
        const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
        os.write(b, 4);
    }
    if (!os) throw IoError("write failed: " + path);
}

inline EmbeddingCollection EmbeddingCollection::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kCollectionMagic)
        throw CorruptArtifactError("collection: bad magic");
    const std::uint64_t head_len = detail::get_u64_le(is);
    if (!is || head_len > (1u << 26))
        throw CorruptArtifactError("collection: bad header length");
    std::string head(head_len, '\0');
    is.read(head.data(), static_cast<std::streamsize>(head_len));
    if (!is) throw CorruptArtifactError("collection: truncated header");
    nlohmann::json j = nlohmann::json::parse(head, nullptr, false);
    if (j.is_discarded() || !j.contains("count") || !j.contains("dim") || !j.contains("labels"))
        throw CorruptArtifactError("collection: malformed header");

    EmbeddingCollection c;
    c.dim_ = j["dim"].get<std::size_t>();
    const auto count = j["count"].get<std::size_t>();
    c.labels_ = j["labels"].get<std::vector<int>>();
    if (c.labels_.size() != count)
        throw CorruptArtifactError("collection: label table size mismatch");
    c.values_.resize(count * c.dim_);
    for (float& v : c.values_) {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        v = std::bit_cast<float>(bits);
    }
    if (!is) throw CorruptArtifactError("collection: truncated payload");
    return c;
}

// --- classifiers -------------------------------------------------------------

// Closed-form linear head: W = pinv(E) * Y with Y the one-hot label matrix.
struct SolvedLayer {
    Matrix w;                     // D x C
    std::vector<int> class_order; // column labels, ascending
};

inline SolvedLayer solve_layer(const Matrix& embeddings, std::span<const int> labels) {
    if (embeddings.rows == 0 || embeddings.rows != labels.size())
        throw DegenerateInputError("solve_layer: need one label per row");
    if (frobenius_norm(embeddings) == 0.0)
        throw DegenerateInputError("solve_layer: degenerate all-zero input");
    std::set<int> ids(labels.begin(), labels.end());

    SolvedLayer layer;
    layer.class_order.assign(ids.begin(), ids.end());
    std::map<int, std::size_t> column;
    for (std::size_t c = 0; c < layer.class_order.size(); ++c)
        column[layer.class_order[c]] = c;

    Matrix one_hot(embeddings.rows, layer.class_order.size());
    for (std::size_t i = 0; i < embeddings.rows; ++i)
        one_hot.at(i, column[labels[i]]) = 1.0;

    layer.w = matmul(pseudoinverse(embeddings), one_hot);
    return layer;
}

inline SolvedLayer solve_layer(const EmbeddingCollection& c) {
    return solve_layer(c.to_matrix(), c.labels());
}

// argmax of e*W (ties to the lowest class index); confidence is the cosine to
// the predicted class's mean reference embedding.
inline PredictionRecord sl_predict(const SolvedLayer& layer, const EmbeddingVector& e,
                                   const EmbeddingCollection& collection) {
    if (e.dim() != layer.w.rows)
        throw DegenerateInputError("sl_predict: dimension mismatch");
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < layer.w.cols; ++c) {
        double score = 0.0;
        for (std::size_t d = 0; d < layer.w.rows; ++d) score += e.values[d] * layer.w.at(d, c);
        if (score > best_score) {
            best_score = score;
            best = c;
        }
    }
    PredictionRecord r;
    r.label = layer.class_order[best];
    r.confidence = cosine(e.values, collection.class_mean(r.label));
    return r;
}

// Majority vote over the k nearest (highest-cosine) entries. Vote ties go to
// the tied class with the better best-neighbor cosine, then the lowest class
// id. Confidence is the best cosine of the winning class within the k.
inline PredictionRecord knn_predict(const EmbeddingCollection& collection,
                                    const EmbeddingVector& e, std::size_t k) {
    if (collection.empty())
        throw DegenerateInputError("knn_predict: empty collection");
    if (k < 1 || k > collection.size())
        throw DegenerateInputError("knn_predict: k out of range");

    std::vector<std::pair<double, std::size_t>> scored(collection.size());
    for (std::size_t i = 0; i < collection.size(); ++i) {
        auto v = collection.values(i);
        std::vector<double> ref(v.begin(), v.end());
        scored[i] = {cosine(e.values, ref), i};
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    std::map<int, std::size_t> votes;
    std::map<int, double> best_cos;
    for (std::size_t i = 0; i < k; ++i) {
        const int label = collection.label(scored[i].second);
        votes[label] += 1;
        auto it = best_cos.find(label);
        if (it == best_cos.end() || scored[i].first > it->second)
            best_cos[label] = scored[i].first;
    }
    int winner = -1;
    for (const auto& [label, count] : votes) {
        if (winner == -1) {
            winner = label;
            continue;
        }
        if (count > votes[winner] ||
            (count == votes[winner] && best_cos[label] > best_cos[winner]))
            winner = label;
    }
    return {winner, best_cos[winner]};
}

} // namespace pillid
