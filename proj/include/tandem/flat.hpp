#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tandem/errors.hpp"
#include "tandem/vectors.hpp"

namespace tandem {

/// Exact brute-force top-k by similarity. O(n*d) scan over the corpus,
/// deterministic: score descending, ties by ascending docid.
inline std::vector<ScoredDoc> flat_search(std::span<const VectorRecord> corpus,
                                          std::span<const float> query, std::size_t k,
                                          Metric metric) {
    if (corpus.empty()) throw EmptyCorpusError();
    if (k == 0) return {};

    std::vector<ScoredDoc> scored;
    scored.reserve(corpus.size());
    for (const VectorRecord& rec : corpus) {
        scored.push_back({rec.docid, similarity(metric, query, rec.vector)});
    }

    const std::size_t cut = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(cut),
                      scored.end(), scored_before);
    scored.resize(cut);
    return scored;
}

/// In-memory exact index. Serves as the recall oracle for the approximate
/// index; under Cosine, vectors are unit-normalized once at add().
class FlatIndex {
public:
    explicit FlatIndex(Metric metric) : metric_(metric) {}

    void add(std::string docid, DenseVector vector) {
        if (dim_ == 0) {
            dim_ = vector.size();
        } else if (vector.size() != dim_) {
            throw DimensionError(dim_, vector.size());
        }
        if (metric_ == Metric::Cosine) normalize_in_place(vector);
        entries_.push_back({std::move(docid), std::move(vector)});
    }

    std::vector<ScoredDoc> search(std::span<const float> query, std::size_t k) const {
        return flat_search(entries_, query, k, metric_);
    }

    Metric metric() const { return metric_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t dim() const { return dim_; }
    const std::vector<VectorRecord>& entries() const { return entries_; }

private:
    Metric metric_;
    std::size_t dim_ = 0;
    std::vector<VectorRecord> entries_;
};

} // namespace tandem
