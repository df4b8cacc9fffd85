#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tandem/errors.hpp"

namespace tandem {

/// Embedding components are stored as float32; all accumulation happens in double.
using DenseVector = std::vector<float>;

/// A document paired with its embedding, as read from a dense collection.
struct VectorRecord {
    std::string docid;
    DenseVector vector;
};

enum class Metric { Dot, Cosine };

inline const char* metric_name(Metric m) { return m == Metric::Dot ? "dot" : "cosine"; }

inline Metric parse_metric(const std::string& name) {
    if (name == "dot") return Metric::Dot;
    if (name == "cosine") return Metric::Cosine;
    throw std::invalid_argument("unknown metric: " + name + " (expected 'dot' or 'cosine')");
}

struct ScoredDoc {
    std::string docid;
    double score;

    bool operator==(const ScoredDoc&) const = default;
};

/// Result-list order: score descending, ties by ascending docid.
inline bool scored_before(const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.docid < b.docid;
}

inline constexpr double kZeroNormEpsilon = 1e-12;

inline double dot(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw DimensionError(a.size(), b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

inline double l2_norm(std::span<const float> a) {
    double acc = 0.0;
    for (const float v : a) acc += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(acc);
}

inline void normalize_in_place(DenseVector& a) {
    const double norm = l2_norm(a);
    if (norm <= kZeroNormEpsilon) throw ZeroNormError();
    const float inv = static_cast<float>(1.0 / norm);
    for (float& v : a) v *= inv;
}

inline DenseVector normalized(std::span<const float> a) {
    DenseVector out(a.begin(), a.end());
    normalize_in_place(out);
    return out;
}

/// Copies a raw query into the form similarity() expects: unit-normalized
/// under Cosine, untouched under Dot.
inline DenseVector prepared_query(Metric m, std::span<const float> q) {
    DenseVector out(q.begin(), q.end());
    if (m == Metric::Cosine) normalize_in_place(out);
    return out;
}

/// Score of `b` against `a`. Cosine assumes both sides were normalized at
/// ingest; that precondition is only checked in debug builds.
inline double similarity(Metric m, std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw DimensionError(a.size(), b.size());
#ifndef NDEBUG
    if (m == Metric::Cosine) {
        assert(std::abs(l2_norm(a) - 1.0) < 1e-4 && "cosine input not unit-normalized");
        assert(std::abs(l2_norm(b) - 1.0) < 1e-4 && "cosine input not unit-normalized");
    }
#else
    (void)m;
#endif
    return dot(a, b);
}

} // namespace tandem
