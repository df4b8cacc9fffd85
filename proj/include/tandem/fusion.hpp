#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tandem/errors.hpp"
#include "tandem/trec.hpp"

namespace tandem {

enum class FusionMethod { RRF, Linear };

struct FusionParams {
    FusionMethod method = FusionMethod::RRF;
    std::uint32_t rrf_k = 60;   ///< rank offset in 1/(rrf_k + rank)
    double alpha = 0.5;         ///< Linear: weight on the first run
    std::uint32_t depth = 1000; ///< entries considered from each input run

    void validate() const {
        if (rrf_k == 0) throw std::invalid_argument("rrf_k must be >= 1");
        if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0, 1]");
        if (depth == 0) throw std::invalid_argument("depth must be >= 1");
    }
};

namespace detail {

inline std::vector<RunEntry> rerank(const std::map<std::string, double>& scores) {
    std::vector<RunEntry> entries;
    entries.reserve(scores.size());
    for (const auto& [docid, score] : scores) entries.push_back({docid, score, 0});
    std::sort(entries.begin(), entries.end(), [](const RunEntry& a, const RunEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.docid < b.docid;
    });
    for (std::uint32_t i = 0; i < entries.size(); ++i) entries[i].rank = i + 1;
    return entries;
}

/// Min-max normalize the top-`depth` entries of one query run into [0, 1].
/// A constant-score list maps every present doc to 1.0, so presence still
/// outranks absence.
inline std::map<std::string, double> minmax_normalize(const std::vector<RunEntry>& entries,
                                                      std::uint32_t depth) {
    std::map<std::string, double> out;
    const std::size_t n = std::min<std::size_t>(entries.size(), depth);
    if (n == 0) return out;
    double lo = entries[0].score, hi = entries[0].score;
    for (std::size_t i = 0; i < n; ++i) {
        lo = std::min(lo, entries[i].score);
        hi = std::max(hi, entries[i].score);
    }
    for (std::size_t i = 0; i < n; ++i) {
        out[entries[i].docid] = (hi == lo) ? 1.0 : (entries[i].score - lo) / (hi - lo);
    }
    return out;
}

} // namespace detail

/// Reciprocal rank fusion: fused(q, d) = sum over runs holding d in their
/// top-depth of 1/(rrf_k + rank). Symmetric in the input runs and invariant
/// under any per-run score rescaling.
inline Ranking rrf_fuse(std::span<const Ranking> runs, const FusionParams& params) {
    if (runs.size() < 2) throw EmptyInputError("reciprocal rank fusion needs at least 2 runs");
    params.validate();

    std::set<std::string> qids;
    for (const Ranking& run : runs) {
        for (const auto& [qid, _] : run.queries) qids.insert(qid);
    }

    Ranking fused;
    for (const std::string& qid : qids) {
        std::map<std::string, double> scores;
        for (const Ranking& run : runs) {
            const auto it = run.queries.find(qid);
            if (it == run.queries.end()) continue;
            const std::size_t n = std::min<std::size_t>(it->second.size(), params.depth);
            for (std::size_t i = 0; i < n; ++i) {
                const RunEntry& e = it->second[i];
                scores[e.docid] += 1.0 / (params.rrf_k + e.rank);
            }
        }
        fused.queries[qid] = detail::rerank(scores);
    }
    return fused;
}

/// Linear score fusion: per-query min-max normalization of each run over its
/// top-depth entries, then alpha*a + (1-alpha)*b; a doc absent from one run
/// contributes 0 from that side.
inline Ranking linear_fuse(const Ranking& a, const Ranking& b, const FusionParams& params) {
    params.validate();

    std::set<std::string> qids;
    for (const auto& [qid, _] : a.queries) qids.insert(qid);
    for (const auto& [qid, _] : b.queries) qids.insert(qid);

    Ranking fused;
    for (const std::string& qid : qids) {
        std::map<std::string, double> norm_a, norm_b;
        if (const auto it = a.queries.find(qid); it != a.queries.end()) {
            norm_a = detail::minmax_normalize(it->second, params.depth);
        }
        if (const auto it = b.queries.find(qid); it != b.queries.end()) {
            norm_b = detail::minmax_normalize(it->second, params.depth);
        }
        std::map<std::string, double> scores;
        for (const auto& [docid, s] : norm_a) scores[docid] += params.alpha * s;
        for (const auto& [docid, s] : norm_b) scores[docid] += (1.0 - params.alpha) * s;
        fused.queries[qid] = detail::rerank(scores);
    }
    return fused;
}

} // namespace tandem
