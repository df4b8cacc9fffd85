#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "tandem/trec.hpp"

namespace tandem {

// Rank-based effectiveness metrics over a run and a qrels table. All three
// follow the same edge policies: only queries with at least one relevant
// (grade >= 1) judgment are evaluated, a judged query absent from the run
// scores 0 for that query, and unjudged documents count as non-relevant.
// Aggregation iterates queries in sorted order, so results do not depend on
// evaluation concurrency.

namespace detail {

inline std::size_t relevant_count(const std::map<std::string, int>& judged) {
    std::size_t n = 0;
    for (const auto& [_, grade] : judged) {
        if (grade >= 1) ++n;
    }
    return n;
}

} // namespace detail

/// Mean reciprocal rank of the first relevant (grade >= 1) document within
/// the cutoff.
inline double mrr_at(const Ranking& run, const QrelsTable& qrels, std::size_t cutoff = 10) {
    double sum = 0.0;
    std::size_t evaluated = 0;
    for (const auto& [qid, judged] : qrels.judgments) {
        if (detail::relevant_count(judged) == 0) continue;
        ++evaluated;
        const auto it = run.queries.find(qid);
        if (it == run.queries.end()) continue;
        const std::size_t n = std::min(it->second.size(), cutoff);
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = judged.find(it->second[i].docid);
            if (j != judged.end() && j->second >= 1) {
                sum += 1.0 / static_cast<double>(i + 1);
                break;
            }
        }
    }
    return evaluated == 0 ? 0.0 : sum / static_cast<double>(evaluated);
}

/// Fraction of relevant documents retrieved within the cutoff, averaged over
/// queries that have at least one relevant document.
inline double recall_at(const Ranking& run, const QrelsTable& qrels, std::size_t cutoff = 1000) {
    double sum = 0.0;
    std::size_t evaluated = 0;
    for (const auto& [qid, judged] : qrels.judgments) {
        const std::size_t relevant = detail::relevant_count(judged);
        if (relevant == 0) continue;
        ++evaluated;
        const auto it = run.queries.find(qid);
        if (it == run.queries.end()) continue;
        std::size_t found = 0;
        const std::size_t n = std::min(it->second.size(), cutoff);
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = judged.find(it->second[i].docid);
            if (j != judged.end() && j->second >= 1) ++found;
        }
        sum += static_cast<double>(found) / static_cast<double>(relevant);
    }
    return evaluated == 0 ? 0.0 : sum / static_cast<double>(evaluated);
}

/// Normalized discounted cumulative gain with exponential gains:
/// DCG@c = sum_i (2^grade_i - 1) / log2(i + 1), ideal from grades sorted
/// descending. Queries with an all-zero ideal are skipped.
inline double ndcg_at(const Ranking& run, const QrelsTable& qrels, std::size_t cutoff = 10) {
    double sum = 0.0;
    std::size_t evaluated = 0;
    for (const auto& [qid, judged] : qrels.judgments) {
        std::vector<int> grades;
        grades.reserve(judged.size());
        for (const auto& [_, grade] : judged) grades.push_back(grade);
        std::sort(grades.begin(), grades.end(), std::greater<>());

        double ideal = 0.0;
        const std::size_t ideal_n = std::min(grades.size(), cutoff);
        for (std::size_t i = 0; i < ideal_n; ++i) {
            ideal += (std::exp2(grades[i]) - 1.0) / std::log2(static_cast<double>(i + 2));
        }
        if (ideal == 0.0) continue;
        ++evaluated;

        const auto it = run.queries.find(qid);
        if (it == run.queries.end()) continue;
        double dcg = 0.0;
        const std::size_t n = std::min(it->second.size(), cutoff);
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = judged.find(it->second[i].docid);
            if (j != judged.end() && j->second > 0) {
                dcg += (std::exp2(j->second) - 1.0) / std::log2(static_cast<double>(i + 2));
            }
        }
        sum += dcg / ideal;
    }
    return evaluated == 0 ? 0.0 : sum / static_cast<double>(evaluated);
}

} // namespace tandem
