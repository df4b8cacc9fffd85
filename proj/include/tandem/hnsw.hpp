#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tandem/errors.hpp"
#include "tandem/vectors.hpp"

namespace tandem {

struct BuildParams {
    std::uint32_t M = 16;                ///< max bi-directional links per node above layer 0
    std::uint32_t ef_construction = 100; ///< candidate list size tracked during insertion
    std::uint64_t seed = 42;             ///< level RNG seed, part of the index identity
    Metric metric = Metric::Cosine;

    void validate() const {
        if (M < 2) throw std::invalid_argument("M must be >= 2");
        if (ef_construction < M) throw std::invalid_argument("ef_construction must be >= M");
    }

    /// Layer-0 lists may grow to 2*M; upper layers are capped at M.
    std::uint32_t max_degree(int layer) const { return layer == 0 ? 2 * M : M; }

    double level_multiplier() const { return 1.0 / std::log(static_cast<double>(M)); }
};

struct SearchParams {
    std::uint32_t ef_search = 1000; ///< candidate list size at query time
    std::uint32_t k = 10;

    void validate() const {
        if (k == 0) throw std::invalid_argument("k must be >= 1");
        if (ef_search < k) throw std::invalid_argument("ef_search must be >= k");
    }
};

/// Internal node id plus its similarity to the query being processed.
struct Candidate {
    std::uint32_t node;
    double score;
};

/// Exponentially decaying level distribution: floor(-ln(u) * mult) with
/// u drawn uniformly on (0, 1].
inline int level_for(double u, double level_multiplier) {
    return static_cast<int>(std::floor(-std::log(u) * level_multiplier));
}

inline int assign_level(std::mt19937_64& rng, double level_multiplier) {
    // Top 53 bits give a uniform double on (0, 1]; the distribution is pinned
    // here rather than via std::uniform_real_distribution so that builds are
    // reproducible across standard libraries.
    const std::uint64_t bits = rng() >> 11;
    const double u = (static_cast<double>(bits) + 1.0) * 0x1p-53;
    return level_for(u, level_multiplier);
}

namespace detail {

/// Per-query visited marks with O(1) reset via epoch stamping.
class VisitedTable {
public:
    void reset(std::size_t n) {
        if (stamps_.size() < n) stamps_.resize(n, 0);
        if (++epoch_ == 0) {
            std::fill(stamps_.begin(), stamps_.end(), 0);
            epoch_ = 1;
        }
    }

    /// Returns true if already visited; marks visited otherwise.
    bool test_and_set(std::uint32_t id) {
        if (stamps_[id] == epoch_) return true;
        stamps_[id] = epoch_;
        return false;
    }

private:
    std::vector<std::uint32_t> stamps_;
    std::uint32_t epoch_ = 0;
};

// Heap orderings. Ties on score are broken by internal id so that build and
// search are deterministic for a fixed insert order and seed.
struct BestOnTop {
    bool operator()(const Candidate& a, const Candidate& b) const {
        if (a.score != b.score) return a.score < b.score;
        return a.node > b.node;
    }
};
struct WorstOnTop {
    bool operator()(const Candidate& a, const Candidate& b) const {
        if (a.score != b.score) return a.score > b.score;
        return a.node < b.node;
    }
};

} // namespace detail

/// Hierarchical navigable small-world graph over one vector segment.
///
/// Construction is single-writer; a finished graph is immutable and may be
/// searched from any number of threads concurrently.
class HnswGraph {
public:
    static constexpr std::uint32_t kInvalidNode = std::numeric_limits<std::uint32_t>::max();

    explicit HnswGraph(BuildParams params) : params_(params), rng_(params.seed) {
        params_.validate();
    }

    /// Rebuild a graph from serialized parts. Performs structural validation;
    /// the result is meant for searching, not for further insertion.
    static HnswGraph from_parts(BuildParams params, std::size_t dim, std::vector<float> vectors,
                                std::vector<std::string> docids, std::vector<int> levels,
                                std::vector<std::vector<std::vector<std::uint32_t>>> links,
                                std::uint32_t entry_point, int max_level) {
        HnswGraph g(params);
        const std::size_t n = docids.size();
        if (dim == 0 || vectors.size() != n * dim || levels.size() != n || links.size() != n) {
            throw std::invalid_argument("inconsistent graph parts");
        }
        g.dim_ = dim;
        g.vectors_ = std::move(vectors);
        g.docids_ = std::move(docids);
        g.levels_ = std::move(levels);
        g.links_ = std::move(links);
        g.entry_point_ = entry_point;
        g.max_level_ = max_level;
        for (std::uint32_t i = 0; i < n; ++i) {
            if (g.links_[i].size() != static_cast<std::size_t>(g.levels_[i]) + 1) {
                throw std::invalid_argument("adjacency does not match node levels");
            }
            if (!g.id_of_.emplace(g.docids_[i], i).second) throw DuplicateDocError(g.docids_[i]);
        }
        if (n > 0 && (entry_point >= n || g.levels_[entry_point] != max_level)) {
            throw std::invalid_argument("entry point does not match max level");
        }
        return g;
    }

    std::size_t size() const { return docids_.size(); }
    bool empty() const { return docids_.empty(); }
    std::size_t dim() const { return dim_; }
    int max_level() const { return max_level_; }
    std::uint32_t entry_point() const { return entry_point_; }
    const BuildParams& params() const { return params_; }

    int node_level(std::uint32_t node) const { return levels_[node]; }
    const std::string& docid(std::uint32_t node) const { return docids_[node]; }
    bool contains(const std::string& docid) const { return id_of_.count(docid) != 0; }

    std::span<const float> vector(std::uint32_t node) const {
        return {vectors_.data() + static_cast<std::size_t>(node) * dim_, dim_};
    }

    std::span<const std::uint32_t> neighbors(std::uint32_t node, int layer) const {
        return links_[node][static_cast<std::size_t>(layer)];
    }

    /// Insert one document. The first insert fixes the graph dimension.
    /// Cosine graphs expect vectors already unit-normalized by the caller.
    void insert(const std::string& docid, const DenseVector& v) {
        if (dim_ == 0) {
            if (v.empty()) throw DimensionError("cannot index an empty vector");
            dim_ = v.size();
        } else if (v.size() != dim_) {
            throw DimensionError(dim_, v.size());
        }
        if (id_of_.count(docid)) throw DuplicateDocError(docid);

        const int level = assign_level(rng_, params_.level_multiplier());
        const auto node = static_cast<std::uint32_t>(size());
        vectors_.insert(vectors_.end(), v.begin(), v.end());
        docids_.push_back(docid);
        levels_.push_back(level);
        links_.emplace_back(static_cast<std::size_t>(level) + 1);
        id_of_.emplace(docid, node);

        if (node == 0) {
            entry_point_ = node;
            max_level_ = level;
            return;
        }

        const std::span<const float> q = vector(node);
        Candidate cur{entry_point_, score_against(q, entry_point_)};
        for (int layer = max_level_; layer > level; --layer) {
            cur = greedy_step(q, cur, layer);
        }

        std::vector<Candidate> entry{cur};
        for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
            std::vector<Candidate> found =
                search_layer(q, entry, params_.ef_construction, layer);
            std::vector<std::uint32_t> chosen = select_neighbors(found, params_.M, q);
            links_[node][static_cast<std::size_t>(layer)] = chosen;
            for (const std::uint32_t nb : chosen) {
                add_link_with_prune(nb, node, layer);
            }
            entry = std::move(found);
        }

        if (level > max_level_) {
            entry_point_ = node;
            max_level_ = level;
        }
    }

    /// Greedy best-first expansion at one layer. Keeps at most `ef` best
    /// candidates and stops once the best unexpanded candidate scores below
    /// the current worst kept result. Returns candidates sorted best-first.
    std::vector<Candidate> search_layer(std::span<const float> q,
                                        std::span<const Candidate> entry, std::uint32_t ef,
                                        int layer) const {
        static thread_local detail::VisitedTable visited;
        visited.reset(size());

        std::priority_queue<Candidate, std::vector<Candidate>, detail::BestOnTop> frontier;
        std::priority_queue<Candidate, std::vector<Candidate>, detail::WorstOnTop> best;

        for (const Candidate& c : entry) {
            if (visited.test_and_set(c.node)) continue;
            frontier.push(c);
            best.push(c);
            if (best.size() > ef) best.pop();
        }

        while (!frontier.empty()) {
            const Candidate c = frontier.top();
            if (best.size() >= ef && c.score < best.top().score) break;
            frontier.pop();

            for (const std::uint32_t nb : neighbors(c.node, layer)) {
                if (visited.test_and_set(nb)) continue;
                const double s = score_against(q, nb);
                if (best.size() < ef || s > best.top().score) {
                    frontier.push({nb, s});
                    best.push({nb, s});
                    if (best.size() > ef) best.pop();
                }
            }
        }

        std::vector<Candidate> out;
        out.reserve(best.size());
        while (!best.empty()) {
            out.push_back(best.top());
            best.pop();
        }
        std::reverse(out.begin(), out.end()); // worst-first heap drain -> best-first
        return out;
    }

    /// Diversity-pruned neighbor selection: processing candidates best-first,
    /// a candidate survives only if it is closer to `base` than to every
    /// neighbor already kept. Slots left open are filled with the pruned
    /// candidates, best-first.
    std::vector<std::uint32_t> select_neighbors(std::vector<Candidate> candidates,
                                                std::uint32_t m,
                                                [[maybe_unused]] std::span<const float> base) const {
        // Candidate scores must be similarities against `base`.
        assert(candidates.empty() ||
               std::abs(candidates.front().score -
                        similarity(params_.metric, vector(candidates.front().node), base)) < 1e-9);
        std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.node < b.node;
        });

        std::vector<std::uint32_t> kept;
        std::vector<std::uint32_t> pruned;
        kept.reserve(std::min<std::size_t>(m, candidates.size()));
        for (const Candidate& c : candidates) {
            if (kept.size() >= m) break;
            bool diverse = true;
            for (const std::uint32_t r : kept) {
                if (similarity(params_.metric, vector(c.node), vector(r)) >= c.score) {
                    diverse = false;
                    break;
                }
            }
            (diverse ? kept : pruned).push_back(c.node);
        }
        for (const std::uint32_t p : pruned) {
            if (kept.size() >= m) break;
            kept.push_back(p);
        }
        return kept;
    }

    /// Top-k approximate search. Descends greedily to layer 1, then runs a
    /// layer-0 expansion with `ef_search` candidates.
    std::vector<ScoredDoc> knn_search(std::span<const float> q, const SearchParams& sp) const {
        if (empty()) throw EmptyIndexError();
        sp.validate();
        if (q.size() != dim_) throw DimensionError(dim_, q.size());

        Candidate cur{entry_point_, score_against(q, entry_point_)};
        for (int layer = max_level_; layer >= 1; --layer) {
            cur = greedy_step(q, cur, layer);
        }

        const std::uint32_t ef = std::max(sp.ef_search, sp.k);
        const std::vector<Candidate> found = search_layer(q, {&cur, 1}, ef, 0);

        std::vector<ScoredDoc> out;
        out.reserve(found.size());
        for (const Candidate& c : found) out.push_back({docids_[c.node], c.score});
        std::sort(out.begin(), out.end(), scored_before);
        if (out.size() > sp.k) out.resize(sp.k);
        return out;
    }

private:
    double score_against(std::span<const float> q, std::uint32_t node) const {
        return similarity(params_.metric, q, vector(node));
    }

    /// Greedy walk at one layer: keep moving to the best strictly-improving
    /// neighbor until a local optimum is reached.
    Candidate greedy_step(std::span<const float> q, Candidate cur, int layer) const {
        bool improved = true;
        while (improved) {
            improved = false;
            for (const std::uint32_t nb : neighbors(cur.node, layer)) {
                const double s = score_against(q, nb);
                if (s > cur.score) {
                    cur = {nb, s};
                    improved = true;
                }
            }
        }
        return cur;
    }

    /// Append a reverse edge and re-select if the list now exceeds its cap.
    void add_link_with_prune(std::uint32_t node, std::uint32_t other, int layer) {
        auto& list = links_[node][static_cast<std::size_t>(layer)];
        list.push_back(other);
        const std::uint32_t cap = params_.max_degree(layer);
        if (list.size() <= cap) return;

        const std::span<const float> base = vector(node);
        std::vector<Candidate> candidates;
        candidates.reserve(list.size());
        for (const std::uint32_t nb : list) {
            candidates.push_back({nb, score_against(base, nb)});
        }
        list = select_neighbors(std::move(candidates), cap, base);
    }

    BuildParams params_;
    std::size_t dim_ = 0;
    std::uint32_t entry_point_ = kInvalidNode;
    int max_level_ = -1;
    std::vector<float> vectors_;                              // row-major, size() * dim_
    std::vector<std::string> docids_;                         // node -> external id
    std::vector<int> levels_;                                 // node -> top level
    std::vector<std::vector<std::vector<std::uint32_t>>> links_; // node -> layer -> neighbors
    std::unordered_map<std::string, std::uint32_t> id_of_;
    std::mt19937_64 rng_;
};

} // namespace tandem
