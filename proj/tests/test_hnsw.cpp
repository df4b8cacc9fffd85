#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include <gtest/gtest.h>

#include "tandem/flat.hpp"
#include "tandem/hnsw.hpp"

namespace {

using namespace tandem;

std::vector<VectorRecord> random_records(std::size_t n, std::size_t dim, std::uint32_t seed,
                                         bool normalize = true) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> gauss;
    std::vector<VectorRecord> recs(n);
    for (std::size_t i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "doc%05zu", i);
        recs[i].docid = buf;
        recs[i].vector.resize(dim);
        for (float& x : recs[i].vector) x = gauss(rng);
        if (normalize) normalize_in_place(recs[i].vector);
    }
    return recs;
}

HnswGraph build_graph(const std::vector<VectorRecord>& recs, BuildParams params) {
    HnswGraph g(params);
    for (const auto& rec : recs) g.insert(rec.docid, rec.vector);
    return g;
}

/// A single-layer graph where every node links to every other node. On this
/// topology search_layer visits the whole corpus, so its output must equal
/// the exact top-ef scan.
HnswGraph fully_connected(const std::vector<VectorRecord>& recs, Metric metric) {
    const std::size_t n = recs.size();
    const std::size_t dim = recs[0].vector.size();
    std::vector<float> vectors;
    vectors.reserve(n * dim);
    std::vector<std::string> docids;
    std::vector<int> levels(n, 0);
    std::vector<std::vector<std::vector<std::uint32_t>>> links(n);
    for (std::size_t i = 0; i < n; ++i) {
        vectors.insert(vectors.end(), recs[i].vector.begin(), recs[i].vector.end());
        docids.push_back(recs[i].docid);
        links[i].resize(1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) links[i][0].push_back(static_cast<std::uint32_t>(j));
        }
    }
    BuildParams params;
    params.metric = metric;
    return HnswGraph::from_parts(params, dim, std::move(vectors), std::move(docids),
                                 std::move(levels), std::move(links), 0, 0);
}

// --- level assignment ------------------------------------------------------

TEST(LevelAssignment, KnownQuantiles) {
    const double mult = BuildParams{}.level_multiplier(); // M = 16
    EXPECT_EQ(level_for(1.0, mult), 0);
    EXPECT_EQ(level_for(0.5, mult), 0);   // -ln(0.5) * mult ~ 0.25
    EXPECT_EQ(level_for(0.06, mult), 1);  // -ln(0.06) * mult ~ 1.01
    EXPECT_EQ(level_for(0.003, mult), 2); // -ln(0.003) * mult ~ 2.09
}

TEST(LevelAssignment, TailFractionsMatchGeometricLaw) {
    // P(level >= L) = M^-L. The draw is deterministic for a fixed seed, and
    // the tolerances sit more than five standard errors out.
    const double mult = BuildParams{}.level_multiplier();
    std::mt19937_64 rng(42);
    const int n = 200000;
    int ge1 = 0, ge2 = 0, max_level = 0;
    for (int i = 0; i < n; ++i) {
        const int level = assign_level(rng, mult);
        ge1 += level >= 1;
        ge2 += level >= 2;
        max_level = std::max(max_level, level);
    }
    EXPECT_NEAR(static_cast<double>(ge1) / n, 1.0 / 16.0, 0.003);
    EXPECT_NEAR(static_cast<double>(ge2) / n, 1.0 / 256.0, 0.0008);
    EXPECT_LT(max_level, 8);
}

TEST(LevelAssignment, DeterministicForFixedSeed) {
    const double mult = BuildParams{}.level_multiplier();
    std::mt19937_64 a(7), b(7);
    for (int i = 0; i < 1000; ++i) {
        EXPECT_EQ(assign_level(a, mult), assign_level(b, mult));
    }
}

TEST(BuildParams, Validation) {
    BuildParams p;
    p.M = 1;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p.M = 8;
    p.ef_construction = 4;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p.ef_construction = 8;
    EXPECT_NO_THROW(p.validate());
    EXPECT_EQ(p.max_degree(0), 16u);
    EXPECT_EQ(p.max_degree(1), 8u);
    EXPECT_EQ(p.max_degree(3), 8u);
}

TEST(SearchParams, Validation) {
    SearchParams sp;
    sp.k = 0;
    EXPECT_THROW(sp.validate(), std::invalid_argument);
    sp.k = 10;
    sp.ef_search = 5;
    EXPECT_THROW(sp.validate(), std::invalid_argument);
}

// --- search_layer against the exact scan -----------------------------------

TEST(SearchLayer, ExactOnFullyConnectedGraph) {
    for (std::uint32_t trial = 0; trial < 20; ++trial) {
        const auto recs = random_records(50, 8, 300 + trial);
        const HnswGraph g = fully_connected(recs, Metric::Cosine);

        std::mt19937 rng(600 + trial);
        std::normal_distribution<float> gauss;
        DenseVector q(8);
        for (float& x : q) x = gauss(rng);
        normalize_in_place(q);

        const std::uint32_t ef = 10;
        const Candidate entry{0, similarity(Metric::Cosine, q, g.vector(0))};
        const auto found = g.search_layer(q, {&entry, 1}, ef, 0);
        const auto exact = flat_search(recs, q, ef, Metric::Cosine);

        ASSERT_EQ(found.size(), exact.size());
        for (std::size_t i = 0; i < found.size(); ++i) {
            EXPECT_EQ(g.docid(found[i].node), exact[i].docid);
            EXPECT_NEAR(found[i].score, exact[i].score, 1e-12);
        }
    }
}

TEST(SearchLayer, GreedyWalkNeverEndsBelowEntryScore) {
    BuildParams params;
    params.M = 4;
    params.ef_construction = 8;
    params.seed = 9;
    const auto recs = random_records(120, 6, 95);
    const HnswGraph g = build_graph(recs, params);

    std::mt19937 rng(96);
    std::normal_distribution<float> gauss;
    for (int trial = 0; trial < 50; ++trial) {
        DenseVector q(6);
        for (float& x : q) x = gauss(rng);
        normalize_in_place(q);
        const auto start = static_cast<std::uint32_t>(rng() % g.size());
        const Candidate entry{start, similarity(Metric::Cosine, q, g.vector(start))};
        const auto out = g.search_layer(q, {&entry, 1}, 1, 0);
        ASSERT_EQ(out.size(), 1u);
        EXPECT_GE(out[0].score, entry.score);
    }
}

TEST(KnnSearch, ExactOnFullyConnectedGraph) {
    const auto recs = random_records(40, 6, 31);
    const HnswGraph g = fully_connected(recs, Metric::Cosine);
    const DenseVector q = recs[5].vector;

    SearchParams sp;
    sp.ef_search = 40;
    sp.k = 7;
    const auto hits = g.knn_search(q, sp);
    const auto exact = flat_search(recs, q, 7, Metric::Cosine);
    ASSERT_EQ(hits.size(), 7u);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        EXPECT_EQ(hits[i].docid, exact[i].docid);
        EXPECT_NEAR(hits[i].score, exact[i].score, 1e-12);
    }
}

// --- select_neighbors ------------------------------------------------------

TEST(SelectNeighbors, OrthogonalCandidatesAllDiverse) {
    std::vector<VectorRecord> recs;
    recs.push_back({"e1", {1.0f, 0.0f, 0.0f}});
    recs.push_back({"e2", {0.0f, 1.0f, 0.0f}});
    recs.push_back({"e3", {0.0f, 0.0f, 1.0f}});
    const HnswGraph g = fully_connected(recs, Metric::Cosine);
    const DenseVector base = normalized(DenseVector{1.0f, 1.0f, 1.0f});

    std::vector<Candidate> cands;
    for (std::uint32_t i = 0; i < 3; ++i) {
        cands.push_back({i, similarity(Metric::Cosine, base, g.vector(i))});
    }
    const auto kept = g.select_neighbors(cands, 2, base);
    // All scores tie, so the kept pair is the two lowest node ids.
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_EQ(kept[0], 0u);
    EXPECT_EQ(kept[1], 1u);
}

TEST(SelectNeighbors, RedundantCandidatePrunedThenBackfilled) {
    // b is nearly a duplicate of a, c points elsewhere. With m=2 the
    // diversity rule drops b in favor of c; with m=3 the pruned b re-enters
    // through the keep-pruned fill.
    std::vector<VectorRecord> recs;
    recs.push_back({"a", normalized(DenseVector{0.90f, 0.10f, 0.0f})});
    recs.push_back({"b", normalized(DenseVector{0.89f, 0.11f, 0.0f})});
    recs.push_back({"c", normalized(DenseVector{0.50f, 0.0f, 0.50f})});
    const HnswGraph g = fully_connected(recs, Metric::Cosine);
    const DenseVector base{1.0f, 0.0f, 0.0f};

    std::vector<Candidate> cands;
    for (std::uint32_t i = 0; i < 3; ++i) {
        cands.push_back({i, similarity(Metric::Cosine, base, g.vector(i))});
    }
    auto kept = g.select_neighbors(cands, 2, base);
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_EQ(kept[0], 0u);
    EXPECT_EQ(kept[1], 2u);

    kept = g.select_neighbors(cands, 3, base);
    ASSERT_EQ(kept.size(), 3u);
    EXPECT_EQ(kept[2], 1u);
}

TEST(SelectNeighbors, ExactDuplicatesSurviveThroughFill) {
    std::vector<VectorRecord> recs;
    recs.push_back({"a", {1.0f, 0.0f}});
    recs.push_back({"b", {1.0f, 0.0f}});
    const HnswGraph g = fully_connected(recs, Metric::Cosine);
    const DenseVector base{1.0f, 0.0f};

    std::vector<Candidate> cands{{0, 1.0}, {1, 1.0}};
    const auto kept = g.select_neighbors(cands, 2, base);
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_EQ(kept[0], 0u);
    EXPECT_EQ(kept[1], 1u);

    // With cap 1 the duplicate is pruned and the fill has no room left.
    const auto one = g.select_neighbors(cands, 1, base);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0], 0u);
}

/// Re-derivation of the selection rule used as an oracle: walk candidates
/// best-first, keep c only if sim(c, base) beats sim(c, r) for every kept r,
/// then fill leftover slots with pruned candidates in order.
std::vector<std::uint32_t> oracle_select(std::vector<Candidate> cands, std::uint32_t m,
                                         std::span<const float> base, const HnswGraph& g) {
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.node < b.node;
    });
    std::vector<std::uint32_t> kept, pruned;
    for (const Candidate& c : cands) {
        if (kept.size() >= m) break;
        const double to_base = similarity(g.params().metric, g.vector(c.node), base);
        bool diverse = true;
        for (const std::uint32_t r : kept) {
            if (similarity(g.params().metric, g.vector(c.node), g.vector(r)) >= to_base) {
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

TEST(SelectNeighbors, MatchesOracleOnRandomCandidateSets) {
    std::mt19937 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 3 + rng() % 30;
        const auto recs = random_records(n, 8, 900 + trial);
        const HnswGraph g = fully_connected(recs, Metric::Cosine);

        std::normal_distribution<float> gauss;
        DenseVector base(8);
        for (float& x : base) x = gauss(rng);
        normalize_in_place(base);

        std::vector<Candidate> cands;
        for (std::uint32_t i = 0; i < n; ++i) {
            if (rng() % 4 == 0) continue;
            cands.push_back({i, similarity(Metric::Cosine, base, g.vector(i))});
        }
        const std::uint32_t m = 1 + rng() % 8;
        EXPECT_EQ(g.select_neighbors(cands, m, base), oracle_select(cands, m, base, g));
        EXPECT_EQ(g.select_neighbors(cands, m, base).size(),
                  std::min<std::size_t>(m, cands.size()));
    }
}

// --- insertion and graph structure -----------------------------------------

TEST(Insert, FirstInsertBecomesEntryPoint) {
    HnswGraph g{BuildParams{}};
    g.insert("first", normalized(DenseVector{3.0f, 4.0f}));
    EXPECT_EQ(g.size(), 1u);
    EXPECT_EQ(g.docid(g.entry_point()), "first");
    EXPECT_EQ(g.max_level(), g.node_level(g.entry_point()));
}

TEST(Insert, TwoNodesMutuallyLinkedAtLayerZero) {
    // Layer 0 holds every node, so a two-node graph must carry both edges
    // there no matter which levels the RNG assigned.
    BuildParams params;
    params.seed = 2;
    HnswGraph g(params);
    g.insert("a", normalized(DenseVector{1.0f, 0.0f}));
    g.insert("b", normalized(DenseVector{0.0f, 1.0f}));
    ASSERT_EQ(g.size(), 2u);
    const auto na = g.neighbors(0, 0);
    const auto nb = g.neighbors(1, 0);
    ASSERT_EQ(na.size(), 1u);
    ASSERT_EQ(nb.size(), 1u);
    EXPECT_EQ(na[0], 1u);
    EXPECT_EQ(nb[0], 0u);
}

TEST(Insert, DegreeCapsHoldEverywhere) {
    BuildParams params;
    params.M = 4;
    params.ef_construction = 16;
    params.seed = 5;
    const auto recs = random_records(300, 8, 41);
    const HnswGraph g = build_graph(recs, params);

    for (std::uint32_t node = 0; node < g.size(); ++node) {
        for (int layer = 0; layer <= g.node_level(node); ++layer) {
            const auto nbrs = g.neighbors(node, layer);
            EXPECT_LE(nbrs.size(), params.max_degree(layer));
            for (const std::uint32_t nb : nbrs) {
                EXPECT_LT(nb, g.size());
                EXPECT_NE(nb, node);
                EXPECT_GE(g.node_level(nb), layer);
            }
        }
    }
}

TEST(Insert, DegreeCapsHoldOnClusteredData) {
    // Near-duplicate vectors funnel every insertion into the same
    // neighborhood, exercising the reverse-edge prune path hard.
    BuildParams params;
    params.M = 4;
    params.ef_construction = 8;
    std::mt19937 rng(43);
    std::uniform_real_distribution<float> jitter(-0.01f, 0.01f);
    HnswGraph g(params);
    for (int i = 0; i < 100; ++i) {
        DenseVector v{1.0f + jitter(rng), jitter(rng), jitter(rng)};
        normalize_in_place(v);
        g.insert("doc" + std::to_string(100 + i), v);
    }
    for (std::uint32_t node = 0; node < g.size(); ++node) {
        for (int layer = 0; layer <= g.node_level(node); ++layer) {
            EXPECT_LE(g.neighbors(node, layer).size(), params.max_degree(layer));
        }
    }
}

std::size_t reachable_from_entry(const HnswGraph& g) {
    std::vector<char> seen(g.size(), 0);
    std::vector<std::uint32_t> stack{g.entry_point()};
    seen[g.entry_point()] = 1;
    std::size_t count = 0;
    while (!stack.empty()) {
        const std::uint32_t node = stack.back();
        stack.pop_back();
        ++count;
        for (const std::uint32_t nb : g.neighbors(node, 0)) {
            if (!seen[nb]) {
                seen[nb] = 1;
                stack.push_back(nb);
            }
        }
    }
    return count;
}

TEST(Insert, AllNodesReachableAtLayerZero) {
    BuildParams params;
    params.M = 8;
    params.ef_construction = 64;
    params.seed = 11;
    const auto recs = random_records(500, 12, 45);
    const HnswGraph g = build_graph(recs, params);
    EXPECT_EQ(reachable_from_entry(g), g.size());
}

TEST(Insert, EntryPointTracksMaxLevel) {
    BuildParams params;
    params.M = 4;
    params.ef_construction = 8;
    const auto recs = random_records(200, 4, 47);
    const HnswGraph g = build_graph(recs, params);
    EXPECT_EQ(g.node_level(g.entry_point()), g.max_level());
    for (std::uint32_t node = 0; node < g.size(); ++node) {
        EXPECT_LE(g.node_level(node), g.max_level());
    }
}

TEST(Insert, RejectsDuplicateDocidAndDimensionMismatch) {
    HnswGraph g{BuildParams{}};
    g.insert("a", {1.0f, 0.0f});
    EXPECT_THROW(g.insert("a", {0.0f, 1.0f}), DuplicateDocError);
    EXPECT_THROW(g.insert("b", {0.0f, 1.0f, 0.0f}), DimensionError);
    g.insert("b", {0.0f, 1.0f}); // duplicate vector, fresh docid: allowed
    EXPECT_EQ(g.size(), 2u);
}

TEST(KnnSearch, OneVectorGraph) {
    HnswGraph g{BuildParams{}};
    const DenseVector v = normalized(DenseVector{2.0f, 1.0f});
    g.insert("only", v);
    SearchParams sp;
    sp.k = 1;
    const auto hits = g.knn_search(v, sp);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].docid, "only");
    // Self-similarity is 1 up to float32 normalization rounding.
    EXPECT_NEAR(hits[0].score, 1.0, 1e-6);
}

TEST(KnnSearch, EmptyGraphThrows) {
    const HnswGraph g{BuildParams{}};
    SearchParams sp;
    EXPECT_THROW(g.knn_search(DenseVector{1.0f}, sp), EmptyIndexError);
}

TEST(KnnSearch, ScoresMatchIndependentRecomputation) {
    BuildParams params;
    params.seed = 3;
    const auto recs = random_records(400, 8, 51);
    const HnswGraph g = build_graph(recs, params);

    std::unordered_map<std::string, DenseVector> by_id;
    for (const auto& rec : recs) by_id.emplace(rec.docid, rec.vector);

    SearchParams sp;
    sp.ef_search = 64;
    sp.k = 10;
    for (std::uint32_t t = 0; t < 20; ++t) {
        const DenseVector& q = recs[t * 17].vector;
        for (const ScoredDoc& hit : g.knn_search(q, sp)) {
            EXPECT_NEAR(hit.score, similarity(Metric::Cosine, q, by_id.at(hit.docid)), 1e-6);
        }
    }
}

double recall_vs_flat(const HnswGraph& g, const std::vector<VectorRecord>& recs,
                      std::span<const DenseVector> queries, const SearchParams& sp) {
    double hit_total = 0.0;
    for (const DenseVector& q : queries) {
        const auto approx = g.knn_search(q, sp);
        const auto exact = flat_search(recs, q, sp.k, g.params().metric);
        std::set<std::string> truth;
        for (const auto& e : exact) truth.insert(e.docid);
        std::size_t hits = 0;
        for (const auto& a : approx) hits += truth.count(a.docid);
        hit_total += static_cast<double>(hits) / static_cast<double>(exact.size());
    }
    return hit_total / static_cast<double>(queries.size());
}

TEST(KnnSearch, HighRecallAgainstFlatOracle) {
    BuildParams params; // M = 16, efC = 100
    params.seed = 9;
    const auto recs = random_records(2000, 16, 53);
    const HnswGraph g = build_graph(recs, params);

    std::mt19937 rng(54);
    std::normal_distribution<float> gauss;
    std::vector<DenseVector> queries(50);
    for (auto& q : queries) {
        q.resize(16);
        for (float& x : q) x = gauss(rng);
        normalize_in_place(q);
    }

    SearchParams sp;
    sp.ef_search = 200;
    sp.k = 10;
    EXPECT_GE(recall_vs_flat(g, recs, queries, sp), 0.95);
}

TEST(KnnSearch, RecallImprovesWithEf) {
    BuildParams params;
    params.M = 8;
    params.ef_construction = 40;
    params.seed = 13;
    const auto recs = random_records(1500, 24, 55);
    const HnswGraph g = build_graph(recs, params);

    std::mt19937 rng(56);
    std::normal_distribution<float> gauss;
    std::vector<DenseVector> queries(40);
    for (auto& q : queries) {
        q.resize(24);
        for (float& x : q) x = gauss(rng);
        normalize_in_place(q);
    }

    SearchParams lo, hi;
    lo.ef_search = 10;
    lo.k = 10;
    hi.ef_search = 400;
    hi.k = 10;
    const double r_lo = recall_vs_flat(g, recs, queries, lo);
    const double r_hi = recall_vs_flat(g, recs, queries, hi);
    EXPECT_GE(r_hi, r_lo);
    EXPECT_GE(r_hi, 0.95);
}

// --- determinism -----------------------------------------------------------

bool graphs_identical(const HnswGraph& a, const HnswGraph& b) {
    if (a.size() != b.size() || a.max_level() != b.max_level() ||
        a.entry_point() != b.entry_point()) {
        return false;
    }
    for (std::uint32_t node = 0; node < a.size(); ++node) {
        if (a.docid(node) != b.docid(node) || a.node_level(node) != b.node_level(node)) {
            return false;
        }
        for (int layer = 0; layer <= a.node_level(node); ++layer) {
            const auto na = a.neighbors(node, layer);
            const auto nb = b.neighbors(node, layer);
            if (!std::equal(na.begin(), na.end(), nb.begin(), nb.end())) return false;
        }
    }
    return true;
}

TEST(Determinism, IdenticalBuildsForIdenticalSeed) {
    const auto recs = random_records(500, 8, 61);
    BuildParams params;
    params.M = 8;
    params.ef_construction = 32;
    params.seed = 99;
    const HnswGraph a = build_graph(recs, params);
    const HnswGraph b = build_graph(recs, params);
    EXPECT_TRUE(graphs_identical(a, b));

    SearchParams sp;
    sp.ef_search = 50;
    sp.k = 5;
    for (int t = 0; t < 10; ++t) {
        const DenseVector& q = recs[t * 31].vector;
        EXPECT_EQ(a.knn_search(q, sp), b.knn_search(q, sp));
    }
}

TEST(Determinism, SeedChangesLevelSequence) {
    const auto recs = random_records(300, 8, 63);
    BuildParams a_params;
    a_params.seed = 1;
    BuildParams b_params;
    b_params.seed = 2;
    const HnswGraph a = build_graph(recs, a_params);
    const HnswGraph b = build_graph(recs, b_params);

    bool any_level_differs = false;
    for (std::uint32_t node = 0; node < a.size(); ++node) {
        if (a.node_level(node) != b.node_level(node)) {
            any_level_differs = true;
            break;
        }
    }
    EXPECT_TRUE(any_level_differs);
}

// --- from_parts validation -------------------------------------------------

TEST(FromParts, RejectsInconsistentParts) {
    BuildParams params;
    EXPECT_THROW(HnswGraph::from_parts(params, 2, {1.0f, 0.0f}, {"a", "b"}, {0, 0},
                                       {{{1}}, {{0}}}, 0, 0),
                 std::invalid_argument); // vectors shorter than n * dim
    EXPECT_THROW(HnswGraph::from_parts(params, 2, {1.0f, 0.0f, 0.0f, 1.0f}, {"a", "a"}, {0, 0},
                                       {{{1}}, {{0}}}, 0, 0),
                 DuplicateDocError);
    EXPECT_THROW(HnswGraph::from_parts(params, 2, {1.0f, 0.0f, 0.0f, 1.0f}, {"a", "b"}, {0, 1},
                                       {{{1}}, {{0}, {}}}, 0, 1),
                 std::invalid_argument); // entry point level != max level
}

} // namespace
