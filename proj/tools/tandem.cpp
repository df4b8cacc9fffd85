// tandem: command-line frontend for the dense + sparse retrieval toolkit.
//
// Exit codes: 0 on success, 1 on runtime/IO errors, 2 on usage errors.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <span>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tandem/tandem.hpp"

namespace {

using namespace tandem;

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point start) {
    return std::chrono::duration<double>(clock_type::now() - start).count();
}

/// Single-dash spellings of the multi-character flags are accepted for
/// continuity with the usual retrieval-toolkit surface (-efC 100 and so on);
/// they are rewritten to the canonical double-dash form before parsing.
std::vector<std::string> canonicalize_flags(int argc, char** argv) {
    static const char* kLongFlags[] = {"-efC", "-efSearch", "-hits", "-threads", "-topicfield"};
    std::vector<std::string> args;
    args.reserve(static_cast<std::size_t>(argc));
    bool positional_only = false;
    for (int i = 0; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--") positional_only = true;
        if (!positional_only) {
            for (const char* flag : kLongFlags) {
                const std::size_t len = std::string_view(flag).size();
                if (arg.compare(0, len, flag) == 0 &&
                    (arg.size() == len || arg[len] == '=')) {
                    arg.insert(arg.begin(), '-');
                    break;
                }
            }
        }
        args.push_back(std::move(arg));
    }
    return args;
}

/// Writes one run file in topic order; the per-topic result lists were
/// produced independently, so output bytes do not depend on thread count.
void write_run_in_order(const std::filesystem::path& path, std::span<const Topic> topics,
                        std::span<const std::vector<ScoredDoc>> results, const std::string& tag) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (std::size_t i = 0; i < topics.size(); ++i) {
        for (std::size_t r = 0; r < results[i].size(); ++r) {
            out << detail::format_run_line(topics[i].qid, results[i][r].docid,
                                           static_cast<std::uint32_t>(r + 1),
                                           results[i][r].score, tag)
                << '\n';
        }
    }
    if (!out) throw IoError("short write to " + path.string());
}

void require_vector_topics(std::span<const Topic> topics, std::size_t dim) {
    for (const Topic& t : topics) {
        if (!t.has_vector) {
            throw std::runtime_error("topic " + t.qid + " has no vector payload");
        }
        if (t.vector.size() != dim) {
            throw std::runtime_error("topic " + t.qid + ": dimension mismatch (expected " +
                                     std::to_string(dim) + ", got " +
                                     std::to_string(t.vector.size()) + ")");
        }
    }
}

std::uint32_t effective_ef(std::uint32_t ef_search, std::uint32_t hits) {
    if (ef_search < hits) {
        std::cerr << "warning: efSearch " << ef_search << " raised to " << hits
                  << " (efSearch must be >= hits)\n";
        return hits;
    }
    return ef_search;
}

// --- subcommand bodies -----------------------------------------------------

struct IndexHnswArgs {
    std::string input;
    std::string index;
    std::uint32_t threads = 1;
    std::uint32_t m = 16;
    std::uint32_t ef_construction = 100;
    std::uint64_t seed = 42;
    std::uint64_t segment_size = 0;
    std::string metric = "cosine";
    bool optimize_after = false;
};

void cmd_index_hnsw(const IndexHnswArgs& a) {
    BuildParams params;
    params.M = a.m;
    params.ef_construction = a.ef_construction;
    params.seed = a.seed;
    params.metric = parse_metric(a.metric);
    params.validate();

    const auto start = clock_type::now();
    const std::vector<VectorRecord> docs = load_dense_collection(a.input);
    IndexManifest manifest = ingest(docs, params, {a.threads, a.segment_size}, a.index);
    if (a.optimize_after) manifest = optimize(a.index, params, a.threads);
    const double wall = seconds_since(start);

    char buf[160];
    std::snprintf(buf, sizeof(buf), "indexed %llu docs in %.2f s\n",
                  static_cast<unsigned long long>(manifest.total_docs()), wall);
    std::cout << buf;
    std::cout << "segments: " << manifest.segments.size()
              << (manifest.optimized ? " (optimized)" : "") << '\n';
    std::cout << "index size: " << index_size_bytes(a.index) << " bytes\n";
}

struct SearchHnswArgs {
    std::string index;
    std::string topics;
    std::string output;
    std::uint32_t hits = 1000;
    std::uint32_t ef_search = 1000;
    std::uint32_t threads = 1;
    std::string topicfield = "vector";
    std::string tag = "tandem-hnsw";
};

void cmd_search_hnsw(const SearchHnswArgs& a) {
    const IndexHandle index = IndexHandle::open(a.index);
    const std::vector<Topic> topics = load_topics(a.topics);
    require_vector_topics(topics, index.manifest().dim);

    SearchParams sp;
    sp.k = a.hits;
    sp.ef_search = effective_ef(a.ef_search, a.hits);
    const Metric metric = index.manifest().metric;

    const auto start = clock_type::now();
    std::vector<std::vector<ScoredDoc>> results(topics.size());
    parallel_for(topics.size(), a.threads, [&](std::size_t i) {
        const DenseVector q = prepared_query(metric, topics[i].vector);
        results[i] = index.search(q, sp);
    });
    const double wall = seconds_since(start);

    write_run_in_order(a.output, topics, results, a.tag);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "searched %zu topics in %.2f s (%.1f qps)\n", topics.size(),
                  wall, wall > 0.0 ? static_cast<double>(topics.size()) / wall : 0.0);
    std::cout << buf;
}

struct SearchFlatArgs {
    std::string index;
    std::string collection;
    std::string topics;
    std::string output;
    std::uint32_t hits = 1000;
    std::string metric = "cosine";
    std::string topicfield = "vector";
    std::string tag = "tandem-flat";
};

void cmd_search_flat(const SearchFlatArgs& a) {
    if (a.index.empty() == a.collection.empty()) {
        throw std::invalid_argument("provide exactly one of --index or --collection");
    }

    FlatIndex flat{Metric::Cosine};
    if (!a.collection.empty()) {
        flat = FlatIndex(parse_metric(a.metric));
        for (VectorRecord& rec : load_dense_collection(a.collection)) {
            flat.add(std::move(rec.docid), std::move(rec.vector));
        }
    } else {
        const IndexHandle index = IndexHandle::open(a.index);
        flat = FlatIndex(index.manifest().metric);
        for (const HnswGraph& g : index.segments()) {
            for (std::uint32_t node = 0; node < g.size(); ++node) {
                const auto v = g.vector(node);
                flat.add(g.docid(node), DenseVector(v.begin(), v.end()));
            }
        }
    }

    const std::vector<Topic> topics = load_topics(a.topics);
    require_vector_topics(topics, flat.dim());

    std::vector<std::vector<ScoredDoc>> results(topics.size());
    for (std::size_t i = 0; i < topics.size(); ++i) {
        const DenseVector q = prepared_query(flat.metric(), topics[i].vector);
        results[i] = flat.search(q, a.hits);
    }
    write_run_in_order(a.output, topics, results, a.tag);
    std::cout << "searched " << topics.size() << " topics over " << flat.size() << " docs\n";
}

struct IndexSparseArgs {
    std::string input;
    std::string index;
};

void cmd_index_sparse(const IndexSparseArgs& a) {
    const auto start = clock_type::now();
    const std::vector<TextRecord> docs = load_text_collection(a.input);
    const InvertedIndex idx = build_inverted_index(docs);
    idx.save(a.index);
    const double wall = seconds_since(start);

    char buf[160];
    std::snprintf(buf, sizeof(buf), "indexed %llu docs in %.2f s\n",
                  static_cast<unsigned long long>(idx.doc_count()), wall);
    std::cout << buf;
    std::cout << "index size: " << index_size_bytes(a.index) << " bytes\n";
}

struct SearchSparseArgs {
    std::string index;
    std::string queries;
    std::string output;
    std::uint32_t hits = 1000;
    double k1 = 0.9;
    double b = 0.4;
    std::string tag = "tandem-bm25";
};

void cmd_search_sparse(const SearchSparseArgs& a) {
    const InvertedIndex idx = InvertedIndex::load(a.index);
    const std::vector<Topic> queries = load_queries_tsv(a.queries);
    const Bm25Params params{a.k1, a.b};
    params.validate();

    std::vector<std::vector<ScoredDoc>> results(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        results[i] = idx.search(queries[i].text, a.hits, params);
    }
    // Queries that match nothing produce no lines and stay absent from the run.
    write_run_in_order(a.output, queries, results, a.tag);
    std::cout << "searched " << queries.size() << " queries over " << idx.doc_count()
              << " docs\n";
}

struct FuseArgs {
    std::vector<std::string> runs;
    std::string output;
    std::string method = "rrf";
    double alpha = 0.5;
    std::uint32_t rrf_k = 60;
    std::uint32_t depth = 1000;
    std::string tag = "tandem-fuse";
};

void cmd_fuse(const FuseArgs& a) {
    std::vector<Ranking> runs;
    runs.reserve(a.runs.size());
    for (const std::string& path : a.runs) runs.push_back(load_run(path));

    FusionParams params;
    params.method = a.method == "rrf" ? FusionMethod::RRF : FusionMethod::Linear;
    params.alpha = a.alpha;
    params.rrf_k = a.rrf_k;
    params.depth = a.depth;

    const Ranking fused = params.method == FusionMethod::RRF
                              ? rrf_fuse(runs, params)
                              : linear_fuse(runs[0], runs[1], params);
    write_run(fused, a.tag, a.output);
    std::cout << "fused " << runs.size() << " runs over " << fused.queries.size()
              << " queries\n";
}

struct EvalArgs {
    std::string run;
    std::string qrels;
    std::vector<std::string> metrics = {"mrr@10", "recall@1000", "ndcg@10"};
};

/// Accepts mrr@N, recall@N, ndcg@N. Returns an error message for anything
/// else so that CLI validation can reject the flag.
std::string check_metric_spec(const std::string& spec) {
    const auto at = spec.find('@');
    if (at != std::string::npos) {
        const std::string name = spec.substr(0, at);
        const std::string depth = spec.substr(at + 1);
        const bool numeric = !depth.empty() && depth.find_first_not_of("0123456789") ==
                                                   std::string::npos;
        if (numeric && depth != "0" &&
            (name == "mrr" || name == "recall" || name == "ndcg")) {
            return {};
        }
    }
    return "invalid metric '" + spec + "' (expected mrr@N, recall@N, or ndcg@N)";
}

void cmd_eval(const EvalArgs& a) {
    const Ranking run = load_run(a.run);
    const QrelsTable qrels = load_qrels(a.qrels);
    for (const std::string& spec : a.metrics) {
        const auto at = spec.find('@');
        const std::string name = spec.substr(0, at);
        const auto cutoff = static_cast<std::size_t>(std::stoull(spec.substr(at + 1)));
        double value = 0.0;
        if (name == "mrr") {
            value = mrr_at(run, qrels, cutoff);
        } else if (name == "recall") {
            value = recall_at(run, qrels, cutoff);
        } else {
            value = ndcg_at(run, qrels, cutoff);
        }
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s\t%.4f\n", spec.c_str(), value);
        std::cout << buf;
    }
}

struct BenchArgs {
    std::string index;
    std::string topics;
    std::uint32_t hits = 10;
    std::uint32_t ef_search = 1000;
    std::uint32_t threads = 1;
    std::uint32_t warmup = 1;
    std::uint32_t repeats = 3;
    std::string topicfield = "vector";
};

void cmd_bench(const BenchArgs& a) {
    const IndexHandle index = IndexHandle::open(a.index);
    const std::vector<Topic> topics = load_topics(a.topics);
    require_vector_topics(topics, index.manifest().dim);

    std::vector<DenseVector> queries;
    queries.reserve(topics.size());
    for (const Topic& t : topics) {
        queries.push_back(prepared_query(index.manifest().metric, t.vector));
    }

    SearchParams sp;
    sp.k = a.hits;
    sp.ef_search = effective_ef(a.ef_search, a.hits);

    BenchReport report = bench_search(index, queries, sp, a.threads, a.warmup, a.repeats);
    report.index_path = a.index;
    std::cout << bench_report_json(report).dump(2) << '\n';
    print_bench_table(std::cout, report);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unified dense and sparse retrieval toolkit: segmented HNSW and exact "
                 "dense search, BM25, rank fusion, evaluation, and benchmarking."};
    app.require_subcommand(1);
    app.set_version_flag("--version", "tandem 1.0.0");

    IndexHnswArgs index_hnsw;
    auto* ih = app.add_subcommand("index-hnsw", "Build a segmented HNSW index from a dense "
                                               "JSON-lines collection");
    ih->add_option("--input", index_hnsw.input, "Dense collection (JSON lines: docid, vector)")
        ->required()
        ->check(CLI::ExistingFile);
    ih->add_option("--index", index_hnsw.index, "Index directory to create")->required();
    ih->add_option("--threads", index_hnsw.threads, "Index writer threads")
        ->check(CLI::PositiveNumber);
    ih->add_option("-M,--M", index_hnsw.m, "Max links per node above layer 0")
        ->check(CLI::Range(2u, 1u << 20));
    ih->add_option("--efC", index_hnsw.ef_construction, "Construction candidate list size")
        ->check(CLI::PositiveNumber);
    ih->add_option("--seed", index_hnsw.seed, "Level RNG seed");
    ih->add_option("--segment-size", index_hnsw.segment_size,
                   "Docs per segment before a worker starts a new one (0 = unbounded)");
    ih->add_option("--metric", index_hnsw.metric, "Similarity metric")
        ->check(CLI::IsMember({"dot", "cosine"}));
    ih->add_flag("--optimize", index_hnsw.optimize_after, "Merge segments after ingest");
    ih->callback([&] { cmd_index_hnsw(index_hnsw); });

    SearchHnswArgs search_hnsw;
    auto* sh = app.add_subcommand("search-hnsw", "Search an HNSW index with dense topics");
    sh->add_option("--index", search_hnsw.index, "Index directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    sh->add_option("--topics", search_hnsw.topics, "Topics (JSON lines: qid, vector)")
        ->required()
        ->check(CLI::ExistingFile);
    sh->add_option("--output", search_hnsw.output, "TREC run output path")->required();
    sh->add_option("--hits", search_hnsw.hits, "Results per topic")->check(CLI::PositiveNumber);
    sh->add_option("--efSearch", search_hnsw.ef_search, "Search candidate list size")
        ->check(CLI::PositiveNumber);
    sh->add_option("--threads", search_hnsw.threads, "Query worker threads")
        ->check(CLI::PositiveNumber);
    sh->add_option("--topicfield", search_hnsw.topicfield, "Topic payload field")
        ->check(CLI::IsMember({"vector"}));
    sh->add_option("--tag", search_hnsw.tag, "Run tag (column 6)");
    sh->callback([&] { cmd_search_hnsw(search_hnsw); });

    SearchFlatArgs search_flat;
    auto* sf = app.add_subcommand("search-flat", "Exact brute-force search (recall oracle)");
    sf->add_option("--index", search_flat.index, "HNSW index directory to scan exactly")
        ->check(CLI::ExistingDirectory);
    sf->add_option("--collection", search_flat.collection,
                   "Dense collection to scan exactly (JSON lines)")
        ->check(CLI::ExistingFile);
    sf->add_option("--topics", search_flat.topics, "Topics (JSON lines: qid, vector)")
        ->required()
        ->check(CLI::ExistingFile);
    sf->add_option("--output", search_flat.output, "TREC run output path")->required();
    sf->add_option("--hits", search_flat.hits, "Results per topic")->check(CLI::PositiveNumber);
    sf->add_option("--metric", search_flat.metric, "Similarity metric (collection input only)")
        ->check(CLI::IsMember({"dot", "cosine"}));
    sf->add_option("--topicfield", search_flat.topicfield, "Topic payload field")
        ->check(CLI::IsMember({"vector"}));
    sf->add_option("--tag", search_flat.tag, "Run tag (column 6)");
    sf->callback([&] { cmd_search_flat(search_flat); });

    IndexSparseArgs index_sparse;
    auto* is = app.add_subcommand("index-sparse", "Build a BM25 inverted index from a text "
                                                 "JSON-lines collection");
    is->add_option("--input", index_sparse.input, "Text collection (JSON lines: docid, contents)")
        ->required()
        ->check(CLI::ExistingFile);
    is->add_option("--index", index_sparse.index, "Index directory to create")->required();
    is->callback([&] { cmd_index_sparse(index_sparse); });

    SearchSparseArgs search_sparse;
    auto* ss = app.add_subcommand("search-sparse", "Search a BM25 index with text queries");
    ss->add_option("--index", search_sparse.index, "Index directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    ss->add_option("--queries", search_sparse.queries, "Queries (TSV: qid<TAB>text)")
        ->required()
        ->check(CLI::ExistingFile);
    ss->add_option("--output", search_sparse.output, "TREC run output path")->required();
    ss->add_option("--hits", search_sparse.hits, "Results per query")->check(CLI::PositiveNumber);
    ss->add_option("--k1", search_sparse.k1, "BM25 k1")->check(CLI::NonNegativeNumber);
    ss->add_option("--b", search_sparse.b, "BM25 b")->check(CLI::Range(0.0, 1.0));
    ss->add_option("--tag", search_sparse.tag, "Run tag (column 6)");
    ss->callback([&] { cmd_search_sparse(search_sparse); });

    FuseArgs fuse;
    auto* fu = app.add_subcommand("fuse", "Fuse two runs by reciprocal rank or linear "
                                          "interpolation");
    fu->add_option("--runs", fuse.runs, "Exactly two TREC run files")
        ->required()
        ->expected(2)
        ->check(CLI::ExistingFile);
    fu->add_option("--output", fuse.output, "Fused TREC run output path")->required();
    fu->add_option("--method", fuse.method, "Fusion method")
        ->check(CLI::IsMember({"rrf", "linear"}));
    fu->add_option("--alpha", fuse.alpha, "Linear: weight on the first run")
        ->check(CLI::Range(0.0, 1.0));
    fu->add_option("--rrf-k", fuse.rrf_k, "RRF rank offset")->check(CLI::PositiveNumber);
    fu->add_option("--depth", fuse.depth, "Ranks considered per input run")
        ->check(CLI::PositiveNumber);
    fu->add_option("--tag", fuse.tag, "Run tag (column 6)");
    fu->callback([&] { cmd_fuse(fuse); });

    EvalArgs eval;
    auto* ev = app.add_subcommand("eval", "Score a run against qrels");
    ev->add_option("--run", eval.run, "TREC run file")->required()->check(CLI::ExistingFile);
    ev->add_option("--qrels", eval.qrels, "Qrels file")->required()->check(CLI::ExistingFile);
    ev->add_option("--metrics", eval.metrics, "Metrics to report (mrr@N, recall@N, ndcg@N)")
        ->check(CLI::Validator(check_metric_spec, "METRIC"));
    ev->callback([&] { cmd_eval(eval); });

    BenchArgs bench;
    auto* be = app.add_subcommand("bench", "Measure query throughput and latency");
    be->add_option("--index", bench.index, "Index directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    be->add_option("--topics", bench.topics, "Topics (JSON lines: qid, vector)")
        ->required()
        ->check(CLI::ExistingFile);
    be->add_option("--hits", bench.hits, "Results per topic")->check(CLI::PositiveNumber);
    be->add_option("--efSearch", bench.ef_search, "Search candidate list size")
        ->check(CLI::PositiveNumber);
    be->add_option("--threads", bench.threads, "Query worker threads")
        ->check(CLI::PositiveNumber);
    be->add_option("--warmup", bench.warmup, "Untimed passes before measuring");
    be->add_option("--repeats", bench.repeats, "Timed passes")->check(CLI::PositiveNumber);
    be->add_option("--topicfield", bench.topicfield, "Topic payload field")
        ->check(CLI::IsMember({"vector"}));
    be->callback([&] { cmd_bench(bench); });

    const std::vector<std::string> args = canonicalize_flags(argc, argv);
    std::vector<const char*> argv2;
    argv2.reserve(args.size());
    for (const std::string& a : args) argv2.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv2.size()), argv2.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
