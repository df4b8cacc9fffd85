#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tandem/hnsw.hpp"
#include "tandem/parallel.hpp"
#include "tandem/store.hpp"
#include "tandem/vectors.hpp"

namespace tandem {

/// Throughput and latency summary for one benchmark run. Latency quantiles
/// are nearest-rank over every timed query execution (repeats x topics).
struct BenchReport {
    std::size_t query_count = 0;
    double total_wall_seconds = 0.0;
    double qps = 0.0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    double p99_ms = 0.0;
    std::size_t threads = 1;
    std::size_t ef_search = 0;
    std::string index_path;
};

namespace detail {

inline double nearest_rank(const std::vector<double>& sorted, double percentile) {
    if (sorted.empty()) return 0.0;
    const double pos = std::ceil(percentile / 100.0 * static_cast<double>(sorted.size()));
    const std::size_t idx = static_cast<std::size_t>(std::max(pos, 1.0)) - 1;
    return sorted[std::min(idx, sorted.size() - 1)];
}

} // namespace detail

/// Executes `warmup` untimed and `repeats` timed passes of every query
/// against the index. Only the search loop is timed; index and topic loading
/// stay outside the clock.
inline BenchReport bench_search(const IndexHandle& index, std::span<const DenseVector> queries,
                                const SearchParams& sp, std::size_t threads, std::size_t warmup,
                                std::size_t repeats) {
    BenchReport report;
    report.threads = threads;
    report.ef_search = sp.ef_search;
    if (queries.empty() || repeats == 0) return report;

    for (std::size_t pass = 0; pass < warmup; ++pass) {
        parallel_for(queries.size(), threads, [&](std::size_t i) { index.search(queries[i], sp); });
    }

    using clock = std::chrono::steady_clock;
    std::vector<double> latencies_ms(queries.size() * repeats, 0.0);
    for (std::size_t pass = 0; pass < repeats; ++pass) {
        const auto pass_start = clock::now();
        parallel_for(queries.size(), threads, [&](std::size_t i) {
            const auto start = clock::now();
            index.search(queries[i], sp);
            const std::chrono::duration<double, std::milli> elapsed = clock::now() - start;
            latencies_ms[pass * queries.size() + i] = elapsed.count();
        });
        const std::chrono::duration<double> pass_elapsed = clock::now() - pass_start;
        report.total_wall_seconds += pass_elapsed.count();
    }

    report.query_count = queries.size() * repeats;
    if (report.total_wall_seconds > 0.0) {
        report.qps = static_cast<double>(report.query_count) / report.total_wall_seconds;
    }
    std::sort(latencies_ms.begin(), latencies_ms.end());
    report.p50_ms = detail::nearest_rank(latencies_ms, 50.0);
    report.p95_ms = detail::nearest_rank(latencies_ms, 95.0);
    report.p99_ms = detail::nearest_rank(latencies_ms, 99.0);
    return report;
}

inline nlohmann::json bench_report_json(const BenchReport& r) {
    return nlohmann::json{
        {"queryCount", r.query_count},
        {"totalWallSeconds", r.total_wall_seconds},
        {"qps", r.qps},
        {"perQueryLatencyQuantiles",
         nlohmann::json{{"p50", r.p50_ms}, {"p95", r.p95_ms}, {"p99", r.p99_ms}}},
        {"threads", r.threads},
        {"efSearch", r.ef_search},
        {"indexPath", r.index_path},
    };
}

inline void print_bench_table(std::ostream& out, const BenchReport& r) {
    char buf[160];
    out << "metric              value\n";
    std::snprintf(buf, sizeof(buf), "%-19s %zu\n", "queries", r.query_count);
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-19s %.3f\n", "wall seconds", r.total_wall_seconds);
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-19s %.1f\n", "qps", r.qps);
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-19s %.3f\n", "p50 latency (ms)", r.p50_ms);
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-19s %.3f\n", "p95 latency (ms)", r.p95_ms);
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-19s %.3f\n", "p99 latency (ms)", r.p99_ms);
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-19s %zu\n", "threads", r.threads);
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-19s %zu\n", "efSearch", r.ef_search);
    out << buf;
}

} // namespace tandem
