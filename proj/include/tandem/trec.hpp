#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tandem/errors.hpp"
#include "tandem/vectors.hpp"

namespace tandem {

struct RunEntry {
    std::string docid;
    double score = 0.0;
    std::uint32_t rank = 0;

    bool operator==(const RunEntry&) const = default;
};

/// Per-query ranked result lists. Ranks are contiguous from 1, scores
/// non-increasing within a query, docids unique within a query.
struct Ranking {
    std::map<std::string, std::vector<RunEntry>> queries;

    bool operator==(const Ranking&) const = default;
};

/// Relevance judgments: (qid, docid) -> grade >= 0.
struct QrelsTable {
    std::map<std::string, std::map<std::string, int>> judgments;
};

inline std::vector<RunEntry> to_run_entries(const std::vector<ScoredDoc>& scored) {
    std::vector<RunEntry> out;
    out.reserve(scored.size());
    for (std::uint32_t i = 0; i < scored.size(); ++i) {
        out.push_back({scored[i].docid, scored[i].score, i + 1});
    }
    return out;
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) fields.push_back(line.substr(start, i - start));
    }
    return fields;
}

template <typename T>
inline T parse_number(std::string_view text, const std::string& file, std::size_t line,
                      const char* what) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ParseError(file, line, std::string("bad ") + what + ": '" + std::string(text) + "'");
    }
    return value;
}

/// TREC run line: `qid Q0 docid rank score tag`, score with 6 decimals.
inline std::string format_run_line(std::string_view qid, std::string_view docid,
                                   std::uint32_t rank, double score, std::string_view tag) {
    char score_buf[64];
    std::snprintf(score_buf, sizeof(score_buf), "%.6f", score);
    std::string line;
    line.reserve(qid.size() + docid.size() + tag.size() + 32);
    line.append(qid).append(" Q0 ").append(docid).push_back(' ');
    line.append(std::to_string(rank)).push_back(' ');
    line.append(score_buf).push_back(' ');
    line.append(tag);
    return line;
}

} // namespace detail

/// Parse a TREC run file. Strict mode additionally enforces the Ranking
/// invariants (contiguous ranks, non-increasing scores, unique docids) and
/// reports the offending line.
inline Ranking load_run(const std::filesystem::path& path, bool strict = true) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string file = path.string();

    Ranking run;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::vector<std::string_view> f = detail::split_ws(line);
        if (f.size() != 6) {
            throw ParseError(file, lineno,
                             "expected 6 fields (qid Q0 docid rank score tag), got " +
                                 std::to_string(f.size()));
        }
        const std::string qid(f[0]);
        const std::string docid(f[2]);
        const auto rank = detail::parse_number<std::uint32_t>(f[3], file, lineno, "rank");
        const auto score = detail::parse_number<double>(f[4], file, lineno, "score");

        std::vector<RunEntry>& entries = run.queries[qid];
        if (strict) {
            const std::uint32_t expected = static_cast<std::uint32_t>(entries.size()) + 1;
            if (rank != expected) {
                throw ParseError(file, lineno,
                                 "rank " + std::to_string(rank) + " out of order for query " +
                                     qid + " (expected " + std::to_string(expected) + ")");
            }
            if (!entries.empty() && score > entries.back().score) {
                throw ParseError(file, lineno, "score increases within query " + qid);
            }
            for (const RunEntry& e : entries) {
                if (e.docid == docid) {
                    throw ParseError(file, lineno, "duplicate docid " + docid + " in query " + qid);
                }
            }
        }
        entries.push_back({docid, score, rank});
    }
    return run;
}

inline void write_run(const Ranking& run, const std::string& tag,
                      const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& [qid, entries] : run.queries) {
        for (const RunEntry& e : entries) {
            out << detail::format_run_line(qid, e.docid, e.rank, e.score, tag) << '\n';
        }
    }
    if (!out) throw IoError("short write to " + path.string());
}

/// Parse qrels: `qid 0 docid grade` per line, whitespace separated.
inline QrelsTable load_qrels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string file = path.string();

    QrelsTable qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::vector<std::string_view> f = detail::split_ws(line);
        if (f.size() != 4) {
            throw ParseError(file, lineno, "expected 4 fields (qid 0 docid grade), got " +
                                               std::to_string(f.size()));
        }
        const auto grade = detail::parse_number<int>(f[3], file, lineno, "grade");
        if (grade < 0) throw ParseError(file, lineno, "negative relevance grade");
        const auto [it, inserted] =
            qrels.judgments[std::string(f[0])].emplace(std::string(f[2]), grade);
        if (!inserted) {
            throw ParseError(file, lineno, "duplicate judgment for (" + std::string(f[0]) + ", " +
                                               std::string(f[2]) + ")");
        }
    }
    return qrels;
}

} // namespace tandem
