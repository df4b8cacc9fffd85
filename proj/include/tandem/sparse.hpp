#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tandem/crc32.hpp"
#include "tandem/errors.hpp"
#include "tandem/store.hpp"
#include "tandem/vectors.hpp"

namespace tandem {

/// A document from a text collection.
struct TextRecord {
    std::string docid;
    std::string contents;
};

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;

    void validate() const {
        if (k1 < 0.0) throw std::invalid_argument("k1 must be >= 0");
        if (b < 0.0 || b > 1.0) throw std::invalid_argument("b must be in [0, 1]");
    }
};

/// Lowercase and split on non-alphanumeric characters. ASCII letters are
/// case-folded; bytes outside ASCII are kept as-is so multi-byte UTF-8
/// sequences stay inside one token. No stemming, no stopwords.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char ch : text) {
        const auto uc = static_cast<unsigned char>(ch);
        if (std::isalnum(uc) || uc >= 0x80) {
            current.push_back(static_cast<char>(std::tolower(uc)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

/// Per-term weight of the BM25 scoring function:
///   idf(df) * tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl))
/// with the non-negative idf(df) = ln(1 + (N - df + 0.5)/(df + 0.5)).
inline double bm25_term_weight(double tf, double df, double doc_len, std::uint64_t doc_count,
                               double avg_doc_len, const Bm25Params& p) {
    const double idf =
        std::log(1.0 + (static_cast<double>(doc_count) - df + 0.5) / (df + 0.5));
    const double tf_part =
        tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * doc_len / avg_doc_len));
    return idf * tf_part;
}

struct Posting {
    std::uint32_t doc; ///< internal doc id
    std::uint32_t tf;
};

/// In-memory inverted index with document-length statistics.
class InvertedIndex {
public:
    void add_document(const std::string& docid, std::string_view contents) {
        if (id_of_.count(docid)) throw DuplicateDocError(docid);
        const auto doc = static_cast<std::uint32_t>(docids_.size());
        id_of_.emplace(docid, doc);
        docids_.push_back(docid);

        const std::vector<std::string> tokens = tokenize(contents);
        doc_lens_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total_tokens_ += tokens.size();

        std::map<std::string_view, std::uint32_t> tf;
        for (const std::string& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf) {
            postings_[std::string(term)].push_back({doc, count});
        }
    }

    std::uint64_t doc_count() const { return docids_.size(); }
    double avg_doc_len() const {
        return doc_count() == 0 ? 0.0
                                : static_cast<double>(total_tokens_) /
                                      static_cast<double>(doc_count());
    }
    std::uint32_t doc_len(std::uint32_t doc) const { return doc_lens_[doc]; }
    const std::string& docid(std::uint32_t doc) const { return docids_[doc]; }

    std::uint32_t df(const std::string& term) const {
        const auto it = postings_.find(term);
        return it == postings_.end() ? 0 : static_cast<std::uint32_t>(it->second.size());
    }

    std::span<const Posting> postings(const std::string& term) const {
        static const std::vector<Posting> empty;
        const auto it = postings_.find(term);
        return it == postings_.end() ? empty : it->second;
    }

    /// Term-at-a-time BM25 over a hash accumulator. Duplicate query terms
    /// contribute once per occurrence; documents matching no term are
    /// excluded. Ties broken by ascending docid.
    std::vector<ScoredDoc> search(std::string_view query, std::size_t k,
                                  const Bm25Params& params = {}) const {
        if (doc_count() == 0) throw EmptyIndexError();
        params.validate();
        std::unordered_map<std::uint32_t, double> accum;
        for (const std::string& term : tokenize(query)) {
            const auto it = postings_.find(term);
            if (it == postings_.end()) continue;
            const double term_df = static_cast<double>(it->second.size());
            for (const Posting& p : it->second) {
                accum[p.doc] += bm25_term_weight(p.tf, term_df, doc_lens_[p.doc], doc_count(),
                                                 avg_doc_len(), params);
            }
        }
        std::vector<ScoredDoc> out;
        out.reserve(accum.size());
        for (const auto& [doc, score] : accum) out.push_back({docids_[doc], score});
        std::sort(out.begin(), out.end(), scored_before);
        if (out.size() > k) out.resize(k);
        return out;
    }

    // --- persistence: sparse.json stats header + sparse.bin postings file ---

    void save(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        detail::ByteWriter w;
        w.raw("TDSP", 4);
        w.u32(static_cast<std::uint32_t>(kIndexFormatVersion));
        w.u64(doc_count());
        w.u64(total_tokens_);
        for (const std::uint32_t len : doc_lens_) w.u32(len);
        for (std::uint32_t doc = 0; doc < docids_.size(); ++doc) {
            w.u32(static_cast<std::uint32_t>(docids_[doc].size()));
            w.raw(docids_[doc].data(), docids_[doc].size());
        }
        std::vector<std::string_view> terms;
        terms.reserve(postings_.size());
        for (const auto& [term, _] : postings_) terms.push_back(term);
        std::sort(terms.begin(), terms.end());
        w.u32(static_cast<std::uint32_t>(terms.size()));
        for (const std::string_view term : terms) {
            const auto& list = postings_.at(std::string(term));
            w.u32(static_cast<std::uint32_t>(term.size()));
            w.raw(term.data(), term.size());
            w.u32(static_cast<std::uint32_t>(list.size()));
            for (const Posting& p : list) {
                w.u32(p.doc);
                w.u32(p.tf);
            }
        }
        detail::write_file_atomic(dir / "sparse.bin", w.bytes);

        nlohmann::json j = {{"formatVersion", kIndexFormatVersion},
                            {"type", "inverted"},
                            {"docCount", doc_count()},
                            {"totalTokens", total_tokens_},
                            {"file", "sparse.bin"},
                            {"checksum", detail::crc32(w.bytes.data(), w.bytes.size())}};
        const std::string text = j.dump(2) + "\n";
        detail::write_file_atomic(dir / "sparse.json",
                                  {reinterpret_cast<const std::uint8_t*>(text.data()),
                                   text.size()});
    }

    static InvertedIndex load(const std::filesystem::path& dir) {
        const std::filesystem::path header_path = dir / "sparse.json";
        std::ifstream in(header_path);
        if (!in) throw IoError("cannot open " + header_path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw IoError("malformed header " + header_path.string() + ": " + e.what());
        }
        const int version = j.at("formatVersion").get<int>();
        if (version != kIndexFormatVersion) throw FormatVersionError(kIndexFormatVersion, version);

        const std::filesystem::path bin = dir / j.at("file").get<std::string>();
        const std::vector<std::uint8_t> bytes = detail::read_file(bin);
        const std::uint32_t crc = detail::crc32(bytes.data(), bytes.size());
        if (crc != j.at("checksum").get<std::uint32_t>()) {
            throw ChecksumError("checksum mismatch for " + bin.string());
        }

        detail::ByteReader r{bytes, 0, bin.string()};
        char magic[4];
        r.raw(magic, 4);
        if (std::memcmp(magic, "TDSP", 4) != 0) throw IoError("not a sparse index: " + bin.string());
        const auto file_version = static_cast<int>(r.u32());
        if (file_version != kIndexFormatVersion) {
            throw FormatVersionError(kIndexFormatVersion, file_version);
        }

        InvertedIndex idx;
        const std::uint64_t n = r.u64();
        idx.total_tokens_ = r.u64();
        idx.doc_lens_.resize(n);
        for (std::uint32_t& len : idx.doc_lens_) len = r.u32();
        idx.docids_.resize(n);
        for (std::uint64_t doc = 0; doc < n; ++doc) {
            const std::uint32_t len = r.u32();
            idx.docids_[doc].resize(len);
            r.raw(idx.docids_[doc].data(), len);
            if (!idx.id_of_.emplace(idx.docids_[doc], static_cast<std::uint32_t>(doc)).second) {
                throw DuplicateDocError(idx.docids_[doc]);
            }
        }
        const std::uint32_t term_count = r.u32();
        for (std::uint32_t t = 0; t < term_count; ++t) {
            const std::uint32_t len = r.u32();
            std::string term(len, '\0');
            r.raw(term.data(), len);
            const std::uint32_t df = r.u32();
            std::vector<Posting> list(df);
            for (Posting& p : list) {
                p.doc = r.u32();
                p.tf = r.u32();
                if (p.doc >= n) throw IoError("corrupt postings: " + bin.string());
            }
            idx.postings_.emplace(std::move(term), std::move(list));
        }
        if (r.pos != bytes.size()) throw IoError("trailing bytes in " + bin.string());
        return idx;
    }

private:
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::vector<std::uint32_t> doc_lens_;
    std::vector<std::string> docids_;
    std::unordered_map<std::string, std::uint32_t> id_of_;
    std::uint64_t total_tokens_ = 0;
};

inline InvertedIndex build_inverted_index(std::span<const TextRecord> corpus) {
    InvertedIndex idx;
    for (const TextRecord& rec : corpus) idx.add_document(rec.docid, rec.contents);
    return idx;
}

} // namespace tandem
