#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tandem/errors.hpp"
#include "tandem/sparse.hpp"
#include "tandem/vectors.hpp"

namespace tandem {

/// One search topic: a query id plus either a dense vector or a text payload.
struct Topic {
    std::string qid;
    DenseVector vector;
    std::string text;
    bool has_vector = false;
};

namespace detail {

inline std::string id_field(const nlohmann::json& obj, const char* key,
                            const std::string& path, std::size_t line) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        throw ParseError(path, line, std::string("missing field '") + key + "'");
    }
    if (it->is_string()) return it->get<std::string>();
    // Integer ids are common in topic files; normalize them to strings.
    if (it->is_number_integer() || it->is_number_unsigned()) return it->dump();
    throw ParseError(path, line, std::string("field '") + key + "' must be a string");
}

inline DenseVector vector_field(const nlohmann::json& obj, const std::string& path,
                                std::size_t line) {
    const auto it = obj.find("vector");
    if (it == obj.end() || !it->is_array() || it->empty()) {
        throw ParseError(path, line, "field 'vector' must be a non-empty number array");
    }
    DenseVector v;
    v.reserve(it->size());
    for (const auto& elem : *it) {
        if (!elem.is_number()) {
            throw ParseError(path, line, "field 'vector' must contain only numbers");
        }
        const double x = elem.get<double>();
        if (!std::isfinite(x)) {
            throw ParseError(path, line, "field 'vector' contains a non-finite value");
        }
        v.push_back(static_cast<float>(x));
    }
    return v;
}

inline nlohmann::json parse_object(const std::string& text, const std::string& path,
                                   std::size_t line) {
    nlohmann::json obj = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded()) throw ParseError(path, line, "invalid JSON");
    if (!obj.is_object()) throw ParseError(path, line, "expected a JSON object");
    return obj;
}

/// Calls fn(line_text, line_number) for every non-empty line; line numbers
/// start at 1 and count blank lines too.
template <typename Fn>
void for_each_line(const std::string& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (text.empty()) continue;
        fn(text, line);
    }
}

} // namespace detail

/// Loads a dense-vector collection: JSON lines with `docid` and `vector`.
inline std::vector<VectorRecord> load_dense_collection(const std::string& path) {
    std::vector<VectorRecord> records;
    detail::for_each_line(path, [&](const std::string& text, std::size_t line) {
        const auto obj = detail::parse_object(text, path, line);
        VectorRecord rec;
        rec.docid = detail::id_field(obj, "docid", path, line);
        rec.vector = detail::vector_field(obj, path, line);
        if (!records.empty() && rec.vector.size() != records.front().vector.size()) {
            throw ParseError(path, line, "vector dimension mismatch: expected " +
                                             std::to_string(records.front().vector.size()) +
                                             ", got " + std::to_string(rec.vector.size()));
        }
        records.push_back(std::move(rec));
    });
    return records;
}

/// Loads a text collection: JSON lines with `docid` and `contents`.
inline std::vector<TextRecord> load_text_collection(const std::string& path) {
    std::vector<TextRecord> records;
    detail::for_each_line(path, [&](const std::string& text, std::size_t line) {
        const auto obj = detail::parse_object(text, path, line);
        TextRecord rec;
        rec.docid = detail::id_field(obj, "docid", path, line);
        const auto it = obj.find("contents");
        if (it == obj.end() || !it->is_string()) {
            throw ParseError(path, line, "field 'contents' must be a string");
        }
        rec.contents = it->get<std::string>();
        records.push_back(std::move(rec));
    });
    return records;
}

/// Loads a topics file: JSON lines with `qid` and exactly one of `vector`
/// (dense topic) or `text` (sparse topic). Vector topics must agree on
/// dimension.
inline std::vector<Topic> load_topics(const std::string& path) {
    std::vector<Topic> topics;
    std::size_t dim = 0;
    detail::for_each_line(path, [&](const std::string& text, std::size_t line) {
        const auto obj = detail::parse_object(text, path, line);
        Topic topic;
        topic.qid = detail::id_field(obj, "qid", path, line);
        const bool has_vector = obj.contains("vector");
        const bool has_text = obj.contains("text");
        if (has_vector == has_text) {
            throw ParseError(path, line, "topic must have exactly one of 'vector' or 'text'");
        }
        if (has_vector) {
            topic.vector = detail::vector_field(obj, path, line);
            topic.has_vector = true;
            if (dim == 0) {
                dim = topic.vector.size();
            } else if (topic.vector.size() != dim) {
                throw ParseError(path, line, "vector dimension mismatch: expected " +
                                                 std::to_string(dim) + ", got " +
                                                 std::to_string(topic.vector.size()));
            }
        } else {
            const auto it = obj.find("text");
            if (!it->is_string()) throw ParseError(path, line, "field 'text' must be a string");
            topic.text = it->get<std::string>();
        }
        topics.push_back(std::move(topic));
    });
    return topics;
}

/// Loads a tab-separated query file: `qid<TAB>text`, one query per line.
inline std::vector<Topic> load_queries_tsv(const std::string& path) {
    std::vector<Topic> topics;
    detail::for_each_line(path, [&](const std::string& text, std::size_t line) {
        const auto tab = text.find('\t');
        if (tab == std::string::npos || tab == 0) {
            throw ParseError(path, line, "expected qid<TAB>text");
        }
        Topic topic;
        topic.qid = text.substr(0, tab);
        topic.text = text.substr(tab + 1);
        topics.push_back(std::move(topic));
    });
    return topics;
}

} // namespace tandem
