#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "tandem/crc32.hpp"
#include "tandem/errors.hpp"
#include "tandem/hnsw.hpp"
#include "tandem/vectors.hpp"

namespace tandem {

// ---------------------------------------------------------------------------
// On-disk layout of an index directory:
//
//   manifest.json       versioned JSON manifest, written last (atomic rename)
//   segment-<n>.bin     one independently built HNSW graph per ingest worker
//   segment-merged.bin  single segment produced by optimize()
//   index.lock          held for the duration of ingest/optimize
//
// Segment binary format (all integers little-endian):
//
//   magic "TDSG" | u32 version | u8 metric | u32 dim | u64 docCount
//   u32 M | u32 efConstruction | u64 seed | u32 entryPoint | i32 maxLevel
//   vector block:  docCount * dim * f32, row-major, internal-id order
//   id table:      docCount * { u32 len | len bytes | u32 nodeId },
//                  sorted by docid ascending
//   adjacency:     per level 0..maxLevel:
//                    u32 nodeCountAtLevel
//                    per node (ascending id): u32 nodeId | u32 degree | degree * u32
//
// The CRC-32 of each segment file is recorded in the manifest and verified
// on open.
// ---------------------------------------------------------------------------

inline constexpr int kIndexFormatVersion = 1;
inline constexpr char kSegmentMagic[4] = {'T', 'D', 'S', 'G'};

struct SegmentInfo {
    std::uint32_t id = 0;
    std::string file;
    std::uint64_t doc_count = 0;
    std::uint32_t checksum = 0;
};

struct IndexManifest {
    int format_version = kIndexFormatVersion;
    Metric metric = Metric::Cosine;
    std::size_t dim = 0;
    BuildParams build;
    bool optimized = false;
    std::string updated_at;
    std::vector<SegmentInfo> segments;

    std::uint64_t total_docs() const {
        std::uint64_t n = 0;
        for (const SegmentInfo& s : segments) n += s.doc_count;
        return n;
    }
};

struct IngestOptions {
    std::uint32_t threads = 1;
    std::uint64_t segment_size = 0; ///< docs per segment before a worker rolls over; 0 = unbounded
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Per-segment level-RNG seed, derived from the index seed so that every
/// segment draws an independent, reproducible stream.
inline std::uint64_t segment_seed(std::uint64_t base, std::uint32_t ordinal) {
    return splitmix64(base ^ (0x9E3779B97F4A7C15ull * (ordinal + 1)));
}

// --- little-endian encode/decode into an in-memory buffer ---

struct ByteWriter {
    std::vector<std::uint8_t> bytes;

    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        std::uint32_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        u32(bits);
    }
};

struct ByteReader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
    std::string context;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw IoError("truncated segment file: " + context);
    }
    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
};

inline void write_file_atomic(const std::filesystem::path& path,
                              std::span<const std::uint8_t> bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open " + path.string());
    const std::streamsize size = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw IoError("short read from " + path.string());
    return bytes;
}

inline std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Exclusive directory lock held while ingest/optimize mutate an index.
class DirectoryLock {
public:
    explicit DirectoryLock(const std::filesystem::path& dir) : path_(dir / "index.lock") {
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f) {
            throw IoError("index directory is locked (remove " + path_.string() +
                          " if no other writer is running)");
        }
        std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
        std::fclose(f);
    }
    ~DirectoryLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    std::filesystem::path path_;
};

inline std::vector<std::uint8_t> serialize_segment(const HnswGraph& g) {
    ByteWriter w;
    w.raw(kSegmentMagic, 4);
    w.u32(static_cast<std::uint32_t>(kIndexFormatVersion));
    w.u8(g.params().metric == Metric::Cosine ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(g.dim()));
    w.u64(g.size());
    w.u32(g.params().M);
    w.u32(g.params().ef_construction);
    w.u64(g.params().seed);
    w.u32(g.entry_point());
    w.i32(g.max_level());

    const std::size_t n = g.size();
    for (std::uint32_t node = 0; node < n; ++node) {
        for (const float v : g.vector(node)) w.f32(v);
    }

    std::vector<std::uint32_t> by_docid(n);
    for (std::uint32_t i = 0; i < n; ++i) by_docid[i] = i;
    std::sort(by_docid.begin(), by_docid.end(), [&](std::uint32_t a, std::uint32_t b) {
        return g.docid(a) < g.docid(b);
    });
    for (const std::uint32_t node : by_docid) {
        const std::string& id = g.docid(node);
        w.u32(static_cast<std::uint32_t>(id.size()));
        w.raw(id.data(), id.size());
        w.u32(node);
    }

    for (int level = 0; level <= g.max_level(); ++level) {
        std::uint32_t count = 0;
        for (std::uint32_t node = 0; node < n; ++node) {
            if (g.node_level(node) >= level) ++count;
        }
        w.u32(count);
        for (std::uint32_t node = 0; node < n; ++node) {
            if (g.node_level(node) < level) continue;
            const auto nbrs = g.neighbors(node, level);
            w.u32(node);
            w.u32(static_cast<std::uint32_t>(nbrs.size()));
            for (const std::uint32_t nb : nbrs) w.u32(nb);
        }
    }
    return std::move(w.bytes);
}

inline HnswGraph deserialize_segment(std::span<const std::uint8_t> bytes,
                                     const std::string& context) {
    ByteReader r{bytes, 0, context};
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kSegmentMagic, 4) != 0) {
        throw IoError("not a segment file: " + context);
    }
    const auto version = static_cast<int>(r.u32());
    if (version != kIndexFormatVersion) throw FormatVersionError(kIndexFormatVersion, version);

    BuildParams params;
    params.metric = r.u8() == 1 ? Metric::Cosine : Metric::Dot;
    const std::uint32_t dim = r.u32();
    const std::uint64_t count = r.u64();
    params.M = r.u32();
    params.ef_construction = r.u32();
    params.seed = r.u64();
    const std::uint32_t entry_point = r.u32();
    const std::int32_t max_level = r.i32();

    std::vector<float> vectors(count * dim);
    for (float& v : vectors) v = r.f32();

    std::vector<std::string> docids(count);
    std::vector<bool> seen(count, false);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t len = r.u32();
        std::string id(len, '\0');
        r.raw(id.data(), len);
        const std::uint32_t node = r.u32();
        if (node >= count || seen[node]) throw IoError("corrupt id table: " + context);
        seen[node] = true;
        docids[node] = std::move(id);
    }

    std::vector<int> levels(count, 0);
    std::vector<std::vector<std::vector<std::uint32_t>>> links(count);
    for (std::uint64_t i = 0; i < count; ++i) links[i].resize(1);
    for (std::int32_t level = 0; level <= max_level; ++level) {
        const std::uint32_t at_level = r.u32();
        if (level == 0 && at_level != count) throw IoError("corrupt adjacency: " + context);
        for (std::uint32_t i = 0; i < at_level; ++i) {
            const std::uint32_t node = r.u32();
            if (node >= count) throw IoError("corrupt adjacency: " + context);
            const std::uint32_t degree = r.u32();
            std::vector<std::uint32_t> nbrs(degree);
            for (std::uint32_t d = 0; d < degree; ++d) {
                nbrs[d] = r.u32();
                if (nbrs[d] >= count) throw IoError("corrupt adjacency: " + context);
            }
            if (static_cast<std::size_t>(level) >= links[node].size()) {
                links[node].resize(static_cast<std::size_t>(level) + 1);
            }
            levels[node] = std::max(levels[node], static_cast<int>(level));
            links[node][static_cast<std::size_t>(level)] = std::move(nbrs);
        }
    }
    if (r.pos != bytes.size()) throw IoError("trailing bytes in segment file: " + context);

    return HnswGraph::from_parts(params, dim, std::move(vectors), std::move(docids),
                                 std::move(levels), std::move(links), entry_point, max_level);
}

inline nlohmann::json manifest_to_json(const IndexManifest& m) {
    nlohmann::json segs = nlohmann::json::array();
    for (const SegmentInfo& s : m.segments) {
        segs.push_back({{"id", s.id},
                        {"file", s.file},
                        {"docCount", s.doc_count},
                        {"checksum", s.checksum}});
    }
    return {{"formatVersion", m.format_version},
            {"metric", metric_name(m.metric)},
            {"dim", m.dim},
            {"buildParams",
             {{"M", m.build.M}, {"efConstruction", m.build.ef_construction}, {"seed", m.build.seed}}},
            {"optimized", m.optimized},
            {"updatedAt", m.updated_at},
            {"segments", segs}};
}

inline IndexManifest manifest_from_json(const nlohmann::json& j) {
    IndexManifest m;
    m.format_version = j.at("formatVersion").get<int>();
    if (m.format_version != kIndexFormatVersion) {
        throw FormatVersionError(kIndexFormatVersion, m.format_version);
    }
    m.metric = parse_metric(j.at("metric").get<std::string>());
    m.dim = j.at("dim").get<std::size_t>();
    m.build.M = j.at("buildParams").at("M").get<std::uint32_t>();
    m.build.ef_construction = j.at("buildParams").at("efConstruction").get<std::uint32_t>();
    m.build.seed = j.at("buildParams").at("seed").get<std::uint64_t>();
    m.build.metric = m.metric;
    m.optimized = j.at("optimized").get<bool>();
    m.updated_at = j.value("updatedAt", "");
    for (const auto& s : j.at("segments")) {
        m.segments.push_back({s.at("id").get<std::uint32_t>(), s.at("file").get<std::string>(),
                              s.at("docCount").get<std::uint64_t>(),
                              s.at("checksum").get<std::uint32_t>()});
    }
    return m;
}

inline void write_manifest(const std::filesystem::path& dir, IndexManifest& m) {
    m.updated_at = utc_timestamp();
    const std::string text = manifest_to_json(m).dump(2) + "\n";
    write_file_atomic(dir / "manifest.json",
                      {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

} // namespace detail

inline IndexManifest load_manifest(const std::filesystem::path& dir) {
    const std::filesystem::path path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest " + path.string() + ": " + e.what());
    }
    try {
        return detail::manifest_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest " + path.string() + ": " + e.what());
    }
}

/// Build a segmented index directory from a dense collection.
///
/// Documents are dispatched round-robin to `threads` single-writer graph
/// builders; each worker owns its segments outright, so the build is
/// deterministic regardless of scheduling. The manifest is written last.
inline IndexManifest ingest(std::span<const VectorRecord> docs, const BuildParams& params,
                            const IngestOptions& options, const std::filesystem::path& dir) {
    params.validate();
    if (docs.empty()) throw EmptyCorpusError();
    const std::uint32_t threads = std::max(1u, options.threads);

    std::filesystem::create_directories(dir);
    detail::DirectoryLock lock(dir);

    // A re-ingest replaces whatever index lived here before.
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name == "manifest.json" || name.starts_with("segment-")) {
            std::filesystem::remove(entry.path());
        }
    }

    const std::size_t dim = docs[0].vector.size();
    {
        std::unordered_set<std::string_view> ids;
        ids.reserve(docs.size());
        for (const VectorRecord& d : docs) {
            if (d.vector.size() != dim) throw DimensionError(dim, d.vector.size());
            for (const float v : d.vector) {
                if (!std::isfinite(v)) {
                    throw std::invalid_argument("non-finite component in docid " + d.docid);
                }
            }
            if (!ids.insert(d.docid).second) throw DuplicateDocError(d.docid);
        }
    }

    struct WorkerOutput {
        std::vector<std::pair<std::uint32_t, std::vector<std::uint8_t>>> segments;
        std::exception_ptr error;
    };
    std::vector<WorkerOutput> outputs(threads);

    auto build_worker = [&](std::uint32_t w) {
        try {
            const std::uint64_t cap = options.segment_size;
            std::uint32_t chunk = 0;
            HnswGraph graph = [&] {
                BuildParams p = params;
                p.seed = detail::segment_seed(params.seed, w);
                return HnswGraph(p);
            }();
            auto flush = [&] {
                if (graph.empty()) return;
                const std::uint32_t ordinal = w + chunk * threads;
                outputs[w].segments.emplace_back(ordinal, detail::serialize_segment(graph));
            };
            for (std::size_t i = w; i < docs.size(); i += threads) {
                if (cap > 0 && graph.size() >= cap) {
                    flush();
                    ++chunk;
                    BuildParams p = params;
                    p.seed = detail::segment_seed(params.seed, w + chunk * threads);
                    graph = HnswGraph(p);
                }
                DenseVector vec = docs[i].vector;
                if (params.metric == Metric::Cosine) normalize_in_place(vec);
                graph.insert(docs[i].docid, vec);
            }
            flush();
        } catch (...) {
            outputs[w].error = std::current_exception();
        }
    };

    if (threads == 1) {
        build_worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::uint32_t w = 0; w < threads; ++w) pool.emplace_back(build_worker, w);
        for (std::thread& t : pool) t.join();
    }
    for (const WorkerOutput& out : outputs) {
        if (out.error) std::rethrow_exception(out.error);
    }

    IndexManifest manifest;
    manifest.metric = params.metric;
    manifest.dim = dim;
    manifest.build = params;
    manifest.optimized = false;

    std::vector<std::pair<std::uint32_t, const std::vector<std::uint8_t>*>> all;
    for (const WorkerOutput& out : outputs) {
        for (const auto& [ordinal, bytes] : out.segments) all.emplace_back(ordinal, &bytes);
    }
    std::sort(all.begin(), all.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    for (const auto& [ordinal, bytes] : all) {
        const std::string file = "segment-" + std::to_string(ordinal) + ".bin";
        detail::write_file_atomic(dir / file, *bytes);
        std::uint64_t seg_docs = 0;
        {
            detail::ByteReader r{*bytes, 0, file};
            r.pos = 4 + 4 + 1 + 4; // magic, version, metric, dim
            seg_docs = r.u64();
        }
        manifest.segments.push_back(
            {ordinal, file, seg_docs, detail::crc32(bytes->data(), bytes->size())});
    }

    detail::write_manifest(dir, manifest);
    return manifest;
}

/// A read-only, fully loaded index. Immutable and safe to share across
/// search threads.
class IndexHandle {
public:
    static IndexHandle open(const std::filesystem::path& dir) {
        IndexHandle h;
        h.dir_ = dir;
        h.manifest_ = load_manifest(dir);
        std::unordered_set<std::string_view> ids;
        for (const SegmentInfo& info : h.manifest_.segments) {
            const std::filesystem::path path = dir / info.file;
            const std::vector<std::uint8_t> bytes = detail::read_file(path);
            const std::uint32_t crc = detail::crc32(bytes.data(), bytes.size());
            if (crc != info.checksum) {
                throw ChecksumError("checksum mismatch for " + path.string() + ": expected " +
                                    std::to_string(info.checksum) + ", got " + std::to_string(crc));
            }
            HnswGraph g = detail::deserialize_segment(bytes, path.string());
            if (g.size() != info.doc_count) {
                throw IoError("segment doc count disagrees with manifest: " + path.string());
            }
            for (std::uint32_t node = 0; node < g.size(); ++node) {
                if (!ids.insert(g.docid(node)).second) throw DuplicateDocError(g.docid(node));
            }
            h.graphs_.push_back(std::move(g));
        }
        return h;
    }

    const IndexManifest& manifest() const { return manifest_; }
    const std::filesystem::path& dir() const { return dir_; }
    const std::vector<HnswGraph>& segments() const { return graphs_; }
    std::uint64_t doc_count() const { return manifest_.total_docs(); }

    /// Search every segment with the same parameters and merge by score
    /// (ties by ascending docid).
    std::vector<ScoredDoc> search(std::span<const float> query, const SearchParams& sp) const {
        if (doc_count() == 0) throw EmptyIndexError();
        sp.validate();
        std::vector<ScoredDoc> merged;
        for (const HnswGraph& g : graphs_) {
            std::vector<ScoredDoc> part = g.knn_search(query, sp);
            merged.insert(merged.end(), std::make_move_iterator(part.begin()),
                          std::make_move_iterator(part.end()));
        }
        std::sort(merged.begin(), merged.end(), scored_before);
        const std::uint64_t limit = std::min<std::uint64_t>(sp.k, doc_count());
        if (merged.size() > limit) merged.resize(limit);
        return merged;
    }

private:
    std::filesystem::path dir_;
    IndexManifest manifest_;
    std::vector<HnswGraph> graphs_;
};

/// Merge all segments into one by re-inserting every vector (ascending docid
/// order) into a fresh graph. A no-op on an already-optimized index.
inline IndexManifest optimize(const std::filesystem::path& dir, const BuildParams& params,
                              std::uint32_t threads = 1) {
    (void)threads; // the merged graph is single-writer; kept for CLI symmetry
    IndexHandle handle = IndexHandle::open(dir);
    IndexManifest manifest = handle.manifest();
    if (manifest.optimized) {
        detail::DirectoryLock lock(dir);
        detail::write_manifest(dir, manifest);
        return manifest;
    }

    detail::DirectoryLock lock(dir);

    std::vector<std::pair<std::string, std::uint32_t>> order; // docid -> (segment, node)
    std::vector<std::uint32_t> seg_of;
    order.reserve(handle.doc_count());
    seg_of.reserve(handle.doc_count());
    for (std::uint32_t s = 0; s < handle.segments().size(); ++s) {
        const HnswGraph& g = handle.segments()[s];
        for (std::uint32_t node = 0; node < g.size(); ++node) {
            order.emplace_back(g.docid(node), node);
            seg_of.push_back(s);
        }
    }
    std::vector<std::uint32_t> perm(order.size());
    for (std::uint32_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::sort(perm.begin(), perm.end(), [&](std::uint32_t a, std::uint32_t b) {
        return order[a].first < order[b].first;
    });

    BuildParams merged_params = params;
    merged_params.validate();
    merged_params.metric = manifest.metric;
    merged_params.seed = detail::segment_seed(params.seed, 0);
    HnswGraph merged(merged_params);
    for (const std::uint32_t i : perm) {
        const auto& [docid, node] = order[i];
        const auto vec = handle.segments()[seg_of[i]].vector(node);
        merged.insert(docid, DenseVector(vec.begin(), vec.end()));
    }

    const std::vector<std::uint8_t> bytes = detail::serialize_segment(merged);
    const std::string file = "segment-merged.bin";
    detail::write_file_atomic(dir / file, bytes);

    IndexManifest out;
    out.metric = manifest.metric;
    out.dim = manifest.dim;
    out.build = params;
    out.build.metric = manifest.metric;
    out.optimized = true;
    out.segments.push_back({0, file, merged.size(), detail::crc32(bytes.data(), bytes.size())});
    detail::write_manifest(dir, out);

    // Old segment files are dead once the new manifest is in place.
    for (const SegmentInfo& s : manifest.segments) {
        if (s.file != file) {
            std::error_code ec;
            std::filesystem::remove(dir / s.file, ec);
        }
    }
    return out;
}

/// Total size of the index files in a directory (the lock file is transient
/// and excluded).
inline std::uint64_t index_size_bytes(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir)) throw IoError("no such directory: " + dir.string());
    std::uint64_t total = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().filename() == "index.lock") continue;
        total += entry.file_size();
    }
    return total;
}

} // namespace tandem
