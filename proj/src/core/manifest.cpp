#include "relay/core/manifest.hpp"

#include <fstream>

#include "relay/core/errors.hpp"
#include "relay/core/util.hpp"

namespace relay::core {

const char* to_string(Category c) {
    switch (c) {
        case Category::experimental: return "experimental";
        case Category::theoretical: return "theoretical";
        case Category::uncategorized: return "uncategorized";
    }
    return "uncategorized";
}

Category category_from_string(const std::string& s, bool strict) {
    if (s == "experimental") return Category::experimental;
    if (s == "theoretical") return Category::theoretical;
    if (s == "uncategorized") return Category::uncategorized;
    if (strict) throw ValidationError("unknown category \"" + s + "\"");
    return Category::uncategorized;
}

bool valid_user_id(const std::string& s) {
    if (s.empty() || s.size() > 128 || s == "." || s == "..") return false;
    if (s[0] == '.') return false;
    for (char c : s) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '_' || c == '-' || c == '.';
        if (!ok) return false;
    }
    return true;
}

bool valid_relative_path(const std::string& s) {
    if (s.empty() || s.size() > 4096) return false;
    if (s.front() == '/') return false;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t sep = s.find('/', start);
        std::string comp = s.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
        if (comp.empty() || comp == "." || comp == "..") return false;
        for (char c : comp) {
            if (c == '\0' || c == '\\') return false;
        }
        if (sep == std::string::npos) break;
        start = sep + 1;
    }
    return true;
}

void FileManifest::validate() const {
    if (file_id.size() != 32 || !is_lower_hex(file_id))
        throw ValidationError("manifest invariant violated: file_id must be 32 lowercase hex chars");
    if (!valid_user_id(owner))
        throw ValidationError("manifest invariant violated: owner is not a valid user id");
    if (!valid_relative_path(relative_path))
        throw ValidationError("manifest invariant violated: relative_path is not a safe relative path");
    if (chunk_size == 0)
        throw ValidationError("manifest invariant violated: chunk_size must be >= 1");
    if (!whole_digest.well_formed())
        throw ValidationError("manifest invariant violated: whole_digest is malformed");

    std::uint64_t expected_chunks =
        total_size == 0 ? 0 : (total_size + chunk_size - 1) / chunk_size;
    if (chunks.size() != expected_chunks)
        throw ValidationError("manifest invariant violated: chunk count must equal ceil(total_size / chunk_size)");

    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const ChunkRecord& c = chunks[i];
        if (c.index != i)
            throw ValidationError("manifest invariant violated: chunk indices must be 0-based and ascending");
        if (c.offset != i * chunk_size)
            throw ValidationError("manifest invariant violated: chunk offset must equal index * chunk_size");
        bool last = (i + 1 == chunks.size());
        if (!last && c.length != chunk_size)
            throw ValidationError("manifest invariant violated: non-final chunk length must equal chunk_size");
        if (c.length == 0 || c.length > chunk_size)
            throw ValidationError("manifest invariant violated: chunk length must be in 1..chunk_size");
        if (!c.digest.well_formed())
            throw ValidationError("manifest invariant violated: chunk digest is malformed");
        sum += c.length;
    }
    if (sum != total_size)
        throw ValidationError("manifest invariant violated: sum of chunk lengths must equal total_size");
}

static nlohmann::json digest_to_json(const ContentDigest& d) {
    return nlohmann::json{{"algorithm", d.algorithm}, {"value", d.value}};
}

static ContentDigest digest_from_json(const nlohmann::json& j, const char* what) {
    if (!j.is_object() || !j.contains("algorithm") || !j.contains("value"))
        throw ValidationError(std::string(what) + ": digest must be {algorithm, value}");
    ContentDigest d{j.at("algorithm").get<std::string>(), j.at("value").get<std::string>()};
    return d;
}

nlohmann::json FileManifest::to_json() const {
    nlohmann::json jchunks = nlohmann::json::array();
    for (const ChunkRecord& c : chunks) {
        jchunks.push_back({{"index", c.index},
                           {"offset", c.offset},
                           {"length", c.length},
                           {"digest", digest_to_json(c.digest)}});
    }
    return nlohmann::json{{"file_id", file_id},
                          {"owner", owner},
                          {"relative_path", relative_path},
                          {"category", to_string(category)},
                          {"total_size", total_size},
                          {"chunk_size", chunk_size},
                          {"chunks", std::move(jchunks)},
                          {"whole_digest", digest_to_json(whole_digest)}};
}

std::string FileManifest::to_canonical_json() const {
    return to_json().dump();
}

FileManifest FileManifest::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("manifest must be a JSON object");
    for (const char* field : {"file_id", "owner", "relative_path", "category", "total_size",
                              "chunk_size", "chunks", "whole_digest"}) {
        if (!j.contains(field))
            throw ValidationError(std::string("manifest missing field \"") + field + "\"");
    }
    FileManifest m;
    try {
        m.file_id = j.at("file_id").get<std::string>();
        m.owner = j.at("owner").get<std::string>();
        m.relative_path = j.at("relative_path").get<std::string>();
        m.category = category_from_string(j.at("category").get<std::string>(), true);
        m.total_size = j.at("total_size").get<std::uint64_t>();
        m.chunk_size = j.at("chunk_size").get<std::uint64_t>();
        m.whole_digest = digest_from_json(j.at("whole_digest"), "whole_digest");
        for (const auto& jc : j.at("chunks")) {
            ChunkRecord c;
            c.index = jc.at("index").get<std::uint64_t>();
            c.offset = jc.at("offset").get<std::uint64_t>();
            c.length = jc.at("length").get<std::uint64_t>();
            c.digest = digest_from_json(jc.at("digest"), "chunk digest");
            m.chunks.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed manifest JSON: ") + e.what());
    }
    m.validate();
    return m;
}

FileManifest FileManifest::parse(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ValidationError("manifest is not valid JSON");
    return from_json(j);
}

std::string new_file_id() {
    return random_hex(16);
}

FileManifest build_manifest(const std::filesystem::path& file, const std::string& owner,
                            Category category, std::uint64_t chunk_size) {
    if (chunk_size == 0) throw ParamError("chunk_size must be >= 1");

    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open file for reading: " + file.string());

    FileManifest m;
    m.file_id = new_file_id();
    m.owner = owner;
    m.relative_path = file.filename().string();
    m.category = category;
    m.chunk_size = chunk_size;

    Sha256 whole;
    std::vector<char> buf(std::min<std::uint64_t>(chunk_size, 4ull << 20));
    std::uint64_t total = 0;
    bool eof = false;
    while (!eof) {
        Sha256 chunk_hash;
        std::uint64_t chunk_len = 0;
        while (chunk_len < chunk_size) {
            std::size_t want = static_cast<std::size_t>(
                std::min<std::uint64_t>(buf.size(), chunk_size - chunk_len));
            in.read(buf.data(), static_cast<std::streamsize>(want));
            std::size_t got = static_cast<std::size_t>(in.gcount());
            if (got > 0) {
                chunk_hash.update(buf.data(), got);
                whole.update(buf.data(), got);
                chunk_len += got;
            }
            if (got < want) {
                if (!in.eof()) throw IoError("read error on " + file.string());
                eof = true;
                break;
            }
        }
        if (chunk_len > 0) {
            ChunkRecord rec;
            rec.index = m.chunks.size();
            rec.offset = rec.index * chunk_size;
            rec.length = chunk_len;
            rec.digest = chunk_hash.finish();
            m.chunks.push_back(std::move(rec));
            total += chunk_len;
        }
    }
    m.total_size = total;
    m.whole_digest = whole.finish();
    m.validate();
    return m;
}

bool verify_chunk(std::span<const std::byte> payload, const ChunkRecord& record) {
    if (payload.size() != record.length) return false;
    return sha256(payload) == record.digest;
}

bool verify_chunk(const std::string& payload, const ChunkRecord& record) {
    return verify_chunk(std::as_bytes(std::span(payload.data(), payload.size())), record);
}

std::vector<std::uint64_t> pending_indices(std::uint64_t chunk_count,
                                           const std::set<std::uint64_t>& acked) {
    for (std::uint64_t i : acked) {
        if (i >= chunk_count)
            throw ConsistencyError("acked chunk index " + std::to_string(i) +
                                   " out of range (chunk count " + std::to_string(chunk_count) + ")");
    }
    std::vector<std::uint64_t> out;
    out.reserve(chunk_count - acked.size());
    for (std::uint64_t i = 0; i < chunk_count; ++i) {
        if (!acked.contains(i)) out.push_back(i);
    }
    return out;
}

std::vector<std::uint64_t> plan_resume(const FileManifest& manifest,
                                       const std::set<std::uint64_t>& acked) {
    return pending_indices(manifest.chunk_count(), acked);
}

}  // namespace relay::core
