#include "cqrank/embedding_store.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cqrank/binary_io.hpp"
#include "cqrank/error.hpp"

namespace cqrank {

std::filesystem::path provenance_sidecar(const std::filesystem::path& store_path) {
    auto p = store_path;
    p += ".json";
    return p;
}

std::string write_store(std::span<const EmbeddingEntry> entries, std::size_t dim,
                        const std::filesystem::path& path, std::string_view provenance) {
    if (dim == 0 || dim > UINT32_MAX) throw ValidationError("embedding dim must be in [1, 2^32)");
    std::unordered_set<std::string_view> seen;
    for (const auto& [key, vec] : entries) {
        if (static_cast<std::size_t>(vec.size()) != dim)
            throw ValidationError("key '" + key + "': dimension " + std::to_string(vec.size()) + " != store dim " +
                                  std::to_string(dim));
        if (!vec.allFinite()) throw NumericError("key '" + key + "': non-finite embedding value");
        if (key.size() > UINT16_MAX) throw ValidationError("key longer than 65535 bytes");
        if (!seen.insert(key).second) throw ValidationError("duplicate key '" + key + "'");
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    detail::ChecksummedWriter w(out);
    w.bytes(EmbeddingStore::kMagic, sizeof(EmbeddingStore::kMagic));
    w.scalar<std::uint16_t>(EmbeddingStore::kVersion);
    w.scalar<std::uint32_t>(static_cast<std::uint32_t>(dim));
    w.scalar<std::uint64_t>(entries.size());
    for (const auto& [key, vec] : entries) {
        w.scalar<std::uint16_t>(static_cast<std::uint16_t>(key.size()));
        w.bytes(key.data(), key.size());
        w.bytes(vec.data(), dim * sizeof(float));
    }
    std::uint64_t sum = w.finish();
    out.close();
    if (!out) throw ValidationError("write failed for " + path.string());

    if (!provenance.empty()) {
        nlohmann::json meta = {{"model", provenance}, {"dim", dim}, {"count", entries.size()}, {"digest", to_hex(sum)}};
        std::ofstream side(provenance_sidecar(path), std::ios::binary | std::ios::trunc);
        side << meta.dump() << '\n';
    } else {
        std::error_code ec;
        std::filesystem::remove(provenance_sidecar(path), ec);
    }
    return to_hex(sum);
}

EmbeddingStore EmbeddingStore::open(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open embedding store " + path.string());
    detail::ChecksummedReader r(in, path.string());

    char magic[6];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw FormatError(path.string() + ": not an embedding store (bad magic)");
    auto version = r.scalar<std::uint16_t>();
    if (version != kVersion)
        throw FormatError(path.string() + ": unsupported embedding store version " + std::to_string(version));
    auto dim = r.scalar<std::uint32_t>();
    if (dim == 0) throw FormatError(path.string() + ": embedding dim must be positive");
    auto count = r.scalar<std::uint64_t>();

    EmbeddingStore store;
    store.dim_ = dim;
    // Guard the allocation against a corrupted count: each record needs at
    // least 2 + 4*dim bytes.
    auto file_size = std::filesystem::file_size(path);
    if (count > file_size / (2 + 4ULL * dim) + 1)
        throw FormatError(path.string() + ": truncated: header claims " + std::to_string(count) +
                          " records but file holds " + std::to_string(file_size) + " bytes");
    store.data_.resize(dim, static_cast<Eigen::Index>(count));
    store.keys_.reserve(count);
    std::string key;
    for (std::uint64_t i = 0; i < count; ++i) {
        auto len = r.scalar<std::uint16_t>();
        key.resize(len);
        r.bytes(key.data(), len);
        std::size_t at = r.offset();
        r.bytes(store.data_.col(static_cast<Eigen::Index>(i)).data(), dim * sizeof(float));
        if (!store.data_.col(static_cast<Eigen::Index>(i)).allFinite())
            throw FormatError(path.string() + ": non-finite value in record '" + key + "' at offset " +
                              std::to_string(at));
        if (!store.index_.emplace(key, i).second)
            throw FormatError(path.string() + ": duplicate key '" + key + "'");
        store.keys_.push_back(key);
    }
    store.digest_ = to_hex(r.verify_trailer());

    std::ifstream side(provenance_sidecar(path));
    if (side) {
        auto meta = nlohmann::json::parse(side, nullptr, false);
        if (meta.is_object() && meta.contains("model") && meta["model"].is_string())
            store.provenance_ = meta["model"].get<std::string>();
    }
    return store;
}

bool EmbeddingStore::contains(std::string_view key) const { return index_.contains(std::string(key)); }

EmbeddingView EmbeddingStore::view(std::string_view key) const {
    auto it = index_.find(std::string(key));
    if (it == index_.end()) {
        auto colon = key.find(':');
        std::string role = colon == std::string_view::npos ? "none" : std::string(key.substr(0, colon));
        throw MissingKeyError("embedding store has no key '" + std::string(key) + "' (role prefix " + role + ")");
    }
    return EmbeddingView(data_.col(static_cast<Eigen::Index>(it->second)).data(), static_cast<Eigen::Index>(dim_));
}

}  // namespace cqrank
