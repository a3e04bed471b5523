#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace cqrank {

/// Frozen sentence embedding as stored on disk.
using EmbeddingVector = Eigen::VectorXf;
using EmbeddingView = Eigen::Map<const Eigen::VectorXf>;

/// Role prefixes for store keys.
inline std::string post_key(std::string_view post_id) { return "P:" + std::string(post_id); }
inline std::string question_key(std::string_view cid) { return "Q:" + std::string(cid); }
inline std::string answer_key(std::string_view cid) { return "A:" + std::string(cid); }

/// Read-only keyed access to embeddings. Implemented by EmbeddingStore;
/// tests decorate it to observe which keys are read.
class EmbeddingLookup {
public:
    virtual ~EmbeddingLookup() = default;
    virtual std::size_t dim() const = 0;
    /// Throws MissingKeyError for absent keys.
    virtual EmbeddingView view(std::string_view key) const = 0;
};

class EmbeddingStore final : public EmbeddingLookup {
public:
    static constexpr char kMagic[6] = {'C', 'Q', 'E', 'M', 'B', '1'};
    static constexpr std::uint16_t kVersion = 1;
    static constexpr std::size_t kHeaderBytes = 6 + 2 + 4 + 8;
    static constexpr std::size_t kChecksumBytes = 8;

    EmbeddingStore() = default;

    /// Opens and fully indexes a store file. Verifies magic, version,
    /// dimension, record framing and the trailing checksum.
    static EmbeddingStore open(const std::filesystem::path& path);

    std::size_t dim() const override { return dim_; }
    std::size_t size() const { return keys_.size(); }
    bool contains(std::string_view key) const;
    EmbeddingView view(std::string_view key) const override;
    EmbeddingVector lookup(std::string_view key) const { return view(key); }

    /// Keys in file order.
    const std::vector<std::string>& keys() const { return keys_; }
    /// Model tag read from the provenance sidecar, empty when absent.
    const std::string& provenance() const { return provenance_; }
    const std::string& digest() const { return digest_; }

private:
    std::size_t dim_ = 0;
    Eigen::MatrixXf data_;  // one column per entry
    std::vector<std::string> keys_;
    std::unordered_map<std::string, std::size_t> index_;
    std::string provenance_;
    std::string digest_;
};

using EmbeddingEntry = std::pair<std::string, EmbeddingVector>;

/// Writes `entries` in the binary store layout and returns the hex digest
/// (the trailing checksum). A non-empty `provenance` is written to the
/// sidecar `<path>.json`.
std::string write_store(std::span<const EmbeddingEntry> entries, std::size_t dim,
                        const std::filesystem::path& path, std::string_view provenance = {});

std::filesystem::path provenance_sidecar(const std::filesystem::path& store_path);

struct RemoteOptions {
    std::optional<std::size_t> expected_dim;
    int max_attempts = 3;
    std::chrono::milliseconds retry_delay{200};
    std::chrono::seconds timeout{60};
};

struct ServiceInfo {
    std::size_t dim = 0;
    std::string model;
};

/// POSTs `texts` to `<endpoint>/embed`; one vector per text, input order.
/// Connection failures and 5xx answers are retried up to
/// `max_attempts`; a dimension disagreeing with `expected_dim` is fatal.
std::vector<EmbeddingVector> fetch_remote(std::string_view endpoint, std::span<const std::string> texts,
                                          const RemoteOptions& options = {});

ServiceInfo fetch_info(std::string_view endpoint, const RemoteOptions& options = {});

}  // namespace cqrank
