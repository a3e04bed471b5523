#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cqrank/data_model.hpp"
#include "cqrank/embedding_store.hpp"
#include "cqrank/neural/mlp.hpp"

namespace cqrank {

/// Which texts feed the classifier.
enum class TextSet { PQ, PQA };

/// Named model variants: text set plus encoder size.
enum class Variant { PQ, PQA, LargePQ, LargePQA };

inline constexpr std::size_t kBaseEncoderDim = 768;
inline constexpr std::size_t kLargeEncoderDim = 1024;

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant variant);
TextSet text_set(Variant variant);
std::size_t nominal_encoder_dim(Variant variant);

struct FeatureSpec {
    TextSet texts = TextSet::PQ;
    std::size_t encoder_dim = kBaseEncoderDim;

    std::size_t input_dim() const { return (texts == TextSet::PQ ? 2 : 3) * encoder_dim; }
    bool uses_answer() const { return texts == TextSet::PQA; }

    /// Feature layout for a named variant; throws ValidationError when the store's
    /// dimension is not the variant's encoder width.
    static FeatureSpec for_variant(Variant variant, std::size_t store_dim);
};

/// [P | Q] or [P | Q | A], widened to double. The answer must be given
/// exactly when the layout uses answers.
Eigen::VectorXd assemble_feature(const FeatureSpec& spec, const Eigen::Ref<const Eigen::VectorXf>& post,
                                 const Eigen::Ref<const Eigen::VectorXf>& question,
                                 const std::optional<Eigen::Ref<const Eigen::VectorXf>>& answer = std::nullopt);

/// Writes the assembled feature into `out` (length input_dim) without
/// allocating. Reads only the keys the layout needs.
void assemble_feature_into(const FeatureSpec& spec, const EmbeddingLookup& store, std::string_view post_id,
                           std::string_view cid, Eigen::Ref<Eigen::VectorXd> out);

struct ScoredCandidate {
    std::string cid;
    double score = 0.0;
};

/// Class-1 probability for each candidate, infer mode, input order.
std::vector<ScoredCandidate> score_candidates(const nn::Mlp& model, const CandidateSet& set,
                                              const EmbeddingLookup& store, const FeatureSpec& spec);

struct RankedEntry {
    std::string cid;
    double score = 0.0;
    std::size_t original_index = 0;

    bool operator==(const RankedEntry&) const = default;
};

struct RankedList {
    std::string post_id;
    std::vector<RankedEntry> entries;

    bool operator==(const RankedList&) const = default;
};

/// Stable descending sort by score; exact ties keep input order.
RankedList rank(std::span<const ScoredCandidate> scores, std::string post_id = {});

/// Scores and ranks every set, in parallel over posts, results in input order.
std::vector<RankedList> rank_all(const nn::Mlp& model, const std::vector<CandidateSet>& sets,
                                 const EmbeddingLookup& store, const FeatureSpec& spec, std::size_t workers = 1);

void write_rankings(const std::filesystem::path& path, const std::vector<RankedList>& rankings);
std::vector<RankedList> read_rankings(const std::filesystem::path& path);

}  // namespace cqrank
