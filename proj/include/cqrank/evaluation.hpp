#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cqrank/data_model.hpp"
#include "cqrank/ranker.hpp"

namespace cqrank {

enum class Regime { Best, Valid };
std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view name);

/// How posts whose gold set is empty enter the average.
enum class EmptyGold { Skip, Zero };
EmptyGold parse_empty_gold(std::string_view name);

inline constexpr std::size_t kMaxReportedK = 5;

/// |top-k ∩ gold| / k.
double precision_at_k(const RankedList& ranking, const std::set<std::string>& gold, std::size_t k);

struct PrecisionReport {
    Regime regime = Regime::Best;
    std::array<double, kMaxReportedK> p_at{};  // percent; p_at[k - 1] is P@k
    std::size_t posts_evaluated = 0;
    std::size_t posts_skipped_empty_gold = 0;

    bool operator==(const PrecisionReport&) const = default;
};

const std::set<std::string>& gold_for(const AnnotationSet& a, Regime regime);

/// Mean per-post P@1..P@5 in percent, summed in canonical (post id) order.
PrecisionReport evaluate(const std::vector<RankedList>& rankings, const AnnotationMap& annotations, Regime regime,
                         EmptyGold empty_gold = EmptyGold::Skip);

struct LengthBucket {
    std::string label;
    std::size_t lower = 0;  // inclusive
    std::size_t upper = 0;  // inclusive; 0 means open-ended
    std::size_t post_count = 0;
    std::size_t correct_at_1 = 0;

    bool operator==(const LengthBucket&) const = default;
};

struct BucketReport {
    Regime regime = Regime::Best;
    std::vector<LengthBucket> buckets;

    bool operator==(const BucketReport&) const = default;
};

/// 1-40, 41-80, 81-120, 121-160, 161-200, 201-300+ by whitespace token count.
/// Posts of zero tokens land in the first bucket.
std::vector<LengthBucket> default_length_buckets();

/// Assigns each evaluated post to its length bucket and counts posts whose
/// rank-1 candidate is gold. `post_texts` maps post id to the post body.
BucketReport bucket_by_length(const std::vector<RankedList>& rankings, const AnnotationMap& annotations,
                              const std::map<std::string, std::string>& post_texts, Regime regime,
                              EmptyGold empty_gold = EmptyGold::Skip);

/// Metrics JSONL, one record per report.
void write_metrics(const std::filesystem::path& path, std::string_view model, const std::vector<PrecisionReport>& reports);

void write_bucket_csv(const std::filesystem::path& path, std::string_view model, const BucketReport& report);

struct BucketCsvRow {
    std::string bucket;
    std::size_t total = 0;
    std::size_t correct = 0;
    std::string model;
    std::string regime;

    bool operator==(const BucketCsvRow&) const = default;
};
std::vector<BucketCsvRow> read_bucket_csv(const std::filesystem::path& path);

/// Writes `metrics.jsonl` plus `buckets_<regime>.csv` per bucket report
/// into `dir`; returns the paths written.
std::vector<std::filesystem::path> emit_report(const std::filesystem::path& dir, std::string_view model,
                                               const std::vector<PrecisionReport>& reports,
                                               const std::vector<BucketReport>& buckets);

}  // namespace cqrank
