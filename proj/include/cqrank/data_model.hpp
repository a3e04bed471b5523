#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cqrank {

/// Every post is paired with this many candidate (question, answer) pairs.
inline constexpr std::size_t kCandidatesPerPost = 10;

enum class Split { Train, Validation, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// One (post, question, answer) text triple.
struct TripleRecord {
    std::string post_id;
    std::string post_text;
    std::string question_text;
    std::string answer_text;  // may be empty

    bool operator==(const TripleRecord&) const = default;
};

struct Candidate {
    std::string cid;
    std::string question_text;
    std::string answer_text;
    int label = 0;

    bool operator==(const Candidate&) const = default;
};

/// A post with its candidates in retrieval order.
struct CandidateSet {
    std::string post_id;
    std::vector<Candidate> candidates;

    bool operator==(const CandidateSet&) const = default;
};

/// Aggregated gold sets for one annotated test post. Both are stored as
/// given; nothing is re-aggregated here.
struct AnnotationSet {
    std::string post_id;
    std::set<std::string> best_gold;
    std::set<std::string> valid_gold;

    bool operator==(const AnnotationSet&) const = default;
};

using AnnotationMap = std::map<std::string, AnnotationSet>;

struct SplitManifest {
    std::string split_name;
    std::size_t record_count = 0;
    std::string file_digest;
    std::vector<std::string> empty_best_posts;
    std::vector<std::string> empty_valid_posts;
};

template <typename T>
struct Loaded {
    T records;
    SplitManifest manifest;
};

/// Reads a triples JSONL file. Throws ParseError naming the line on
/// malformed input, ValidationError on duplicate or empty ids.
Loaded<std::vector<TripleRecord>> load_triples(const std::filesystem::path& path);

/// Reads a candidate-set JSONL file. Every set must hold exactly ten
/// candidates; train and validation sets must hold exactly one positive.
Loaded<std::vector<CandidateSet>> load_candidate_sets(const std::filesystem::path& path, Split split);

/// Reads an annotation JSONL file as-is. Posts whose gold sets are empty are
/// listed in the manifest.
Loaded<AnnotationMap> load_annotations(const std::filesystem::path& path);

/// Checks every annotated post exists among `sets` and every gold cid is one
/// of that post's candidates.
void cross_validate(const AnnotationMap& annotations, const std::vector<CandidateSet>& sets);

/// Whitespace-delimited token count.
std::size_t count_tokens(std::string_view text);

std::string serialize(const TripleRecord& record);
std::string serialize(const CandidateSet& set);
std::string serialize(const AnnotationSet& annotation);

/// Converts the original tab-separated release layout (post_data.tsv with
/// `post_id \t title \t body` and qa_data.tsv with `post_id \t q1..q10 \t
/// a1..a10`, candidate 1 being the post's own question) into triples and
/// candidate sets for the ids listed in `ids`. Candidate ids are
/// `<post_id>#<index>`. Title and body are joined with a single space.
struct ConvertedSplit {
    std::vector<TripleRecord> triples;
    std::vector<CandidateSet> sets;
};
ConvertedSplit convert_tsv_release(const std::filesystem::path& post_data,
                                   const std::filesystem::path& qa_data,
                                   const std::vector<std::string>& ids);

void write_jsonl(const std::filesystem::path& path, const std::vector<std::string>& lines);

}  // namespace cqrank
