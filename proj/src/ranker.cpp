#include "cqrank/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cqrank/error.hpp"
#include "cqrank/parallel.hpp"

namespace cqrank {

Variant parse_variant(std::string_view name) {
    if (name == "pq") return Variant::PQ;
    if (name == "pqa") return Variant::PQA;
    if (name == "large-pq") return Variant::LargePQ;
    if (name == "large-pqa") return Variant::LargePQA;
    throw ConfigError("unknown variant '" + std::string(name) + "' (expected pq, pqa, large-pq, large-pqa)");
}

std::string_view to_string(Variant variant) {
    switch (variant) {
        case Variant::PQ: return "pq";
        case Variant::PQA: return "pqa";
        case Variant::LargePQ: return "large-pq";
        case Variant::LargePQA: return "large-pqa";
    }
    return "unknown";
}

TextSet text_set(Variant variant) {
    return variant == Variant::PQ || variant == Variant::LargePQ ? TextSet::PQ : TextSet::PQA;
}

std::size_t nominal_encoder_dim(Variant variant) {
    return variant == Variant::PQ || variant == Variant::PQA ? kBaseEncoderDim : kLargeEncoderDim;
}

FeatureSpec FeatureSpec::for_variant(Variant variant, std::size_t store_dim) {
    if (store_dim != nominal_encoder_dim(variant))
        throw ValidationError("variant " + std::string(to_string(variant)) + " expects encoder dim " +
                              std::to_string(nominal_encoder_dim(variant)) + " but the store has dim " +
                              std::to_string(store_dim));
    return {text_set(variant), store_dim};
}

namespace {

void check_len(const Eigen::Ref<const Eigen::VectorXf>& v, std::size_t dim, const char* role) {
    if (static_cast<std::size_t>(v.size()) != dim)
        throw ValidationError(std::string(role) + " vector has length " + std::to_string(v.size()) +
                              ", expected encoder dim " + std::to_string(dim));
}

}  // namespace

Eigen::VectorXd assemble_feature(const FeatureSpec& spec, const Eigen::Ref<const Eigen::VectorXf>& post,
                                 const Eigen::Ref<const Eigen::VectorXf>& question,
                                 const std::optional<Eigen::Ref<const Eigen::VectorXf>>& answer) {
    const auto d = static_cast<Eigen::Index>(spec.encoder_dim);
    check_len(post, spec.encoder_dim, "post");
    check_len(question, spec.encoder_dim, "question");
    if (spec.uses_answer() && !answer) throw ValidationError("PQA feature requires an answer vector");
    if (!spec.uses_answer() && answer) throw ValidationError("PQ feature must not be given an answer vector");
    Eigen::VectorXd out(static_cast<Eigen::Index>(spec.input_dim()));
    out.segment(0, d) = post.cast<double>();
    out.segment(d, d) = question.cast<double>();
    if (answer) {
        check_len(*answer, spec.encoder_dim, "answer");
        out.segment(2 * d, d) = answer->cast<double>();
    }
    return out;
}

void assemble_feature_into(const FeatureSpec& spec, const EmbeddingLookup& store, std::string_view post_id,
                           std::string_view cid, Eigen::Ref<Eigen::VectorXd> out) {
    if (store.dim() != spec.encoder_dim)
        throw ValidationError("store dim " + std::to_string(store.dim()) + " != encoder dim " +
                              std::to_string(spec.encoder_dim));
    if (static_cast<std::size_t>(out.size()) != spec.input_dim()) throw NumericError("feature buffer has wrong length");
    const auto d = static_cast<Eigen::Index>(spec.encoder_dim);
    out.segment(0, d) = store.view(post_key(post_id)).cast<double>();
    out.segment(d, d) = store.view(question_key(cid)).cast<double>();
    if (spec.uses_answer()) out.segment(2 * d, d) = store.view(answer_key(cid)).cast<double>();
}

std::vector<ScoredCandidate> score_candidates(const nn::Mlp& model, const CandidateSet& set,
                                              const EmbeddingLookup& store, const FeatureSpec& spec) {
    if (model.input_dim() != spec.input_dim())
        throw ValidationError("model input_dim " + std::to_string(model.input_dim()) + " != feature input_dim " +
                              std::to_string(spec.input_dim()));
    Eigen::MatrixXd features(static_cast<Eigen::Index>(spec.input_dim()),
                             static_cast<Eigen::Index>(set.candidates.size()));
    for (std::size_t j = 0; j < set.candidates.size(); ++j)
        assemble_feature_into(spec, store, set.post_id, set.candidates[j].cid,
                              features.col(static_cast<Eigen::Index>(j)));
    auto cache = nn::forward_batch(model, features, nn::Mode::Infer);
    std::vector<ScoredCandidate> out;
    out.reserve(set.candidates.size());
    for (std::size_t j = 0; j < set.candidates.size(); ++j)
        out.push_back({set.candidates[j].cid, cache.probs(1, static_cast<Eigen::Index>(j))});
    return out;
}

RankedList rank(std::span<const ScoredCandidate> scores, std::string post_id) {
    RankedList list;
    list.post_id = std::move(post_id);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i].score))
            throw NumericError("non-finite score for candidate '" + scores[i].cid + "'");
        list.entries.push_back({scores[i].cid, scores[i].score, i});
    }
    std::stable_sort(list.entries.begin(), list.entries.end(),
                     [](const RankedEntry& a, const RankedEntry& b) { return a.score > b.score; });
    return list;
}

std::vector<RankedList> rank_all(const nn::Mlp& model, const std::vector<CandidateSet>& sets,
                                 const EmbeddingLookup& store, const FeatureSpec& spec, std::size_t workers) {
    std::vector<RankedList> out(sets.size());
    parallel_for(sets.size(), workers, [&](std::size_t i) {
        auto scores = score_candidates(model, sets[i], store, spec);
        out[i] = rank(scores, sets[i].post_id);
    });
    return out;
}

void write_rankings(const std::filesystem::path& path, const std::vector<RankedList>& rankings) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    for (const auto& list : rankings) {
        nlohmann::ordered_json entries = nlohmann::ordered_json::array();
        for (const auto& e : list.entries) entries.push_back({{"cid", e.cid}, {"score", e.score}});
        nlohmann::ordered_json obj = {{"post_id", list.post_id}, {"ranking", std::move(entries)}};
        out << obj.dump() << '\n';
    }
    if (!out) throw ValidationError("write failed for " + path.string());
}

std::vector<RankedList> read_rankings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open rankings file " + path.string());
    std::vector<RankedList> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        auto obj = nlohmann::json::parse(line, nullptr, false);
        const std::string at = path.string() + ":" + std::to_string(number);
        if (obj.is_discarded() || !obj.is_object() || !obj.contains("post_id") || !obj["post_id"].is_string() ||
            !obj.contains("ranking") || !obj["ranking"].is_array())
            throw ParseError(at + ": malformed ranking record");
        RankedList list;
        list.post_id = obj["post_id"].get<std::string>();
        // original_index is not persisted; read back as list position.
        for (const auto& e : obj["ranking"]) {
            if (!e.is_object() || !e.contains("cid") || !e["cid"].is_string() || !e.contains("score") ||
                !e["score"].is_number())
                throw ParseError(at + ": malformed ranking entry");
            list.entries.push_back({e["cid"].get<std::string>(), e["score"].get<double>(), list.entries.size()});
        }
        out.push_back(std::move(list));
    }
    return out;
}

}  // namespace cqrank
