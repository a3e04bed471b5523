#include "cqrank/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cqrank/error.hpp"

namespace cqrank {

std::string_view to_string(Regime regime) { return regime == Regime::Best ? "best" : "valid"; }

Regime parse_regime(std::string_view name) {
    if (name == "best") return Regime::Best;
    if (name == "valid") return Regime::Valid;
    throw ConfigError("unknown regime '" + std::string(name) + "'");
}

EmptyGold parse_empty_gold(std::string_view name) {
    if (name == "skip") return EmptyGold::Skip;
    if (name == "zero") return EmptyGold::Zero;
    throw ConfigError("unknown empty-gold policy '" + std::string(name) + "' (expected skip or zero)");
}

double precision_at_k(const RankedList& ranking, const std::set<std::string>& gold, std::size_t k) {
    if (k < 1 || k > kCandidatesPerPost) throw ValidationError("k must lie in [1, 10]");
    if (k > ranking.entries.size()) throw ValidationError("k exceeds the ranking length");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i) hits += gold.contains(ranking.entries[i].cid);
    return static_cast<double>(hits) / static_cast<double>(k);
}

const std::set<std::string>& gold_for(const AnnotationSet& a, Regime regime) {
    return regime == Regime::Best ? a.best_gold : a.valid_gold;
}

namespace {

// Rankings sorted by post id so aggregation does not depend on input order.
std::vector<const RankedList*> canonical_order(const std::vector<RankedList>& rankings,
                                               const AnnotationMap& annotations) {
    std::vector<const RankedList*> order;
    order.reserve(rankings.size());
    for (const auto& r : rankings) {
        if (!annotations.contains(r.post_id))
            throw ValidationError("no annotation for ranked post '" + r.post_id + "'");
        order.push_back(&r);
    }
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->post_id < b->post_id; });
    for (std::size_t i = 1; i < order.size(); ++i)
        if (order[i]->post_id == order[i - 1]->post_id)
            throw ValidationError("post '" + order[i]->post_id + "' ranked twice");
    return order;
}

}  // namespace

PrecisionReport evaluate(const std::vector<RankedList>& rankings, const AnnotationMap& annotations, Regime regime,
                         EmptyGold empty_gold) {
    if (rankings.empty()) throw ValidationError("nothing to report: no rankings");
    PrecisionReport report;
    report.regime = regime;
    std::array<double, kMaxReportedK> sums{};
    for (const RankedList* r : canonical_order(rankings, annotations)) {
        const auto& gold = gold_for(annotations.at(r->post_id), regime);
        if (gold.empty() && empty_gold == EmptyGold::Skip) {
            ++report.posts_skipped_empty_gold;
            continue;
        }
        ++report.posts_evaluated;
        for (std::size_t k = 1; k <= kMaxReportedK; ++k) sums[k - 1] += precision_at_k(*r, gold, k);
    }
    if (report.posts_evaluated > 0)
        for (std::size_t k = 0; k < kMaxReportedK; ++k)
            report.p_at[k] = sums[k] / static_cast<double>(report.posts_evaluated) * 100.0;
    return report;
}

std::vector<LengthBucket> default_length_buckets() {
    return {{"1-40", 1, 40},     {"41-80", 41, 80},   {"81-120", 81, 120},
            {"121-160", 121, 160}, {"161-200", 161, 200}, {"201-300+", 201, 0}};
}

BucketReport bucket_by_length(const std::vector<RankedList>& rankings, const AnnotationMap& annotations,
                              const std::map<std::string, std::string>& post_texts, Regime regime,
                              EmptyGold empty_gold) {
    BucketReport report;
    report.regime = regime;
    report.buckets = default_length_buckets();
    for (const RankedList* r : canonical_order(rankings, annotations)) {
        const auto& gold = gold_for(annotations.at(r->post_id), regime);
        if (gold.empty() && empty_gold == EmptyGold::Skip) continue;
        auto text = post_texts.find(r->post_id);
        if (text == post_texts.end()) throw ValidationError("no post text for '" + r->post_id + "'");
        const std::size_t len = count_tokens(text->second);
        auto bucket = std::find_if(report.buckets.begin(), report.buckets.end(),
                                   [&](const LengthBucket& b) { return b.upper == 0 || len <= b.upper; });
        ++bucket->post_count;
        if (!r->entries.empty() && gold.contains(r->entries.front().cid)) ++bucket->correct_at_1;
    }
    return report;
}

void write_metrics(const std::filesystem::path& path, std::string_view model, const std::vector<PrecisionReport>& reports) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    for (const auto& r : reports) {
        nlohmann::ordered_json p_at;
        for (std::size_t k = 1; k <= kMaxReportedK; ++k) p_at[std::to_string(k)] = r.p_at[k - 1];
        nlohmann::ordered_json j = {{"model", model},
                                    {"regime", to_string(r.regime)},
                                    {"p_at", std::move(p_at)},
                                    {"evaluated", r.posts_evaluated},
                                    {"skipped", r.posts_skipped_empty_gold}};
        out << j.dump() << '\n';
    }
    if (!out) throw ValidationError("write failed for " + path.string());
}

void write_bucket_csv(const std::filesystem::path& path, std::string_view model, const BucketReport& report) {
    if (model.find_first_of(",\"\n") != std::string_view::npos)
        throw ValidationError("model tag must not contain commas, quotes or newlines");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "bucket,total,correct,model,regime\n";
    for (const auto& b : report.buckets)
        out << b.label << ',' << b.post_count << ',' << b.correct_at_1 << ',' << model << ','
            << to_string(report.regime) << '\n';
    if (!out) throw ValidationError("write failed for " + path.string());
}

std::vector<BucketCsvRow> read_bucket_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "bucket,total,correct,model,regime")
        throw ParseError(path.string() + ": unexpected CSV header");
    std::vector<BucketCsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        BucketCsvRow row;
        std::string total, correct;
        if (!std::getline(fields, row.bucket, ',') || !std::getline(fields, total, ',') ||
            !std::getline(fields, correct, ',') || !std::getline(fields, row.model, ',') ||
            !std::getline(fields, row.regime))
            throw ParseError(path.string() + ": malformed CSV row '" + line + "'");
        row.total = std::stoull(total);
        row.correct = std::stoull(correct);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::filesystem::path> emit_report(const std::filesystem::path& dir, std::string_view model,
                                               const std::vector<PrecisionReport>& reports,
                                               const std::vector<BucketReport>& buckets) {
    if (reports.empty() && buckets.empty()) throw ValidationError("nothing to report");
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    if (!reports.empty()) {
        written.push_back(dir / "metrics.jsonl");
        write_metrics(written.back(), model, reports);
    }
    for (const auto& b : buckets) {
        written.push_back(dir / ("buckets_" + std::string(to_string(b.regime)) + ".csv"));
        write_bucket_csv(written.back(), model, b);
    }
    return written;
}

}  // namespace cqrank
