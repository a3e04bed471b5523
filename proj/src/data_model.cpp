#include "cqrank/data_model.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cqrank/checksum.hpp"
#include "cqrank/error.hpp"

namespace cqrank {

using nlohmann::json;

namespace {

std::string where(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line);
}

// Calls `on_line(json, line_number)` for each record line. Enforces UTF-8
// without BOM and LF line endings.
template <typename F>
void for_each_jsonl(const std::filesystem::path& path, F&& on_line) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (number == 1 && line.starts_with("\xEF\xBB\xBF"))
            throw ParseError(where(path, number) + ": byte-order mark not allowed");
        if (!line.empty() && line.back() == '\r')
            throw ParseError(where(path, number) + ": CRLF line ending not allowed");
        if (line.empty()) {
            if (in.peek() == std::char_traits<char>::eof()) break;
            throw ParseError(where(path, number) + ": blank line");
        }
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(where(path, number) + ": " + e.what());
        }
        if (!record.is_object()) throw ParseError(where(path, number) + ": record is not an object");
        on_line(record, number);
    }
}

std::string get_string(const json& obj, const char* key, const std::filesystem::path& path,
                       std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string())
        throw ParseError(where(path, line) + ": missing or non-string field '" + key + "'");
    return it->get<std::string>();
}

const json& get_array(const json& obj, const char* key, const std::filesystem::path& path,
                      std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_array())
        throw ParseError(where(path, line) + ": missing or non-array field '" + key + "'");
    return *it;
}

SplitManifest make_manifest(std::string name, std::size_t count, const std::filesystem::path& path) {
    SplitManifest m;
    m.split_name = std::move(name);
    m.record_count = count;
    m.file_digest = file_digest(path);
    return m;
}

}  // namespace

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
    }
    return "unknown";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "validation") return Split::Validation;
    if (name == "test") return Split::Test;
    throw ConfigError("unknown split '" + std::string(name) + "'");
}

Loaded<std::vector<TripleRecord>> load_triples(const std::filesystem::path& path) {
    std::vector<TripleRecord> records;
    std::unordered_set<std::string> seen;
    for_each_jsonl(path, [&](const json& obj, std::size_t line) {
        TripleRecord r;
        r.post_id = get_string(obj, "post_id", path, line);
        r.post_text = get_string(obj, "post", path, line);
        r.question_text = get_string(obj, "question", path, line);
        r.answer_text = get_string(obj, "answer", path, line);
        if (r.post_id.empty()) throw ValidationError(where(path, line) + ": empty post_id");
        if (r.post_text.empty()) throw ValidationError(where(path, line) + ": empty post text");
        if (r.question_text.empty()) throw ValidationError(where(path, line) + ": empty question text");
        if (!seen.insert(r.post_id).second)
            throw ValidationError(where(path, line) + ": duplicate post_id '" + r.post_id + "'");
        records.push_back(std::move(r));
    });
    auto manifest = make_manifest("triples", records.size(), path);
    return {std::move(records), std::move(manifest)};
}

Loaded<std::vector<CandidateSet>> load_candidate_sets(const std::filesystem::path& path, Split split) {
    std::vector<CandidateSet> sets;
    std::unordered_set<std::string> seen;
    for_each_jsonl(path, [&](const json& obj, std::size_t line) {
        CandidateSet set;
        set.post_id = get_string(obj, "post_id", path, line);
        if (set.post_id.empty()) throw ValidationError(where(path, line) + ": empty post_id");
        if (!seen.insert(set.post_id).second)
            throw ValidationError(where(path, line) + ": duplicate post_id '" + set.post_id + "'");
        const json& cands = get_array(obj, "candidates", path, line);
        if (cands.size() != kCandidatesPerPost)
            throw ValidationError(where(path, line) + ": post '" + set.post_id + "': expected 10 candidates, got " +
                                  std::to_string(cands.size()));
        std::unordered_set<std::string> cids;
        int positives = 0;
        for (const json& c : cands) {
            if (!c.is_object()) throw ParseError(where(path, line) + ": candidate is not an object");
            Candidate cand;
            cand.cid = get_string(c, "cid", path, line);
            cand.question_text = get_string(c, "question", path, line);
            cand.answer_text = get_string(c, "answer", path, line);
            auto label = c.find("label");
            if (label == c.end() || !label->is_number_integer())
                throw ParseError(where(path, line) + ": missing or non-integer label");
            cand.label = label->get<int>();
            if (cand.label != 0 && cand.label != 1)
                throw ValidationError(where(path, line) + ": label must be 0 or 1");
            if (cand.cid.empty()) throw ValidationError(where(path, line) + ": empty cid");
            if (cand.question_text.empty())
                throw ValidationError(where(path, line) + ": empty question for cid '" + cand.cid + "'");
            if (!cids.insert(cand.cid).second)
                throw ValidationError(where(path, line) + ": duplicate cid '" + cand.cid + "'");
            positives += cand.label;
            set.candidates.push_back(std::move(cand));
        }
        if (split != Split::Test && positives != 1)
            throw ValidationError(where(path, line) + ": post '" + set.post_id +
                                  "': expected exactly one label-1 candidate, got " + std::to_string(positives));
        sets.push_back(std::move(set));
    });
    auto manifest = make_manifest(std::string(to_string(split)), sets.size(), path);
    return {std::move(sets), std::move(manifest)};
}

Loaded<AnnotationMap> load_annotations(const std::filesystem::path& path) {
    AnnotationMap out;
    std::vector<std::string> empty_best, empty_valid;
    for_each_jsonl(path, [&](const json& obj, std::size_t line) {
        AnnotationSet a;
        a.post_id = get_string(obj, "post_id", path, line);
        if (a.post_id.empty()) throw ValidationError(where(path, line) + ": empty post_id");
        for (const char* key : {"best", "valid"}) {
            auto& target = key[0] == 'b' ? a.best_gold : a.valid_gold;
            for (const json& cid : get_array(obj, key, path, line)) {
                if (!cid.is_string()) throw ParseError(where(path, line) + ": non-string cid in '" + key + "'");
                target.insert(cid.get<std::string>());
            }
        }
        if (a.best_gold.empty()) empty_best.push_back(a.post_id);
        if (a.valid_gold.empty()) empty_valid.push_back(a.post_id);
        std::string id = a.post_id;
        if (!out.emplace(id, std::move(a)).second)
            throw ValidationError(where(path, line) + ": duplicate post_id '" + id + "'");
    });
    auto manifest = make_manifest("annotations", out.size(), path);
    manifest.empty_best_posts = std::move(empty_best);
    manifest.empty_valid_posts = std::move(empty_valid);
    return {std::move(out), std::move(manifest)};
}

void cross_validate(const AnnotationMap& annotations, const std::vector<CandidateSet>& sets) {
    std::unordered_map<std::string, const CandidateSet*> by_id;
    for (const auto& s : sets) by_id.emplace(s.post_id, &s);
    for (const auto& [post_id, a] : annotations) {
        auto it = by_id.find(post_id);
        if (it == by_id.end())
            throw ValidationError("annotated post '" + post_id + "' has no candidate set");
        std::unordered_set<std::string> cids;
        for (const auto& c : it->second->candidates) cids.insert(c.cid);
        for (const auto* gold : {&a.best_gold, &a.valid_gold})
            for (const auto& cid : *gold)
                if (!cids.contains(cid))
                    throw ValidationError("post '" + post_id + "': gold cid '" + cid +
                                          "' is not among its candidates");
    }
}

std::size_t count_tokens(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::size_t n = 0;
    std::string token;
    while (in >> token) ++n;
    return n;
}

std::string serialize(const TripleRecord& r) {
    json obj = {{"post_id", r.post_id}, {"post", r.post_text}, {"question", r.question_text},
                {"answer", r.answer_text}};
    return obj.dump();
}

std::string serialize(const CandidateSet& set) {
    json cands = json::array();
    for (const auto& c : set.candidates)
        cands.push_back({{"cid", c.cid}, {"question", c.question_text}, {"answer", c.answer_text}, {"label", c.label}});
    json obj = {{"post_id", set.post_id}, {"candidates", std::move(cands)}};
    return obj.dump();
}

std::string serialize(const AnnotationSet& a) {
    json obj = {{"post_id", a.post_id}, {"best", a.best_gold}, {"valid", a.valid_gold}};
    return obj.dump();
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

std::unordered_map<std::string, std::vector<std::string>> read_tsv(const std::filesystem::path& path,
                                                                   std::size_t columns) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::unordered_map<std::string, std::vector<std::string>> rows;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        if (line.back() == '\r') line.pop_back();
        auto fields = split_tabs(line);
        if (fields.size() != columns)
            throw ParseError(where(path, number) + ": expected " + std::to_string(columns) + " columns, got " +
                             std::to_string(fields.size()));
        std::string id = fields.front();
        rows.emplace(std::move(id), std::move(fields));
    }
    return rows;
}

}  // namespace

ConvertedSplit convert_tsv_release(const std::filesystem::path& post_data, const std::filesystem::path& qa_data,
                                   const std::vector<std::string>& ids) {
    auto posts = read_tsv(post_data, 3);
    auto qa = read_tsv(qa_data, 1 + 2 * kCandidatesPerPost);
    ConvertedSplit out;
    for (const auto& id : ids) {
        auto p = posts.find(id);
        auto q = qa.find(id);
        if (p == posts.end() || q == qa.end())
            throw ValidationError("post '" + id + "' missing from the TSV release");
        const auto& pf = p->second;
        const auto& qf = q->second;
        TripleRecord t{id, pf[1].empty() ? pf[2] : pf[1] + " " + pf[2], qf[1], qf[1 + kCandidatesPerPost]};
        CandidateSet set{id, {}};
        for (std::size_t j = 0; j < kCandidatesPerPost; ++j)
            set.candidates.push_back(
                {id + "#" + std::to_string(j), qf[1 + j], qf[1 + kCandidatesPerPost + j], j == 0 ? 1 : 0});
        out.triples.push_back(std::move(t));
        out.sets.push_back(std::move(set));
    }
    return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    for (const auto& l : lines) out << l << '\n';
    if (!out) throw ValidationError("write failed for " + path.string());
}

}  // namespace cqrank
