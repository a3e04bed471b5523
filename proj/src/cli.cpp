#include "cqrank/cli.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "cqrank/checksum.hpp"
#include "cqrank/data_model.hpp"
#include "cqrank/embedding_store.hpp"
#include "cqrank/error.hpp"
#include "cqrank/neural/checkpoint.hpp"
#include "cqrank/parallel.hpp"
#include "cqrank/ranker.hpp"

namespace cqrank::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string strip_quotes(std::string v) {
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
        return v.substr(1, v.size() - 2);
    return v;
}

std::vector<std::size_t> parse_widths(const std::string& text) {
    std::vector<std::size_t> out;
    std::string cleaned;
    for (char c : text)
        if (c != '[' && c != ']' && c != ' ') cleaned += c;
    std::stringstream ss(cleaned);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t pos = 0;
            long long v = std::stoll(item, &pos);
            if (pos != item.size() || v <= 0) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ConfigError("invalid hidden width '" + item + "'");
        }
    }
    return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
}

std::string path_string(const std::optional<fs::path>& p) { return p ? p->generic_string() : std::string(); }

}  // namespace

std::string ExperimentConfig::canonical() const {
    ordered_json j = {
        {"train", {{"triples", path_string(train.triples)}, {"sets", path_string(train.sets)}}},
        {"validation", {{"triples", path_string(validation.triples)}, {"sets", path_string(validation.sets)}}},
        {"test", {{"triples", path_string(test.triples)}, {"sets", path_string(test.sets)}}},
        {"annotations", path_string(annotations)},
        {"store", store.generic_string()},
        {"out", out_dir.generic_string()},
        {"training", ordered_json::parse(train_config.canonical())},
        {"regime", regime},
        {"empty_gold", empty_gold == EmptyGold::Skip ? "skip" : "zero"},
    };
    return j.dump();
}

std::string ExperimentConfig::digest() const { return to_hex(crc64(canonical())); }

ExperimentConfig load_config(const fs::path& path) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    const fs::path base = path.parent_path();
    auto get = [&](const std::string& key) -> std::optional<std::string> {
        auto v = tree.get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return strip_quotes(*v);
    };
    auto get_path = [&](const std::string& key) -> std::optional<fs::path> {
        auto v = get(key);
        if (!v || v->empty()) return std::nullopt;
        fs::path p(*v);
        return p.is_absolute() ? p : base / p;
    };
    auto get_number = [&](const std::string& key, auto& target) {
        auto v = get(key);
        if (!v) return;
        try {
            std::size_t pos = 0;
            if constexpr (std::is_floating_point_v<std::decay_t<decltype(target)>>) target = std::stod(*v, &pos);
            else {
                if (!v->empty() && v->front() == '-') throw std::invalid_argument(*v);
                target = static_cast<std::decay_t<decltype(target)>>(std::stoull(*v, &pos));
            }
            if (pos != v->size()) throw std::invalid_argument(*v);
        } catch (const std::exception&) {
            throw ConfigError("config: invalid number for " + key + ": '" + *v + "'");
        }
    };

    ExperimentConfig c;
    c.train = {get_path("data.train_triples"), get_path("data.train_sets")};
    c.validation = {get_path("data.validation_triples"), get_path("data.validation_sets")};
    c.test = {get_path("data.test_triples"), get_path("data.test_sets")};
    c.annotations = get_path("data.annotations");
    if (auto p = get_path("store.path")) c.store = *p;
    else c.store = base / c.store;
    if (auto e = get("store.endpoint")) c.endpoint = *e;
    get_number("store.fetch_batch", c.fetch_batch);
    if (auto p = get_path("output.dir")) c.out_dir = *p;
    else c.out_dir = base / c.out_dir;

    auto& t = c.train_config;
    if (auto v = get("train.variant")) t.variant = parse_variant(*v);
    get_number("train.batch_size", t.batch_size);
    get_number("train.epochs", t.epochs);
    get_number("train.learning_rate", t.learning_rate);
    get_number("train.dropout", t.dropout_rate);
    get_number("train.seed", t.seed);
    if (auto v = get("train.hidden_dims")) t.hidden_dims = parse_widths(*v);
    if (auto v = get("train.class_weighting")) t.class_weighting = parse_bool(*v, "train.class_weighting");
    if (auto v = get("eval.regime")) c.regime = *v;
    if (auto v = get("eval.empty_gold")) c.empty_gold = parse_empty_gold(*v);
    return c;
}

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> variant;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> lr;
    std::optional<double> dropout;
    std::optional<std::string> store;
    std::optional<std::string> out;
    std::optional<std::string> regime;
    std::optional<std::string> empty_gold;
    std::optional<std::string> endpoint;
    std::optional<std::string> model;
    std::optional<std::string> resume;
    std::optional<std::string> convert_post_data, convert_qa_data, convert_ids, convert_split;
};

ExperimentConfig resolve(const Overrides& o) {
    ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (o.variant) c.train_config.variant = parse_variant(*o.variant);
    if (o.seed) c.train_config.seed = *o.seed;
    if (o.epochs) c.train_config.epochs = *o.epochs;
    if (o.batch_size) c.train_config.batch_size = *o.batch_size;
    if (o.lr) c.train_config.learning_rate = *o.lr;
    if (o.dropout) c.train_config.dropout_rate = *o.dropout;
    if (o.store) c.store = *o.store;
    if (o.out) c.out_dir = *o.out;
    if (o.regime) c.regime = *o.regime;
    if (o.empty_gold) c.empty_gold = parse_empty_gold(*o.empty_gold);
    if (o.endpoint) c.endpoint = *o.endpoint;
    if (c.regime != "both") parse_regime(c.regime);
    c.train_config.validate();
    return c;
}

std::vector<Regime> regimes(const ExperimentConfig& c) {
    if (c.regime == "both") return {Regime::Best, Regime::Valid};
    return {parse_regime(c.regime)};
}

const fs::path& require(const std::optional<fs::path>& p, const char* key) {
    if (!p) throw ConfigError("config is missing " + std::string(key));
    return *p;
}

fs::path ensure_out_dir(const ExperimentConfig& c) {
    std::error_code ec;
    fs::create_directories(c.out_dir, ec);
    if (ec || !fs::is_directory(c.out_dir))
        throw ConfigError("output directory " + c.out_dir.string() + " is not writable");
    return c.out_dir;
}

FeatureSpec feature_spec(const ExperimentConfig& c, const EmbeddingStore& store) {
    return FeatureSpec::for_variant(c.train_config.variant, store.dim());
}

std::map<std::string, std::string> post_texts(const fs::path& triples) {
    std::map<std::string, std::string> out;
    for (auto& t : load_triples(triples).records) out.emplace(t.post_id, std::move(t.post_text));
    return out;
}

ordered_json manifest_json(const SplitManifest& m, const fs::path& file) {
    return {{"split", m.split_name},
            {"file", file.filename().generic_string()},
            {"record_count", m.record_count},
            {"file_digest", m.file_digest},
            {"empty_best_posts", m.empty_best_posts},
            {"empty_valid_posts", m.empty_valid_posts}};
}

int cmd_prepare(const ExperimentConfig& c, const Overrides& o, std::ostream& out) {
    if (o.convert_post_data || o.convert_qa_data || o.convert_ids) {
        if (!o.convert_post_data || !o.convert_qa_data || !o.convert_ids || !o.convert_split)
            throw ConfigError("conversion needs --convert-post-data, --convert-qa-data, --convert-ids and --convert-split");
        Split split = parse_split(*o.convert_split);
        const SplitPaths& paths = split == Split::Train ? c.train : split == Split::Validation ? c.validation : c.test;
        std::ifstream ids_in(*o.convert_ids);
        if (!ids_in) throw ValidationError("cannot open " + *o.convert_ids);
        std::vector<std::string> ids;
        for (std::string id; std::getline(ids_in, id);)
            if (!id.empty()) ids.push_back(id);
        auto converted = convert_tsv_release(*o.convert_post_data, *o.convert_qa_data, ids);
        std::vector<std::string> lines;
        for (const auto& t : converted.triples) lines.push_back(serialize(t));
        write_jsonl(require(paths.triples, "triples path for the conversion split"), lines);
        lines.clear();
        for (const auto& s : converted.sets) lines.push_back(serialize(s));
        write_jsonl(require(paths.sets, "sets path for the conversion split"), lines);
        out << "converted " << converted.sets.size() << " posts into the " << to_string(split) << " split\n";
    }

    ordered_json splits = ordered_json::array();
    std::vector<CandidateSet> test_sets;
    auto check_split = [&](const SplitPaths& paths, Split split) {
        std::set<std::string> post_ids;
        if (paths.triples) {
            auto t = load_triples(*paths.triples);
            t.manifest.split_name = std::string(to_string(split)) + "_triples";
            for (const auto& r : t.records) post_ids.insert(r.post_id);
            splits.push_back(manifest_json(t.manifest, *paths.triples));
        }
        if (paths.sets) {
            auto s = load_candidate_sets(*paths.sets, split);
            if (paths.triples)
                for (const auto& set : s.records)
                    if (!post_ids.contains(set.post_id))
                        throw ValidationError(paths.sets->string() + ": post '" + set.post_id +
                                              "' has no triple in " + paths.triples->string());
            splits.push_back(manifest_json(s.manifest, *paths.sets));
            if (split == Split::Test) test_sets = std::move(s.records);
        }
    };
    check_split(c.train, Split::Train);
    check_split(c.validation, Split::Validation);
    check_split(c.test, Split::Test);
    if (c.annotations) {
        auto a = load_annotations(*c.annotations);
        cross_validate(a.records, test_sets);
        splits.push_back(manifest_json(a.manifest, *c.annotations));
    }
    if (splits.empty()) throw ConfigError("no data files configured");

    auto dir = ensure_out_dir(c);
    ordered_json manifest = {{"config_digest", c.digest()}, {"splits", std::move(splits)}};
    std::ofstream f(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    f << manifest.dump(2) << '\n';
    out << "wrote " << (dir / "manifest.json").string() << '\n';
    return kOk;
}

int cmd_embed_fetch(const ExperimentConfig& c, std::ostream& out) {
    if (c.endpoint.empty()) throw ConfigError("embed-fetch needs an endpoint ([store] endpoint or --endpoint)");
    if (c.fetch_batch == 0) throw ConfigError("fetch_batch must be positive");
    std::vector<std::string> keys, texts;
    std::unordered_map<std::string, std::size_t> seen;
    auto add = [&](std::string key, const std::string& text) {
        auto [it, inserted] = seen.emplace(key, keys.size());
        if (!inserted) {
            if (texts[it->second] != text) throw ValidationError("key '" + key + "' maps to two different texts");
            return;
        }
        keys.push_back(std::move(key));
        texts.push_back(text);
    };
    for (auto [paths, split] : {std::pair{&c.train, Split::Train}, std::pair{&c.validation, Split::Validation},
                                std::pair{&c.test, Split::Test}}) {
        if (!paths->sets) continue;
        auto sets = load_candidate_sets(*paths->sets, split).records;
        auto posts = post_texts(require(paths->triples, "triples file for every configured candidate-set split"));
        for (const auto& s : sets) {
            auto p = posts.find(s.post_id);
            if (p == posts.end()) throw ValidationError("post '" + s.post_id + "' has no triple");
            add(post_key(s.post_id), p->second);
            for (const auto& cand : s.candidates) {
                add(question_key(cand.cid), cand.question_text);
                add(answer_key(cand.cid), cand.answer_text);
            }
        }
    }
    if (keys.empty()) throw ConfigError("no candidate sets configured; nothing to embed");

    auto info = fetch_info(c.endpoint);
    RemoteOptions options;
    options.expected_dim = info.dim;
    std::vector<EmbeddingEntry> entries;
    entries.reserve(keys.size());
    for (std::size_t begin = 0; begin < keys.size(); begin += c.fetch_batch) {
        std::size_t end = std::min(keys.size(), begin + c.fetch_batch);
        auto vectors = fetch_remote(c.endpoint, std::span<const std::string>(texts.data() + begin, end - begin), options);
        for (std::size_t i = begin; i < end; ++i) entries.emplace_back(keys[i], std::move(vectors[i - begin]));
    }
    if (c.store.has_parent_path()) fs::create_directories(c.store.parent_path());
    auto digest = write_store(entries, info.dim, c.store, info.model);
    out << "wrote " << entries.size() << " embeddings (dim " << info.dim << ", digest " << digest << ") to "
        << c.store.string() << '\n';
    return kOk;
}

int cmd_train(const ExperimentConfig& c, const Overrides& o, std::ostream& out) {
    auto store = EmbeddingStore::open(c.store);
    auto spec = feature_spec(c, store);
    auto train_sets = load_candidate_sets(require(c.train.sets, "data.train_sets"), Split::Train);
    auto examples = build_examples(train_sets.records, store, spec);
    std::optional<StoreExamples> validation;
    std::optional<Loaded<std::vector<CandidateSet>>> val_sets;
    if (c.validation.sets) {
        val_sets = load_candidate_sets(*c.validation.sets, Split::Validation);
        validation = build_examples(val_sets->records, store, spec);
    }
    auto dir = ensure_out_dir(c);
    TrainOptions options;
    options.validation = validation ? &*validation : nullptr;
    options.checkpoint_dir = dir / "checkpoints";
    options.workers = default_worker_count();
    if (o.resume) options.resume = nn::load_checkpoint(*o.resume);
    options.on_epoch = [&](const EpochRecord& r) {
        out << "epoch " << r.epoch << " train_loss " << r.train_loss;
        if (r.validation_p_at_1) out << " val_p@1 " << *r.validation_p_at_1;
        out << '\n';
    };
    auto result = train(examples, c.train_config, options);
    ordered_json extra = {{"experiment_digest", c.digest()},
                          {"store_digest", store.digest()},
                          {"train_sets_digest", train_sets.manifest.file_digest},
                          {"validation_sets_digest", val_sets ? val_sets->manifest.file_digest : ""},
                          {"examples", examples.size()}};
    write_train_log(dir / "train_log.jsonl", result.log, extra.dump());
    return kOk;
}

fs::path model_path(const ExperimentConfig& c, const Overrides& o) {
    if (o.model) return *o.model;
    return c.out_dir / "checkpoints" / checkpoint_name(c.train_config.epochs);
}

int cmd_rank(const ExperimentConfig& c, const Overrides& o, std::ostream& out) {
    auto store = EmbeddingStore::open(c.store);
    auto spec = feature_spec(c, store);
    auto cp = nn::load_checkpoint(model_path(c, o));
    auto sets = load_candidate_sets(require(c.test.sets, "data.test_sets"), Split::Test);
    auto rankings = rank_all(cp.model, sets.records, store, spec, default_worker_count());
    auto dir = ensure_out_dir(c);
    write_rankings(dir / "rankings.jsonl", rankings);
    out << "ranked " << rankings.size() << " posts into " << (dir / "rankings.jsonl").string() << '\n';
    return kOk;
}

struct EvalInputs {
    std::vector<RankedList> rankings;
    AnnotationMap annotations;
};

EvalInputs eval_inputs(const ExperimentConfig& c) {
    EvalInputs in;
    in.rankings = read_rankings(c.out_dir / "rankings.jsonl");
    in.annotations = load_annotations(require(c.annotations, "data.annotations")).records;
    if (c.test.sets) cross_validate(in.annotations, load_candidate_sets(*c.test.sets, Split::Test).records);
    return in;
}

int cmd_eval(const ExperimentConfig& c, std::ostream& out) {
    auto in = eval_inputs(c);
    std::vector<PrecisionReport> reports;
    for (auto r : regimes(c)) reports.push_back(evaluate(in.rankings, in.annotations, r, c.empty_gold));
    auto written = emit_report(c.out_dir, to_string(c.train_config.variant), reports, {});
    for (const auto& r : reports) {
        out << to_string(r.regime) << ":";
        for (std::size_t k = 0; k < kMaxReportedK; ++k) out << " P@" << k + 1 << "=" << r.p_at[k];
        out << " (evaluated " << r.posts_evaluated << ", skipped " << r.posts_skipped_empty_gold << ")\n";
    }
    return kOk;
}

int cmd_analyze(const ExperimentConfig& c, std::ostream& out) {
    auto in = eval_inputs(c);
    auto texts = post_texts(require(c.test.triples, "data.test_triples"));
    std::vector<BucketReport> reports;
    for (auto r : regimes(c)) reports.push_back(bucket_by_length(in.rankings, in.annotations, texts, r, c.empty_gold));
    for (const auto& p : emit_report(c.out_dir, to_string(c.train_config.variant), {}, reports))
        out << "wrote " << p.string() << '\n';
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Clarification-question ranking pipeline", "cqrank"};
    app.require_subcommand(1);
    app.fallthrough();
    Overrides o;
    app.add_option("--config", o.config, "Experiment config file")->check(CLI::ExistingFile);
    app.add_option("--variant", o.variant, "pq, pqa, large-pq or large-pqa");
    app.add_option("--seed", o.seed, "Training seed");
    app.add_option("--epochs", o.epochs, "Training epochs");
    app.add_option("--batch-size", o.batch_size, "Examples per optimizer step");
    app.add_option("--lr", o.lr, "Adam learning rate");
    app.add_option("--dropout", o.dropout, "Dropout rate before each linear layer");
    app.add_option("--store", o.store, "Embedding store file");
    app.add_option("--out", o.out, "Output directory");
    app.add_option("--regime", o.regime, "best, valid or both");
    app.add_option("--empty-gold", o.empty_gold, "skip or zero");

    auto* prepare = app.add_subcommand("prepare", "Validate dataset files and write manifests");
    prepare->add_option("--convert-post-data", o.convert_post_data, "post_data.tsv of the original release");
    prepare->add_option("--convert-qa-data", o.convert_qa_data, "qa_data.tsv of the original release");
    prepare->add_option("--convert-ids", o.convert_ids, "File listing the post ids of one split");
    prepare->add_option("--convert-split", o.convert_split, "train, validation or test");
    auto* fetch = app.add_subcommand("embed-fetch", "Build the embedding store from an embedding service");
    fetch->add_option("--endpoint", o.endpoint, "Embedding service base URL");
    auto* train_cmd = app.add_subcommand("train", "Train the classifier");
    train_cmd->add_option("--resume", o.resume, "Checkpoint to resume from");
    auto* rank_cmd = app.add_subcommand("rank", "Rank the test candidates");
    rank_cmd->add_option("--model", o.model, "Checkpoint to rank with (default: last epoch)");
    auto* eval_cmd = app.add_subcommand("eval", "Precision@k against the annotations");
    auto* analyze_cmd = app.add_subcommand("analyze", "Rank-1 correctness by post length");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        ExperimentConfig config = resolve(o);
        err << "config digest " << config.digest() << '\n';
        if (prepare->parsed()) return cmd_prepare(config, o, out);
        if (fetch->parsed()) return cmd_embed_fetch(config, out);
        if (train_cmd->parsed()) return cmd_train(config, o, out);
        if (rank_cmd->parsed()) return cmd_rank(config, o, out);
        if (eval_cmd->parsed()) return cmd_eval(config, out);
        if (analyze_cmd->parsed()) return cmd_analyze(config, out);
        return kConfigError;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const TransportError& e) {
        err << "transport error: " << e.what() << '\n';
        return kTransportError;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kNumericError;
    } catch (const Error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUnexpected;
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"cqrank"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cqrank::cli
