#include "cqrank/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cqrank/checksum.hpp"
#include "cqrank/error.hpp"
#include "cqrank/parallel.hpp"
#include "cqrank/random.hpp"

namespace cqrank {

using nn::LayerStack;

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
    for (auto h : hidden_dims)
        if (h == 0) throw ConfigError("hidden widths must be positive");
}

std::string TrainConfig::canonical() const {
    nlohmann::ordered_json j = {{"variant", to_string(variant)},   {"batch_size", batch_size},
                                {"epochs", epochs},                {"learning_rate", learning_rate},
                                {"dropout_rate", dropout_rate},    {"seed", seed},
                                {"hidden_dims", hidden_dims},      {"class_weighting", class_weighting}};
    return j.dump();
}

std::string TrainConfig::digest() const { return to_hex(crc64(canonical())); }

DenseExamples::DenseExamples(Eigen::MatrixXd features, std::vector<int> labels, std::size_t group_size)
    : features_(std::move(features)), labels_(std::move(labels)), group_size_(group_size) {
    if (static_cast<std::size_t>(features_.cols()) != labels_.size())
        throw ValidationError("feature column count != label count");
    for (int y : labels_)
        if (y != 0 && y != 1) throw ValidationError("label must be 0 or 1");
    if (group_size_ > 0 && labels_.size() % group_size_ != 0)
        throw ValidationError("example count is not a multiple of the group size");
}

void DenseExamples::fill(std::size_t i, Eigen::Ref<Eigen::VectorXd> out) const {
    out = features_.col(static_cast<Eigen::Index>(i));
}

StoreExamples::StoreExamples(const EmbeddingLookup& store, FeatureSpec spec, std::vector<Ref> refs)
    : store_(&store), spec_(spec), refs_(std::move(refs)) {}

void StoreExamples::fill(std::size_t i, Eigen::Ref<Eigen::VectorXd> out) const {
    assemble_feature_into(spec_, *store_, refs_[i].post_id, refs_[i].cid, out);
}

TrainingExample StoreExamples::example(std::size_t i) const {
    TrainingExample ex;
    ex.feature.resize(static_cast<Eigen::Index>(spec_.input_dim()));
    fill(i, ex.feature);
    ex.label = refs_[i].label;
    ex.post_id = refs_[i].post_id;
    ex.candidate_id = refs_[i].cid;
    return ex;
}

StoreExamples build_examples(const std::vector<CandidateSet>& sets, const EmbeddingLookup& store,
                             const FeatureSpec& spec) {
    if (store.dim() != spec.encoder_dim)
        throw ValidationError("store dim " + std::to_string(store.dim()) + " != encoder dim " +
                              std::to_string(spec.encoder_dim));
    std::vector<StoreExamples::Ref> refs;
    refs.reserve(sets.size() * kCandidatesPerPost);
    for (const auto& set : sets) {
        store.view(post_key(set.post_id));
        for (const auto& c : set.candidates) {
            store.view(question_key(c.cid));
            if (spec.uses_answer()) store.view(answer_key(c.cid));
            refs.push_back({set.post_id, c.cid, c.label});
        }
    }
    return StoreExamples(store, spec, std::move(refs));
}

std::string checkpoint_name(std::size_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "epoch-%04zu.cqmlp", epoch);
    return buf;
}

namespace {

struct ChunkResult {
    LayerStack<double> grads;
    double loss = 0.0;  // sum of weight * CE over the chunk
};

struct ClassWeights {
    double negative = 1.0;
    double positive = 1.0;
};

ChunkResult compute_chunk(const nn::Mlp& model, const ExampleSource& source, std::span<const std::size_t> indices,
                          std::uint64_t seed, std::size_t epoch, const ClassWeights& cw, Eigen::Index normaliser) {
    const auto n = static_cast<Eigen::Index>(indices.size());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(source.feature_dim()), n);
    std::vector<int> labels(indices.size());
    std::vector<double> weights(indices.size());
    std::vector<SplitMix64> rngs;
    rngs.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        source.fill(indices[k], x.col(static_cast<Eigen::Index>(k)));
        labels[k] = source.label(indices[k]);
        weights[k] = labels[k] == 1 ? cw.positive : cw.negative;
        rngs.emplace_back(derive_seed(seed, {0xD509, epoch, indices[k]}));
    }
    auto cache = nn::forward_batch(model, x, nn::Mode::Train, std::span<SplitMix64>(rngs));
    ChunkResult out;
    for (std::size_t k = 0; k < indices.size(); ++k)
        out.loss += weights[k] * nn::cross_entropy(cache.probs.col(static_cast<Eigen::Index>(k)), labels[k]);
    out.grads = nn::backward(model, cache, std::span<const int>(labels), std::span<const double>(weights), normaliser);
    return out;
}

void accumulate(LayerStack<double>& total, const LayerStack<double>& part) {
    for (std::size_t l = 0; l < total.size(); ++l) {
        total[l].weights += part[l].weights;
        total[l].bias += part[l].bias;
    }
}

}  // namespace

ValidationMetrics validate(const nn::Mlp& model, const ExampleSource& source, std::size_t workers) {
    const std::size_t n = source.size();
    if (n == 0) throw ValidationError("validation set is empty");
    std::vector<double> probs(n);
    const std::size_t chunks = (n + kGradientChunk - 1) / kGradientChunk;
    parallel_for(chunks, workers, [&](std::size_t c) {
        const std::size_t begin = c * kGradientChunk, end = std::min(n, begin + kGradientChunk);
        Eigen::MatrixXd x(static_cast<Eigen::Index>(source.feature_dim()), static_cast<Eigen::Index>(end - begin));
        for (std::size_t i = begin; i < end; ++i) source.fill(i, x.col(static_cast<Eigen::Index>(i - begin)));
        auto cache = nn::forward_batch(model, x, nn::Mode::Infer);
        for (std::size_t i = begin; i < end; ++i) probs[i] = cache.probs(1, static_cast<Eigen::Index>(i - begin));
    });
    ValidationMetrics m;
    for (std::size_t i = 0; i < n; ++i) {
        double p = source.label(i) == 1 ? probs[i] : 1.0 - probs[i];
        m.loss += -std::log(std::max(p, nn::kLogFloor));
    }
    m.loss /= static_cast<double>(n);
    const std::size_t g = source.group_size();
    if (g > 0) {
        std::size_t hits = 0;
        for (std::size_t start = 0; start + g <= n; start += g) {
            std::vector<ScoredCandidate> scores;
            for (std::size_t j = 0; j < g; ++j) scores.push_back({std::to_string(j), probs[start + j]});
            auto ranked = rank(scores);
            if (source.label(start + ranked.entries.front().original_index) == 1) ++hits;
        }
        m.p_at_1 = 100.0 * static_cast<double>(hits) / static_cast<double>(n / g);
    }
    return m;
}

TrainResult train(const ExampleSource& examples, const TrainConfig& config, const TrainOptions& options) {
    config.validate();
    const std::size_t n = examples.size();
    if (n == 0) throw ValidationError("no training examples");
    const auto started = std::chrono::steady_clock::now();

    nn::MlpShape shape{examples.feature_dim(), config.hidden_dims, nn::kNumClasses};
    TrainResult result;
    std::size_t first_epoch = 1;
    if (options.resume) {
        if (options.resume->model.shape() != shape)
            throw ValidationError("resume checkpoint shape does not match the configured model");
        result.model = options.resume->model;
        result.model.set_dropout_rate(config.dropout_rate);
        result.optimizer = options.resume->optimizer;
        first_epoch = options.resume->epochs_completed + 1;
    } else {
        result.model = nn::Mlp::initialized(shape, config.dropout_rate, config.seed);
        result.optimizer = nn::Adam::fresh(shape, config.learning_rate);
    }
    result.log.seed = config.seed;
    result.log.config_digest = config.digest();

    ClassWeights cw;
    if (config.class_weighting) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n; ++i) pos += examples.label(i) == 1;
        if (pos > 0 && pos < n) cw.positive = static_cast<double>(n - pos) / static_cast<double>(pos);
    }
    if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);
    const std::size_t workers = std::max<std::size_t>(1, options.workers);

    std::vector<std::size_t> order(n);
    for (std::size_t epoch = first_epoch; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        SplitMix64 shuffler(derive_seed(config.seed, {0x5A0F, epoch}));
        portable_shuffle(std::span<std::size_t>(order), shuffler);

        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < n; begin += config.batch_size, ++batch_index) {
            const std::size_t end = std::min(n, begin + config.batch_size);
            const std::span<const std::size_t> batch(order.data() + begin, end - begin);
            const std::size_t chunks = (batch.size() + kGradientChunk - 1) / kGradientChunk;
            const auto normaliser = static_cast<Eigen::Index>(batch.size());

            LayerStack<double> grads;
            double batch_loss = 0.0;
            std::vector<ChunkResult> wave(std::min(chunks, workers));
            try {
                for (std::size_t first = 0; first < chunks; first += wave.size()) {
                    const std::size_t count = std::min(wave.size(), chunks - first);
                    parallel_for(count, workers, [&](std::size_t k) {
                        const std::size_t c = first + k;
                        auto part = batch.subspan(c * kGradientChunk,
                                                  std::min(kGradientChunk, batch.size() - c * kGradientChunk));
                        wave[k] = compute_chunk(result.model, examples, part, config.seed, epoch, cw, normaliser);
                    });
                    for (std::size_t k = 0; k < count; ++k) {
                        if (grads.empty()) grads = std::move(wave[k].grads);
                        else accumulate(grads, wave[k].grads);
                        batch_loss += wave[k].loss;
                    }
                }
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index) + ": " +
                                   e.what());
            }
            if (!std::isfinite(batch_loss))
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(batch_index));
            try {
                nn::adam_step(result.model, grads, result.optimizer);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index) + ": " +
                                   e.what());
            }
            ++result.log.optimizer_steps;
            epoch_loss += batch_loss;
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = epoch_loss / static_cast<double>(n);
        if (options.validation) {
            auto vm = validate(result.model, *options.validation, workers);
            record.validation_loss = vm.loss;
            if (options.validation->group_size() > 0) record.validation_p_at_1 = vm.p_at_1;
        }
        if (options.checkpoint_dir) {
            record.checkpoint = checkpoint_name(epoch);
            nn::save_checkpoint({result.model, result.optimizer, epoch}, *options.checkpoint_dir / record.checkpoint);
        }
        result.log.epochs.push_back(record);
        if (options.on_epoch) options.on_epoch(record);
    }
    result.log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

void write_train_log(const std::filesystem::path& path, const TrainLog& log, const std::string& extra_summary_json) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    for (const auto& e : log.epochs) {
        nlohmann::ordered_json j = {{"epoch", e.epoch}, {"train_loss", e.train_loss}};
        j["validation_loss"] = e.validation_loss ? nlohmann::ordered_json(*e.validation_loss) : nlohmann::ordered_json();
        j["validation_p_at_1"] = e.validation_p_at_1 ? nlohmann::ordered_json(*e.validation_p_at_1) : nlohmann::ordered_json();
        j["checkpoint"] = e.checkpoint;
        out << j.dump() << '\n';
    }
    auto extra = nlohmann::ordered_json::parse(extra_summary_json);
    nlohmann::ordered_json summary = {{"summary", true},
                                      {"seed", log.seed},
                                      {"config_digest", log.config_digest},
                                      {"optimizer_steps", log.optimizer_steps},
                                      {"epochs_completed", log.epochs.size()}};
    for (auto it = extra.begin(); it != extra.end(); ++it) summary[it.key()] = it.value();
    // Wall-clock fields live only in the summary record.
    summary["wall_seconds"] = log.wall_seconds;
    out << summary.dump() << '\n';
}

}  // namespace cqrank
