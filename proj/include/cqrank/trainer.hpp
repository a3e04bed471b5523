#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cqrank/data_model.hpp"
#include "cqrank/embedding_store.hpp"
#include "cqrank/neural/checkpoint.hpp"
#include "cqrank/neural/mlp.hpp"
#include "cqrank/ranker.hpp"

namespace cqrank {

/// Defaults: batch 1000, 50 epochs,
/// Adam at 0.01, dropout 0.4.
struct TrainConfig {
    Variant variant = Variant::PQ;
    std::size_t batch_size = 1000;
    std::size_t epochs = 50;
    double learning_rate = 0.01;
    double dropout_rate = 0.4;
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden_dims{512, 256};
    bool class_weighting = false;

    void validate() const;
    /// Canonical one-line JSON of every field that influences training.
    std::string canonical() const;
    std::string digest() const;
};

struct TrainingExample {
    Eigen::VectorXd feature;
    int label = 0;
    std::string post_id;
    std::string candidate_id;
};

/// Random-access labelled examples. Consecutive groups of `group_size()`
/// examples belong to one post when grouped() is true.
class ExampleSource {
public:
    virtual ~ExampleSource() = default;
    virtual std::size_t size() const = 0;
    virtual std::size_t feature_dim() const = 0;
    virtual int label(std::size_t i) const = 0;
    virtual void fill(std::size_t i, Eigen::Ref<Eigen::VectorXd> out) const = 0;
    virtual std::size_t group_size() const { return 0; }
};

/// Examples held as a dense feature matrix (one column each).
class DenseExamples final : public ExampleSource {
public:
    DenseExamples(Eigen::MatrixXd features, std::vector<int> labels, std::size_t group_size = 0);

    std::size_t size() const override { return labels_.size(); }
    std::size_t feature_dim() const override { return static_cast<std::size_t>(features_.rows()); }
    int label(std::size_t i) const override { return labels_[i]; }
    void fill(std::size_t i, Eigen::Ref<Eigen::VectorXd> out) const override;
    std::size_t group_size() const override { return group_size_; }

private:
    Eigen::MatrixXd features_;
    std::vector<int> labels_;
    std::size_t group_size_;
};

/// Examples whose features are assembled on demand from an embedding
/// store, ten per post in post order then candidate order.
class StoreExamples final : public ExampleSource {
public:
    struct Ref {
        std::string post_id;
        std::string cid;
        int label = 0;
    };

    StoreExamples(const EmbeddingLookup& store, FeatureSpec spec, std::vector<Ref> refs);

    std::size_t size() const override { return refs_.size(); }
    std::size_t feature_dim() const override { return spec_.input_dim(); }
    int label(std::size_t i) const override { return refs_[i].label; }
    void fill(std::size_t i, Eigen::Ref<Eigen::VectorXd> out) const override;
    std::size_t group_size() const override { return kCandidatesPerPost; }

    const Ref& ref(std::size_t i) const { return refs_[i]; }
    TrainingExample example(std::size_t i) const;
    const FeatureSpec& spec() const { return spec_; }

private:
    const EmbeddingLookup* store_;
    FeatureSpec spec_;
    std::vector<Ref> refs_;
};

/// One example per candidate. Every embedding key the feature layout needs is
/// checked up front; a missing one raises MissingKeyError.
StoreExamples build_examples(const std::vector<CandidateSet>& sets, const EmbeddingLookup& store,
                             const FeatureSpec& spec);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> validation_loss;
    std::optional<double> validation_p_at_1;  // percent
    std::string checkpoint;                   // file name, empty when not written

    bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::uint64_t optimizer_steps = 0;
    double wall_seconds = 0.0;
};

struct TrainOptions {
    const ExampleSource* validation = nullptr;
    /// Epoch-stamped checkpoints are written here when set.
    std::optional<std::filesystem::path> checkpoint_dir;
    /// Continue from this state; the epoch counter resumes after it.
    std::optional<nn::Checkpoint> resume;
    std::size_t workers = 1;
    /// Called after every epoch.
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    nn::Mlp model;
    nn::Adam optimizer;
    TrainLog log;
};

/// Examples per gradient chunk. Fixed so the reduction order, and therefore
/// every bit of the result, is the same for any worker count.
inline constexpr std::size_t kGradientChunk = 64;

TrainResult train(const ExampleSource& examples, const TrainConfig& config, const TrainOptions& options = {});

std::string checkpoint_name(std::size_t epoch);

/// Mean loss and P@1 (percent, label-1 candidate as gold) over a grouped
/// source, infer mode.
struct ValidationMetrics {
    double loss = 0.0;
    double p_at_1 = 0.0;
};
ValidationMetrics validate(const nn::Mlp& model, const ExampleSource& source, std::size_t workers = 1);

/// JSONL: one record per epoch, then a summary record.
void write_train_log(const std::filesystem::path& path, const TrainLog& log, const std::string& extra_summary_json = "{}");

}  // namespace cqrank
