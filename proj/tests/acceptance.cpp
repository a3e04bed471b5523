// Acceptance suite: one line per criterion, PASS / FAIL / SKIP, with the
// measured quantity next to its bound. Exit status is non-zero when any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cqrank/cli.hpp"
#include "cqrank/error.hpp"
#include "cqrank/evaluation.hpp"
#include "cqrank/neural/checkpoint.hpp"
#include "cqrank/trainer.hpp"
#include "support/synthetic.hpp"
#include "support/test_support.hpp"

using namespace cqrank;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kFixtures = CQRANK_FIXTURE_DIR;

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status;
    std::string detail;
};

Outcome verdict(bool ok, const std::string& detail) { return {ok ? Status::Pass : Status::Fail, detail}; }

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 3) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

// --------------------------------------------------------------------------

Outcome gradient_fidelity() {
    const auto start = Clock::now();
    std::mt19937_64 gen(2024);
    std::uniform_int_distribution<std::size_t> width(1, 10), depth(1, 2);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    for (int model_index = 0; model_index < 50; ++model_index) {
        nn::MlpShape shape;
        shape.input_dim = width(gen);
        shape.hidden_dims.clear();
        for (std::size_t h = depth(gen); h > 0; --h) shape.hidden_dims.push_back(width(gen));
        auto model = nn::Mlp::initialized(shape, 0.0, gen());
        for (auto& layer : model.layers())
            for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = 0.1 * normal(gen);
        for (int sample = 0; sample < 3; ++sample) {
            Eigen::VectorXd x(static_cast<Eigen::Index>(shape.input_dim));
            for (auto& v : x) v = normal(gen);
            const int label = static_cast<int>(gen() % 2);
            auto fwd = nn::forward(model, x, nn::Mode::Infer);
            const int labels[] = {label};
            auto analytic = nn::backward(model, fwd.cache, std::span<const int>(labels));
            auto numeric = testing::finite_difference_gradient(model, x, label, 1e-5);
            worst = std::max(worst, testing::max_relative_error(analytic, numeric));
        }
    }
    const double elapsed = seconds_since(start);
    return verdict(worst < 1e-4 && elapsed < 10.0,
                   "max_rel_err=" + fmt(worst) + " (< 1e-4), time=" + fmt(elapsed) + "s (< 10s), 50 models x 3 inputs");
}

Outcome adam_oracle() {
    auto scalar_stack = [](double value) {
        return nn::LayerStack<double>{{Eigen::MatrixXd::Constant(1, 1, value), Eigen::VectorXd::Zero(0)}};
    };
    // One step from zero moments with g = 1 moves the parameter by
    // -lr * m_hat / (sqrt(v_hat) + eps) = -0.01 / (1 + 1e-8).
    auto params = scalar_stack(0.0);
    nn::Adam state;
    state.m = scalar_stack(0.0);
    state.v = scalar_stack(0.0);
    nn::adam_step(params, scalar_stack(1.0), state);
    const double single_err = std::abs(params[0].weights(0, 0) - (-0.01 / (1.0 + 1e-8)));
    const double moment_err =
        std::max(std::abs(state.m[0].weights(0, 0) - 0.1), std::abs(state.v[0].weights(0, 0) - 0.001));

    double two_err = 0.0;
    for (double g : {1.0, -0.4, 3e-3, 17.0}) {
        auto p = scalar_stack(0.25);
        nn::Adam s;
        s.m = scalar_stack(0.0);
        s.v = scalar_stack(0.0);
        testing::ScalarAdam oracle;
        double theta = 0.25;
        for (int step = 0; step < 2; ++step) {
            nn::adam_step(p, scalar_stack(g), s);
            theta = oracle.step(theta, g);
            two_err = std::max(two_err, std::abs(p[0].weights(0, 0) - theta));
        }
    }
    const double worst = std::max({single_err, moment_err, two_err});
    return verdict(worst < 1e-10, "single_step_err=" + fmt(single_err) + ", two_step_err=" + fmt(two_err) +
                                      ", moment_err=" + fmt(moment_err) + " (all < 1e-10)");
}

Outcome softmax_ce() {
    std::mt19937_64 gen(77);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> length(2, 12);
    double worst_sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        nn::Vector<double> logits(length(gen));
        const double scale = i % 4 == 0 ? 1e3 : (i % 4 == 1 ? 30.0 : 1.0);
        for (auto& v : logits) v = scale * normal(gen);
        if (i % 10 == 0) logits[0] = (i % 20 == 0 ? 1e3 : -1e3);
        auto p = nn::softmax(logits);
        if (!p.allFinite() || (p.array() < 0.0).any()) return {Status::Fail, "non-finite or negative probability"};
        worst_sum = std::max(worst_sum, std::abs(p.sum() - 1.0));
    }
    const double ce_err = std::max({std::abs(nn::cross_entropy(Eigen::Vector2d(1.0, 0.0), 0) - 0.0),
                                    std::abs(nn::cross_entropy(Eigen::Vector2d(0.5, 0.5), 1) - std::log(2.0)),
                                    std::abs(nn::cross_entropy(Eigen::Vector2d(0.25, 0.75), 0) - std::log(4.0))});
    const double floor_err = std::abs(nn::cross_entropy(Eigen::Vector2d(1.0, 0.0), 1) + std::log(1e-12));
    return verdict(worst_sum < 1e-9 && ce_err < 1e-12 && floor_err < 1e-12,
                   "max|sum-1|=" + fmt(worst_sum) + " (< 1e-9) over 10^4 vectors up to |logit| 1e3, ce_err=" +
                       fmt(ce_err) + " (< 1e-12)");
}

Outcome precision_oracle() {
    std::mt19937_64 gen(5150);
    std::size_t mismatches = 0, monotone_violations = 0;
    std::vector<std::string> base;
    for (int j = 0; j < 10; ++j) base.push_back("c" + std::to_string(j));
    for (int trial = 0; trial < 100; ++trial) {
        auto cids = base;
        std::shuffle(cids.begin(), cids.end(), gen);
        std::set<std::string> gold;
        for (const auto& c : base)
            if (gen() % 4 == 0) gold.insert(c);
        auto r = testing::make_ranking("p", cids);
        for (std::size_t k = 1; k <= 10; ++k)
            mismatches += precision_at_k(r, gold, k) != testing::brute_force_precision(cids, gold, k);
    }
    for (int trial = 0; trial < 100; ++trial) {
        auto cids = base;
        std::shuffle(cids.begin(), cids.end(), gen);
        auto r = testing::make_ranking("p", cids);
        std::set<std::string> small, large;
        for (const auto& c : base) {
            const auto roll = gen() % 3;
            if (roll == 0) small.insert(c);
            if (roll <= 1) large.insert(c);
        }
        for (std::size_t k = 1; k <= 10; ++k) monotone_violations += precision_at_k(r, large, k) < precision_at_k(r, small, k);
    }
    return verdict(mismatches == 0 && monotone_violations == 0,
                   "oracle mismatches=" + std::to_string(mismatches) + "/1000, monotonicity violations=" +
                       std::to_string(monotone_violations) + "/1000");
}

Outcome synthetic_end_to_end() {
    auto train_corpus = testing::make_synthetic(1000, 32, 0.1, 31, "tr");
    auto test_corpus = testing::make_synthetic(200, 32, 0.1, 32, "te");
    auto all = train_corpus.entries;
    all.insert(all.end(), test_corpus.entries.begin(), test_corpus.entries.end());
    testing::MemoryLookup store(32, all);
    FeatureSpec spec{TextSet::PQ, 32};

    TrainConfig config;  // remaining defaults: lr 0.01, dropout 0.4, widths 512/256
    config.batch_size = 100;
    config.epochs = 50;
    config.seed = 11;
    TrainOptions options;
    options.workers = 1;

    const auto start = Clock::now();
    auto examples = build_examples(train_corpus.sets, store, spec);
    auto result = train(examples, config, options);
    auto rankings = rank_all(result.model, test_corpus.sets, store, spec, 1);
    const double elapsed = seconds_since(start);

    std::size_t hits = 0;
    for (std::size_t p = 0; p < rankings.size(); ++p) {
        const auto& top = rankings[p].entries.front();
        hits += test_corpus.sets[p].candidates[top.original_index].label == 1;
    }
    const double p_at_1 = static_cast<double>(hits) / static_cast<double>(rankings.size());
    return verdict(p_at_1 >= 0.95 && elapsed < 60.0,
                   "P@1=" + fmt(p_at_1, 4) + " (>= 0.95) on 200 held-out posts, time=" + fmt(elapsed) +
                       "s (< 60s, 1 thread), final train loss=" + fmt(result.log.epochs.back().train_loss));
}

// Runs the whole CLI pipeline on the committed fixtures into `out`.
bool run_pipeline(const fs::path& out, const std::string& threads, std::string& failure) {
    ::setenv("CQRANK_THREADS", threads.c_str(), 1);
    const std::vector<std::string> common{"--config", (kFixtures / "experiment.ini").string(), "--out", out.string(),
                                          "--epochs", "4", "--batch-size", "8", "--seed", "42"};
    for (const char* step : {"train", "rank", "eval", "analyze"}) {
        auto args = common;
        args.push_back(step);
        std::ostringstream o, e;
        if (int code = cli::run(args, o, e); code != cli::kOk) {
            failure = std::string(step) + " exited " + std::to_string(code) + ": " + e.str();
            return false;
        }
    }
    return true;
}

Outcome determinism() {
    testing::TempDir a, b, c;
    std::string failure;
    if (!run_pipeline(a.path(), "1", failure) || !run_pipeline(b.path(), "1", failure) ||
        !run_pipeline(c.path(), "8", failure)) {
        ::unsetenv("CQRANK_THREADS");
        return {Status::Fail, failure};
    }
    ::unsetenv("CQRANK_THREADS");
    std::size_t compared = 0, differing = 0;
    for (const char* name : {"rankings.jsonl", "metrics.jsonl", "buckets_best.csv", "buckets_valid.csv",
                             "checkpoints/epoch-0004.cqmlp"}) {
        auto ref = testing::read_bytes(a / name);
        if (ref.empty()) return {Status::Fail, std::string(name) + " missing or empty"};
        differing += ref != testing::read_bytes(b / name);
        differing += ref != testing::read_bytes(c / name);
        compared += 2;
    }
    return verdict(differing == 0, "byte-identical outputs " + std::to_string(compared - differing) + "/" +
                                       std::to_string(compared) +
                                       " (rankings, metrics, bucket CSVs, final checkpoint; repeat run and 1 vs 8 threads)");
}

template <typename F>
bool rejects(F&& load, const std::string& expected) {
    try {
        load();
    } catch (const FormatError& e) {
        return std::string(e.what()).find(expected) != std::string::npos;
    } catch (...) {
        return false;
    }
    return false;
}

Outcome format_round_trips() {
    testing::TempDir dir;
    std::mt19937_64 gen(99);
    std::normal_distribution<float> normal(0.0f, 2.0f);
    std::vector<EmbeddingEntry> entries;
    for (int i = 0; i < 1000; ++i) {
        EmbeddingVector v(48);
        for (auto& x : v) x = normal(gen);
        entries.emplace_back((i % 3 == 0 ? "P:" : i % 3 == 1 ? "Q:" : "A:") + std::to_string(i), v);
    }
    write_store(entries, 48, dir / "s.cqemb");
    auto store = EmbeddingStore::open(dir / "s.cqemb");
    std::size_t store_mismatch = store.size() == entries.size() ? 0 : 1;
    for (const auto& [key, v] : entries)
        store_mismatch += std::memcmp(store.view(key).data(), v.data(), sizeof(float) * 48) != 0;

    std::size_t checkpoint_mismatch = 0;
    std::uniform_int_distribution<std::size_t> width(1, 12);
    for (int i = 0; i < 20; ++i) {
        nn::MlpShape shape{width(gen), {width(gen), width(gen)}};
        nn::Checkpoint cp{testing::random_model(shape, gen), nn::Adam::fresh(shape, 0.01), static_cast<std::uint64_t>(i)};
        cp.optimizer.m = testing::random_model(shape, gen).layers();
        cp.optimizer.t = static_cast<std::uint64_t>(i) * 13;
        auto path = dir / ("c" + std::to_string(i) + ".cqmlp");
        nn::save_checkpoint(cp, path);
        auto back = nn::load_checkpoint(path);
        checkpoint_mismatch += !(back.model == cp.model && back.optimizer == cp.optimizer &&
                                 back.epochs_completed == cp.epochs_completed);
    }

    auto corrupt = [&](const fs::path& src, const std::string& name, auto&& edit) {
        auto bytes = testing::read_bytes(src);
        edit(bytes);
        testing::write_text(dir / name, bytes);
        return dir / name;
    };
    const auto store_src = dir / "s.cqemb";
    const auto cp_src = dir / "c0.cqmlp";
    std::size_t rejected = 0, cases = 0;
    auto expect_store = [&](const fs::path& p, const std::string& msg) {
        ++cases;
        rejected += rejects([&] { EmbeddingStore::open(p); }, msg);
    };
    auto expect_cp = [&](const fs::path& p, const std::string& msg) {
        ++cases;
        rejected += rejects([&] { nn::load_checkpoint(p); }, msg);
    };
    expect_store(corrupt(store_src, "magic.cqemb", [](std::string& b) { b[0] = 'X'; }), "bad magic");
    expect_store(corrupt(store_src, "trunc.cqemb", [](std::string& b) { b.resize(b.size() / 2); }), "truncated");
    expect_store(corrupt(store_src, "flip.cqemb", [](std::string& b) { b[b.size() - 20] ^= 0x04; }), "checksum mismatch");
    expect_store(corrupt(store_src, "ver.cqemb", [](std::string& b) { b[6] = 9; }), "version");
    expect_cp(corrupt(cp_src, "magic.cqmlp", [](std::string& b) { b[1] = 'X'; }), "bad magic");
    expect_cp(corrupt(cp_src, "trunc.cqmlp", [](std::string& b) { b.resize(b.size() - 3); }), "truncated");
    expect_cp(corrupt(cp_src, "flip.cqmlp", [](std::string& b) { b[b.size() / 2] ^= 0x01; }), "checksum mismatch");
    expect_cp(corrupt(cp_src, "ver.cqmlp", [](std::string& b) { b[6] = 2; }), "version");

    return verdict(store_mismatch == 0 && checkpoint_mismatch == 0 && rejected == cases,
                   "store 1000 vectors mismatches=" + std::to_string(store_mismatch) + ", checkpoint 20 models mismatches=" +
                       std::to_string(checkpoint_mismatch) + ", corrupt fixtures rejected=" + std::to_string(rejected) +
                       "/" + std::to_string(cases));
}

// Real-data tier. CQRANK_DATA_DIR must hold pq.ini and pqa.ini experiment
// configs (base encoder, released splits, extracted store); each is run
// through train, rank, eval and analyze.
Outcome real_data() {
    const char* env = std::getenv("CQRANK_DATA_DIR");
    if (!env || !*env) return {Status::Skip, "CQRANK_DATA_DIR not set; released dataset and embeddings unavailable"};
    const fs::path root(env);
    std::map<std::string, std::pair<double, double>> p1;  // variant -> (best, valid)
    std::vector<std::size_t> populations;
    for (const char* variant : {"pq", "pqa"}) {
        const auto config = root / (std::string(variant) + ".ini");
        if (!fs::exists(config)) return {Status::Fail, config.string() + " not found"};
        const auto out = root / ("acceptance-" + std::string(variant));
        for (const char* step : {"train", "rank", "eval", "analyze"}) {
            std::ostringstream o, e;
            int code = cli::run({"--config", config.string(), "--out", out.string(), "--variant", variant,
                                 "--regime", "both", step},
                                o, e);
            if (code != cli::kOk) return {Status::Fail, std::string(variant) + " " + step + ": " + e.str()};
        }
        std::ifstream metrics(out / "metrics.jsonl");
        for (std::string line; std::getline(metrics, line);) {
            auto j = nlohmann::json::parse(line);
            double v = j["p_at"]["1"].get<double>();
            (j["regime"] == "best" ? p1[variant].first : p1[variant].second) = v;
        }
        if (std::string(variant) == "pq")
            for (const auto& row : read_bucket_csv(out / "buckets_best.csv")) populations.push_back(row.total);
    }
    const bool best_ok = std::abs(p1["pq"].first - 44.4) <= 3.0;
    const bool valid_ok = std::abs(p1["pq"].second - 50.6) <= 3.0;
    const bool order_ok = p1["pq"].first >= p1["pqa"].first && p1["pq"].second >= p1["pqa"].second;
    const bool buckets_ok = populations == std::vector<std::size_t>{23, 103, 114, 88, 44, 128};
    std::string pops;
    for (auto n : populations) pops += (pops.empty() ? "" : "/") + std::to_string(n);
    return verdict(best_ok && valid_ok && order_ok && buckets_ok,
                   "PQ P@1 best=" + fmt(p1["pq"].first, 4) + " (44.4+-3), valid=" + fmt(p1["pq"].second, 4) +
                       " (50.6+-3), PQA best=" + fmt(p1["pqa"].first, 4) + " valid=" + fmt(p1["pqa"].second, 4) +
                       ", buckets=" + pops + " (23/103/114/88/44/128)");
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient-fidelity", gradient_fidelity},
        {"adam-oracle", adam_oracle},
        {"softmax-cross-entropy", softmax_ce},
        {"precision-at-k-oracle", precision_oracle},
        {"synthetic-end-to-end", synthetic_end_to_end},
        {"determinism", determinism},
        {"format-round-trips", format_round_trips},
        {"real-data-replication", real_data},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {Status::Fail, std::string("exception: ") + e.what()};
        }
        const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
        failures += o.status == Status::Fail;
        std::cout << tag << "  " << std::left << std::setw(24) << name << o.detail << std::endl;
    }
    std::cout << (failures ? std::to_string(failures) + " criterion(s) failed" : std::string("all criteria met"))
              << std::endl;
    return failures ? 1 : 0;
}
