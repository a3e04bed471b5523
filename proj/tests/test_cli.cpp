#include <doctest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "cqrank/cli.hpp"
#include "cqrank/embedding_store.hpp"
#include "support/stub_service.hpp"
#include "support/test_support.hpp"

using namespace cqrank;
using cqrank::testing::read_bytes;
using cqrank::testing::TempDir;

namespace {

const std::filesystem::path kFixtures = CQRANK_FIXTURE_DIR;

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome cqrank_run(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> base(const TempDir& dir) {
    return {"--config", (kFixtures / "experiment.ini").string(), "--out", dir.path().string()};
}

std::vector<std::string> with(std::vector<std::string> args, std::initializer_list<std::string> more) {
    args.insert(args.end(), more);
    return args;
}

std::size_t count_files(const std::filesystem::path& dir) {
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) n += e.is_regular_file();
    return n;
}

}  // namespace

TEST_SUITE("cli pipeline") {
    TEST_CASE("rank, eval and analyze reproduce the golden files") {
        TempDir dir;
        auto r = cqrank_run(with(base(dir), {"rank", "--model", (kFixtures / "toy.cqmlp").string()}));
        INFO(r.err);
        REQUIRE(r.code == cli::kOk);
        REQUIRE(cqrank_run(with(base(dir), {"eval"})).code == cli::kOk);
        REQUIRE(cqrank_run(with(base(dir), {"analyze"})).code == cli::kOk);
        CHECK(read_bytes(dir / "metrics.jsonl") == read_bytes(kFixtures / "golden_metrics.jsonl"));
        CHECK(read_bytes(dir / "buckets_best.csv") == read_bytes(kFixtures / "golden_buckets_best.csv"));
        CHECK(read_bytes(dir / "buckets_valid.csv") == read_bytes(kFixtures / "golden_buckets_valid.csv"));
    }

    TEST_CASE("the config digest is reported and follows the effective config") {
        TempDir dir;
        auto a = cqrank_run(with(base(dir), {"eval"}));
        auto b = cqrank_run(with(base(dir), {"--seed", "8", "eval"}));
        CHECK(a.err.starts_with("config digest "));
        CHECK(a.err.substr(0, 30) != b.err.substr(0, 30));
        CHECK(a.err.substr(0, 30) == cqrank_run(with(base(dir), {"eval"})).err.substr(0, 30));
    }

    TEST_CASE("one training epoch writes exactly one checkpoint") {
        TempDir dir;
        auto r = cqrank_run(with(base(dir), {"train"}));
        INFO(r.err);
        REQUIRE(r.code == cli::kOk);
        CHECK(count_files(dir / "checkpoints") == 1);
        CHECK(std::filesystem::exists(dir / "checkpoints" / "epoch-0001.cqmlp"));
        std::ifstream log(dir / "train_log.jsonl");
        std::vector<nlohmann::json> records;
        for (std::string line; std::getline(log, line);) records.push_back(nlohmann::json::parse(line));
        REQUIRE(records.size() == 2);
        CHECK(records[1]["examples"] == 30);
        // The default model path picks up the last epoch.
        CHECK(cqrank_run(with(base(dir), {"rank"})).code == cli::kOk);
        CHECK(std::filesystem::exists(dir / "rankings.jsonl"));
    }

    TEST_CASE("resuming through the cli matches an uninterrupted run") {
        TempDir full, split;
        REQUIRE(cqrank_run(with(base(full), {"--epochs", "3", "train"})).code == cli::kOk);
        REQUIRE(cqrank_run(with(base(split), {"--epochs", "1", "train"})).code == cli::kOk);
        auto resumed = cqrank_run(with(base(split), {"--epochs", "3", "train", "--resume",
                                                     (split / "checkpoints" / "epoch-0001.cqmlp").string()}));
        REQUIRE(resumed.code == cli::kOk);
        CHECK(read_bytes(full / "checkpoints" / "epoch-0003.cqmlp") ==
              read_bytes(split / "checkpoints" / "epoch-0003.cqmlp"));
    }

    TEST_CASE("prepare writes a manifest") {
        TempDir dir;
        auto r = cqrank_run(with(base(dir), {"prepare"}));
        INFO(r.err);
        REQUIRE(r.code == cli::kOk);
        auto manifest = nlohmann::json::parse(read_bytes(dir / "manifest.json"));
        REQUIRE(manifest["splits"].size() == 5);
        CHECK(manifest["splits"][0]["record_count"] == 3);
        CHECK(manifest["splits"][4]["empty_valid_posts"] == nlohmann::json::array({"t4"}));
    }

    TEST_CASE("embed-fetch builds a store from the service") {
        TempDir dir;
        testing::StubService stub(768);
        auto store_path = dir / "fetched.cqemb";
        auto r = cqrank_run(with(base(dir), {"--store", store_path.string(), "embed-fetch", "--endpoint", stub.endpoint()}));
        INFO(r.err);
        REQUIRE(r.code == cli::kOk);
        auto store = EmbeddingStore::open(store_path);
        // 8 posts with 10 questions and 10 answers each.
        CHECK(store.size() == 8 * 21);
        CHECK(store.dim() == 768);
        CHECK(store.provenance() == "stub-encoder");
        CHECK(store.lookup("A:t1_3")[0] == 0.0f);  // empty answer text
        CHECK(store.lookup("Q:r1_2")[0] == static_cast<float>(std::string("r1 question 2").size()));
    }
}

TEST_SUITE("cli failures") {
    TEST_CASE("missing store names the path and exits with a data error") {
        TempDir dir;
        auto r = cqrank_run(with(base(dir), {"--store", (dir / "nope.cqemb").string(), "rank", "--model",
                                             (kFixtures / "toy.cqmlp").string()}));
        CHECK(r.code == cli::kDataError);
        CHECK(r.err.find("nope.cqemb") != std::string::npos);
    }

    TEST_CASE("bad flag values are config errors") {
        TempDir dir;
        CHECK(cqrank_run(with(base(dir), {"--variant", "bert", "eval"})).code == cli::kConfigError);
        CHECK(cqrank_run(with(base(dir), {"--dropout", "1.5", "eval"})).code == cli::kConfigError);
        CHECK(cqrank_run(with(base(dir), {"--regime", "all", "eval"})).code == cli::kConfigError);
        CHECK(cqrank_run({"eval", "--bogus"}).code == cli::kConfigError);
        CHECK(cqrank_run({}).code == cli::kConfigError);
    }

    TEST_CASE("variant width must match the store") {
        TempDir dir;
        auto r = cqrank_run(with(base(dir), {"--variant", "large-pq", "rank", "--model", (kFixtures / "toy.cqmlp").string()}));
        CHECK(r.code == cli::kDataError);
        CHECK(r.err.find("1024") != std::string::npos);
    }

    TEST_CASE("eval without rankings reports the missing file") {
        TempDir dir;
        auto r = cqrank_run(with(base(dir), {"eval"}));
        CHECK(r.code == cli::kDataError);
        CHECK(r.err.find("rankings.jsonl") != std::string::npos);
    }

    TEST_CASE("unreachable embedding service is a transport error") {
        TempDir dir;
        auto r = cqrank_run(with(base(dir), {"--store", (dir / "s.cqemb").string(), "embed-fetch", "--endpoint",
                                             "http://127.0.0.1:1"}));
        CHECK(r.code == cli::kTransportError);
    }
}
