#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cqrank/evaluation.hpp"
#include "cqrank/trainer.hpp"

namespace cqrank::cli {

/// Exit statuses.
enum ExitCode : int {
    kOk = 0,
    kUnexpected = 1,
    kConfigError = 2,
    kDataError = 3,
    kNumericError = 4,
    kTransportError = 5,
};

struct SplitPaths {
    std::optional<std::filesystem::path> triples;
    std::optional<std::filesystem::path> sets;
};

/// Everything a pipeline command needs, resolved from the config file and
/// command-line overrides. Relative paths are taken relative to the
/// config file.
struct ExperimentConfig {
    SplitPaths train, validation, test;
    std::optional<std::filesystem::path> annotations;
    std::filesystem::path store = "embeddings.bin";
    std::filesystem::path out_dir = "out";
    std::string endpoint;
    std::size_t fetch_batch = 64;
    TrainConfig train_config;
    std::string regime = "both";
    EmptyGold empty_gold = EmptyGold::Skip;

    /// Canonical JSON of every field that determines outputs.
    std::string canonical() const;
    std::string digest() const;
};

/// Parses an INI/TOML-style file with [data], [store], [train], [eval] and
/// [output] sections.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Entry point shared by the `cqrank` binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cqrank::cli
