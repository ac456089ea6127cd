#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shopgraph/dataset.hpp"
#include "shopgraph/generator.hpp"
#include "shopgraph/trainer.hpp"

namespace shopgraph::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Bad flag values, config keys or paths. Reported with exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything a config file can set.
struct PipelineConfig {
    GenParams gen = GenParams::fjssp_desk();
    EnvParams env;
    BranchParams branch;
    SearchSpace space = SearchSpace::Reachable;
    std::int64_t node_limit = kDefaultNodeLimit;
    TrainConfig train;
};

/// TOML-style text: "key = value" lines, optional "[section]" headers that
/// prefix the following keys, '#' comments. Values are numbers, true/false,
/// optionally quoted strings or "[lo, hi]" ranges. Later lines win.
std::map<std::string, std::string> parse_settings(std::string_view text);

/// Applies settings such as "train.epochs" or "gen.jobs". A "gen.preset" entry
/// is applied before the other gen keys. Throws UsageError on unknown keys or
/// malformed values.
void apply_settings(PipelineConfig& config, const std::map<std::string, std::string>& settings);

/// refs.csv: "instance,best_known" header, then one row per instance.
std::map<std::string, Time> parse_refs(std::string_view text);
std::string refs_to_csv(const std::map<std::string, Time>& refs);

/// Instance files of a directory in name order: extensions .fjs, .txt, .jss,
/// .jsp or none.
std::vector<std::filesystem::path> instance_files(const std::filesystem::path& dir);

/// Runs one command. `args` excludes the program name. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace shopgraph::cli
