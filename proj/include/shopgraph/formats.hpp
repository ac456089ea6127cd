#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "shopgraph/instance.hpp"

namespace shopgraph {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, int line) : std::runtime_error(what), line_(line) {}
    /// 1-based line number of the offending input, 0 if not line-specific.
    int line() const { return line_; }

private:
    int line_;
};

/// ORLIB job-shop format: "n m" then n lines of m "machine time" pairs,
/// machines 0-based. Blank lines and lines starting with '#' are skipped.
Instance parse_jssp(std::string_view text, std::string name = {});

/// Flexible job-shop format: "n p [avg]" then one line per job:
/// k_ops, then per operation k_mach followed by k_mach "machine time" pairs
/// with 1-based machines.
Instance parse_fjssp(std::string_view text, std::string name = {});

/// Canonical flexible job-shop text (no average field, LF line endings).
std::string serialize_fjssp(const Instance& instance);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Picks the parser from the extension: ".fjs" -> flexible, anything else is
/// tried as flexible first and then as ORLIB.
Instance load_instance(const std::filesystem::path& path);

/// Schedule <-> JSON text: {"instance", "makespan", "assignments": [{job, op, machine, start, end}]}.
std::string schedule_to_json(const Instance& instance, const Schedule& schedule);
Schedule schedule_from_json(std::string_view text);

}  // namespace shopgraph
