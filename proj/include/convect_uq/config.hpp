#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "convect_uq/dnn.hpp"
#include "convect_uq/solver.hpp"
#include "convect_uq/uq.hpp"

namespace convect_uq {

/// Run configuration read from an INI document: `[section]` headers,
/// `key = value` lines and `#` comments. Every key has a default; unknown
/// sections and keys are rejected.
struct RunConfig {
    // [grid]
    int grid_n = 16;
    std::vector<int> grid_sizes{16, 24, 32};
    // [solver]
    SolverConfig solver;
    int workers = 1;
    // [boundary]
    BoundarySpec boundary;
    // [case_a], [pce]
    CaseASpec case_a;
    std::string pce_model;
    // [case_b]
    CaseBSpec case_b;
    // [dnn]
    std::string dnn_preset = "desk";
    TrainConfig train;
    // [output]
    std::string output_dir = "out";

    /// Sections that appeared in the source document.
    std::set<std::string> sections;

    bool has(const std::string& section) const { return sections.count(section) > 0; }
    /// Throws ConfigError naming the first missing section.
    void require(const std::vector<std::string>& needed) const;
    void validate() const;
};

struct ConfigKey {
    std::string section;
    std::string key;
    std::string default_value;
    std::string help;
};

/// Every recognised key with its default, in document order.
std::vector<ConfigKey> config_keys();

/// `source` names the document in error messages.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

/// Writes every key of the sections present in `config`.
std::string serialize_config(const RunConfig& config);

/// Replaces every seed: case A test/MC seeds s, s+1; case B train, validation,
/// test and MC seeds s..s+3; network seed s.
void apply_seed_override(RunConfig& config, std::uint64_t seed);

}  // namespace convect_uq
