#pragma once

// Flat `key = value` experiment files. Lines starting with '#' are comments.
// Unknown keys are rejected. `kae print-config` prints every key with its
// default value.

#include <iosfwd>
#include <string>

#include "kae/dynamics.hpp"
#include "kae/training.hpp"

namespace kae {

struct ExperimentConfig {
    OdeSpec ode;
    TrainConfig train;
    bool normalize = true;
    std::size_t horizon = 1000;
    std::size_t seeds = 3;
    std::string out_dir = "out";

    void validate() const;
};

/// Parses a config document on top of the defaults. Throws ConfigError with
/// the offending line on unknown keys or malformed values.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::string& path);
/// Canonical text form; parse_config(format_config(c)) reproduces c.
std::string format_config(const ExperimentConfig& cfg);

} // namespace kae
