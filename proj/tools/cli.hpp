#pragma once

#include "olearn/bench.hpp"
#include "olearn/stream.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace olearn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;

// Everything a run needs, after defaults, config file and flags are merged.
struct RunConfig {
    std::string command;

    std::string dataset = "synthetic";
    std::string format = "synthetic";  // csv | idx | synthetic
    std::string labels;                // idx label file; derived when empty
    BlobSpec synthetic;

    ScenarioSpec scenario;
    std::string block_size = "8";  // N or "pretest"
    double drift_magnitude = 0.0;  // within-class sd units; 0 disables drift
    double drift_onset = 0.5;

    std::vector<std::size_t> hidden{64, 64};
    double init_range = 0.05;
    SGDConfig sgd;

    std::string loss = "mcd";
    double beta = 0.5;
    double temperature = 2.0;
    std::string alpha = "auto";  // "auto" or a fixed value in [0, 1]
    std::size_t exemplars_per_class = 10;
    bool update_exemplars = true;
    bool two_step = true;
    bool replace_farthest = false;
    std::string herding = "sort";

    std::size_t switch_threshold = 5;
    std::string scratch_mode = "combined";
    std::string ncm_features = "current";
    std::size_t retrain_epochs = 10;
    std::size_t retrain_batch = 32;

    std::uint64_t seed = 0;
    std::size_t seeds = 1;
    std::string out = "olearn-out";
    std::string checkpoint;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    /// Protocol settings for one seed.
    ProtocolConfig protocol(std::uint64_t run_seed) const;
};

/// Parses argv and dispatches. Returns the process exit status.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

} // namespace olearn::cli
