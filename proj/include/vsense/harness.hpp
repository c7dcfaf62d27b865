#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vsense/models.hpp"
#include "vsense/segmentation.hpp"
#include "vsense/signals.hpp"
#include "vsense/synthgen.hpp"

namespace vsense::harness {

/// Everything one experiment needs: directories, the nested module configs,
/// the split ratios and a single global seed from which every sub-seed is
/// derived, so one integer reproduces the entire run.
struct RunConfig {
    std::string data_dir = "data";
    std::string output_dir = "out";
    synth::GeneratorConfig generator;
    seg::SegmentationConfig segmentation;
    models::CnnArchitecture architecture;
    models::TrainConfig training;
    std::array<double, 3> split_ratios = {0.64, 0.18, 0.18};
    std::uint64_t seed = 0;
};

/// Pushes the global seed into every nested config; call after changing
/// `seed`. The modules fan their seed out into disjoint sub-streams, and the
/// dataset split gets its own stream at the call sites here.
void propagate_seed(RunConfig& cfg);

/// Reads a JSON run configuration. Absent keys keep their defaults, unknown
/// keys raise InvalidConfig, and the global seed is propagated before return.
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

/// FNV-1a over the canonical serialized config, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// "config <hash> seed <n>" -- the provenance line every artifact carries.
std::string provenance(const RunConfig& cfg);

/// Transient instances from segment() merged with the static-state detector
/// for one recording. Ids continue after the transients so a saved file can
/// seed a manual selection for the next run; the result is ordered by start.
/// A non-null `trace` receives the clustering internals.
std::vector<seg::PatternInstance> detect_instances(const signals::Recording& rec,
                                                   const RunConfig& cfg,
                                                   seg::ClusterTrace* trace = nullptr);

/// Stage entry points behind the CLI subcommands of the same names. Each is
/// runnable standalone on the previous stage's files and throws Error with a
/// diagnostic on failure; the CLI maps that to a nonzero exit code. Every
/// stage echoes the effective config into the output directory and stamps
/// each artifact with the provenance line.
void cmd_generate(const RunConfig& cfg);
void cmd_segment(const RunConfig& cfg);
void cmd_fit_pr(const RunConfig& cfg);
void cmd_train_cnn(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);
void cmd_report(const RunConfig& cfg);

/// generate (when the data directory has no recording yet), then segment,
/// fit-pr, train-cnn, evaluate and report, composed from the functions above
/// so staged and monolithic runs write identical artifacts.
void cmd_pipeline(const RunConfig& cfg);

}  // namespace vsense::harness
