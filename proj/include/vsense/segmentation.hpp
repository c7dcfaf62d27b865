#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vsense/dsp.hpp"
#include "vsense/dtw.hpp"
#include "vsense/signals.hpp"
#include "vsense/synthgen.hpp"

namespace vsense::seg {

inline constexpr std::size_t kNoCluster = static_cast<std::size_t>(-1);

/// One labeled segment of a recording, [start_idx, end_idx).
struct PatternInstance {
    std::size_t id = 0;
    synth::PatternKind kind = synth::PatternKind::StaticState;
    std::size_t start_idx = 0;
    std::size_t end_idx = 0;
    std::string recording_id;
    std::size_t cluster_id = kNoCluster;  // kNoCluster for the static detector
};

struct SegmentationConfig {
    double f_lo_hz = 0.1;
    double f_hi_hz = 0.5;
    // prominence floor sits above the band-passed noise while keeping the
    // gentle ramp responses; the distance floor suppresses the secondary
    // lobes a transient leaves within its own extent
    dsp::PeakConfig peaks{0.035, 100};
    std::size_t half_width = 50;  // window = 2*half_width + 1 samples
    std::size_t k = 6;
    // DTW ball radius around each labeled center; 0 selects the data-relative
    // default of 2.5 x the median member-to-center cost per cluster, which
    // keeps the natural tail of each cluster while still rejecting windows
    // that sit several medians out
    double ball_radius = 0.0;
    std::uint64_t seed = 0;
    std::string selection_file;  // empty = no manual selection
};

/// Clustering internals captured by segment() for plot-ready dumps: the
/// z-scored candidate windows with their start samples and assignment, the
/// averaged centers, and each cluster's template label (nullopt = other).
struct ClusterTrace {
    std::vector<std::vector<double>> windows;
    std::vector<std::size_t> starts;
    std::vector<std::size_t> assignment;
    std::vector<std::vector<double>> centers;
    std::vector<std::optional<synth::PatternKind>> labels;
};

/// Candidate windows around band-passed flow peaks, clustered by DTW k-means,
/// labeled against canonical templates, pruned by per-cluster DTW balls and
/// the optional manual selection; output is sorted and non-overlapping
/// (overlaps keep the window with the higher rectified filtered peak).
/// A non-null `trace` receives the clustering internals.
std::vector<PatternInstance> segment(const signals::Recording& rec,
                                     const SegmentationConfig& cfg,
                                     ClusterTrace* trace = nullptr);

/// Greedy minimum-cost matching of cluster centers to the four transient
/// templates; every unmatched cluster maps to nullopt ("other"). Equidistant
/// centers resolve to the lower cluster id.
std::map<std::size_t, std::optional<synth::PatternKind>> label_clusters(
    const dtw::Clustering& clustering,
    const std::map<synth::PatternKind, std::vector<double>>& templates);

/// The four transient kinds as z-scored sequences of the given length, built
/// from the canonical unit templates and framed through the same band-pass
/// detection that frames real candidates.
std::map<synth::PatternKind, std::vector<double>> canonical_templates(
    std::size_t length, const dsp::IirFilter& filter);

/// Maximal runs where the rolling standard deviation of mdot over min_len_s
/// stays below max_std; pieces overlapping `exclude` are cut out and the
/// remainders kept when still at least min_len_s long.
std::vector<PatternInstance> detect_static_states(
    const signals::Recording& rec, double min_len_s, double max_std,
    const std::vector<PatternInstance>& exclude = {});

struct SelectionResult {
    std::vector<PatternInstance> kept;
    std::vector<std::size_t> unknown_ids;  // ids in the file matching nothing
};

/// Applies `id keep|drop` verdicts from a selection file ('#' comments
/// allowed). Unknown ids are reported, not fatal; malformed lines are.
SelectionResult apply_manual_selection(const std::vector<PatternInstance>& instances,
                                       const std::string& selection_path);

void save_instances(const std::vector<PatternInstance>& instances, const std::string& path,
                    const std::string& header_comment = "");
std::vector<PatternInstance> load_instances(const std::string& path);

}  // namespace vsense::seg
