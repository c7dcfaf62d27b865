#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vsense/signals.hpp"

namespace vsense::synth {

enum class PatternKind {
    RisingRamp,
    DescendingRamp,
    Overshoot,
    Undershoot,
    StaticState,
    Sinusoid,
};

const char* to_string(PatternKind kind);
PatternKind pattern_kind_from_string(const std::string& name);

/// Ground-truth label for one inserted template; [start_idx, end_idx) indexes
/// into the generated recording.
struct Annotation {
    PatternKind kind;
    std::size_t start_idx = 0;
    std::size_t end_idx = 0;
    std::map<std::string, double> params;
};

struct GeneratorConfig {
    double sample_rate_hz = 10.0;
    // two hours puts enough instances of every transient kind into even the
    // smallest split of the standard 64/18/18 cut
    double duration_s = 7200.0;
    double noise_std = 0.01;  // fraction of per-channel signal scale
    double tau_sys_s = 2.0;   // first-order flow dynamics time constant
    std::map<PatternKind, double> pattern_mix = {
        {PatternKind::RisingRamp, 0.21},  {PatternKind::DescendingRamp, 0.21},
        {PatternKind::Overshoot, 0.21},   {PatternKind::Undershoot, 0.21},
        {PatternKind::StaticState, 0.10}, {PatternKind::Sinusoid, 0.06},
    };
    std::uint64_t seed = 0;
    // latent command level bounds; every channel stays within the image of
    // this interval under its map (plus noise)
    double level_min = 0.5;
    double level_max = 3.0;
};

/// Canonical unit-scale pattern shape of length n.
///
/// Required params per kind: ramps need `amplitude` (optional `ramp_fraction`,
/// default 0.5 = rise over that fraction of the extent, hold after, and
/// `lead_fraction`, default 0 = hold at the start level first); overshoot/
/// undershoot need `amplitude` and `peak_overshoot_fraction` (optional
/// `peak_time_fraction`, default 0.25); StaticState needs `amplitude`;
/// Sinusoid needs `amplitude` and `period` (samples).
std::vector<double> pattern_template(PatternKind kind,
                                     const std::map<std::string, double>& params, std::size_t n);

/// Generates a labeled recording: a seeded concatenation of templates forms a
/// latent command; six input channels are distinct smooth invertible maps of
/// the latent plus small noise; mdot is a fixed nonlinear static map of the
/// inputs passed through a first-order low-pass with time constant tau_sys_s.
std::pair<signals::Recording, std::vector<Annotation>> generate_recording(
    const GeneratorConfig& config);

/// The fixed static flow map applied to the six input channels at one instant.
/// Includes a torque*speed product and a squared pressure-difference term, so
/// a quadratic model without cross-terms cannot represent it exactly.
double static_flow_map(double c, double omega, double p_in, double t_in, double p_out,
                       double t_out);

/// Re-simulates mdot from the input channels alone: static_flow_map sample by
/// sample, then the same first-order low-pass used by the generator. With
/// noise_std = 0 this reproduces the generated mdot channel.
std::vector<double> simulate_flow(const signals::Recording& rec, double tau_sys_s);

/// Noise-free input channels for a latent operating-point trace: applies only
/// the per-channel static maps, so simulate_flow on the result is the plant's
/// clean response to that trajectory.
signals::Recording channels_from_latent(const std::vector<double>& latent,
                                        double sample_rate_hz);

void save_annotations(const std::vector<Annotation>& annotations, const std::string& path,
                      const std::string& header_comment = "");
std::vector<Annotation> load_annotations(const std::string& path);

}  // namespace vsense::synth
