#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "vsense/signals.hpp"

namespace vsense::dsp {

struct BiquadSection {
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;  // numerator
    double a1 = 0.0, a2 = 0.0;            // denominator, a0 normalized to 1
};

/// Cascade of second-order sections; overall order = 2 * sections.size().
struct IirFilter {
    std::vector<BiquadSection> sections;
    double sample_rate_hz = 0.0;
};

/// Band-pass Butterworth design. `order` is the analog prototype order, so the
/// digital filter has 2*order poles in `order` sections. The bilinear
/// transform is pre-warped so the -3 dB points land exactly on f_lo and f_hi.
IirFilter design_butterworth_bandpass(int order, double f_lo_hz, double f_hi_hz, double fs_hz);

/// Causal zero-state filtering, direct form II transposed per section.
std::vector<double> filter_signal(const IirFilter& filter, const std::vector<double>& x);

std::complex<double> frequency_response(const IirFilter& filter, double f_hz);
double magnitude_db(const IirFilter& filter, double f_hz);

struct PeakConfig {
    double min_prominence = 0.0;
    std::size_t min_distance = 1;
};

/// Local maxima of x. Plateaus report the floor-midpoint index. Peaks whose
/// contour-line prominence is below min_prominence are dropped; of two
/// survivors closer than min_distance samples the lower is dropped
/// (highest-first greedy, ties keep the earlier index).
std::vector<std::size_t> find_peaks(const std::vector<double>& x, const PeakConfig& cfg);

struct Window {
    std::vector<double> values;
    std::size_t start_idx = 0;  // index of values.front() in the recording
    std::size_t peak_idx = 0;
};

struct WindowExtraction {
    std::vector<Window> windows;
    std::vector<std::size_t> skipped_peaks;  // too close to a boundary
};

/// Symmetric slices [p - half_width, p + half_width] around each peak; peaks
/// without room on either side are skipped and reported, not raised.
WindowExtraction extract_windows(const signals::Recording& rec, const std::string& channel,
                                 const std::vector<std::size_t>& peaks, std::size_t half_width);

void save_filter(const IirFilter& filter, const std::string& path,
                 const std::string& header_comment = "");
IirFilter load_filter(const std::string& path);

}  // namespace vsense::dsp
