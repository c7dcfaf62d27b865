#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vsense/segmentation.hpp"
#include "vsense/synthgen.hpp"

namespace vsense::ep {

double mse(const std::vector<double>& pred, const std::vector<double>& truth);

/// Seconds from window start until the signal first covers `frac` of its
/// plateau-to-plateau amplitude. Plateaus are the means of the first and last
/// 10% of the window; the crossing is linearly interpolated, so the result is
/// sub-sample but only accurate to one sample period in general.
double response_time(const std::vector<double>& signal, double frac, double fs_hz);

struct MetricInstance {
    std::string metric;
    double value = 0.0;
    std::size_t pattern_id = 0;
};

/// |t_frac(truth) - t_frac(pred)| after rescaling pred affinely onto truth's
/// plateau levels. metric name is "dt<frac*100>", e.g. dt80.
MetricInstance delta_response(const std::vector<double>& truth, const std::vector<double>& pred,
                              double frac, double fs_hz, std::size_t pattern_id = 0);

/// |argext(truth) - argext(pred)| / fs where the extremum is the max for
/// overshoots and the min for undershoots; ties take the earliest index.
MetricInstance peak_delay(const std::vector<double>& truth, const std::vector<double>& pred,
                          synth::PatternKind kind, double fs_hz, std::size_t pattern_id = 0);

/// Seconds until the signal stays within +-3% of the window amplitude around
/// its final value (mean of the last 10%) for the rest of the window. A later
/// excursion outside the band restarts the clock.
double convergence_time(const std::vector<double>& signal, double fs_hz);

/// (E_abs, E_rel) between window means; E_rel guards the denominator at 1e-9.
std::pair<double, double> static_errors(const std::vector<double>& truth,
                                        const std::vector<double>& pred);

/// Nearest-rank 90th percentile: the ceil(0.9 n)-th smallest value.
double quantile90(const std::vector<double>& values);

struct SkippedPattern {
    std::size_t pattern_id = 0;
    std::string reason;
};

struct EpReport {
    double mse = 0.0;
    std::map<std::string, std::vector<MetricInstance>> instances;  // by metric
    std::map<std::string, double> quantile90s;
    std::map<synth::PatternKind, std::size_t> pattern_counts;
    std::vector<SkippedPattern> skipped;
};

/// Scores pred against truth globally (MSE) and per pattern window: ramps get
/// dt10/dt80/dt_conv, over- and undershoots dt_peak, static states
/// E_abs/E_rel. Windows a metric rejects (flat, no crossing) are recorded as
/// skipped instead of failing the report.
EpReport build_report(const std::vector<double>& pred, const std::vector<double>& truth,
                      const std::vector<seg::PatternInstance>& patterns, double fs_hz);

void save_report(const EpReport& report, const std::string& path,
                 const std::string& header_comment = "");
void save_metric_csv(const EpReport& report, const std::string& path,
                     const std::string& header_comment = "");

}  // namespace vsense::ep
