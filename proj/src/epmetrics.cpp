#include "vsense/epmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "vsense/error.hpp"

namespace vsense::ep {

namespace {

double mean_range(const std::vector<double>& x, std::size_t begin, std::size_t count) {
    double acc = 0.0;
    for (std::size_t i = begin; i < begin + count; ++i) acc += x[i];
    return acc / static_cast<double>(count);
}

std::size_t plateau_len(std::size_t n) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))));
}

void check_pair(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyInput, "empty metric window");
    if (a.size() != b.size())
        throw Error(ErrorCode::LengthMismatch, "windows of " + std::to_string(a.size()) + " vs " +
                                                   std::to_string(b.size()) + " samples");
}

std::string fmt(double v, const char* spec = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace

double mse(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_pair(pred, truth);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

double response_time(const std::vector<double>& signal, double frac, double fs_hz) {
    if (!(frac > 0.0 && frac < 1.0)) throw Error(ErrorCode::InvalidConfig, "frac must lie in (0,1)");
    if (!(fs_hz > 0.0)) throw Error(ErrorCode::InvalidConfig, "sample rate must be positive");
    if (signal.size() < 2) throw Error(ErrorCode::TooFewSamples, "ramp window needs at least 2 samples");
    const std::size_t p = plateau_len(signal.size());
    const double y0 = mean_range(signal, 0, p);
    const double y1 = mean_range(signal, signal.size() - p, p);
    const double amp = y1 - y0;
    if (std::abs(amp) <= 1e-9) throw Error(ErrorCode::FlatRamp, "ramp amplitude " + fmt(amp));
    // normalized coverage: 0 at the initial plateau, 1 at the final one
    double prev = (signal[0] - y0) / amp;
    if (prev >= frac) return 0.0;
    for (std::size_t i = 1; i < signal.size(); ++i) {
        const double cur = (signal[i] - y0) / amp;
        if (cur >= frac) {
            const double t = static_cast<double>(i - 1) + (frac - prev) / (cur - prev);
            return t / fs_hz;
        }
        prev = cur;
    }
    throw Error(ErrorCode::NoCrossing, "signal never covers " + fmt(frac, "%g") + " of the amplitude");
}

MetricInstance delta_response(const std::vector<double>& truth, const std::vector<double>& pred,
                              double frac, double fs_hz, std::size_t pattern_id) {
    check_pair(truth, pred);
    const std::size_t p = plateau_len(pred.size());
    const double t0 = mean_range(truth, 0, plateau_len(truth.size()));
    const double t1 = mean_range(truth, truth.size() - plateau_len(truth.size()), plateau_len(truth.size()));
    const double p0 = mean_range(pred, 0, p);
    const double p1 = mean_range(pred, pred.size() - p, p);
    if (std::abs(p1 - p0) <= 1e-9) throw Error(ErrorCode::FlatRamp, "prediction amplitude " + fmt(p1 - p0));
    // rescale the prediction onto the truth's plateau levels
    std::vector<double> scaled(pred.size());
    const double gain = (t1 - t0) / (p1 - p0);
    for (std::size_t i = 0; i < pred.size(); ++i) scaled[i] = t0 + (pred[i] - p0) * gain;
    const double dt = std::abs(response_time(truth, frac, fs_hz) - response_time(scaled, frac, fs_hz));
    const int pct = static_cast<int>(std::llround(frac * 100.0));
    return MetricInstance{"dt" + std::to_string(pct), dt, pattern_id};
}

MetricInstance peak_delay(const std::vector<double>& truth, const std::vector<double>& pred,
                          synth::PatternKind kind, double fs_hz, std::size_t pattern_id) {
    check_pair(truth, pred);
    if (!(fs_hz > 0.0)) throw Error(ErrorCode::InvalidConfig, "sample rate must be positive");
    std::size_t it, ip;
    if (kind == synth::PatternKind::Overshoot) {
        it = static_cast<std::size_t>(std::max_element(truth.begin(), truth.end()) - truth.begin());
        ip = static_cast<std::size_t>(std::max_element(pred.begin(), pred.end()) - pred.begin());
    } else if (kind == synth::PatternKind::Undershoot) {
        it = static_cast<std::size_t>(std::min_element(truth.begin(), truth.end()) - truth.begin());
        ip = static_cast<std::size_t>(std::min_element(pred.begin(), pred.end()) - pred.begin());
    } else {
        throw Error(ErrorCode::InvalidConfig,
                    std::string("peak delay is defined for overshoots and undershoots, got ") +
                        synth::to_string(kind));
    }
    const double delta = it > ip ? static_cast<double>(it - ip) : static_cast<double>(ip - it);
    return MetricInstance{"dt_peak", delta / fs_hz, pattern_id};
}

double convergence_time(const std::vector<double>& signal, double fs_hz) {
    if (!(fs_hz > 0.0)) throw Error(ErrorCode::InvalidConfig, "sample rate must be positive");
    if (signal.size() < 2) throw Error(ErrorCode::TooFewSamples, "window needs at least 2 samples");
    const std::size_t p = plateau_len(signal.size());
    const double initial = mean_range(signal, 0, p);
    const double final_v = mean_range(signal, signal.size() - p, p);
    const double amp = std::abs(final_v - initial);
    if (amp <= 1e-9) throw Error(ErrorCode::FlatRamp, "window amplitude " + fmt(amp));
    const double band = 0.03 * amp;
    // last sample outside the band decides; everything after must stay inside
    for (std::size_t i = signal.size(); i-- > 0;) {
        if (std::abs(signal[i] - final_v) > band) return static_cast<double>(i + 1) / fs_hz;
    }
    return 0.0;
}

std::pair<double, double> static_errors(const std::vector<double>& truth,
                                        const std::vector<double>& pred) {
    check_pair(truth, pred);
    const double mt = mean_range(truth, 0, truth.size());
    const double mp = mean_range(pred, 0, pred.size());
    const double e_abs = std::abs(mp - mt);
    return {e_abs, e_abs / std::max(std::abs(mt), 1e-9)};
}

double quantile90(const std::vector<double>& values) {
    if (values.empty()) throw Error(ErrorCode::EmptyList, "quantile of an empty list");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    // nearest rank ceil(0.9 n), in integer arithmetic to dodge fp round-up
    const std::size_t rank = (9 * sorted.size() + 9) / 10;
    return sorted[rank - 1];
}

EpReport build_report(const std::vector<double>& pred, const std::vector<double>& truth,
                      const std::vector<seg::PatternInstance>& patterns, double fs_hz) {
    EpReport report;
    report.mse = mse(pred, truth);

    auto add = [&report](const MetricInstance& mi) { report.instances[mi.metric].push_back(mi); };

    for (const auto& pat : patterns) {
        ++report.pattern_counts[pat.kind];
        if (pat.start_idx >= pat.end_idx || pat.end_idx > truth.size()) {
            report.skipped.push_back({pat.id, "window out of range"});
            continue;
        }
        std::vector<double> wt(truth.begin() + static_cast<std::ptrdiff_t>(pat.start_idx),
                               truth.begin() + static_cast<std::ptrdiff_t>(pat.end_idx));
        std::vector<double> wp(pred.begin() + static_cast<std::ptrdiff_t>(pat.start_idx),
                               pred.begin() + static_cast<std::ptrdiff_t>(pat.end_idx));
        auto attempt = [&](const char* what, auto&& fn) {
            try {
                fn();
            } catch (const Error& e) {
                report.skipped.push_back({pat.id, std::string(what) + ": " + e.what()});
            }
        };
        switch (pat.kind) {
            case synth::PatternKind::RisingRamp:
            case synth::PatternKind::DescendingRamp:
                attempt("dt10", [&] { add(delta_response(wt, wp, 0.10, fs_hz, pat.id)); });
                attempt("dt80", [&] { add(delta_response(wt, wp, 0.80, fs_hz, pat.id)); });
                attempt("dt_conv", [&] {
                    const double dt = std::abs(convergence_time(wt, fs_hz) - convergence_time(wp, fs_hz));
                    add(MetricInstance{"dt_conv", dt, pat.id});
                });
                break;
            case synth::PatternKind::Overshoot:
            case synth::PatternKind::Undershoot:
                attempt("dt_peak", [&] { add(peak_delay(wt, wp, pat.kind, fs_hz, pat.id)); });
                break;
            case synth::PatternKind::StaticState:
                attempt("E_abs", [&] {
                    const auto [e_abs, e_rel] = static_errors(wt, wp);
                    add(MetricInstance{"E_abs", e_abs, pat.id});
                    add(MetricInstance{"E_rel", e_rel, pat.id});
                });
                break;
            default:
                report.skipped.push_back({pat.id, std::string("no metric for kind ") + synth::to_string(pat.kind)});
        }
    }

    for (const auto& [name, list] : report.instances) {
        std::vector<double> vals(list.size());
        for (std::size_t i = 0; i < list.size(); ++i) vals[i] = list[i].value;
        report.quantile90s[name] = quantile90(vals);
    }
    return report;
}

void save_report(const EpReport& report, const std::string& path, const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "mse " << fmt(report.mse) << "\n";
    for (const auto& [kind, count] : report.pattern_counts)
        out << "patterns " << synth::to_string(kind) << " " << count << "\n";
    for (const auto& [name, list] : report.instances)
        out << "metric " << name << " count " << list.size() << " q90 "
            << fmt(report.quantile90s.at(name)) << "\n";
    for (const auto& s : report.skipped) out << "skipped " << s.pattern_id << " " << s.reason << "\n";
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path);
}

void save_metric_csv(const EpReport& report, const std::string& path,
                     const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "metric,value,pattern_id\n";
    for (const auto& [name, list] : report.instances)
        for (const auto& mi : list) out << name << "," << fmt(mi.value) << "," << mi.pattern_id << "\n";
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path);
}

}  // namespace vsense::ep
