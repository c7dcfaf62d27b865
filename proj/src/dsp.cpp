#include "vsense/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "vsense/error.hpp"

namespace vsense::dsp {

namespace {

constexpr double kPi = 3.141592653589793238462643;

std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

IirFilter design_butterworth_bandpass(int order, double f_lo_hz, double f_hi_hz, double fs_hz) {
    if (order < 1) throw Error(ErrorCode::InvalidConfig, "filter order must be >= 1");
    if (!(0.0 < f_lo_hz && f_lo_hz < f_hi_hz && f_hi_hz < 0.5 * fs_hz)) {
        throw Error(ErrorCode::InvalidBand,
                    "need 0 < f_lo < f_hi < fs/2, got [" + format_full(f_lo_hz) + ", " +
                        format_full(f_hi_hz) + "] at fs " + format_full(fs_hz));
    }

    using cplx = std::complex<double>;
    const int n = order;

    // analog low-pass prototype: poles on the unit circle, left half plane,
    // unit DC gain
    std::vector<cplx> proto(n);
    for (int k = 1; k <= n; ++k) {
        const double theta = kPi * (2.0 * k + n - 1.0) / (2.0 * n);
        proto[k - 1] = std::polar(1.0, theta);
    }

    // pre-warped band edges and low-pass -> band-pass transform
    const double fs2 = 2.0 * fs_hz;
    const double w_lo = fs2 * std::tan(kPi * f_lo_hz / fs_hz);
    const double w_hi = fs2 * std::tan(kPi * f_hi_hz / fs_hz);
    const double bw = w_hi - w_lo;
    const double w0 = std::sqrt(w_lo * w_hi);

    std::vector<cplx> analog_poles;
    analog_poles.reserve(2 * n);
    for (const cplx& p : proto) {
        const cplx ps = p * (bw / 2.0);
        const cplx disc = std::sqrt(ps * ps - cplx(w0 * w0, 0.0));
        analog_poles.push_back(ps + disc);
        analog_poles.push_back(ps - disc);
    }
    // n analog zeros sit at s = 0, n more at infinity; gain picks up bw^n
    const double analog_gain = std::pow(bw, n);

    // bilinear transform, z = (fs2 + s) / (fs2 - s)
    std::vector<cplx> digital_poles;
    digital_poles.reserve(2 * n);
    cplx pole_prod(1.0, 0.0);
    for (const cplx& s : analog_poles) {
        digital_poles.push_back((cplx(fs2, 0.0) + s) / (cplx(fs2, 0.0) - s));
        pole_prod *= cplx(fs2, 0.0) - s;
    }
    // zeros at s=0 map to z=1; the n at infinity map to z=-1
    const double gain = analog_gain * (std::pow(fs2, n) / pole_prod).real();

    // one conjugate pole pair per section, each paired with zeros at z = +/-1
    std::vector<cplx> uppers;
    for (const cplx& p : digital_poles) {
        if (p.imag() > 0.0) uppers.push_back(p);
    }
    if (static_cast<int>(uppers.size()) != n) {
        throw Error(ErrorCode::InvalidBand, "pole pairing failed; band too extreme");
    }
    std::sort(uppers.begin(), uppers.end(), [](const cplx& a, const cplx& b) {
        const double ma = std::abs(a), mb = std::abs(b);
        return ma != mb ? ma < mb : a.real() < b.real();
    });

    const double section_gain = std::pow(std::abs(gain), 1.0 / n);
    const double sign = gain < 0.0 ? -1.0 : 1.0;

    IirFilter filter;
    filter.sample_rate_hz = fs_hz;
    for (int i = 0; i < n; ++i) {
        const cplx& p = uppers[i];
        if (std::abs(p) >= 1.0 - 1e-9) {
            throw Error(ErrorCode::InvalidBand, "unstable design; band too close to limits");
        }
        BiquadSection s;
        const double g = i == 0 ? sign * section_gain : section_gain;
        s.b0 = g;
        s.b1 = 0.0;
        s.b2 = -g;
        s.a1 = -2.0 * p.real();
        s.a2 = std::norm(p);
        filter.sections.push_back(s);
    }
    return filter;
}

std::vector<double> filter_signal(const IirFilter& filter, const std::vector<double>& x) {
    if (x.empty()) throw Error(ErrorCode::EmptyInput, "filter_signal");
    std::vector<double> y = x;
    for (const auto& s : filter.sections) {
        double z1 = 0.0, z2 = 0.0;
        for (double& v : y) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
    return y;
}

std::complex<double> frequency_response(const IirFilter& filter, double f_hz) {
    using cplx = std::complex<double>;
    const double omega = 2.0 * kPi * f_hz / filter.sample_rate_hz;
    const cplx z1 = std::polar(1.0, -omega);
    const cplx z2 = z1 * z1;
    cplx h(1.0, 0.0);
    for (const auto& s : filter.sections) {
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    }
    return h;
}

double magnitude_db(const IirFilter& filter, double f_hz) {
    return 20.0 * std::log10(std::abs(frequency_response(filter, f_hz)));
}

std::vector<std::size_t> find_peaks(const std::vector<double>& x, const PeakConfig& cfg) {
    if (x.size() < 3) throw Error(ErrorCode::TooShort, "find_peaks needs length >= 3");

    struct Candidate {
        std::size_t idx;
        double height;
    };
    std::vector<Candidate> candidates;
    for (std::size_t i = 1; i + 1 < x.size();) {
        if (x[i - 1] < x[i]) {
            std::size_t ahead = i + 1;
            while (ahead < x.size() - 1 && x[ahead] == x[i]) ++ahead;
            if (x[ahead] < x[i]) {
                const std::size_t mid = (i + ahead - 1) / 2;  // plateau floor-midpoint
                candidates.push_back({mid, x[i]});
                i = ahead;
                continue;
            }
            i = ahead;
            continue;
        }
        ++i;
    }

    // contour-line prominence: on each side, the lowest sample between the
    // peak and the nearest strictly higher terrain (or the boundary)
    std::vector<Candidate> prominent;
    for (const auto& c : candidates) {
        double left_min = c.height;
        for (std::size_t j = c.idx;; --j) {
            if (x[j] > c.height) break;
            left_min = std::min(left_min, x[j]);
            if (j == 0) break;
        }
        double right_min = c.height;
        for (std::size_t j = c.idx; j < x.size() && x[j] <= c.height; ++j) {
            right_min = std::min(right_min, x[j]);
        }
        const double prominence = c.height - std::max(left_min, right_min);
        if (prominence >= cfg.min_prominence) prominent.push_back(c);
    }

    std::vector<std::size_t> order(prominent.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (prominent[a].height != prominent[b].height) {
            return prominent[a].height > prominent[b].height;
        }
        return prominent[a].idx < prominent[b].idx;
    });

    std::vector<std::size_t> kept;
    for (std::size_t oi : order) {
        const std::size_t idx = prominent[oi].idx;
        bool ok = true;
        for (std::size_t other : kept) {
            const std::size_t d = other > idx ? other - idx : idx - other;
            if (d < cfg.min_distance) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(idx);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

WindowExtraction extract_windows(const signals::Recording& rec, const std::string& channel,
                                 const std::vector<std::size_t>& peaks, std::size_t half_width) {
    if (half_width < 1) throw Error(ErrorCode::InvalidConfig, "half_width must be >= 1");
    const auto& x = rec.channel(channel);
    WindowExtraction out;
    for (std::size_t p : peaks) {
        if (p < half_width || p + half_width >= x.size()) {
            out.skipped_peaks.push_back(p);
            continue;
        }
        Window w;
        w.start_idx = p - half_width;
        w.peak_idx = p;
        w.values.assign(x.begin() + static_cast<std::ptrdiff_t>(w.start_idx),
                        x.begin() + static_cast<std::ptrdiff_t>(p + half_width + 1));
        out.windows.push_back(std::move(w));
    }
    return out;
}

void save_filter(const IirFilter& filter, const std::string& path,
                 const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "# second-order sections, one per line: b0 b1 b2 a1 a2 (a0 = 1)\n";
    out << "sample_rate_hz " << format_full(filter.sample_rate_hz) << "\n";
    out << "sections " << filter.sections.size() << "\n";
    for (const auto& s : filter.sections) {
        out << format_full(s.b0) << " " << format_full(s.b1) << " " << format_full(s.b2) << " "
            << format_full(s.a1) << " " << format_full(s.a2) << "\n";
    }
}

IirFilter load_filter(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    IirFilter filter;
    std::string line;
    std::size_t expected = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        if (!have_header) {
            std::string key;
            ss >> key;
            if (key == "sample_rate_hz") {
                ss >> filter.sample_rate_hz;
            } else if (key == "sections") {
                ss >> expected;
                have_header = true;
            } else {
                throw Error(ErrorCode::IoError, "unexpected filter line: " + line);
            }
            continue;
        }
        BiquadSection s;
        if (!(ss >> s.b0 >> s.b1 >> s.b2 >> s.a1 >> s.a2)) {
            throw Error(ErrorCode::IoError, "malformed section line: " + line);
        }
        filter.sections.push_back(s);
    }
    if (filter.sections.size() != expected || filter.sample_rate_hz <= 0.0) {
        throw Error(ErrorCode::IoError, "truncated filter file " + path);
    }
    return filter;
}

}  // namespace vsense::dsp
