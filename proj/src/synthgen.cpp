#include "vsense/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vsense/error.hpp"
#include "vsense/rng.hpp"

namespace vsense::synth {

namespace {

constexpr double kPi = 3.141592653589793238462643;

double require_param(const std::map<std::string, double>& params, const std::string& name) {
    const auto it = params.find(name);
    if (it == params.end()) throw Error(ErrorCode::MissingParam, name);
    return it->second;
}

double param_or(const std::map<std::string, double>& params, const std::string& name,
                double fallback) {
    const auto it = params.find(name);
    return it == params.end() ? fallback : it->second;
}

/// Unit overshoot transient: linear rise to 1 + overshoot at sample peak_idx,
/// then monotone exponential settling back to 1. The settle constant is a
/// quarter of the remaining length, so the tail is within 2% of 1 at the end.
std::vector<double> overshoot_step(std::size_t n, double overshoot, double peak_idx) {
    const double tau = std::max(1.0, (static_cast<double>(n - 1) - peak_idx) / 4.0);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i);
        y[i] = t <= peak_idx ? (1.0 + overshoot) * (t / peak_idx)
                             : 1.0 + overshoot * std::exp(-(t - peak_idx) / tau);
    }
    return y;
}

std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct PatternDraw {
    PatternKind kind;
    std::size_t length;
    std::map<std::string, double> params;
};

}  // namespace

const char* to_string(PatternKind kind) {
    switch (kind) {
        case PatternKind::RisingRamp: return "RisingRamp";
        case PatternKind::DescendingRamp: return "DescendingRamp";
        case PatternKind::Overshoot: return "Overshoot";
        case PatternKind::Undershoot: return "Undershoot";
        case PatternKind::StaticState: return "StaticState";
        case PatternKind::Sinusoid: return "Sinusoid";
    }
    return "Unknown";
}

PatternKind pattern_kind_from_string(const std::string& name) {
    if (name == "RisingRamp") return PatternKind::RisingRamp;
    if (name == "DescendingRamp") return PatternKind::DescendingRamp;
    if (name == "Overshoot") return PatternKind::Overshoot;
    if (name == "Undershoot") return PatternKind::Undershoot;
    if (name == "StaticState") return PatternKind::StaticState;
    if (name == "Sinusoid") return PatternKind::Sinusoid;
    throw Error(ErrorCode::InvalidConfig, "unknown pattern kind '" + name + "'");
}

std::vector<double> pattern_template(PatternKind kind,
                                     const std::map<std::string, double>& params,
                                     std::size_t n) {
    if (n < 4) throw Error(ErrorCode::BadLength, "template length " + std::to_string(n) + " < 4");
    std::vector<double> y(n);
    switch (kind) {
        case PatternKind::RisingRamp:
        case PatternKind::DescendingRamp: {
            const double amplitude = require_param(params, "amplitude");
            const double ramp_fraction = param_or(params, "ramp_fraction", 0.5);
            const double lead_fraction = param_or(params, "lead_fraction", 0.0);
            const auto lead_len =
                static_cast<std::size_t>(std::llround(lead_fraction * static_cast<double>(n)));
            const auto ramp_len = std::max<std::size_t>(
                2, static_cast<std::size_t>(std::llround(ramp_fraction * static_cast<double>(n))));
            for (std::size_t i = 0; i < n; ++i) {
                const double past = i > lead_len ? static_cast<double>(i - lead_len) : 0.0;
                const double frac = std::min(1.0, past / static_cast<double>(ramp_len - 1));
                y[i] = kind == PatternKind::RisingRamp ? amplitude * frac
                                                       : amplitude * (1.0 - frac);
            }
            break;
        }
        case PatternKind::Overshoot:
        case PatternKind::Undershoot: {
            const double amplitude = require_param(params, "amplitude");
            const double overshoot = require_param(params, "peak_overshoot_fraction");
            const double peak_fraction = param_or(params, "peak_time_fraction", 0.25);
            const double peak_idx = std::max(1.0, peak_fraction * static_cast<double>(n - 1));
            const auto step = overshoot_step(n, overshoot, peak_idx);
            for (std::size_t i = 0; i < n; ++i) {
                // undershoot is the point-mirrored transient: it descends to 0
                // and dips below the final value before settling
                y[i] = kind == PatternKind::Overshoot ? amplitude * step[i]
                                                      : amplitude * (1.0 - step[i]);
            }
            break;
        }
        case PatternKind::StaticState: {
            const double amplitude = require_param(params, "amplitude");
            std::fill(y.begin(), y.end(), amplitude);
            break;
        }
        case PatternKind::Sinusoid: {
            const double amplitude = require_param(params, "amplitude");
            const double period = require_param(params, "period");
            for (std::size_t i = 0; i < n; ++i) {
                y[i] = amplitude * std::sin(2.0 * kPi * static_cast<double>(i) / period);
            }
            break;
        }
    }
    return y;
}

double static_flow_map(double c, double omega, double p_in, double t_in, double p_out,
                       double t_out) {
    const double dp = p_out - p_in;
    return 0.30 * c * omega + 0.25 * dp * dp + 0.20 * t_out - 0.10 * t_in - 0.35;
}

namespace {

// Distinct smooth maps latent -> channel, strictly monotone over the
// operating range, O(1) magnitudes.
double map_torque(double u) { return 0.6 * u + 0.08 * u * u * u; }
double map_speed(double u) { return 1.0 + 0.9 * u; }
double map_p_in(double u) { return 1.2 + 0.5 * std::tanh(u - 1.5); }
double map_t_in(double u) { return 0.8 + 0.25 * u + 0.05 * u * u; }
double map_p_out(double u) { return 1.8 + 0.6 * u; }
double map_t_out(double u) { return 1.0 + 0.5 * std::log(1.0 + u); }

std::vector<double> lowpass_first_order(const std::vector<double>& x, double tau_s, double fs_hz) {
    // exact discretization; tau -> 0 degenerates to the identity
    const double a = std::exp(-1.0 / (tau_s * fs_hz));
    std::vector<double> y(x.size());
    double state = x.empty() ? 0.0 : x.front();
    for (std::size_t i = 0; i < x.size(); ++i) {
        state = a * state + (1.0 - a) * x[i];
        y[i] = state;
    }
    return y;
}

void validate(const GeneratorConfig& cfg) {
    double mix_sum = 0.0;
    for (const auto& [kind, p] : cfg.pattern_mix) {
        if (p < 0.0) throw Error(ErrorCode::InvalidConfig, "negative pattern probability");
        mix_sum += p;
    }
    if (std::abs(mix_sum - 1.0) > 1e-9) {
        throw Error(ErrorCode::InvalidConfig, "pattern_mix sums to " + format_full(mix_sum));
    }
    if (cfg.sample_rate_hz <= 0.0 || cfg.duration_s <= 0.0 || cfg.noise_std < 0.0 ||
        cfg.tau_sys_s <= 0.0 || cfg.level_max <= cfg.level_min) {
        throw Error(ErrorCode::InvalidConfig, "non-positive generator quantity");
    }
}

}  // namespace

std::pair<signals::Recording, std::vector<Annotation>> generate_recording(
    const GeneratorConfig& cfg) {
    validate(cfg);
    const double fs = cfg.sample_rate_hz;
    const auto n_total = static_cast<std::size_t>(std::llround(cfg.duration_s * fs));
    if (n_total < 8) throw Error(ErrorCode::InvalidConfig, "duration too short");

    Rng structure(mix_seed(cfg.seed, 1));

    std::vector<PatternKind> kinds;
    std::vector<double> weights;
    for (const auto& [kind, p] : cfg.pattern_mix) {
        kinds.push_back(kind);
        weights.push_back(p);
    }

    std::vector<double> latent;
    latent.reserve(n_total);
    std::vector<Annotation> annotations;
    double level = 0.5 * (cfg.level_min + cfg.level_max);

    const auto to_samples = [fs](double seconds) {
        return std::max<std::size_t>(4, static_cast<std::size_t>(std::llround(seconds * fs)));
    };

    while (latent.size() < n_total) {
        PatternKind kind = kinds[structure.discrete(weights)];
        std::map<std::string, double> params;
        std::size_t length = 0;

        // transition direction honors the remaining level headroom; a draw
        // without room flips to its mirrored kind
        const double up_room = cfg.level_max - level;
        const double down_room = level - cfg.level_min;
        const double amp_draw = structure.uniform(0.55, 1.1);

        switch (kind) {
            case PatternKind::RisingRamp:
            case PatternKind::DescendingRamp: {
                bool rising = kind == PatternKind::RisingRamp;
                if (rising && up_room < 1.0 && down_room > up_room) rising = false;
                if (!rising && down_room < 1.0 && up_room > down_room) rising = true;
                kind = rising ? PatternKind::RisingRamp : PatternKind::DescendingRamp;
                const double amplitude = std::min(amp_draw, rising ? up_room : down_room);
                // gradual commanded change, in contrast with the fast
                // transients; the extent brackets the plant's settling so the
                // annotation covers the whole visible response
                const double rise_s = structure.uniform(5.0, 6.0);
                const double lead_s = 3.0;
                const double trail_s = 9.0;
                const double total_s = lead_s + rise_s + trail_s;
                length = to_samples(total_s);
                params = {{"amplitude", amplitude},
                          {"duration_s", static_cast<double>(length) / fs},
                          {"lead_fraction", lead_s / total_s},
                          {"ramp_fraction", rise_s / total_s}};
                break;
            }
            case PatternKind::Overshoot:
            case PatternKind::Undershoot: {
                bool up = kind == PatternKind::Overshoot;
                const double fraction = structure.uniform(0.4, 0.6);
                if (up && up_room < 1.0 && down_room > up_room) up = false;
                if (!up && down_room < 1.0 && up_room > down_room) up = true;
                kind = up ? PatternKind::Overshoot : PatternKind::Undershoot;
                const double room = up ? up_room : down_room;
                const double amplitude = std::min(amp_draw, room / (1.0 + fraction));
                const double duration_s = structure.uniform(9.0, 10.5);
                length = to_samples(duration_s);
                params = {{"amplitude", amplitude},
                          {"duration_s", static_cast<double>(length) / fs},
                          {"peak_overshoot_fraction", fraction},
                          {"peak_time_fraction", 0.25}};
                break;
            }
            case PatternKind::StaticState: {
                const double duration_s = structure.uniform(8.0, 16.0);
                length = to_samples(duration_s);
                params = {{"amplitude", level},
                          {"duration_s", static_cast<double>(length) / fs}};
                break;
            }
            case PatternKind::Sinusoid: {
                const double period_s = structure.uniform(3.0, 4.0);
                const double cycles = 2.0 + static_cast<double>(structure.uniform_index(2));
                const double amplitude =
                    std::min(structure.uniform(0.2, 0.4), std::min(up_room, down_room));
                length = to_samples(cycles * period_s);
                params = {{"amplitude", amplitude},
                          {"duration_s", static_cast<double>(length) / fs},
                          {"period", period_s * fs}};
                break;
            }
        }

        const std::size_t start = latent.size();
        const auto shape = pattern_template(kind, params, length);
        const double amplitude = params.at("amplitude");
        for (double v : shape) {
            double sample = level;
            switch (kind) {
                case PatternKind::RisingRamp:
                case PatternKind::Overshoot: sample = level + v; break;
                case PatternKind::DescendingRamp:
                case PatternKind::Undershoot: sample = level - amplitude + v; break;
                case PatternKind::StaticState: sample = v; break;
                case PatternKind::Sinusoid: sample = level + v; break;
            }
            latent.push_back(sample);
            if (latent.size() == n_total) break;
        }
        annotations.push_back({kind, start, latent.size(), params});
        if (!latent.empty()) level = latent.back();

        // settle gap between patterns, unannotated constant hold
        const std::size_t gap = to_samples(structure.uniform(8.0, 12.0));
        for (std::size_t i = 0; i < gap && latent.size() < n_total; ++i) latent.push_back(level);
    }

    // A StaticState annotation is ground truth for a constant stretch: grow it
    // over the adjacent constant-latent samples (holds/gaps), clamped at the
    // neighboring annotations.
    for (std::size_t k = 0; k < annotations.size(); ++k) {
        auto& ann = annotations[k];
        if (ann.kind != PatternKind::StaticState) continue;
        const double ref = latent[ann.start_idx];
        std::size_t lo = k == 0 ? 0 : annotations[k - 1].end_idx;
        std::size_t hi = k + 1 < annotations.size() ? annotations[k + 1].start_idx : latent.size();
        std::size_t s = ann.start_idx;
        while (s > lo && latent[s - 1] == ref) --s;
        std::size_t e = ann.end_idx;
        while (e < hi && latent[e] == ref) ++e;
        ann.start_idx = s;
        ann.end_idx = e;
    }

    signals::Recording rec = channels_from_latent(latent, fs);
    rec.id = "synthetic";
    for (std::size_t c = 0; c < 6; ++c) {
        auto& ch = rec.channel(signals::kInputChannels[c]);
        double mean = 0.0;
        for (double v : ch) mean += v;
        mean /= static_cast<double>(n_total);
        double ss = 0.0;
        for (double v : ch) ss += (v - mean) * (v - mean);
        const double scale = std::sqrt(ss / static_cast<double>(n_total));
        if (cfg.noise_std > 0.0) {
            Rng noise(mix_seed(cfg.seed, 10 + c));
            const double sd = cfg.noise_std * scale;
            for (double& v : ch) {
                v += std::clamp(noise.normal(), -8.0, 8.0) * sd;
            }
        }
    }

    std::vector<double> flow = simulate_flow(rec, cfg.tau_sys_s);
    if (cfg.noise_std > 0.0) {
        double mean = 0.0;
        for (double v : flow) mean += v;
        mean /= static_cast<double>(n_total);
        double ss = 0.0;
        for (double v : flow) ss += (v - mean) * (v - mean);
        const double sd = cfg.noise_std * std::sqrt(ss / static_cast<double>(n_total));
        Rng noise(mix_seed(cfg.seed, 20));
        for (double& v : flow) v += std::clamp(noise.normal(), -8.0, 8.0) * sd;
    }
    rec.add_channel(signals::kFlowChannel, std::move(flow));

    return {std::move(rec), std::move(annotations)};
}

signals::Recording channels_from_latent(const std::vector<double>& latent,
                                        double sample_rate_hz) {
    if (latent.empty()) throw Error(ErrorCode::BadLength, "empty latent trace");
    signals::Recording rec;
    rec.id = "latent";
    rec.sample_rate_hz = sample_rate_hz;
    rec.t0_s = 0.0;
    using MapFn = double (*)(double);
    const std::array<MapFn, 6> maps = {map_torque, map_speed, map_p_in,
                                       map_t_in,   map_p_out, map_t_out};
    for (std::size_t c = 0; c < 6; ++c) {
        std::vector<double> ch(latent.size());
        for (std::size_t i = 0; i < latent.size(); ++i) ch[i] = maps[c](latent[i]);
        rec.add_channel(signals::kInputChannels[c], std::move(ch));
    }
    return rec;
}

std::vector<double> simulate_flow(const signals::Recording& rec, double tau_sys_s) {
    const auto& c = rec.channel("C");
    const auto& omega = rec.channel("omega");
    const auto& p_in = rec.channel("P_in");
    const auto& t_in = rec.channel("T_in");
    const auto& p_out = rec.channel("P_out");
    const auto& t_out = rec.channel("T_out");
    std::vector<double> g(rec.length());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = static_flow_map(c[i], omega[i], p_in[i], t_in[i], p_out[i], t_out[i]);
    }
    return lowpass_first_order(g, tau_sys_s, rec.sample_rate_hz);
}

void save_annotations(const std::vector<Annotation>& annotations, const std::string& path,
                      const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "# id kind start_idx end_idx key=value...\n";
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const auto& ann = annotations[i];
        out << i << " " << to_string(ann.kind) << " " << ann.start_idx << " " << ann.end_idx;
        for (const auto& [key, value] : ann.params) {
            out << " " << key << "=" << format_full(value);
        }
        out << "\n";
    }
}

std::vector<Annotation> load_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::vector<Annotation> annotations;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::size_t id = 0;
        std::string kind;
        Annotation ann;
        if (!(ss >> id >> kind >> ann.start_idx >> ann.end_idx)) {
            throw Error(ErrorCode::IoError, "malformed annotation line: " + line);
        }
        ann.kind = pattern_kind_from_string(kind);
        std::string pair;
        while (ss >> pair) {
            const auto eq = pair.find('=');
            if (eq == std::string::npos) {
                throw Error(ErrorCode::IoError, "malformed annotation param: " + pair);
            }
            ann.params[pair.substr(0, eq)] = std::stod(pair.substr(eq + 1));
        }
        annotations.push_back(std::move(ann));
    }
    return annotations;
}

}  // namespace vsense::synth
