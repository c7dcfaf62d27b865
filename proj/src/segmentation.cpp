#include "vsense/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "vsense/error.hpp"
#include "vsense/rng.hpp"

namespace vsense::seg {

namespace {

std::vector<double> zscore(const std::vector<double>& x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    const double sd = std::sqrt(var);
    std::vector<double> out(x.size(), 0.0);
    if (sd < 1e-12) return out;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / sd;
    return out;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Candidate {
    PatternInstance instance;
    double peak_height = 0.0;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::map<synth::PatternKind, std::vector<double>> canonical_templates(std::size_t length,
                                                                       const dsp::IirFilter& filter) {
    if (length < 8) throw Error(ErrorCode::InvalidConfig, "template length below 8 samples");
    const double fs = filter.sample_rate_hz;
    const std::size_t hw = length / 2;
    // Each template is a clean instance of the canonical pattern run through
    // the generator's noise-free plant (channel maps, flow map, first-order
    // lag) and framed exactly as segment() frames a real candidate: band-pass,
    // rectified argmax, symmetric window. Plant dynamics shift where the peak
    // lands relative to the shape -- and differently per kind, because the
    // flow map's curvature skews the response -- so templates must be framed
    // through the same machinery as the data.
    const synth::GeneratorConfig plant;
    const double level_mid = 0.5 * (plant.level_min + plant.level_max);
    const double amplitude = 0.8;
    const double base = level_mid - 0.5 * amplitude;
    const auto pad = static_cast<std::size_t>(std::llround(40.0 * fs)) + length;
    const std::map<std::string, double> ramp_params = {{"amplitude", amplitude}};
    const std::map<std::string, double> shoot_params = {{"amplitude", amplitude},
                                                        {"peak_overshoot_fraction", 0.5}};
    std::map<synth::PatternKind, std::vector<double>> out;
    for (auto kind : {synth::PatternKind::RisingRamp, synth::PatternKind::DescendingRamp,
                      synth::PatternKind::Overshoot, synth::PatternKind::Undershoot}) {
        const bool shoot =
            kind == synth::PatternKind::Overshoot || kind == synth::PatternKind::Undershoot;
        const double body_s = shoot ? 9.75 : 11.0;
        const auto body_len =
            std::max<std::size_t>(4, static_cast<std::size_t>(std::llround(body_s * fs)));
        const auto body = synth::pattern_template(kind, shoot ? shoot_params : ramp_params, body_len);

        std::vector<double> latent;
        latent.reserve(2 * pad + body_len);
        latent.insert(latent.end(), pad, base + body.front());
        for (double v : body) latent.push_back(base + v);
        latent.insert(latent.end(), pad, base + body.back());

        const auto trace =
            synth::simulate_flow(synth::channels_from_latent(latent, fs), plant.tau_sys_s);

        // search near the embedded pattern only; the zero-state startup lobe
        // at the head of the trace must not win the argmax
        const auto response = dsp::filter_signal(filter, trace);
        std::size_t peak = pad - 2 * length;
        for (std::size_t i = peak; i + length < response.size(); ++i)
            if (std::abs(response[i]) > std::abs(response[peak])) peak = i;

        const auto begin = trace.begin() + static_cast<std::ptrdiff_t>(peak - hw);
        out[kind] = zscore(std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(length)));
    }
    return out;
}

std::map<std::size_t, std::optional<synth::PatternKind>> label_clusters(
    const dtw::Clustering& clustering,
    const std::map<synth::PatternKind, std::vector<double>>& templates) {
    std::map<std::size_t, std::optional<synth::PatternKind>> labels;
    for (std::size_t c = 0; c < clustering.k; ++c) labels[c] = std::nullopt;

    std::vector<synth::PatternKind> kinds;
    for (const auto& [kind, tmpl] : templates) kinds.push_back(kind);
    std::vector<bool> kind_used(kinds.size(), false);
    std::vector<bool> cluster_used(clustering.k, false);

    const std::size_t rounds = std::min<std::size_t>(kinds.size(), clustering.k);
    for (std::size_t round = 0; round < rounds; ++round) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_kind = kinds.size(), best_cluster = clustering.k;
        for (std::size_t t = 0; t < kinds.size(); ++t) {
            if (kind_used[t]) continue;
            const auto& tmpl = templates.at(kinds[t]);
            for (std::size_t c = 0; c < clustering.k; ++c) {
                if (cluster_used[c] || clustering.centers[c].empty()) continue;
                const double cost = dtw::dtw_distance(tmpl, clustering.centers[c]).cost;
                // strict < keeps the earlier (kind, lower cluster id) on ties
                if (cost < best) {
                    best = cost;
                    best_kind = t;
                    best_cluster = c;
                }
            }
        }
        if (best_kind == kinds.size()) break;  // only empty centers left
        kind_used[best_kind] = true;
        cluster_used[best_cluster] = true;
        labels[best_cluster] = kinds[best_kind];
    }
    return labels;
}

std::vector<PatternInstance> segment(const signals::Recording& rec, const SegmentationConfig& cfg,
                                     ClusterTrace* trace) {
    if (trace) *trace = {};
    if (!rec.has_channel(signals::kFlowChannel))
        throw Error(ErrorCode::MissingFlowChannel, "recording " + rec.id + " has no mdot channel");
    if (rec.length() <= 2 * cfg.half_width)
        throw Error(ErrorCode::RecordingTooShort,
                    std::to_string(rec.length()) + " samples for half_width " +
                        std::to_string(cfg.half_width));

    // order 2: higher orders ring for tens of seconds below f_lo and the
    // rebound lobes flood the candidate set with junk windows
    const auto filter = dsp::design_butterworth_bandpass(2, cfg.f_lo_hz, cfg.f_hi_hz, rec.sample_rate_hz);
    const auto filtered = dsp::filter_signal(filter, rec.channel(signals::kFlowChannel));
    // rectify so descending transients (negative-going response) peak too
    std::vector<double> rectified(filtered.size());
    for (std::size_t i = 0; i < filtered.size(); ++i) rectified[i] = std::abs(filtered[i]);

    const auto peaks = dsp::find_peaks(rectified, cfg.peaks);
    const auto extraction = dsp::extract_windows(rec, signals::kFlowChannel, peaks, cfg.half_width);
    if (extraction.windows.empty()) return {};

    std::vector<std::vector<double>> zwindows(extraction.windows.size());
    for (std::size_t i = 0; i < extraction.windows.size(); ++i)
        zwindows[i] = zscore(extraction.windows[i].values);

    const std::size_t k = std::min<std::size_t>(cfg.k, zwindows.size());
    const auto clustering = dtw::dtw_kmeans(zwindows, k, mix_seed(cfg.seed, 5));
    const auto labels =
        label_clusters(clustering, canonical_templates(2 * cfg.half_width + 1, filter));

    if (trace) {
        trace->windows = zwindows;
        for (const auto& win : extraction.windows) trace->starts.push_back(win.start_idx);
        trace->assignment = clustering.assignment;
        trace->centers = clustering.centers;
        for (std::size_t c = 0; c < clustering.k; ++c) trace->labels.push_back(labels.at(c));
    }

    std::vector<Candidate> candidates;
    for (std::size_t c = 0; c < clustering.k; ++c) {
        const auto label = labels.at(c);
        if (!label) continue;
        std::vector<std::size_t> members;
        std::vector<double> costs;
        for (std::size_t i = 0; i < zwindows.size(); ++i) {
            if (clustering.assignment[i] != c) continue;
            members.push_back(i);
            costs.push_back(dtw::dtw_distance(zwindows[i], clustering.centers[c]).cost);
        }
        if (members.empty()) continue;
        const double radius = cfg.ball_radius > 0.0 ? cfg.ball_radius : 2.5 * median(costs);
        for (std::size_t m = 0; m < members.size(); ++m) {
            if (costs[m] > radius) continue;
            const auto& win = extraction.windows[members[m]];
            PatternInstance inst;
            inst.kind = *label;
            inst.start_idx = win.start_idx;
            inst.end_idx = win.start_idx + win.values.size();
            inst.recording_id = rec.id;
            inst.cluster_id = c;
            candidates.push_back({inst, rectified[win.peak_idx]});
        }
    }

    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.instance.start_idx != b.instance.start_idx)
            return a.instance.start_idx < b.instance.start_idx;
        return a.instance.cluster_id < b.instance.cluster_id;
    });

    // sweep keeps the taller rectified peak on overlap; candidates are sorted
    // by start, so replacing the last kept entry cannot create a new overlap
    std::vector<Candidate> kept;
    for (const auto& cand : candidates) {
        if (!kept.empty() && cand.instance.start_idx < kept.back().instance.end_idx) {
            if (cand.peak_height > kept.back().peak_height) kept.back() = cand;
            continue;
        }
        kept.push_back(cand);
    }

    std::vector<PatternInstance> result(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        result[i] = kept[i].instance;
        result[i].id = i;
    }
    if (!cfg.selection_file.empty()) result = apply_manual_selection(result, cfg.selection_file).kept;
    return result;
}

std::vector<PatternInstance> detect_static_states(const signals::Recording& rec, double min_len_s,
                                                  double max_std,
                                                  const std::vector<PatternInstance>& exclude) {
    if (!(min_len_s > 0.0) || !(max_std > 0.0))
        throw Error(ErrorCode::InvalidConfig, "static-state thresholds must be positive");
    if (!rec.has_channel(signals::kFlowChannel))
        throw Error(ErrorCode::MissingFlowChannel, "recording " + rec.id + " has no mdot channel");
    const auto& x = rec.channel(signals::kFlowChannel);
    const std::size_t n = x.size();
    const std::size_t w = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::llround(min_len_s * rec.sample_rate_hz)));
    if (n < w) return {};

    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];

    const std::size_t starts = n - w + 1;
    std::vector<bool> good(starts, false);
    for (std::size_t t = 0; t < starts; ++t) {
        const double mean = (prefix[t + w] - prefix[t]) / static_cast<double>(w);
        double var = 0.0;
        for (std::size_t i = t; i < t + w; ++i) var += (x[i] - mean) * (x[i] - mean);
        var /= static_cast<double>(w);
        good[t] = std::sqrt(var) < max_std;
    }

    // maximal runs of good window starts; a run [a, b] covers samples [a, b + w)
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    for (std::size_t t = 0; t < starts;) {
        if (!good[t]) {
            ++t;
            continue;
        }
        std::size_t a = t;
        while (t < starts && good[t]) ++t;
        runs.emplace_back(a, (t - 1) + w);
    }

    std::vector<std::pair<std::size_t, std::size_t>> occupied;
    for (const auto& e : exclude) occupied.emplace_back(e.start_idx, e.end_idx);
    std::sort(occupied.begin(), occupied.end());

    std::vector<PatternInstance> result;
    for (auto [lo, hi] : runs) {
        std::size_t cursor = lo;
        auto emit = [&](std::size_t a, std::size_t b) {
            if (b - a < w) return;
            PatternInstance inst;
            inst.id = result.size();
            inst.kind = synth::PatternKind::StaticState;
            inst.start_idx = a;
            inst.end_idx = b;
            inst.recording_id = rec.id;
            result.push_back(inst);
        };
        for (const auto& [os, oe] : occupied) {
            if (oe <= cursor || os >= hi) continue;
            if (os > cursor) emit(cursor, os);
            cursor = std::max(cursor, oe);
        }
        if (cursor < hi) emit(cursor, hi);
    }
    return result;
}

SelectionResult apply_manual_selection(const std::vector<PatternInstance>& instances,
                                       const std::string& selection_path) {
    std::ifstream in(selection_path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + selection_path);
    std::map<std::size_t, bool> verdicts;  // id -> keep
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t id;
        std::string verdict, extra;
        if (!(ls >> id >> verdict) || (ls >> extra) || (verdict != "keep" && verdict != "drop"))
            throw Error(ErrorCode::MalformedSelectionFile,
                        selection_path + " line " + std::to_string(line_no) + ": '" + line + "'");
        verdicts[id] = verdict == "keep";
    }

    SelectionResult result;
    std::map<std::size_t, bool> seen;
    for (const auto& inst : instances) {
        seen[inst.id] = true;
        const auto it = verdicts.find(inst.id);
        if (it == verdicts.end() || it->second) result.kept.push_back(inst);
    }
    for (const auto& [id, keep] : verdicts)
        if (!seen.count(id)) result.unknown_ids.push_back(id);
    return result;
}

void save_instances(const std::vector<PatternInstance>& instances, const std::string& path,
                    const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "# id kind recording start end cluster\n";
    for (const auto& inst : instances) {
        out << inst.id << " " << synth::to_string(inst.kind) << " "
            << (inst.recording_id.empty() ? "-" : inst.recording_id) << " " << inst.start_idx << " "
            << inst.end_idx << " ";
        if (inst.cluster_id == kNoCluster)
            out << "-\n";
        else
            out << inst.cluster_id << "\n";
    }
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path);
}

std::vector<PatternInstance> load_instances(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
    std::vector<PatternInstance> result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        PatternInstance inst;
        std::string kind, recording, cluster;
        if (!(ls >> inst.id >> kind >> recording >> inst.start_idx >> inst.end_idx >> cluster))
            throw Error(ErrorCode::IoError, path + " line " + std::to_string(line_no) + ": '" + line + "'");
        inst.kind = synth::pattern_kind_from_string(kind);
        inst.recording_id = recording == "-" ? "" : recording;
        inst.cluster_id = cluster == "-" ? kNoCluster : std::stoull(cluster);
        result.push_back(inst);
    }
    return result;
}

}  // namespace vsense::seg
