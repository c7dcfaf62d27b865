#include "vsense/signals.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "vsense/error.hpp"
#include "vsense/rng.hpp"

namespace vsense::signals {

namespace {

constexpr double kZeroStdGuard = 1e-12;

std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        // trim surrounding blanks
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

double parse_number(const std::string& text, const std::string& column, std::size_t row) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::NonFiniteValue,
                        "column " + column + ", data row " + std::to_string(row));
        }
        return v;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        throw Error(ErrorCode::NonFiniteValue, "column " + column + ", data row " +
                                                   std::to_string(row) + ": '" + text + "'");
    }
}

}  // namespace

bool Recording::has_channel(const std::string& name) const {
    return std::find(channel_names.begin(), channel_names.end(), name) != channel_names.end();
}

const std::vector<double>& Recording::channel(const std::string& name) const {
    for (std::size_t i = 0; i < channel_names.size(); ++i) {
        if (channel_names[i] == name) return channels[i];
    }
    throw Error(ErrorCode::MissingColumn, name);
}

std::vector<double>& Recording::channel(const std::string& name) {
    for (std::size_t i = 0; i < channel_names.size(); ++i) {
        if (channel_names[i] == name) return channels[i];
    }
    throw Error(ErrorCode::MissingColumn, name);
}

void Recording::add_channel(const std::string& name, std::vector<double> values) {
    channel_names.push_back(name);
    channels.push_back(std::move(values));
}

Recording Recording::slice(std::size_t start, std::size_t count) const {
    Recording out;
    out.id = id;
    out.sample_rate_hz = sample_rate_hz;
    out.t0_s = t0_s + static_cast<double>(start) / sample_rate_hz;
    out.channel_names = channel_names;
    out.channels.reserve(channels.size());
    for (const auto& ch : channels) {
        out.channels.emplace_back(ch.begin() + static_cast<std::ptrdiff_t>(start),
                                  ch.begin() + static_cast<std::ptrdiff_t>(start + count));
    }
    return out;
}

Recording load_recording(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);

    std::string line;
    // skip comments and blank lines before the header
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') break;
    }
    const std::vector<std::string> header = split_csv_line(line);
    if (header.empty() || header[0] != "t") {
        throw Error(ErrorCode::MissingColumn, "t (first header column)");
    }

    std::vector<std::string> required = {"C", "omega", "P_in", "T_in", "P_out", "T_out"};
    for (const auto& name : required) {
        if (std::find(header.begin(), header.end(), name) == header.end()) {
            throw Error(ErrorCode::MissingColumn, name);
        }
    }
    const bool has_mdot = std::find(header.begin(), header.end(), kFlowChannel) != header.end();

    std::vector<double> times;
    std::vector<std::vector<double>> columns(header.size());
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw Error(ErrorCode::MissingColumn,
                        "data row " + std::to_string(row) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
        }
        for (std::size_t c = 0; c < fields.size(); ++c) {
            columns[c].push_back(parse_number(fields[c], header[c], row));
        }
        ++row;
    }
    if (row == 0) throw Error(ErrorCode::EmptyInput, path + " has no data rows");

    times = columns[0];
    double sample_rate = 1.0;
    if (times.size() >= 2) {
        std::vector<double> deltas(times.size() - 1);
        for (std::size_t i = 0; i + 1 < times.size(); ++i) {
            deltas[i] = times[i + 1] - times[i];
            if (deltas[i] <= 0.0) {
                throw Error(ErrorCode::NonUniformSampling,
                            "timestamps not strictly increasing at row " + std::to_string(i + 1));
            }
        }
        std::vector<double> sorted = deltas;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t n = sorted.size();
        const double median =
            (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        for (std::size_t i = 0; i < deltas.size(); ++i) {
            if (std::abs(deltas[i] - median) > 1e-6 * median) {
                throw Error(ErrorCode::NonUniformSampling,
                            "delta at row " + std::to_string(i + 1) + " (" +
                                format_full(deltas[i]) + ") deviates from median " +
                                format_full(median));
            }
        }
        sample_rate = 1.0 / median;
    }

    Recording rec;
    rec.id = std::filesystem::path(path).stem().string();
    rec.sample_rate_hz = sample_rate;
    rec.t0_s = times.front();
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c] == kFlowChannel && !has_mdot) continue;
        rec.add_channel(header[c], std::move(columns[c]));
    }
    return rec;
}

void save_recording(const Recording& rec, const std::string& path,
                    const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "t";
    for (const auto& name : rec.channel_names) out << "," << name;
    out << "\n";
    const std::size_t n = rec.length();
    for (std::size_t i = 0; i < n; ++i) {
        out << format_full(rec.time_at(i));
        for (const auto& ch : rec.channels) out << "," << format_full(ch[i]);
        out << "\n";
    }
}

ChannelStats compute_stats(const std::vector<Recording>& recordings,
                           const std::vector<std::string>& channels) {
    ChannelStats stats;
    for (const auto& name : channels) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& rec : recordings) {
            if (!rec.has_channel(name)) continue;
            for (double v : rec.channel(name)) sum += v;
            count += rec.channel(name).size();
        }
        if (count == 0) throw Error(ErrorCode::EmptyInput, "no samples for channel " + name);
        const double mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (const auto& rec : recordings) {
            if (!rec.has_channel(name)) continue;
            for (double v : rec.channel(name)) ss += (v - mean) * (v - mean);
        }
        stats.by_channel[name] = {mean, std::sqrt(ss / static_cast<double>(count))};
    }
    return stats;
}

Recording standardize(const Recording& rec, const ChannelStats& stats) {
    Recording out;
    out.id = rec.id;
    out.sample_rate_hz = rec.sample_rate_hz;
    out.t0_s = rec.t0_s;
    for (std::size_t c = 0; c < rec.channel_names.size(); ++c) {
        const auto& name = rec.channel_names[c];
        const auto it = stats.by_channel.find(name);
        if (it == stats.by_channel.end()) {
            throw Error(ErrorCode::MissingChannelStats, name);
        }
        const auto [mean, sd] = it->second;
        std::vector<double> scaled(rec.channels[c].size());
        if (sd < kZeroStdGuard) {
            std::fill(scaled.begin(), scaled.end(), 0.0);
        } else {
            for (std::size_t i = 0; i < scaled.size(); ++i) {
                scaled[i] = (rec.channels[c][i] - mean) / sd;
            }
        }
        out.add_channel(name, std::move(scaled));
    }
    return out;
}

DatasetSplit split_dataset(const std::vector<Recording>& recordings,
                           const std::array<double, 3>& ratios, std::uint64_t seed) {
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) {
        throw Error(ErrorCode::RatioSumInvalid, "ratios sum to " + format_full(sum));
    }
    std::size_t total = 0;
    for (const auto& rec : recordings) total += rec.length();
    if (total < 100) {
        throw Error(ErrorCode::TooFewSamples,
                    std::to_string(total) + " samples in total, need at least 100");
    }

    DatasetSplit split;
    if (recordings.size() == 1) {
        // Contiguous time segments; no shuffling, so the causal model's
        // receptive field never straddles a partition boundary.
        const auto& rec = recordings.front();
        const std::size_t n = rec.length();
        const auto n_train =
            static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
        const auto n_val =
            static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
        const std::size_t n_test = n - std::min(n, n_train + n_val);
        if (n_train > 0) split.train.push_back(rec.slice(0, n_train));
        if (n_val > 0) split.validation.push_back(rec.slice(n_train, n_val));
        if (n_test > 0) split.test.push_back(rec.slice(n_train + n_val, n_test));
        return split;
    }

    std::vector<std::size_t> order(recordings.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    // Greedy: each recording goes to the partition with the largest remaining
    // sample deficit; ties resolve in train/validation/test order.
    std::array<double, 3> deficit = {ratios[0] * static_cast<double>(total),
                                     ratios[1] * static_cast<double>(total),
                                     ratios[2] * static_cast<double>(total)};
    std::array<std::vector<Recording>*, 3> parts = {&split.train, &split.validation, &split.test};
    for (std::size_t idx : order) {
        std::size_t best = 0;
        for (std::size_t p = 1; p < 3; ++p) {
            if (deficit[p] > deficit[best]) best = p;
        }
        parts[best]->push_back(recordings[idx]);
        deficit[best] -= static_cast<double>(recordings[idx].length());
    }
    return split;
}

void save_stats(const ChannelStats& stats, const std::string& path,
                const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    for (const auto& [name, ms] : stats.by_channel) {
        out << "channel " << name << " mean " << format_full(ms.mean) << " std "
            << format_full(ms.std) << "\n";
    }
}

ChannelStats load_stats(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    ChannelStats stats;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string kw_channel, name, kw_mean, kw_std;
        double mean = 0.0, sd = 0.0;
        if (!(ss >> kw_channel >> name >> kw_mean >> mean >> kw_std >> sd) ||
            kw_channel != "channel" || kw_mean != "mean" || kw_std != "std") {
            throw Error(ErrorCode::IoError, "malformed stats line: " + line);
        }
        stats.by_channel[name] = {mean, sd};
    }
    if (stats.by_channel.empty()) throw Error(ErrorCode::EmptyInput, path + " holds no stats");
    return stats;
}

}  // namespace vsense::signals
