#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vsense::signals {

/// Canonical order of the six model input channels.
inline const std::array<std::string, 6> kInputChannels = {"C",     "omega", "P_in",
                                                          "T_in",  "P_out", "T_out"};
inline const std::string kFlowChannel = "mdot";

/// Fixed-rate multivariate time series. Channels are kept in insertion
/// order; all channel sequences have identical length >= 1.
struct Recording {
    std::string id;  // set by the loader (file stem); empty for in-memory data
    double sample_rate_hz = 0.0;
    double t0_s = 0.0;
    std::vector<std::string> channel_names;
    std::vector<std::vector<double>> channels;

    std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
    bool has_channel(const std::string& name) const;
    const std::vector<double>& channel(const std::string& name) const;
    std::vector<double>& channel(const std::string& name);
    void add_channel(const std::string& name, std::vector<double> values);
    double time_at(std::size_t index) const { return t0_s + static_cast<double>(index) / sample_rate_hz; }

    /// Contiguous sub-recording over [start, start+count); keeps channel set,
    /// shifts t0 accordingly.
    Recording slice(std::size_t start, std::size_t count) const;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

/// Per-channel first and second moments used for scaling.
struct ChannelStats {
    std::map<std::string, MeanStd> by_channel;
};

struct DatasetSplit {
    std::vector<Recording> train;
    std::vector<Recording> validation;
    std::vector<Recording> test;
};

/// Reads a recording from CSV with header t,C,omega,P_in,T_in,P_out,T_out,mdot
/// (mdot optional). Leading '#' comment lines are skipped. The sample rate is
/// inferred from the median timestamp delta; timestamps must be strictly
/// increasing and uniformly spaced within 1e-6 relative tolerance.
Recording load_recording(const std::string& path);

/// Writes a recording as CSV (full %.17g precision). `header_comment`, when
/// non-empty, is emitted first as a '#' line.
void save_recording(const Recording& rec, const std::string& path,
                    const std::string& header_comment = "");

/// Mean and population standard deviation per channel over the concatenation
/// of all recordings.
ChannelStats compute_stats(const std::vector<Recording>& recordings,
                           const std::vector<std::string>& channels);

/// (x - mean) / std per channel; channels with std below 1e-12 map to zero.
Recording standardize(const Recording& rec, const ChannelStats& stats);

/// Splits recordings into train/validation/test. A single recording is cut
/// into three contiguous time segments (train, validation, test order); with
/// several recordings, whole recordings are assigned by a seeded shuffle that
/// greedily matches the ratios by sample count.
DatasetSplit split_dataset(const std::vector<Recording>& recordings,
                           const std::array<double, 3>& ratios, std::uint64_t seed);

void save_stats(const ChannelStats& stats, const std::string& path,
                const std::string& header_comment = "");
ChannelStats load_stats(const std::string& path);

}  // namespace vsense::signals
