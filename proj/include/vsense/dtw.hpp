#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace vsense::dtw {

struct DtwResult {
    double cost = 0.0;
    // monotone alignment from (0,0) to (n-1,m-1), steps (1,0),(0,1),(1,1)
    std::vector<std::pair<std::size_t, std::size_t>> path;
};

/// Classic dynamic program with |a_i - b_j| local cost. The returned path is
/// the optimal alignment with ties broken diagonal first, then (0,1), then
/// (1,0) while backtracking.
DtwResult dtw_distance(const std::vector<double>& a, const std::vector<double>& b);

/// DTW barycenter averaging: every member is aligned to the current center
/// and each center sample is replaced by the mean of the member samples
/// mapped onto it. Stops after `iterations` rounds or when the center moves
/// less than 1e-9 in max norm.
std::vector<double> dba_barycenter(const std::vector<std::vector<double>>& members,
                                   const std::vector<double>& init, std::size_t iterations);

struct Clustering {
    std::size_t k = 0;
    std::vector<std::vector<double>> centers;
    std::vector<std::size_t> assignment;  // window index -> cluster id
    double inertia = 0.0;                 // sum of DTW costs to assigned centers
};

/// Seeded k-means++ initialization (squared-cost weighting) followed by
/// assign/recenter rounds. A recentering is kept only when it does not
/// increase the cluster's cost, so inertia is non-increasing; iteration stops
/// on a stable assignment or after max_iters rounds. Several independently
/// seeded runs are performed and the lowest-inertia result is returned, which
/// shields the outcome from a single unlucky initialization.
Clustering dtw_kmeans(const std::vector<std::vector<double>>& windows, std::size_t k,
                      std::uint64_t seed, std::size_t max_iters = 50);

/// Indices of windows whose DTW cost to the center is <= radius.
std::vector<std::size_t> dtw_ball_filter(const std::vector<std::vector<double>>& windows,
                                         const std::vector<double>& center, double radius);

void save_clustering(const Clustering& clustering, const std::string& path,
                     const std::string& header_comment = "");
Clustering load_clustering(const std::string& path);

}  // namespace vsense::dtw
