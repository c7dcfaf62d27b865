#include "vsense/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "vsense/error.hpp"
#include "vsense/rng.hpp"

namespace vsense::dtw {

namespace {

std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double path_cost(const std::vector<std::vector<double>>& windows, std::size_t i,
                 const std::vector<double>& center) {
    return dtw_distance(windows[i], center).cost;
}

}  // namespace

DtwResult dtw_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyInput, "dtw_distance");
    const std::size_t n = a.size(), m = b.size();
    std::vector<double> d(n * m);
    const auto at = [m](std::size_t i, std::size_t j) { return i * m + j; };

    d[at(0, 0)] = std::abs(a[0] - b[0]);
    for (std::size_t j = 1; j < m; ++j) d[at(0, j)] = d[at(0, j - 1)] + std::abs(a[0] - b[j]);
    for (std::size_t i = 1; i < n; ++i) d[at(i, 0)] = d[at(i - 1, 0)] + std::abs(a[i] - b[0]);
    for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t j = 1; j < m; ++j) {
            const double best =
                std::min({d[at(i - 1, j - 1)], d[at(i - 1, j)], d[at(i, j - 1)]});
            d[at(i, j)] = best + std::abs(a[i] - b[j]);
        }
    }

    DtwResult result;
    result.cost = d[at(n - 1, m - 1)];
    std::size_t i = n - 1, j = m - 1;
    result.path.emplace_back(i, j);
    while (i > 0 || j > 0) {
        if (i == 0) {
            --j;
        } else if (j == 0) {
            --i;
        } else {
            const double diag = d[at(i - 1, j - 1)];
            const double left = d[at(i, j - 1)];
            const double up = d[at(i - 1, j)];
            const double best = std::min({diag, left, up});
            if (diag == best) {
                --i;
                --j;
            } else if (left == best) {
                --j;
            } else {
                --i;
            }
        }
        result.path.emplace_back(i, j);
    }
    std::reverse(result.path.begin(), result.path.end());
    return result;
}

std::vector<double> dba_barycenter(const std::vector<std::vector<double>>& members,
                                   const std::vector<double>& init, std::size_t iterations) {
    if (members.empty() || init.empty()) throw Error(ErrorCode::EmptyInput, "dba_barycenter");
    for (const auto& member : members) {
        if (member.empty()) throw Error(ErrorCode::EmptyInput, "dba_barycenter member");
    }

    std::vector<double> center = init;
    std::vector<double> sums(center.size());
    std::vector<std::size_t> counts(center.size());
    for (std::size_t iter = 0; iter < iterations; ++iter) {
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), std::size_t{0});
        for (const auto& member : members) {
            const auto result = dtw_distance(center, member);
            for (const auto& [ci, mj] : result.path) {
                sums[ci] += member[mj];
                counts[ci] += 1;
            }
        }
        double max_change = 0.0;
        for (std::size_t i = 0; i < center.size(); ++i) {
            const double next = sums[i] / static_cast<double>(counts[i]);
            max_change = std::max(max_change, std::abs(next - center[i]));
            center[i] = next;
        }
        if (max_change < 1e-9) break;
    }
    return center;
}

namespace {

Clustering kmeans_single_run(const std::vector<std::vector<double>>& windows, std::size_t k,
                             Rng& rng, std::size_t max_iters) {
    const std::size_t n = windows.size();

    // k-means++ with squared DTW cost weights; duplicates of already chosen
    // windows get weight zero, with a uniform fallback over unchosen indices
    std::vector<std::size_t> chosen;
    std::vector<char> is_chosen(n, 0);
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    chosen.push_back(rng.uniform_index(n));
    is_chosen[chosen.back()] = 1;
    while (chosen.size() < k) {
        double total = 0.0;
        std::vector<double> weights(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], path_cost(windows, i, windows[chosen.back()]));
            if (!is_chosen[i]) {
                weights[i] = nearest[i] * nearest[i];
                total += weights[i];
            }
        }
        std::size_t pick = n;
        if (total > 0.0) {
            pick = rng.discrete(weights);
        } else {
            std::size_t remaining = 0;
            for (std::size_t i = 0; i < n; ++i) remaining += !is_chosen[i];
            std::size_t offset = rng.uniform_index(remaining);
            for (std::size_t i = 0; i < n; ++i) {
                if (is_chosen[i]) continue;
                if (offset == 0) {
                    pick = i;
                    break;
                }
                --offset;
            }
        }
        chosen.push_back(pick);
        is_chosen[pick] = 1;
    }

    Clustering result;
    result.k = k;
    for (std::size_t c : chosen) result.centers.push_back(windows[c]);
    result.assignment.assign(n, 0);

    std::vector<double> cluster_cost(k, 0.0);
    const auto assign_all = [&]() {
        bool changed = false;
        std::fill(cluster_cost.begin(), cluster_cost.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_cost = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double cost = path_cost(windows, i, result.centers[c]);
                if (cost < best_cost) {
                    best_cost = cost;
                    best = c;
                }
            }
            if (result.assignment[i] != best) changed = true;
            result.assignment[i] = best;
            cluster_cost[best] += best_cost;
        }
        return changed;
    };

    assign_all();
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<std::vector<double>> members;
            for (std::size_t i = 0; i < n; ++i) {
                if (result.assignment[i] == c) members.push_back(windows[i]);
            }
            if (members.empty()) continue;
            auto candidate = dba_barycenter(members, result.centers[c], 10);
            double new_cost = 0.0;
            for (const auto& member : members) new_cost += dtw_distance(member, candidate).cost;
            if (new_cost <= cluster_cost[c]) {
                result.centers[c] = std::move(candidate);
                cluster_cost[c] = new_cost;
            }
        }
        if (!assign_all()) break;
    }

    result.inertia = 0.0;
    for (double c : cluster_cost) result.inertia += c;
    return result;
}

}  // namespace

Clustering dtw_kmeans(const std::vector<std::vector<double>>& windows, std::size_t k,
                      std::uint64_t seed, std::size_t max_iters) {
    const std::size_t n = windows.size();
    if (k == 0) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
    if (n < k) {
        throw Error(ErrorCode::TooFewWindows,
                    std::to_string(n) + " windows for k = " + std::to_string(k));
    }

    constexpr std::size_t restarts = 6;
    Clustering best;
    for (std::size_t r = 0; r < restarts; ++r) {
        Rng rng(mix_seed(mix_seed(seed, 3), r));
        auto run = kmeans_single_run(windows, k, rng, max_iters);
        if (r == 0 || run.inertia < best.inertia) best = std::move(run);
    }
    return best;
}

std::vector<std::size_t> dtw_ball_filter(const std::vector<std::vector<double>>& windows,
                                         const std::vector<double>& center, double radius) {
    if (radius < 0.0) throw Error(ErrorCode::InvalidConfig, "radius must be >= 0");
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (dtw_distance(windows[i], center).cost <= radius) kept.push_back(i);
    }
    return kept;
}

void save_clustering(const Clustering& clustering, const std::string& path,
                     const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "k " << clustering.k << "\n";
    out << "inertia " << format_full(clustering.inertia) << "\n";
    for (std::size_t c = 0; c < clustering.centers.size(); ++c) {
        out << "center " << c << " " << clustering.centers[c].size();
        for (double v : clustering.centers[c]) out << " " << format_full(v);
        out << "\n";
    }
    for (std::size_t i = 0; i < clustering.assignment.size(); ++i) {
        out << "window " << i << " " << clustering.assignment[i] << "\n";
    }
}

Clustering load_clustering(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    Clustering clustering;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "k") {
            ss >> clustering.k;
        } else if (key == "inertia") {
            ss >> clustering.inertia;
        } else if (key == "center") {
            std::size_t idx = 0, len = 0;
            ss >> idx >> len;
            std::vector<double> values(len);
            for (auto& v : values) ss >> v;
            if (!ss) throw Error(ErrorCode::IoError, "malformed center line: " + line);
            clustering.centers.push_back(std::move(values));
        } else if (key == "window") {
            std::size_t idx = 0, cluster = 0;
            if (!(ss >> idx >> cluster)) {
                throw Error(ErrorCode::IoError, "malformed window line: " + line);
            }
            if (idx != clustering.assignment.size()) {
                throw Error(ErrorCode::IoError, "window lines out of order in " + path);
            }
            clustering.assignment.push_back(cluster);
        } else {
            throw Error(ErrorCode::IoError, "unexpected clustering line: " + line);
        }
    }
    if (clustering.centers.size() != clustering.k) {
        throw Error(ErrorCode::IoError, "truncated clustering file " + path);
    }
    return clustering;
}

}  // namespace vsense::dtw
