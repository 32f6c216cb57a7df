#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace protoseg {

struct KMeansOptions {
    int max_iterations = 100;
    double relative_tolerance = 1e-6;
};

struct KMeansResult {
    int k = 0;    // number of centroids actually returned
    int dim = 0;
    std::vector<float> centroids;           // k * dim, row-major
    std::vector<std::int32_t> assignment;   // per input point
    std::vector<double> objective_history;  // sum of squared distances per iteration

    std::span<const float> centroid(int i) const {
        return {&centroids[static_cast<std::size_t>(i) * dim], static_cast<std::size_t>(dim)};
    }
    double objective() const {
        return objective_history.empty() ? 0.0 : objective_history.back();
    }
};

// Lloyd's algorithm with seeded k-means++ initialization over squared
// Euclidean distance. Deterministic under `seed`. Fewer points than k
// returns one singleton centroid per point. Clusters that empty out are
// re-seeded from the point farthest from its assigned centroid.
KMeansResult kmeans(std::span<const float> points, int dim, int k, std::uint64_t seed,
                    const KMeansOptions& options = {});

}  // namespace protoseg
