#include "protoseg/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "protoseg/common.hpp"
#include "protoseg/rng.hpp"

namespace protoseg {
namespace {

double sq_distance(const float* a, const float* b, int dim) {
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

// Picks initial centroids: first uniformly at random, each subsequent one with
// probability proportional to squared distance from the nearest chosen centroid.
std::vector<float> plus_plus_init(std::span<const float> points, int dim, int k, int n,
                                  SplitMix64& rng) {
    std::vector<float> centroids;
    centroids.reserve(static_cast<std::size_t>(k) * dim);

    auto point = [&](int i) { return points.data() + static_cast<std::size_t>(i) * dim; };

    int first = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
    centroids.insert(centroids.end(), point(first), point(first) + dim);

    std::vector<double> best(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) best[i] = sq_distance(point(i), centroids.data(), dim);

    while (static_cast<int>(centroids.size()) / dim < k) {
        double total = 0.0;
        for (double d : best) total += d;
        int chosen;
        if (total <= 0.0) {
            // All points coincide with existing centroids; any pick works.
            chosen = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
        } else {
            double target = rng.next_double() * total;
            double run = 0.0;
            chosen = n - 1;
            for (int i = 0; i < n; ++i) {
                run += best[i];
                if (run >= target) {
                    chosen = i;
                    break;
                }
            }
        }
        const float* c = point(chosen);
        centroids.insert(centroids.end(), c, c + dim);
        for (int i = 0; i < n; ++i) {
            best[i] = std::min(best[i], sq_distance(point(i), c, dim));
        }
    }
    return centroids;
}

}  // namespace

KMeansResult kmeans(std::span<const float> points, int dim, int k, std::uint64_t seed,
                    const KMeansOptions& options) {
    require(dim > 0, "kmeans: dim must be positive");
    require(k > 0, "kmeans: k must be positive");
    require(points.size() % static_cast<std::size_t>(dim) == 0,
            "kmeans: point buffer size is not a multiple of dim");
    const int n = static_cast<int>(points.size() / static_cast<std::size_t>(dim));
    require(n > 0, "kmeans: need at least one point");

    auto point = [&](int i) { return points.data() + static_cast<std::size_t>(i) * dim; };

    KMeansResult result;
    result.dim = dim;

    if (n <= k) {
        // One singleton centroid per point.
        result.k = n;
        result.centroids.assign(points.begin(), points.end());
        result.assignment.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) result.assignment[i] = i;
        result.objective_history.push_back(0.0);
        return result;
    }

    SplitMix64 rng(seed);
    result.k = k;
    result.centroids = plus_plus_init(points, dim, k, n, rng);
    result.assignment.assign(static_cast<std::size_t>(n), 0);

    std::vector<double> sums(static_cast<std::size_t>(k) * dim);
    std::vector<int> counts(static_cast<std::size_t>(k));
    std::vector<double> point_dist(static_cast<std::size_t>(n));

    double previous = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        // Assignment step.
        double objective = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (int c = 0; c < k; ++c) {
                double d = sq_distance(point(i), &result.centroids[static_cast<std::size_t>(c) * dim], dim);
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            result.assignment[i] = best_c;
            point_dist[i] = best;
            objective += best;
        }
        result.objective_history.push_back(objective);

        // Update step.
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) {
            int c = result.assignment[i];
            ++counts[c];
            const float* p = point(i);
            double* s = &sums[static_cast<std::size_t>(c) * dim];
            for (int d = 0; d < dim; ++d) s[d] += p[d];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Re-seed the empty cluster from the farthest point.
                int far = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    if (point_dist[i] > far_d) {
                        far_d = point_dist[i];
                        far = i;
                    }
                }
                const float* p = point(far);
                std::copy(p, p + dim, &result.centroids[static_cast<std::size_t>(c) * dim]);
                point_dist[far] = 0.0;
                continue;
            }
            const double* s = &sums[static_cast<std::size_t>(c) * dim];
            float* out = &result.centroids[static_cast<std::size_t>(c) * dim];
            for (int d = 0; d < dim; ++d) out[d] = static_cast<float>(s[d] / counts[c]);
        }

        if (std::isfinite(previous)) {
            double denom = std::max(previous, 1e-30);
            if (std::abs(previous - objective) / denom < options.relative_tolerance) break;
        }
        previous = objective;
    }

    // Final assignment against the last centroid update so assignment and
    // centroids agree on exit.
    double objective = 0.0;
    for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_c = 0;
        for (int c = 0; c < k; ++c) {
            double d = sq_distance(point(i), &result.centroids[static_cast<std::size_t>(c) * dim], dim);
            if (d < best) {
                best = d;
                best_c = c;
            }
        }
        result.assignment[i] = best_c;
        objective += best;
    }
    result.objective_history.push_back(objective);
    return result;
}

}  // namespace protoseg
