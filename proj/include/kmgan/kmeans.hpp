#pragma once

#include "kmgan/rng.hpp"
#include "kmgan/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kmgan {

/// k centers stored one per row, plus the number of samples each has absorbed.
struct Centroids {
    Matrix centers;
    std::vector<std::int64_t> counts;

    Centroids() = default;
    explicit Centroids(Matrix c)
        : centers(std::move(c)), counts(static_cast<std::size_t>(centers.rows()), 0) {}

    std::size_t k() const { return static_cast<std::size_t>(centers.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(centers.cols()); }
};

/// Hard assignment of samples to centers (the one-hot labels in index form).
struct Assignment {
    std::vector<std::size_t> labels;
    /// members[m] lists the sample indices assigned to center m, ascending.
    std::vector<std::vector<std::size_t>> members;

    std::size_t count(std::size_t m) const { return members[m].size(); }
    std::size_t k() const { return members.size(); }

    static Assignment from_labels(std::vector<std::size_t> labels, std::size_t k);
};

enum class CenterUpdateRule {
    smoothed,    // (c + sum of assigned) / (1 + count)
    batch_mean,  // mean of assigned
};

/// Nearest center by Euclidean distance; ties go to the smallest index.
Assignment assign_labels(const Matrix& features, const Centroids& centroids);

/// Sum of squared distances from each sample to its assigned center.
double kmeans_objective(const Matrix& features, const Centroids& centroids,
                        const Assignment& assignment);

/// K-Means++ seeding. When every remaining point coincides with a chosen center
/// the seed point is duplicated and a note is appended to `warnings`.
Centroids kmeanspp_init(const Matrix& features, std::size_t k, Rng& rng,
                        std::vector<std::string>* warnings = nullptr);

/// Minibatch update; centers with no assigned sample are left unchanged.
Centroids update_centers_minibatch(const Centroids& centroids, const Matrix& features,
                                   const Assignment& assignment,
                                   CenterUpdateRule rule = CenterUpdateRule::smoothed);

struct LloydResult {
    Centroids centroids;
    Assignment assignment;
    /// Objective after each assignment step.
    std::vector<double> objective_history;
    std::size_t iterations = 0;
};

/// Full-batch Lloyd iterations from a K-Means++ seed. An empty cluster is
/// re-seeded at the sample farthest from its current center.
LloydResult lloyd_full(const Matrix& features, std::size_t k, Rng& rng, std::size_t max_iters = 300,
                       double tol = 1e-10);

/// CSV with header "center_id,f0,...,f{d-1}".
void write_centers_csv(const std::filesystem::path& path, const Centroids& centroids);
Centroids read_centers_csv(const std::filesystem::path& path);

}  // namespace kmgan
