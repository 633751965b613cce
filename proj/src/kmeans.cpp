#include "kmgan/kmeans.hpp"

#include "kmgan/csv.hpp"

#include <algorithm>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace kmgan {

Assignment Assignment::from_labels(std::vector<std::size_t> labels, std::size_t k) {
    Assignment a;
    a.members.assign(k, {});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= k) throw std::out_of_range("label out of range");
        a.members[labels[i]].push_back(i);
    }
    a.labels = std::move(labels);
    return a;
}

Assignment assign_labels(const Matrix& features, const Centroids& centroids) {
    if (centroids.k() == 0) throw std::invalid_argument("assign_labels: no centers");
    if (features.cols() != centroids.centers.cols()) {
        std::ostringstream os;
        os << "assign_labels: feature dim " << features.cols() << " != center dim "
           << centroids.centers.cols();
        throw ShapeError(os.str());
    }
    const Eigen::Index n = features.rows();
    std::vector<std::size_t> labels(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (Eigen::Index m = 0; m < centroids.centers.rows(); ++m) {
            const double d = (features.row(i) - centroids.centers.row(m)).squaredNorm();
            if (d < best) {
                best = d;
                arg = static_cast<std::size_t>(m);
            }
        }
        labels[static_cast<std::size_t>(i)] = arg;
    }
    return Assignment::from_labels(std::move(labels), centroids.k());
}

double kmeans_objective(const Matrix& features, const Centroids& centroids,
                        const Assignment& assignment) {
    if (static_cast<Eigen::Index>(assignment.labels.size()) != features.rows() ||
        assignment.k() != centroids.k() || features.cols() != centroids.centers.cols())
        throw ShapeError("kmeans_objective: inconsistent sizes");
    double total = 0.0;
    for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
        const auto m = static_cast<Eigen::Index>(assignment.labels[i]);
        total += (features.row(static_cast<Eigen::Index>(i)) - centroids.centers.row(m)).squaredNorm();
    }
    return total;
}

Centroids kmeanspp_init(const Matrix& features, std::size_t k, Rng& rng,
                        std::vector<std::string>* warnings) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (k == 0) throw std::invalid_argument("kmeanspp_init: k must be at least 1");
    if (k > n) throw std::invalid_argument("kmeanspp_init: k exceeds the number of samples");

    Matrix centers(static_cast<Eigen::Index>(k), features.cols());
    const std::size_t first = uniform_index(rng, n);
    centers.row(0) = features.row(static_cast<Eigen::Index>(first));

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i)
        d2[i] = (features.row(static_cast<Eigen::Index>(i)) - centers.row(0)).squaredNorm();

    bool warned = false;
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick = first;
        if (total > 0.0) {
            const double u = uniform01(rng) * total;
            double acc = 0.0;
            pick = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (d2[i] <= 0.0) continue;
                acc += d2[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) {  // rounding at the upper end
                for (std::size_t i = n; i-- > 0;)
                    if (d2[i] > 0.0) {
                        pick = i;
                        break;
                    }
            }
        } else if (!warned) {
            warned = true;
            if (warnings)
                warnings->push_back("kmeanspp_init: all remaining points coincide with chosen centers; "
                                    "duplicating center " + std::to_string(first));
        }
        centers.row(static_cast<Eigen::Index>(c)) = features.row(static_cast<Eigen::Index>(pick));
        for (std::size_t i = 0; i < n; ++i) {
            const double d = (features.row(static_cast<Eigen::Index>(i)) -
                              centers.row(static_cast<Eigen::Index>(c)))
                                 .squaredNorm();
            if (d < d2[i]) d2[i] = d;
        }
    }
    return Centroids(std::move(centers));
}

Centroids update_centers_minibatch(const Centroids& centroids, const Matrix& features,
                                   const Assignment& assignment, CenterUpdateRule rule) {
    if (static_cast<Eigen::Index>(assignment.labels.size()) != features.rows() ||
        assignment.k() != centroids.k() || features.cols() != centroids.centers.cols())
        throw ShapeError("update_centers_minibatch: inconsistent sizes");
    Centroids out = centroids;
    for (std::size_t m = 0; m < centroids.k(); ++m) {
        const auto& members = assignment.members[m];
        if (members.empty()) continue;
        RowVector acc = RowVector::Zero(features.cols());
        for (auto i : members) acc += features.row(static_cast<Eigen::Index>(i));
        const auto row = static_cast<Eigen::Index>(m);
        const double j = static_cast<double>(members.size());
        if (rule == CenterUpdateRule::smoothed)
            out.centers.row(row) = (centroids.centers.row(row) + acc) / (1.0 + j);
        else
            out.centers.row(row) = acc / j;
        out.counts[m] += static_cast<std::int64_t>(members.size());
    }
    return out;
}

LloydResult lloyd_full(const Matrix& features, std::size_t k, Rng& rng, std::size_t max_iters,
                       double tol) {
    if (static_cast<std::size_t>(features.rows()) < k)
        throw std::invalid_argument("lloyd_full: fewer samples than clusters");
    LloydResult res;
    res.centroids = kmeanspp_init(features, k, rng);
    res.assignment = assign_labels(features, res.centroids);
    res.objective_history.push_back(kmeans_objective(features, res.centroids, res.assignment));

    for (std::size_t it = 0; it < max_iters; ++it) {
        Matrix next = res.centroids.centers;
        std::vector<std::size_t> empty;
        for (std::size_t m = 0; m < k; ++m) {
            const auto& members = res.assignment.members[m];
            if (members.empty()) {
                empty.push_back(m);
                continue;
            }
            RowVector acc = RowVector::Zero(features.cols());
            for (auto i : members) acc += features.row(static_cast<Eigen::Index>(i));
            next.row(static_cast<Eigen::Index>(m)) = acc / static_cast<double>(members.size());
        }
        if (!empty.empty()) {
            // Each empty cluster takes the sample farthest from every current center.
            std::vector<bool> live(k, true);
            for (auto m : empty) live[m] = false;
            for (auto m : empty) {
                double far = -1.0;
                std::size_t arg = 0;
                for (Eigen::Index i = 0; i < features.rows(); ++i) {
                    double nearest = std::numeric_limits<double>::infinity();
                    for (std::size_t c = 0; c < k; ++c)
                        if (live[c])
                            nearest = std::min(nearest,
                                               (features.row(i) - next.row(static_cast<Eigen::Index>(c))).squaredNorm());
                    if (nearest > far) {
                        far = nearest;
                        arg = static_cast<std::size_t>(i);
                    }
                }
                next.row(static_cast<Eigen::Index>(m)) = features.row(static_cast<Eigen::Index>(arg));
                live[m] = true;
            }
        }
        const double shift = (next - res.centroids.centers).norm();
        res.centroids.centers = std::move(next);
        res.assignment = assign_labels(features, res.centroids);
        res.objective_history.push_back(kmeans_objective(features, res.centroids, res.assignment));
        res.iterations = it + 1;
        if (shift < tol) break;
    }
    for (std::size_t m = 0; m < k; ++m)
        res.centroids.counts[m] = static_cast<std::int64_t>(res.assignment.count(m));
    return res;
}

void write_centers_csv(const std::filesystem::path& path, const Centroids& centroids) {
    std::vector<std::string> header{"center_id"};
    for (std::size_t c = 0; c < centroids.dim(); ++c) header.push_back("f" + std::to_string(c));
    CsvTable table(header);
    for (std::size_t m = 0; m < centroids.k(); ++m) {
        std::vector<double> row{static_cast<double>(m)};
        for (std::size_t c = 0; c < centroids.dim(); ++c)
            row.push_back(centroids.centers(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(c)));
        table.add_row(row);
    }
    table.write(path);
}

Centroids read_centers_csv(const std::filesystem::path& path) {
    CsvTable table = CsvTable::read(path);
    const auto& header = table.header();
    if (header.empty() || header[0] != "center_id") throw std::runtime_error("centers CSV: bad header");
    Matrix centers(static_cast<Eigen::Index>(table.rows()), static_cast<Eigen::Index>(header.size() - 1));
    for (std::size_t r = 0; r < table.rows(); ++r)
        for (std::size_t c = 1; c < header.size(); ++c)
            centers(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 1)) = table.at(r, c);
    return Centroids(std::move(centers));
}

}  // namespace kmgan
