#include "kmgan/losses.hpp"

#include "kmgan/csv.hpp"

#include <stdexcept>

namespace kmgan {

CenterTargets build_center_targets(const Assignment& assignment, const Centroids& real_centroids) {
    CenterTargets t;
    t.rows.resize(static_cast<Eigen::Index>(assignment.labels.size()), real_centroids.centers.cols());
    for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
        const std::size_t m = assignment.labels[i];
        if (m >= real_centroids.k())
            throw std::out_of_range("build_center_targets: label " + std::to_string(m) + " out of range");
        t.rows.row(static_cast<Eigen::Index>(i)) = real_centroids.centers.row(static_cast<Eigen::Index>(m));
    }
    return t;
}

Tensor smoothed_center_sum(const Centroids& centroids, const Tensor& features,
                           const Assignment& assignment) {
    const auto k = static_cast<Eigen::Index>(centroids.k());
    if (assignment.k() != centroids.k() ||
        static_cast<Eigen::Index>(assignment.labels.size()) != features.rows() ||
        static_cast<std::size_t>(features.cols()) != centroids.dim())
        throw ShapeError("smoothed_center_sum: inconsistent sizes");
    Matrix membership = Matrix::Zero(k, features.rows());
    ColVector inv_count(k);
    for (Eigen::Index m = 0; m < k; ++m) {
        for (auto i : assignment.members[static_cast<std::size_t>(m)])
            membership(m, static_cast<Eigen::Index>(i)) = 1.0;
        inv_count(m) = 1.0 / (1.0 + static_cast<double>(assignment.count(static_cast<std::size_t>(m))));
    }
    Tensor sums = matmul(Tensor(std::move(membership)), features);
    Tensor updated = scale_rows(add(sums, Tensor(centroids.centers)), inv_count);
    return sum_rows(updated);
}

Tensor center_loss(const Centroids& real_centroids, const Centroids& fake_centroids,
                   const Tensor& real_features, const Tensor& fake_features,
                   const Assignment& real_assignment, const Assignment& fake_assignment) {
    if (real_centroids.k() != fake_centroids.k())
        throw std::invalid_argument("center_loss: real and fake center sets differ in k");
    Tensor real_sum = smoothed_center_sum(real_centroids, real_features, real_assignment);
    Tensor fake_sum = smoothed_center_sum(fake_centroids, fake_features, fake_assignment);
    return sum(abs(sub(real_sum, fake_sum)));
}

Tensor target_distance(const Tensor& features, const Tensor& targets, Reduction reduction) {
    if (features.rows() != targets.rows() || features.cols() != targets.cols())
        throw ShapeError("target_distance: features and targets differ in shape");
    Tensor norms = row_norms(sub(features, targets));
    return reduction == Reduction::mean ? mean(norms) : sum(norms);
}

Tensor target_distance(const Tensor& features, const CenterTargets& targets, Reduction reduction) {
    return target_distance(features, Tensor(targets.rows), reduction);
}

Tensor intra_loss(const Tensor& real_features, const Tensor& fake_features, Reduction reduction) {
    if (real_features.rows() == 0 || fake_features.rows() == 0)
        throw std::invalid_argument("intra_loss: empty batch");
    Tensor real_part = pairwise_l1_within(real_features);
    Tensor fake_part = pairwise_l1_within(fake_features);
    if (reduction == Reduction::mean) {
        const auto pairs = [](Eigen::Index n) { return static_cast<double>(n * (n - 1) / 2); };
        const double pr = pairs(real_features.rows());
        const double pf = pairs(fake_features.rows());
        real_part = pr > 0 ? scale(real_part, 1.0 / pr) : scale(real_part, 0.0);
        fake_part = pf > 0 ? scale(fake_part, 1.0 / pf) : scale(fake_part, 0.0);
    }
    return add(real_part, fake_part);
}

Tensor inter_loss(const Tensor& real_features, const Tensor& fake_features, Reduction reduction) {
    if (real_features.rows() == 0 || fake_features.rows() == 0)
        throw std::invalid_argument("inter_loss: empty batch");
    Tensor total = pairwise_l1_cross(real_features, fake_features);
    if (reduction == Reduction::mean)
        total = scale(total, 1.0 / static_cast<double>(real_features.rows() * fake_features.rows()));
    return total;
}

Tensor d_loss(const Tensor& real_features, const CenterTargets& c_real, const Tensor& fake_features,
              const CenterTargets& c_gen, Reduction reduction, double lambda,
              const std::optional<Regularizers>& reg) {
    if (lambda < 0.0) throw std::invalid_argument("d_loss: lambda must be non-negative");
    if (lambda != 0.0 && !reg) throw std::invalid_argument("d_loss: lambda > 0 needs regularizers");
    Tensor base = sub(target_distance(real_features, c_real, reduction),
                      target_distance(fake_features, c_gen, reduction));
    if (!reg) return base;
    return add(base, scale(sub(reg->intra, reg->inter), lambda));
}

Tensor g_loss(const Tensor& fake_features, const CenterTargets& c_gen, Reduction reduction,
              double lambda, const std::optional<Regularizers>& reg) {
    if (lambda < 0.0) throw std::invalid_argument("g_loss: lambda must be non-negative");
    if (lambda != 0.0 && !reg) throw std::invalid_argument("g_loss: lambda > 0 needs regularizers");
    Tensor base = target_distance(fake_features, c_gen, reduction);
    if (!reg) return base;
    return add(base, scale(reg->inter, lambda));
}

VanillaLosses vanilla_gan_losses(const Tensor& d_prob_real, const Tensor& d_prob_fake,
                                 GeneratorObjective objective) {
    for (const Tensor* t : {&d_prob_real, &d_prob_fake}) {
        const Matrix& v = t->value();
        if (v.size() == 0) throw std::invalid_argument("vanilla_gan_losses: empty batch");
        if (v.minCoeff() < 0.0 || v.maxCoeff() > 1.0)
            throw std::domain_error("vanilla_gan_losses: probability outside [0, 1]");
    }
    const double lo = kProbabilityFloor;
    const double hi = 1.0 - kProbabilityFloor;
    Tensor real = clamp(d_prob_real, lo, hi);
    Tensor fake = clamp(d_prob_fake, lo, hi);
    Tensor one_minus_fake = add_scalar(scale(fake, -1.0), 1.0);

    Tensor d = scale(add(mean(log(real)), mean(log(one_minus_fake))), -1.0);
    Tensor g = objective == GeneratorObjective::non_saturating ? scale(mean(log(fake)), -1.0)
                                                               : mean(log(one_minus_fake));
    return {d, g};
}

std::string loss_csv_header() { return "iter,l_d,l_g,l_center,l_intra,l_inter,applied_center_step"; }

std::string loss_csv_row(std::uint64_t iteration, const LossReport& r) {
    return std::to_string(iteration) + "," + format_double(r.l_d) + "," + format_double(r.l_g) + "," +
           format_double(r.l_center) + "," + format_double(r.l_intra) + "," + format_double(r.l_inter) +
           "," + (r.applied_center_step ? "1" : "0");
}

}  // namespace kmgan
