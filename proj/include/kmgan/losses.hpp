#pragma once

#include "kmgan/kmeans.hpp"
#include "kmgan/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace kmgan {

/// How batch norms and pair sums are reduced.
///   mean: mean of per-sample distances; pair sums divided by their pair count.
///   sum:  literal sums.
enum class Reduction { mean, sum };

/// b x d matrix whose row i is the real center that sample i was assigned to.
struct CenterTargets {
    Matrix rows;
};

struct LossReport {
    double l_d = 0.0;
    double l_g = 0.0;
    double l_center = 0.0;
    double l_intra = 0.0;
    double l_inter = 0.0;
    bool applied_center_step = false;
};

CenterTargets build_center_targets(const Assignment& assignment, const Centroids& real_centroids);

/// Sum over centers of the smoothed update (c_m + sum of assigned features) / (1 + j_m).
/// Differentiable in `features`; the centers themselves are constants.
Tensor smoothed_center_sum(const Centroids& centroids, const Tensor& features,
                           const Assignment& assignment);

/// L1 distance between the smoothed center sums of the real and fake sides.
Tensor center_loss(const Centroids& real_centroids, const Centroids& fake_centroids,
                   const Tensor& real_features, const Tensor& fake_features,
                   const Assignment& real_assignment, const Assignment& fake_assignment);

/// Reduced Euclidean distance of each row to its target row.
Tensor target_distance(const Tensor& features, const Tensor& targets, Reduction reduction);
Tensor target_distance(const Tensor& features, const CenterTargets& targets, Reduction reduction);

/// Pairwise L1 within each batch (real pairs + fake pairs).
Tensor intra_loss(const Tensor& real_features, const Tensor& fake_features, Reduction reduction);
/// Pairwise L1 across the two batches.
Tensor inter_loss(const Tensor& real_features, const Tensor& fake_features, Reduction reduction);

/// Both whole-batch regularisers, passed to the generalised losses.
struct Regularizers {
    Tensor intra;
    Tensor inter;
};

/// Real-to-center distance minus fake-to-center distance; with `reg`, adds
/// lambda * (intra - inter).
Tensor d_loss(const Tensor& real_features, const CenterTargets& c_real, const Tensor& fake_features,
              const CenterTargets& c_gen, Reduction reduction, double lambda = 0.0,
              const std::optional<Regularizers>& reg = std::nullopt);

/// Fake-to-center distance; with `reg`, adds lambda * inter.
Tensor g_loss(const Tensor& fake_features, const CenterTargets& c_gen, Reduction reduction,
              double lambda = 0.0, const std::optional<Regularizers>& reg = std::nullopt);

enum class GeneratorObjective {
    non_saturating,  // -E log D(G(z))
    saturating,      //  E log(1 - D(G(z)))
};

struct VanillaLosses {
    Tensor d;
    Tensor g;
};

inline constexpr double kProbabilityFloor = 1e-7;

/// Standard GAN losses on discriminator probabilities (n x 1 each). The D loss
/// is -E log D(x) - E log(1 - D(G(z))).
VanillaLosses vanilla_gan_losses(const Tensor& d_prob_real, const Tensor& d_prob_fake,
                                 GeneratorObjective objective = GeneratorObjective::non_saturating);

/// One CSV row per iteration.
std::string loss_csv_header();
std::string loss_csv_row(std::uint64_t iteration, const LossReport& report);

}  // namespace kmgan
