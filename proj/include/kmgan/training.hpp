#pragma once

#include "kmgan/adam.hpp"
#include "kmgan/checkpoint.hpp"
#include "kmgan/datasets.hpp"
#include "kmgan/kmeans.hpp"
#include "kmgan/losses.hpp"
#include "kmgan/mlp.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace kmgan {

enum class TrainMode {
    regular,  // K-Means on discriminator features, three-step alternation
    reduced,  // K-Means on raw pixels, centers mapped through D
    vanilla,  // cross-entropy GAN baseline
};

/// basic: L_D / L_G as center distances only.
/// generalized: adds lambda-weighted L_intra / L_inter terms to the graph.
enum class LossForm { basic, generalized };

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t classes = 4;
    std::uint64_t iterations = 1000;
    AdamConfig adam;
    double d_round = 0.0;
    double lambda = 0.0;
    std::optional<double> clip_bound;
    std::size_t noise_dim = 100;
    std::uint64_t seed = 1;
    TrainMode mode = TrainMode::regular;
    CenterUpdateRule center_update_rule = CenterUpdateRule::smoothed;
    Reduction norm_reduction = Reduction::mean;
    LossForm loss_form = LossForm::basic;
    GeneratorObjective vanilla_objective = GeneratorObjective::non_saturating;
    double init_std = 0.02;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// Network shapes for one run. The discriminator's first `feature_layers`
/// layers produce the feature vector; in vanilla mode the remaining layers
/// form the probability head.
struct Architecture {
    MlpSpec discriminator;
    MlpSpec generator;
    std::size_t feature_layers = 0;
};

/// Dense networks for the 100-D synthetic data. Vanilla mode appends
/// Dense(2, 1) + Sigmoid to the discriminator.
Architecture synthetic_architecture(TrainMode mode, std::size_t noise_dim = 100);

/// Dense networks for 28x28 images.
Architecture image_architecture(TrainMode mode, std::size_t pixels = 784, std::size_t noise_dim = 100,
                                std::size_t feature_dim = 16);

/// Endless stream of shuffled-without-replacement indices.
class BatchSampler {
public:
    BatchSampler() = default;
    BatchSampler(std::size_t n, Rng& rng);
    std::vector<std::size_t> next(std::size_t batch, Rng& rng);
    std::uint64_t epochs_started() const { return epochs_; }

private:
    void reshuffle(Rng& rng);
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::uint64_t epochs_ = 0;
};

struct TrainState {
    TrainConfig config;
    Network discriminator;
    Network generator;
    std::size_t feature_layers = 0;
    AdamState adam_d;
    AdamState adam_g;
    Centroids real_centers;  // feature space (regular) or pixel space (reduced)
    Centroids fake_centers;  // regular mode only
    std::uint64_t iteration = 0;
    Rng rng;
    BatchSampler sampler;
    std::vector<std::string> warnings;
};

enum class StepPhase {
    assign_labels,
    discriminator_update,
    generator_update,
    center_loss_update,
    clip,
    centers_update,
};

using StepObserver = std::function<void(StepPhase)>;

TrainState init_training(const TrainConfig& config, const LabeledDataset& dataset,
                         const Architecture& arch);

LossReport train_step_regular(TrainState& state, const Matrix& real_batch, const Matrix& noise_batch,
                              const StepObserver& observer = {});
LossReport train_step_reduced(TrainState& state, const Matrix& real_batch, const Matrix& noise_batch,
                              const StepObserver& observer = {});
LossReport train_step_vanilla(TrainState& state, const Matrix& real_batch, const Matrix& noise_batch,
                              const StepObserver& observer = {});
/// Dispatches on config.mode.
LossReport train_step(TrainState& state, const Matrix& real_batch, const Matrix& noise_batch,
                      const StepObserver& observer = {});

/// Next real batch and noise batch drawn from the state's generator.
Matrix next_real_batch(TrainState& state, const LabeledDataset& dataset);
Matrix sample_noise(Rng& rng, std::size_t rows, std::size_t noise_dim);

/// Eval-mode discriminator features.
Matrix extract_features(const Network& discriminator, std::size_t feature_layers, const Matrix& x);
/// Eval-mode generator output.
Matrix generate(const Network& generator, const Matrix& noise);

std::uint64_t iterations_per_epoch(std::size_t dataset_size, std::size_t batch_size);

struct RunOptions {
    std::optional<std::filesystem::path> out_dir;
    std::uint64_t snapshot_every_epochs = 10;
    std::size_t snapshot_samples = 64;
    std::function<void(std::uint64_t, const LossReport&, const TrainState&)> on_step;
};

/// T iterations of the configured mode. Artifacts (when out_dir is set):
/// losses.csv, features_epoch{E}.csv, samples_epoch{E}.csv, centers_epoch{E}.csv,
/// final.ckpt.
TrainState run_training(const TrainConfig& config, const LabeledDataset& dataset,
                        const Architecture& arch, const RunOptions& options = {});

Archive to_archive(const TrainState& state);
/// Networks, optimizer states and centers; the RNG/sampler are not restored.
TrainState from_archive(const Archive& archive);

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& s);

}  // namespace kmgan
