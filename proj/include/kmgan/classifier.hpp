#pragma once

#include "kmgan/adam.hpp"
#include "kmgan/datasets.hpp"
#include "kmgan/metrics.hpp"
#include "kmgan/mlp.hpp"

#include <cstdint>

namespace kmgan {

/// Dense softmax classifier used as the pluggable p(y|x) for class-frequency
/// audits and inception scores on images.
struct ClassifierConfig {
    std::size_t hidden = 256;
    std::size_t epochs = 8;
    std::size_t batch_size = 64;
    AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
    std::uint64_t seed = 11;
};

MlpSpec classifier_spec(std::size_t inputs, std::size_t hidden, std::size_t classes);

/// Trains on a labelled dataset; returns a network whose output is logits.
Network train_classifier(const LabeledDataset& train, const ClassifierConfig& config = {});

ProbTable classify(const Network& classifier, const Matrix& x);

/// Fraction of rows whose argmax matches the label.
double accuracy(const Network& classifier, const LabeledDataset& data);

}  // namespace kmgan
