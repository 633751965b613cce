#pragma once

#include "kmgan/tensor.hpp"

#include <string>
#include <vector>

namespace kmgan {

/// n x C table of class probabilities; rows must be non-negative and sum to 1.
class ProbTable {
public:
    explicit ProbTable(Matrix probs);
    const Matrix& probs() const { return probs_; }
    std::size_t rows() const { return static_cast<std::size_t>(probs_.rows()); }
    std::size_t classes() const { return static_cast<std::size_t>(probs_.cols()); }

private:
    Matrix probs_;
};

double purity(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth);
/// Mutual information normalised by the arithmetic mean of the two entropies.
double nmi(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth);

struct InceptionScore {
    double mean = 0.0;
    double stddev = 0.0;
};

inline constexpr double kKlFloor = 1e-12;

/// exp(mean KL(p(y|x) || p(y))) per split; mean and population stddev across splits.
InceptionScore inception_score(const ProbTable& probs, std::size_t splits = 10);

struct FrequencyReport {
    std::vector<std::size_t> counts;
    std::vector<double> fractions;
    std::size_t total = 0;

    /// Shannon entropy (nats) of the fractions.
    double entropy() const;
    std::string summary() const;
};

/// Argmax per row (ties to the smallest class) counted per class.
FrequencyReport class_frequencies(const ProbTable& probs);

}  // namespace kmgan
