#include "kmgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace kmgan {

ProbTable::ProbTable(Matrix probs) : probs_(std::move(probs)) {
    if (probs_.rows() == 0 || probs_.cols() == 0) throw std::invalid_argument("ProbTable: empty table");
    require_finite(probs_, "ProbTable");
    if (probs_.minCoeff() < 0.0) throw std::invalid_argument("ProbTable: negative probability");
    for (Eigen::Index i = 0; i < probs_.rows(); ++i)
        if (std::abs(probs_.row(i).sum() - 1.0) > 1e-9)
            throw std::invalid_argument("ProbTable: row " + std::to_string(i) + " does not sum to 1");
}

namespace {

void check_pair(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("label vectors differ in length");
    if (a.empty()) throw std::invalid_argument("label vectors are empty");
}

std::map<std::pair<std::size_t, std::size_t>, double> contingency(const std::vector<std::size_t>& a,
                                                                  const std::vector<std::size_t>& b) {
    std::map<std::pair<std::size_t, std::size_t>, double> table;
    for (std::size_t i = 0; i < a.size(); ++i) table[{a[i], b[i]}] += 1.0;
    return table;
}

std::map<std::size_t, double> histogram(const std::vector<std::size_t>& a) {
    std::map<std::size_t, double> h;
    for (auto v : a) h[v] += 1.0;
    return h;
}

double entropy_of(const std::map<std::size_t, double>& h, double n) {
    double e = 0.0;
    for (const auto& [_, c] : h) {
        const double p = c / n;
        if (p > 0) e -= p * std::log(p);
    }
    return e;
}

}  // namespace

double purity(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth) {
    check_pair(pred, truth);
    std::map<std::size_t, double> best;
    for (const auto& [key, count] : contingency(pred, truth)) best[key.first] = std::max(best[key.first], count);
    double total = 0.0;
    for (const auto& [_, c] : best) total += c;
    return total / static_cast<double>(pred.size());
}

double nmi(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth) {
    check_pair(pred, truth);
    const double n = static_cast<double>(pred.size());
    const auto hp = histogram(pred);
    const auto ht = histogram(truth);
    double mi = 0.0;
    for (const auto& [key, c] : contingency(pred, truth)) {
        const double pxy = c / n;
        mi += pxy * std::log(pxy / ((hp.at(key.first) / n) * (ht.at(key.second) / n)));
    }
    const double denom = 0.5 * (entropy_of(hp, n) + entropy_of(ht, n));
    if (denom <= 0.0) return 1.0;  // both labelings constant: identical partitions
    return std::clamp(mi / denom, 0.0, 1.0);
}

InceptionScore inception_score(const ProbTable& table, std::size_t splits) {
    const Matrix& p = table.probs();
    const auto n = static_cast<std::size_t>(p.rows());
    if (splits == 0) throw std::invalid_argument("inception_score: splits must be positive");
    if (n < splits) throw std::invalid_argument("inception_score: fewer samples than splits");
    if (n < 2 * splits) throw std::invalid_argument("inception_score: every split needs at least 2 samples");
    std::vector<double> scores;
    for (std::size_t s = 0; s < splits; ++s) {
        const std::size_t begin = s * n / splits;
        const std::size_t end = (s + 1) * n / splits;
        const auto block = p.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
        const RowVector marginal = block.colwise().mean().cwiseMax(kKlFloor);
        const RowVector log_marginal = marginal.array().log().matrix();
        double kl_total = 0.0;
        for (Eigen::Index i = 0; i < block.rows(); ++i) {
            for (Eigen::Index c = 0; c < block.cols(); ++c) {
                const double q = block(i, c);
                if (q <= 0.0) continue;
                kl_total += q * (std::log(std::max(q, kKlFloor)) - log_marginal(c));
            }
        }
        scores.push_back(std::exp(kl_total / static_cast<double>(block.rows())));
    }
    double mean = 0.0;
    for (double v : scores) mean += v;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double v : scores) var += (v - mean) * (v - mean);
    var /= static_cast<double>(scores.size());
    return {mean, std::sqrt(var)};
}

double FrequencyReport::entropy() const {
    double e = 0.0;
    for (double f : fractions)
        if (f > 0) e -= f * std::log(f);
    return e;
}

std::string FrequencyReport::summary() const {
    std::ostringstream os;
    os << "samples: " << total << "\n";
    for (std::size_t c = 0; c < counts.size(); ++c)
        os << "class " << c << ": " << counts[c] << " (" << 100.0 * fractions[c] << "%)\n";
    os << "entropy: " << entropy() << " nats (max " << std::log(static_cast<double>(counts.size())) << ")\n";
    return os.str();
}

FrequencyReport class_frequencies(const ProbTable& table) {
    const Matrix& p = table.probs();
    FrequencyReport r;
    r.counts.assign(static_cast<std::size_t>(p.cols()), 0);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < p.cols(); ++c)
            if (p(i, c) > p(i, best)) best = c;
        ++r.counts[static_cast<std::size_t>(best)];
    }
    r.total = static_cast<std::size_t>(p.rows());
    for (auto c : r.counts) r.fractions.push_back(static_cast<double>(c) / static_cast<double>(r.total));
    return r;
}

}  // namespace kmgan
