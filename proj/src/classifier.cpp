#include "kmgan/classifier.hpp"

#include "kmgan/training.hpp"

#include <cmath>
#include <stdexcept>

namespace kmgan {

MlpSpec classifier_spec(std::size_t inputs, std::size_t hidden, std::size_t classes) {
    return MlpSpec({Dense{inputs, hidden}, Activation{ActivationKind::relu}, Dense{hidden, classes}});
}

Network train_classifier(const LabeledDataset& train, const ClassifierConfig& config) {
    if (!train.labels) throw std::invalid_argument("train_classifier needs labels");
    if (train.classes < 2) throw std::invalid_argument("train_classifier needs at least two classes");
    if (config.batch_size == 0 || config.epochs == 0 || config.hidden == 0)
        throw std::invalid_argument("classifier batch_size, epochs and hidden must be positive");

    Rng rng(config.seed);
    const MlpSpec spec = classifier_spec(train.dim(), config.hidden, train.classes);
    // He-style scale for the ReLU layer.
    Network net{spec, init_params(spec, rng, std::sqrt(2.0 / static_cast<double>(train.dim())))};
    AdamState adam(config.adam);
    BatchSampler sampler(train.size(), rng);
    const auto steps = config.epochs * iterations_per_epoch(train.size(), config.batch_size);

    for (std::uint64_t s = 0; s < steps; ++s) {
        const auto idx = sampler.next(config.batch_size, rng);
        Matrix x(static_cast<Eigen::Index>(idx.size()), train.features.cols());
        std::vector<std::size_t> y(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            x.row(static_cast<Eigen::Index>(i)) = train.features.row(static_cast<Eigen::Index>(idx[i]));
            y[i] = (*train.labels)[idx[i]];
        }
        Tensor loss = softmax_cross_entropy(net(Tensor(x), Mode::train), y);
        adam_step(net.params, net.params.collect(backward(loss)), adam);
    }
    return net;
}

ProbTable classify(const Network& classifier, const Matrix& x) { return ProbTable(softmax(classifier.infer(x))); }

double accuracy(const Network& classifier, const LabeledDataset& data) {
    if (!data.labels) throw std::invalid_argument("accuracy needs labels");
    if (data.size() == 0) throw std::invalid_argument("accuracy of an empty dataset");
    const Matrix logits = classifier.infer(data.features);
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best = 0;
        logits.row(i).maxCoeff(&best);
        hits += static_cast<std::size_t>(best) == (*data.labels)[static_cast<std::size_t>(i)];
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace kmgan
