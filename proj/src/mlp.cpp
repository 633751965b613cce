#include "kmgan/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace kmgan {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string layer_key(std::size_t index, const char* field) {
    return std::to_string(index) + "." + field;
}

}  // namespace

MlpSpec::MlpSpec(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("MlpSpec needs at least one layer");
    std::size_t current = 0;
    bool known = false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        std::visit(overloaded{
                       [&](const Dense& d) {
                           if (d.in_dim == 0 || d.out_dim == 0)
                               throw std::invalid_argument("Dense layer with zero width");
                           if (known && d.in_dim != current) {
                               std::ostringstream os;
                               os << "layer " << i << ": Dense in_dim " << d.in_dim
                                  << " does not chain with width " << current;
                               throw std::invalid_argument(os.str());
                           }
                           if (!known) input_dim_ = d.in_dim;
                           current = d.out_dim;
                           known = true;
                       },
                       [&](const BatchNorm& b) {
                           if (b.dim == 0) throw std::invalid_argument("BatchNorm with zero width");
                           if (known && b.dim != current) {
                               std::ostringstream os;
                               os << "layer " << i << ": BatchNorm dim " << b.dim
                                  << " does not match width " << current;
                               throw std::invalid_argument(os.str());
                           }
                           if (!known) input_dim_ = b.dim;
                           current = b.dim;
                           known = true;
                       },
                       [&](const Activation&) {},
                   },
                   layers_[i]);
    }
    if (!known) throw std::invalid_argument("MlpSpec has no layer with a known width");
    output_dim_ = current;
}

std::size_t MlpSpec::dim_after(std::size_t count) const {
    std::size_t dim = input_dim_;
    for (std::size_t i = 0; i < std::min(count, layers_.size()); ++i)
        if (auto* d = std::get_if<Dense>(&layers_[i])) dim = d->out_dim;
    return dim;
}

bool MlpSpec::has_batch_norm() const {
    return std::any_of(layers_.begin(), layers_.end(),
                       [](const Layer& l) { return std::holds_alternative<BatchNorm>(l); });
}

Matrix MlpSpec::encode() const {
    Matrix rows = Matrix::Zero(static_cast<Eigen::Index>(layers_.size()), 4);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        auto r = static_cast<Eigen::Index>(i);
        std::visit(overloaded{
                       [&](const Dense& d) {
                           rows.row(r) << 0, static_cast<double>(d.in_dim),
                               static_cast<double>(d.out_dim), 0;
                       },
                       [&](const BatchNorm& b) {
                           rows.row(r) << 1, static_cast<double>(b.dim), b.epsilon, b.momentum;
                       },
                       [&](const Activation& a) {
                           rows.row(r) << 2, static_cast<double>(a.kind), 0, 0;
                       },
                   },
                   layers_[i]);
    }
    return rows;
}

MlpSpec MlpSpec::decode(const Matrix& rows) {
    if (rows.cols() != 4) throw std::invalid_argument("encoded MlpSpec must have 4 columns");
    std::vector<Layer> layers;
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        const int kind = static_cast<int>(rows(r, 0));
        switch (kind) {
            case 0:
                layers.emplace_back(Dense{static_cast<std::size_t>(rows(r, 1)),
                                          static_cast<std::size_t>(rows(r, 2))});
                break;
            case 1:
                layers.emplace_back(BatchNorm{static_cast<std::size_t>(rows(r, 1)), rows(r, 2), rows(r, 3)});
                break;
            case 2: {
                const int act = static_cast<int>(rows(r, 1));
                if (act < 0 || act > 2) throw std::invalid_argument("unknown activation code");
                layers.emplace_back(Activation{static_cast<ActivationKind>(act)});
                break;
            }
            default:
                throw std::invalid_argument("unknown layer code " + std::to_string(kind));
        }
    }
    return MlpSpec(std::move(layers));
}

bool MlpSpec::operator==(const MlpSpec& other) const { return encode() == other.encode(); }

ParamSet::ParamSet(const ParamSet& other) : step(other.step) {
    entries_.reserve(other.entries_.size());
    for (const auto& p : other.entries_)
        entries_.push_back({p.name, Tensor(p.tensor.value(), p.tensor.requires_grad()), p.trainable});
}

ParamSet& ParamSet::operator=(const ParamSet& other) {
    if (this != &other) {
        ParamSet copy(other);
        *this = std::move(copy);
    }
    return *this;
}

void ParamSet::add(std::string name, Matrix value, bool trainable) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
    entries_.push_back({std::move(name), Tensor(std::move(value), trainable), trainable});
}

Tensor& ParamSet::at(const std::string& name) {
    for (auto& p : entries_)
        if (p.name == name) return p.tensor;
    throw std::out_of_range("no parameter named " + name);
}

const Tensor& ParamSet::at(const std::string& name) const {
    for (const auto& p : entries_)
        if (p.name == name) return p.tensor;
    throw std::out_of_range("no parameter named " + name);
}

bool ParamSet::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const Parameter& p) { return p.name == name; });
}

NamedGrads ParamSet::collect(const Gradients& grads) const {
    NamedGrads out;
    for (const auto& p : entries_)
        if (p.trainable) out.emplace(p.name, grads.of(p.tensor));
    return out;
}

double ParamSet::max_abs_trainable() const {
    double m = 0.0;
    for (const auto& p : entries_)
        if (p.trainable) m = std::max(m, p.tensor.value().cwiseAbs().maxCoeff());
    return m;
}

ParamSet init_params(const MlpSpec& spec, Rng& rng, double init_std) {
    ParamSet params;
    const auto& layers = spec.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (auto* d = std::get_if<Dense>(&layers[i])) {
            Matrix w(static_cast<Eigen::Index>(d->in_dim), static_cast<Eigen::Index>(d->out_dim));
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = init_std * standard_normal(rng);
            params.add(layer_key(i, "weight"), std::move(w), true);
            params.add(layer_key(i, "bias"), Matrix::Zero(1, static_cast<Eigen::Index>(d->out_dim)), true);
        } else if (auto* b = std::get_if<BatchNorm>(&layers[i])) {
            const auto dim = static_cast<Eigen::Index>(b->dim);
            params.add(layer_key(i, "gamma"), Matrix::Ones(1, dim), true);
            params.add(layer_key(i, "beta"), Matrix::Zero(1, dim), true);
            params.add(layer_key(i, "running_mean"), Matrix::Zero(1, dim), false);
            params.add(layer_key(i, "running_var"), Matrix::Ones(1, dim), false);
        }
    }
    return params;
}

Tensor forward(const MlpSpec& spec, ParamSet& params, const Tensor& input, Mode mode,
               std::size_t layer_count, bool update_running) {
    if (static_cast<std::size_t>(input.cols()) != spec.input_dim()) {
        std::ostringstream os;
        os << "forward: input has " << input.cols() << " columns, network expects "
           << spec.input_dim();
        throw ShapeError(os.str());
    }
    const auto& layers = spec.layers();
    layer_count = std::min(layer_count, layers.size());
    Tensor x = input;
    for (std::size_t i = 0; i < layer_count; ++i) {
        std::visit(overloaded{
                       [&](const Dense&) {
                           x = add_row(matmul(x, params.at(layer_key(i, "weight"))),
                                       params.at(layer_key(i, "bias")));
                       },
                       [&](const BatchNorm& b) {
                           const Tensor& gamma = params.at(layer_key(i, "gamma"));
                           const Tensor& beta = params.at(layer_key(i, "beta"));
                           Tensor& rmean = params.at(layer_key(i, "running_mean"));
                           Tensor& rvar = params.at(layer_key(i, "running_var"));
                           if (mode == Mode::train) {
                               auto out = batch_norm_train(x, gamma, beta, b.epsilon);
                               if (!update_running) {
                                   x = out.y;
                                   return;
                               }
                               const double n = static_cast<double>(x.rows());
                               rmean.mutable_value() = b.momentum * rmean.value() +
                                                      (1.0 - b.momentum) * out.batch_mean;
                               rvar.mutable_value() = b.momentum * rvar.value() +
                                                     (1.0 - b.momentum) * (n / (n - 1.0)) * out.batch_var;
                               x = out.y;
                           } else {
                               x = batch_norm_eval(x, gamma, beta, rmean.value().row(0),
                                                   rvar.value().row(0), b.epsilon);
                           }
                       },
                       [&](const Activation& a) {
                           switch (a.kind) {
                               case ActivationKind::relu: x = relu(x); break;
                               case ActivationKind::sigmoid: x = sigmoid(x); break;
                               case ActivationKind::tanh: x = tanh(x); break;
                           }
                       },
                   },
                   layers[i]);
    }
    return x;
}

Tensor forward(const MlpSpec& spec, ParamSet& params, const Tensor& input, Mode mode) {
    return forward(spec, params, input, mode, spec.size());
}

Matrix infer(const MlpSpec& spec, const ParamSet& params, const Matrix& input,
             std::size_t layer_count) {
    if (static_cast<std::size_t>(input.cols()) != spec.input_dim()) {
        std::ostringstream os;
        os << "infer: input has " << input.cols() << " columns, network expects "
           << spec.input_dim();
        throw ShapeError(os.str());
    }
    const auto& layers = spec.layers();
    layer_count = std::min(layer_count, layers.size());
    Matrix x = input;
    for (std::size_t i = 0; i < layer_count; ++i) {
        std::visit(overloaded{
                       [&](const Dense&) {
                           Matrix y = x * params.at(layer_key(i, "weight")).value();
                           y.rowwise() += params.at(layer_key(i, "bias")).value().row(0);
                           x = std::move(y);
                       },
                       [&](const BatchNorm& b) {
                           const RowVector inv_std =
                               (params.at(layer_key(i, "running_var")).value().array() + b.epsilon)
                                   .rsqrt()
                                   .matrix();
                           const RowVector scale =
                               inv_std.cwiseProduct(params.at(layer_key(i, "gamma")).value().row(0));
                           Matrix y = (x.rowwise() - params.at(layer_key(i, "running_mean")).value().row(0)) *
                                      scale.asDiagonal();
                           y.rowwise() += params.at(layer_key(i, "beta")).value().row(0);
                           x = std::move(y);
                       },
                       [&](const Activation& a) {
                           switch (a.kind) {
                               case ActivationKind::relu: x = x.cwiseMax(0.0); break;
                               case ActivationKind::sigmoid:
                                   x = (1.0 / (1.0 + (-x.array()).exp())).matrix();
                                   break;
                               case ActivationKind::tanh: x = x.array().tanh().matrix(); break;
                           }
                       },
                   },
                   layers[i]);
    }
    require_finite(x, "infer");
    return x;
}

Matrix infer(const MlpSpec& spec, const ParamSet& params, const Matrix& input) {
    return infer(spec, params, input, spec.size());
}

void clip_weights(ParamSet& params, double bound) {
    if (!(bound > 0.0)) throw std::invalid_argument("clip bound must be positive");
    for (auto& p : params.entries())
        if (p.trainable) p.tensor.mutable_value() = p.tensor.value().cwiseMax(-bound).cwiseMin(bound);
}

}  // namespace kmgan
