#pragma once

#include "kmgan/rng.hpp"
#include "kmgan/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace kmgan {

struct Dense {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
};

struct BatchNorm {
    std::size_t dim = 0;
    double epsilon = 1e-5;
    double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
};

enum class ActivationKind { relu, sigmoid, tanh };

struct Activation {
    ActivationKind kind = ActivationKind::relu;
};

using Layer = std::variant<Dense, BatchNorm, Activation>;

/// Declarative layer list. Dimensions are validated on construction.
class MlpSpec {
public:
    MlpSpec() = default;
    explicit MlpSpec(std::vector<Layer> layers);

    const std::vector<Layer>& layers() const { return layers_; }
    std::size_t size() const { return layers_.size(); }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return output_dim_; }
    /// Output width after the first `count` layers.
    std::size_t dim_after(std::size_t count) const;
    bool has_batch_norm() const;

    /// Numeric encoding (one row per layer) used by checkpoints.
    Matrix encode() const;
    static MlpSpec decode(const Matrix& rows);

    bool operator==(const MlpSpec& other) const;

private:
    std::vector<Layer> layers_;
    std::size_t input_dim_ = 0;
    std::size_t output_dim_ = 0;
};

struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

using NamedGrads = std::map<std::string, Matrix>;

/// Ordered named parameter store. Copies are deep (no shared storage).
class ParamSet {
public:
    ParamSet() = default;
    ParamSet(const ParamSet& other);
    ParamSet& operator=(const ParamSet& other);
    ParamSet(ParamSet&&) noexcept = default;
    ParamSet& operator=(ParamSet&&) noexcept = default;

    void add(std::string name, Matrix value, bool trainable);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    const std::vector<Parameter>& entries() const { return entries_; }
    std::vector<Parameter>& entries() { return entries_; }

    /// Gradient of every trainable parameter (zero when unreachable).
    NamedGrads collect(const Gradients& grads) const;

    /// Largest |value| over trainable parameters.
    double max_abs_trainable() const;

    std::uint64_t step = 0;

private:
    std::vector<Parameter> entries_;
};

enum class Mode { train, eval };

/// Fresh parameters: dense weights ~ N(0, init_std^2), biases 0, BN scale 1 shift 0,
/// running mean 0, running var 1.
ParamSet init_params(const MlpSpec& spec, Rng& rng, double init_std = 0.02);

/// Forward pass through layers [0, layer_count). Train mode normalises with batch
/// statistics and, unless `update_running` is false, folds them into the running
/// batch-norm statistics in `params`.
Tensor forward(const MlpSpec& spec, ParamSet& params, const Tensor& input, Mode mode,
               std::size_t layer_count, bool update_running = true);
Tensor forward(const MlpSpec& spec, ParamSet& params, const Tensor& input, Mode mode);

/// Eval-mode pass without recording a graph.
Matrix infer(const MlpSpec& spec, const ParamSet& params, const Matrix& input,
             std::size_t layer_count);
Matrix infer(const MlpSpec& spec, const ParamSet& params, const Matrix& input);

/// Projects every trainable value into [-bound, bound]. Running statistics are untouched.
void clip_weights(ParamSet& params, double bound);

/// A spec together with its parameters.
struct Network {
    MlpSpec spec;
    ParamSet params;

    Tensor operator()(const Tensor& x, Mode mode) { return forward(spec, params, x, mode); }
    Matrix infer(const Matrix& x) const { return kmgan::infer(spec, params, x); }
};

}  // namespace kmgan
