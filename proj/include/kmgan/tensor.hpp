#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace kmgan {

/// Dense row-major matrix of doubles; rows are samples, columns are features.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using ColVector = Eigen::Matrix<double, Eigen::Dynamic, 1>;

/// Raised whenever a NaN or Inf shows up in a value, gradient or update.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised on shape mismatches between operands.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

void require_finite(const Matrix& m, const std::string& what);

namespace detail {

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Propagates this node's grad into the grads of its parents.
    std::function<void(Node&)> backward;
};

}  // namespace detail

/// Handle to a value in the differentiation graph. Copies share the node.
class Tensor {
public:
    Tensor();
    explicit Tensor(Matrix value, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);

    const Matrix& value() const { return node_->value; }
    /// Mutable access for leaves only (parameters updated in place by optimizers).
    Matrix& mutable_value() { return node_->value; }

    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return !node_->backward; }
    double item() const;

    /// Same value, cut from the graph.
    Tensor detach() const;

    const detail::Node* id() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node() const { return node_; }

    static Tensor from_op(Matrix value, std::vector<Tensor> inputs,
                          std::function<void(detail::Node&)> backward, const char* op);

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

/// Gradients of a scalar with respect to every requires_grad leaf it depends on.
class Gradients {
public:
    /// Zero matrix (of the tensor's shape) when the tensor was unreachable.
    Matrix of(const Tensor& t) const;
    bool contains(const Tensor& t) const { return grads_.count(t.id()) != 0; }
    std::size_t size() const { return grads_.size(); }

private:
    friend Gradients backward(const Tensor& loss);
    std::unordered_map<const detail::Node*, Matrix> grads_;
};

/// Reverse-mode sweep from a 1x1 loss.
Gradients backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Differentiable operations. Broadcasting is explicit: only add_row broadcasts.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// x (n x d) + row (1 x d) added to every row.
Tensor add_row(const Tensor& x, const Tensor& row);
/// Row i of x multiplied by the constant factors[i].
Tensor scale_rows(const Tensor& x, const ColVector& factors);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
/// Clamps into [lo, hi]; gradient passes only where the input was inside.
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Column sums: (n x d) -> (1 x d).
Tensor sum_rows(const Tensor& x);
/// Euclidean norm of every row: (n x d) -> (n x 1). Subgradient 0 at the origin.
Tensor row_norms(const Tensor& x);

/// Sum over unordered pairs i<j of ||x_i - x_j||_1 -> (1 x 1).
Tensor pairwise_l1_within(const Tensor& x);
/// Sum over all (i, j) of ||a_i - b_j||_1 -> (1 x 1).
Tensor pairwise_l1_cross(const Tensor& a, const Tensor& b);

/// Mean cross-entropy of softmax(logits) against integer labels -> (1 x 1).
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);
Matrix softmax(const Matrix& logits);

struct BatchNormOutput {
    Tensor y;
    RowVector batch_mean;
    RowVector batch_var;  // biased
};

/// Train-mode batch normalisation using the batch statistics.
BatchNormOutput batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                 double epsilon);
/// Eval-mode batch normalisation with fixed statistics.
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const RowVector& mean, const RowVector& var, double epsilon);

}  // namespace kmgan
