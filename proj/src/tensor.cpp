#include "kmgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace kmgan {

void require_finite(const Matrix& m, const std::string& what) {
    if (!m.allFinite()) {
        throw NumericError("non-finite value detected in " + what);
    }
}

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
    require_finite(value, "tensor construction");
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return Tensor(std::move(m), requires_grad);
}

double Tensor::item() const {
    if (rows() != 1 || cols() != 1) {
        throw ShapeError("item() requires a 1x1 tensor");
    }
    return node_->value(0, 0);
}

Tensor Tensor::detach() const { return Tensor(node_->value, false); }

Tensor Tensor::from_op(Matrix value, std::vector<Tensor> inputs,
                       std::function<void(detail::Node&)> backward, const char* op) {
    require_finite(value, op);
    auto node = std::make_shared<detail::Node>();
    node->value = std::move(value);
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (auto& t : inputs) node->parents.push_back(t.node_);
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

Matrix Gradients::of(const Tensor& t) const {
    auto it = grads_.find(t.id());
    if (it == grads_.end()) return Matrix::Zero(t.rows(), t.cols());
    return it->second;
}

Gradients backward(const Tensor& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
        throw ShapeError("backward() requires a 1x1 loss");
    }
    if (loss.is_leaf() || !loss.requires_grad()) {
        throw std::logic_error("backward() on a tensor not produced by a recorded graph");
    }

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (auto* n : order) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
    loss.node()->grad(0, 0) = 1.0;

    Gradients out;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward) {
            n->backward(*n);
            n->grad.resize(0, 0);
        } else {
            require_finite(n->grad, "gradient");
            out.grads_.emplace(n, std::move(n->grad));
            n->grad.resize(0, 0);
        }
    }
    return out;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        std::ostringstream os;
        os << op << ": shape mismatch (" << a.rows() << "x" << a.cols() << " vs " << b.rows()
           << "x" << b.cols() << ")";
        throw ShapeError(os.str());
    }
}

detail::Node& parent(detail::Node& n, std::size_t i) { return *n.parents[i]; }

template <typename F>
Tensor unary(const Tensor& x, Matrix value, F local_grad, const char* op) {
    // local_grad(x_value, y_value) -> elementwise derivative dy/dx
    return Tensor::from_op(std::move(value), {x},
                           [local_grad](detail::Node& n) {
                               auto& p = parent(n, 0);
                               p.grad.array() += n.grad.array() * local_grad(p.value, n.value).array();
                           },
                           op);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        std::ostringstream os;
        os << "matmul: inner dimension mismatch (" << a.rows() << "x" << a.cols() << " * "
           << b.rows() << "x" << b.cols() << ")";
        throw ShapeError(os.str());
    }
    Matrix out = a.value() * b.value();
    return Tensor::from_op(std::move(out), {a, b},
                           [](detail::Node& n) {
                               auto& pa = parent(n, 0);
                               auto& pb = parent(n, 1);
                               if (pa.requires_grad) pa.grad.noalias() += n.grad * pb.value.transpose();
                               if (pb.requires_grad) pb.grad.noalias() += pa.value.transpose() * n.grad;
                           },
                           "matmul");
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    return Tensor::from_op(a.value() + b.value(), {a, b},
                           [](detail::Node& n) {
                               for (auto& p : n.parents)
                                   if (p->requires_grad) p->grad += n.grad;
                           },
                           "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    return Tensor::from_op(a.value() - b.value(), {a, b},
                           [](detail::Node& n) {
                               if (parent(n, 0).requires_grad) parent(n, 0).grad += n.grad;
                               if (parent(n, 1).requires_grad) parent(n, 1).grad -= n.grad;
                           },
                           "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Matrix out = a.value().cwiseProduct(b.value());
    return Tensor::from_op(std::move(out), {a, b},
                           [](detail::Node& n) {
                               auto& pa = parent(n, 0);
                               auto& pb = parent(n, 1);
                               if (pa.requires_grad) pa.grad += n.grad.cwiseProduct(pb.value);
                               if (pb.requires_grad) pb.grad += n.grad.cwiseProduct(pa.value);
                           },
                           "mul");
}

Tensor add_row(const Tensor& x, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != x.cols()) {
        throw ShapeError("add_row: row must be 1 x " + std::to_string(x.cols()));
    }
    Matrix out = x.value().rowwise() + row.value().row(0);
    return Tensor::from_op(std::move(out), {x, row},
                           [](detail::Node& n) {
                               if (parent(n, 0).requires_grad) parent(n, 0).grad += n.grad;
                               if (parent(n, 1).requires_grad)
                                   parent(n, 1).grad += n.grad.colwise().sum();
                           },
                           "add_row");
}

Tensor scale_rows(const Tensor& x, const ColVector& factors) {
    if (factors.size() != x.rows()) throw ShapeError("scale_rows: factor count != rows");
    Matrix out = factors.asDiagonal() * x.value();
    return Tensor::from_op(std::move(out), {x},
                           [factors](detail::Node& n) {
                               parent(n, 0).grad.noalias() += factors.asDiagonal() * n.grad;
                           },
                           "scale_rows");
}

Tensor scale(const Tensor& x, double s) {
    return Tensor::from_op(x.value() * s, {x},
                           [s](detail::Node& n) { parent(n, 0).grad += s * n.grad; }, "scale");
}

Tensor add_scalar(const Tensor& x, double s) {
    Matrix out = x.value().array() + s;
    return Tensor::from_op(std::move(out), {x},
                           [](detail::Node& n) { parent(n, 0).grad += n.grad; }, "add_scalar");
}

Tensor relu(const Tensor& x) {
    Matrix out = x.value().cwiseMax(0.0);
    return unary(x, std::move(out),
                 [](const Matrix& in, const Matrix&) -> Matrix {
                     return (in.array() > 0.0).cast<double>().matrix();
                 },
                 "relu");
}

Tensor sigmoid(const Tensor& x) {
    Matrix out = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
    return unary(x, std::move(out),
                 [](const Matrix&, const Matrix& y) -> Matrix {
                     return (y.array() * (1.0 - y.array())).matrix();
                 },
                 "sigmoid");
}

Tensor tanh(const Tensor& x) {
    Matrix out = x.value().array().tanh().matrix();
    return unary(x, std::move(out),
                 [](const Matrix&, const Matrix& y) -> Matrix {
                     return (1.0 - y.array().square()).matrix();
                 },
                 "tanh");
}

Tensor log(const Tensor& x) {
    Matrix out = x.value().array().log().matrix();
    return unary(x, std::move(out),
                 [](const Matrix& in, const Matrix&) -> Matrix { return in.cwiseInverse(); }, "log");
}

Tensor abs(const Tensor& x) {
    Matrix out = x.value().cwiseAbs();
    return unary(x, std::move(out),
                 [](const Matrix& in, const Matrix&) -> Matrix {
                     return in.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
                 },
                 "abs");
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    Matrix out = x.value().cwiseMax(lo).cwiseMin(hi);
    return unary(x, std::move(out),
                 [lo, hi](const Matrix& in, const Matrix&) -> Matrix {
                     return ((in.array() >= lo) && (in.array() <= hi)).cast<double>().matrix();
                 },
                 "clamp");
}

Tensor sum(const Tensor& x) {
    Matrix out(1, 1);
    out(0, 0) = x.value().sum();
    return Tensor::from_op(std::move(out), {x},
                           [](detail::Node& n) { parent(n, 0).grad.array() += n.grad(0, 0); },
                           "sum");
}

Tensor mean(const Tensor& x) {
    const double count = static_cast<double>(x.value().size());
    if (count == 0) throw ShapeError("mean of an empty tensor");
    Matrix out(1, 1);
    out(0, 0) = x.value().sum() / count;
    return Tensor::from_op(std::move(out), {x},
                           [count](detail::Node& n) {
                               parent(n, 0).grad.array() += n.grad(0, 0) / count;
                           },
                           "mean");
}

Tensor sum_rows(const Tensor& x) {
    Matrix out = x.value().colwise().sum();
    return Tensor::from_op(std::move(out), {x},
                           [](detail::Node& n) {
                               parent(n, 0).grad.rowwise() += n.grad.row(0);
                           },
                           "sum_rows");
}

Tensor row_norms(const Tensor& x) {
    Matrix out = x.value().rowwise().norm();
    return Tensor::from_op(std::move(out), {x},
                           [](detail::Node& n) {
                               auto& p = parent(n, 0);
                               for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
                                   const double norm = n.value(i, 0);
                                   if (norm > 0.0) p.grad.row(i) += (n.grad(i, 0) / norm) * p.value.row(i);
                               }
                           },
                           "row_norms");
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Tensor pairwise_l1_within(const Tensor& x) {
    const Matrix& v = x.value();
    const Eigen::Index n = v.rows();
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) total += (v.row(i) - v.row(j)).cwiseAbs().sum();
    Matrix out(1, 1);
    out(0, 0) = total;
    return Tensor::from_op(std::move(out), {x},
                           [](detail::Node& node) {
                               auto& p = parent(node, 0);
                               const double g = node.grad(0, 0);
                               const Eigen::Index rows = p.value.rows();
                               for (Eigen::Index i = 0; i < rows; ++i)
                                   for (Eigen::Index j = i + 1; j < rows; ++j)
                                       for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
                                           const double s = g * sign(p.value(i, c) - p.value(j, c));
                                           p.grad(i, c) += s;
                                           p.grad(j, c) -= s;
                                       }
                           },
                           "pairwise_l1_within");
}

Tensor pairwise_l1_cross(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw ShapeError("pairwise_l1_cross: feature dimension mismatch");
    const Matrix& va = a.value();
    const Matrix& vb = b.value();
    double total = 0.0;
    for (Eigen::Index i = 0; i < va.rows(); ++i)
        for (Eigen::Index j = 0; j < vb.rows(); ++j) total += (va.row(i) - vb.row(j)).cwiseAbs().sum();
    Matrix out(1, 1);
    out(0, 0) = total;
    return Tensor::from_op(std::move(out), {a, b},
                           [](detail::Node& node) {
                               auto& pa = parent(node, 0);
                               auto& pb = parent(node, 1);
                               const double g = node.grad(0, 0);
                               for (Eigen::Index i = 0; i < pa.value.rows(); ++i)
                                   for (Eigen::Index j = 0; j < pb.value.rows(); ++j)
                                       for (Eigen::Index c = 0; c < pa.value.cols(); ++c) {
                                           const double s = g * sign(pa.value(i, c) - pb.value(j, c));
                                           if (pa.requires_grad) pa.grad(i, c) += s;
                                           if (pb.requires_grad) pb.grad(j, c) -= s;
                                       }
                           },
                           "pairwise_l1_cross");
}

Matrix softmax(const Matrix& logits) {
    Matrix shifted = logits.colwise() - logits.rowwise().maxCoeff();
    Matrix e = shifted.array().exp().matrix();
    ColVector denom = e.rowwise().sum();
    return denom.cwiseInverse().asDiagonal() * e;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.rows() || labels.empty()) {
        throw ShapeError("softmax_cross_entropy: label count != rows");
    }
    for (auto l : labels)
        if (static_cast<Eigen::Index>(l) >= logits.cols())
            throw std::out_of_range("softmax_cross_entropy: label out of range");
    Matrix probs = softmax(logits.value());
    const double n = static_cast<double>(labels.size());
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        total -= std::log(std::max(probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i])), 1e-300));
    Matrix out(1, 1);
    out(0, 0) = total / n;
    return Tensor::from_op(std::move(out), {logits},
                           [probs, labels, n](detail::Node& node) {
                               Matrix g = probs;
                               for (std::size_t i = 0; i < labels.size(); ++i)
                                   g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i])) -= 1.0;
                               parent(node, 0).grad += (node.grad(0, 0) / n) * g;
                           },
                           "softmax_cross_entropy");
}

BatchNormOutput batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                 double epsilon) {
    const Eigen::Index n = x.rows();
    if (n < 2) throw ShapeError("batch_norm (train mode) needs at least 2 rows");
    if (gamma.cols() != x.cols() || beta.cols() != x.cols())
        throw ShapeError("batch_norm: parameter width mismatch");

    RowVector mu = x.value().colwise().mean();
    Matrix centered = x.value().rowwise() - mu;
    RowVector var = centered.array().square().colwise().mean().matrix();
    RowVector inv_std = (var.array() + epsilon).rsqrt().matrix();
    Matrix xhat = centered * inv_std.asDiagonal();
    Matrix y = (xhat * gamma.value().row(0).asDiagonal()).rowwise() + beta.value().row(0);

    Tensor out = Tensor::from_op(
        std::move(y), {x, gamma, beta},
        [xhat, inv_std](detail::Node& node) {
            auto& px = parent(node, 0);
            auto& pg = parent(node, 1);
            auto& pb = parent(node, 2);
            const Matrix& dy = node.grad;
            const double rows = static_cast<double>(dy.rows());
            if (pg.requires_grad) pg.grad += dy.cwiseProduct(xhat).colwise().sum();
            if (pb.requires_grad) pb.grad += dy.colwise().sum();
            if (px.requires_grad) {
                Matrix dxhat = dy * pg.value.row(0).asDiagonal();
                RowVector sum_dxhat = dxhat.colwise().sum();
                RowVector sum_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().sum();
                Matrix inner = (rows * dxhat).rowwise() - sum_dxhat;
                inner -= xhat * sum_dxhat_xhat.asDiagonal();
                px.grad += inner * (inv_std / rows).asDiagonal();
            }
        },
        "batch_norm");
    return {std::move(out), std::move(mu), std::move(var)};
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const RowVector& mean, const RowVector& var, double epsilon) {
    if (gamma.cols() != x.cols() || beta.cols() != x.cols() || mean.size() != x.cols() ||
        var.size() != x.cols())
        throw ShapeError("batch_norm: parameter width mismatch");
    RowVector inv_std = (var.array() + epsilon).rsqrt().matrix();
    Matrix xhat = (x.value().rowwise() - mean) * inv_std.asDiagonal();
    Matrix y = (xhat * gamma.value().row(0).asDiagonal()).rowwise() + beta.value().row(0);
    return Tensor::from_op(std::move(y), {x, gamma, beta},
                           [xhat, inv_std](detail::Node& node) {
                               auto& px = parent(node, 0);
                               auto& pg = parent(node, 1);
                               auto& pb = parent(node, 2);
                               const Matrix& dy = node.grad;
                               if (pg.requires_grad) pg.grad += dy.cwiseProduct(xhat).colwise().sum();
                               if (pb.requires_grad) pb.grad += dy.colwise().sum();
                               if (px.requires_grad)
                                   px.grad += dy * inv_std.cwiseProduct(pg.value.row(0)).asDiagonal();
                           },
                           "batch_norm_eval");
}

}  // namespace kmgan
