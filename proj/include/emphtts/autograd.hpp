#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Var is a handle to a graph node. Operations on Vars record a backward
// closure whenever at least one operand requires a gradient and recording is
// enabled (see NoGradGuard). Calling backward() on a 1x1 Var walks the graph in
// reverse topological order and accumulates into every reachable node that
// requires a gradient. Parameters are simply long-lived leaf Vars.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace emphtts::ag {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void accumulate(const Matrix& g);
};

class Var {
public:
    Var() = default;
    explicit Var(Matrix value, bool requires_grad = false);

    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    // Zero matrix of the value's shape when nothing was accumulated.
    Matrix grad() const;
    bool has_grad() const { return node_ && node_->grad.size() > 0; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Index rows() const { return node_->value.rows(); }
    Index cols() const { return node_->value.cols(); }
    double item() const;
    bool defined() const { return static_cast<bool>(node_); }

    void zero_grad() const;
    void backward() const;

    const std::shared_ptr<Node>& node() const { return node_; }
    bool same_node(const Var& other) const { return node_ == other.node_; }

private:
    std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph recording in its scope (inference).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

Var constant(Matrix value);
Var zeros(Index rows, Index cols);
Var detach(const Var& x);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// scale * x + shift, elementwise.
Var affine(const Var& x, double scale, double shift);
// x (n x d) + row (1 x d) broadcast over rows.
Var add_row(const Var& x, const Var& row);
// x (n x d) * col (n x 1) broadcast over columns.
Var mul_col(const Var& x, const Var& col);
// x (n x d) * row (1 x d) broadcast over rows.
Var mul_row(const Var& x, const Var& row);
Var repeat_row(const Var& row, Index n);

Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var relu(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var abs(const Var& x);
Var square(const Var& x);
// Gradient passes only where lo < x < hi.
Var clamp(const Var& x, double lo, double hi);

Var softmax_rows(const Var& x);
Var layer_norm_rows(const Var& x, double eps = 1e-5);

Var transpose(const Var& x);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& x, Index begin, Index count);
Var slice_cols(const Var& x, Index begin, Index count);
// Output row i = x.row(indices[i]); gradients scatter-add back.
Var gather_rows(const Var& x, std::span<const Index> indices);

Var mean_rows(const Var& x);
Var sum_all(const Var& x);
Var mean_all(const Var& x);

}  // namespace emphtts::ag
