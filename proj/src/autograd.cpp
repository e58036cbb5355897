#include "emphtts/autograd.hpp"

#include "emphtts/error.hpp"

#include <cmath>
#include <unordered_set>
#include <utility>

namespace emphtts::ag {

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> leaf(Matrix value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

// Builds a result node; records parents and the backward closure only when a
// gradient can flow.
Var make(Matrix value, std::initializer_list<Var> parents, std::function<void(Node&)> fn) {
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) needs = needs || p.requires_grad();
    }
    Var out(std::move(value), needs);
    if (needs) {
        auto& node = *out.node();
        for (const auto& p : parents) node.parents.push_back(p.node());
        node.backward_fn = std::move(fn);
    }
    return out;
}

Var make_many(Matrix value, std::span<const Var> parents, std::function<void(Node&)> fn) {
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) needs = needs || p.requires_grad();
    }
    Var out(std::move(value), needs);
    if (needs) {
        auto& node = *out.node();
        for (const auto& p : parents) node.parents.push_back(p.node());
        node.backward_fn = std::move(fn);
    }
    return out;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw StructuralError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                              "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                              "x" + std::to_string(b.cols()));
    }
}

}  // namespace

void Node::accumulate(const Matrix& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) {
        grad = g;
    } else {
        grad += g;
    }
}

Var::Var(Matrix value, bool requires_grad) : node_(leaf(std::move(value), requires_grad)) {}

Matrix Var::grad() const {
    if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
    return node_->grad;
}

double Var::item() const {
    if (rows() != 1 || cols() != 1) throw StructuralError("item() on a non-scalar");
    return node_->value(0, 0);
}

void Var::zero_grad() const { node_->grad.resize(0, 0); }

void Var::backward() const {
    if (rows() != 1 || cols() != 1) throw StructuralError("backward() needs a scalar root");
    if (!node_->requires_grad) return;

    // Iterative post-order DFS; reversed post-order is a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() > 0) n->backward_fn(*n);
    }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var constant(Matrix value) { return Var(std::move(value), false); }
Var zeros(Index rows, Index cols) { return constant(Matrix::Zero(rows, cols)); }
Var detach(const Var& x) { return constant(x.value()); }

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw StructuralError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                              std::to_string(b.rows()));
    }
    return make(a.value() * b.value(), {a, b}, [](Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) pa.accumulate(n.grad * pb.value.transpose());
        if (pb.requires_grad) pb.accumulate(pa.value.transpose() * n.grad);
    });
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return make(a.value() + b.value(), {a, b}, [](Node& n) {
        n.parents[0]->accumulate(n.grad);
        n.parents[1]->accumulate(n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return make(a.value() - b.value(), {a, b}, [](Node& n) {
        n.parents[0]->accumulate(n.grad);
        n.parents[1]->accumulate(-n.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    return make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) pa.accumulate(n.grad.cwiseProduct(pb.value));
        if (pb.requires_grad) pb.accumulate(n.grad.cwiseProduct(pa.value));
    });
}

Var affine(const Var& x, double scale, double shift) {
    Matrix v = (x.value().array() * scale + shift).matrix();
    return make(std::move(v), {x}, [scale](Node& n) { n.parents[0]->accumulate(n.grad * scale); });
}

Var add_row(const Var& x, const Var& row) {
    if (row.rows() != 1 || row.cols() != x.cols()) throw StructuralError("add_row: bad row shape");
    Matrix v = x.value().rowwise() + row.value().row(0);
    return make(std::move(v), {x, row}, [](Node& n) {
        n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad.colwise().sum());
    });
}

Var mul_col(const Var& x, const Var& col) {
    if (col.cols() != 1 || col.rows() != x.rows()) throw StructuralError("mul_col: bad column shape");
    Matrix v = x.value().array().colwise() * col.value().col(0).array();
    return make(std::move(v), {x, col}, [](Node& n) {
        auto& px = *n.parents[0];
        auto& pc = *n.parents[1];
        if (px.requires_grad) {
            Matrix g = n.grad.array().colwise() * pc.value.col(0).array();
            px.accumulate(g);
        }
        if (pc.requires_grad) pc.accumulate(n.grad.cwiseProduct(px.value).rowwise().sum());
    });
}

Var mul_row(const Var& x, const Var& row) {
    if (row.rows() != 1 || row.cols() != x.cols()) throw StructuralError("mul_row: bad row shape");
    Matrix v = x.value().array().rowwise() * row.value().row(0).array();
    return make(std::move(v), {x, row}, [](Node& n) {
        auto& px = *n.parents[0];
        auto& pr = *n.parents[1];
        if (px.requires_grad) {
            Matrix g = n.grad.array().rowwise() * pr.value.row(0).array();
            px.accumulate(g);
        }
        if (pr.requires_grad) pr.accumulate(n.grad.cwiseProduct(px.value).colwise().sum());
    });
}

Var repeat_row(const Var& row, Index count) {
    if (row.rows() != 1) throw StructuralError("repeat_row: input must be a single row");
    Matrix v = row.value().replicate(count, 1);
    return make(std::move(v), {row}, [](Node& n) { n.parents[0]->accumulate(n.grad.colwise().sum()); });
}

Var sigmoid(const Var& x) {
    Matrix s = x.value().unaryExpr([](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    });
    return make(s, {x}, [s](Node& n) {
        n.parents[0]->accumulate(n.grad.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
    });
}

Var tanh(const Var& x) {
    Matrix t = x.value().array().tanh().matrix();
    return make(t, {x}, [t](Node& n) {
        n.parents[0]->accumulate(n.grad.cwiseProduct((1.0 - t.array().square()).matrix()));
    });
}

Var relu(const Var& x) {
    Matrix v = x.value().cwiseMax(0.0);
    return make(std::move(v), {x}, [](Node& n) {
        Matrix mask = (n.parents[0]->value.array() > 0.0).cast<double>().matrix();
        n.parents[0]->accumulate(n.grad.cwiseProduct(mask));
    });
}

Var exp(const Var& x) {
    Matrix e = x.value().array().exp().matrix();
    return make(e, {x}, [e](Node& n) { n.parents[0]->accumulate(n.grad.cwiseProduct(e)); });
}

Var log(const Var& x) {
    Matrix v = x.value().array().log().matrix();
    return make(std::move(v), {x}, [](Node& n) {
        n.parents[0]->accumulate(n.grad.cwiseQuotient(n.parents[0]->value));
    });
}

Var abs(const Var& x) {
    Matrix v = x.value().cwiseAbs();
    return make(std::move(v), {x}, [](Node& n) {
        Matrix sign = n.parents[0]->value.unaryExpr([](double a) { return a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0); });
        n.parents[0]->accumulate(n.grad.cwiseProduct(sign));
    });
}

Var square(const Var& x) {
    Matrix v = x.value().array().square().matrix();
    return make(std::move(v), {x}, [](Node& n) {
        n.parents[0]->accumulate(2.0 * n.grad.cwiseProduct(n.parents[0]->value));
    });
}

Var clamp(const Var& x, double lo, double hi) {
    Matrix v = x.value().cwiseMax(lo).cwiseMin(hi);
    return make(std::move(v), {x}, [lo, hi](Node& n) {
        Matrix mask = n.parents[0]->value.unaryExpr([lo, hi](double a) { return (a > lo && a < hi) ? 1.0 : 0.0; });
        n.parents[0]->accumulate(n.grad.cwiseProduct(mask));
    });
}

Var softmax_rows(const Var& x) {
    Matrix y(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
        const double m = x.value().row(r).maxCoeff();
        Eigen::RowVectorXd e = (x.value().row(r).array() - m).exp().matrix();
        y.row(r) = e / e.sum();
    }
    return make(y, {x}, [y](Node& n) {
        // dx_r = y_r * (g_r - <g_r, y_r>)
        Eigen::VectorXd dots = n.grad.cwiseProduct(y).rowwise().sum();
        Matrix g = y.cwiseProduct((n.grad.colwise() - dots));
        n.parents[0]->accumulate(g);
    });
}

Var layer_norm_rows(const Var& x, double eps) {
    const Index d = x.cols();
    Matrix xhat(x.rows(), d);
    Eigen::VectorXd inv_std(x.rows());
    for (Index r = 0; r < x.rows(); ++r) {
        const double mean = x.value().row(r).mean();
        const double var = (x.value().row(r).array() - mean).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (x.value().row(r).array() - mean) * inv_std(r);
    }
    return make(xhat, {x}, [xhat, inv_std](Node& n) {
        const auto& g = n.grad;
        Eigen::VectorXd g_mean = g.rowwise().mean();
        Eigen::VectorXd gx_mean = g.cwiseProduct(xhat).rowwise().mean();
        Matrix dx = g;
        dx.colwise() -= g_mean;
        dx -= (xhat.array().colwise() * gx_mean.array()).matrix();
        dx = (dx.array().colwise() * inv_std.array()).matrix();
        n.parents[0]->accumulate(dx);
    });
}

Var transpose(const Var& x) {
    return make(x.value().transpose(), {x}, [](Node& n) { n.parents[0]->accumulate(n.grad.transpose()); });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw EmptyInputError("concat_cols: no inputs");
    const Index rows = parts[0].rows();
    Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw StructuralError("concat_cols: row count mismatch");
        cols += p.cols();
    }
    Matrix v(rows, cols);
    std::vector<Index> offsets;
    Index off = 0;
    for (const auto& p : parts) {
        v.middleCols(off, p.cols()) = p.value();
        offsets.push_back(off);
        off += p.cols();
    }
    return make_many(std::move(v), parts, [offsets](Node& n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            auto& p = *n.parents[i];
            if (p.requires_grad) p.accumulate(n.grad.middleCols(offsets[i], p.value.cols()));
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw EmptyInputError("concat_rows: no inputs");
    const Index cols = parts[0].cols();
    Index rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw StructuralError("concat_rows: column count mismatch");
        rows += p.rows();
    }
    Matrix v(rows, cols);
    std::vector<Index> offsets;
    Index off = 0;
    for (const auto& p : parts) {
        v.middleRows(off, p.rows()) = p.value();
        offsets.push_back(off);
        off += p.rows();
    }
    return make_many(std::move(v), parts, [offsets](Node& n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            auto& p = *n.parents[i];
            if (p.requires_grad) p.accumulate(n.grad.middleRows(offsets[i], p.value.rows()));
        }
    });
}

Var slice_rows(const Var& x, Index begin, Index count) {
    if (begin < 0 || count < 0 || begin + count > x.rows()) throw StructuralError("slice_rows: out of range");
    return make(x.value().middleRows(begin, count), {x}, [begin, count](Node& n) {
        auto& p = *n.parents[0];
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        g.middleRows(begin, count) = n.grad;
        p.accumulate(g);
    });
}

Var slice_cols(const Var& x, Index begin, Index count) {
    if (begin < 0 || count < 0 || begin + count > x.cols()) throw StructuralError("slice_cols: out of range");
    return make(x.value().middleCols(begin, count), {x}, [begin, count](Node& n) {
        auto& p = *n.parents[0];
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        g.middleCols(begin, count) = n.grad;
        p.accumulate(g);
    });
}

Var gather_rows(const Var& x, std::span<const Index> indices) {
    Matrix v(static_cast<Index>(indices.size()), x.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= x.rows()) throw StructuralError("gather_rows: index out of range");
        v.row(static_cast<Index>(i)) = x.value().row(indices[i]);
    }
    std::vector<Index> idx(indices.begin(), indices.end());
    return make(std::move(v), {x}, [idx](Node& n) {
        auto& p = *n.parents[0];
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Index>(i));
        p.accumulate(g);
    });
}

Var mean_rows(const Var& x) {
    if (x.rows() == 0) throw EmptyInputError("mean_rows: no rows");
    const Index rows = x.rows();
    return make(x.value().colwise().mean(), {x}, [rows](Node& n) {
        n.parents[0]->accumulate(n.grad.replicate(rows, 1) / static_cast<double>(rows));
    });
}

Var sum_all(const Var& x) {
    Matrix v(1, 1);
    v(0, 0) = x.value().sum();
    return make(std::move(v), {x}, [](Node& n) {
        const auto& p = *n.parents[0];
        n.parents[0]->accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), n.grad(0, 0)));
    });
}

Var mean_all(const Var& x) {
    if (x.value().size() == 0) throw EmptyInputError("mean_all: empty input");
    return affine(sum_all(x), 1.0 / static_cast<double>(x.value().size()), 0.0);
}

}  // namespace emphtts::ag
