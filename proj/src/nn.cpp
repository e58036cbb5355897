#include "emphtts/nn.hpp"

#include "emphtts/error.hpp"

#include <cmath>

namespace emphtts::nn {

Var ParameterStore::add(const std::string& name, Matrix value) {
    if (params_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    Var v(std::move(value), true);
    params_.emplace(name, v);
    return v;
}

Var ParameterStore::xavier(const std::string& name, Index fan_in, Index fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(fan_in, fan_out);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
    return add(name, std::move(m));
}

Var ParameterStore::zeros(const std::string& name, Index rows, Index cols) {
    return add(name, Matrix::Zero(rows, cols));
}

Var ParameterStore::ones(const std::string& name, Index rows, Index cols) {
    return add(name, Matrix::Ones(rows, cols));
}

Var ParameterStore::normal(const std::string& name, Index rows, Index cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
    return add(name, std::move(m));
}

const Var& ParameterStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw NotFoundError("unknown parameter: " + name);
    return it->second;
}

std::vector<Var> ParameterStore::group(const std::string& prefix) const {
    std::vector<Var> out;
    for (auto it = params_.lower_bound(prefix); it != params_.end(); ++it) {
        if (it->first.compare(0, prefix.size(), prefix) != 0) break;
        out.push_back(it->second);
    }
    return out;
}

void ParameterStore::zero_grad() const {
    for (const auto& [_, p] : params_) p.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value().size());
    return n;
}

Linear::Linear(ParameterStore& store, const std::string& name, Index in, Index out, bool bias)
    : weight_(store.xavier(name + ".weight", in, out)), has_bias_(bias) {
    if (bias) bias_ = store.zeros(name + ".bias", 1, out);
}

Var Linear::operator()(const Var& x) const {
    Var y = ag::matmul(x, weight_);
    return has_bias_ ? ag::add_row(y, bias_) : y;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, Index dim)
    : gain_(store.ones(name + ".gain", 1, dim)), bias_(store.zeros(name + ".bias", 1, dim)) {}

Var LayerNorm::operator()(const Var& x) const {
    return ag::add_row(ag::mul_row(ag::layer_norm_rows(x), gain_), bias_);
}

Embedding::Embedding(ParameterStore& store, const std::string& name, Index count, Index dim, double stddev)
    : table_(store.normal(name + ".table", count, dim, stddev)) {}

Var Embedding::operator()(std::span<const Index> ids) const { return ag::gather_rows(table_, ids); }

Var Embedding::row(Index id) const {
    const Index ids[1] = {id};
    return ag::gather_rows(table_, ids);
}

GruLayer::GruLayer(ParameterStore& store, const std::string& name, Index in, Index hidden)
    : input_(store, name + ".input", in, 3 * hidden),
      recurrent_(store, name + ".recurrent", hidden, 3 * hidden),
      hidden_(hidden) {}

Var GruLayer::run(const Var& inputs, bool reverse) const {
    const Index steps = inputs.rows();
    const Var projected = input_(inputs);  // T x 3h, computed once
    Var h = ag::zeros(1, hidden_);
    std::vector<Var> states(static_cast<std::size_t>(steps));
    for (Index s = 0; s < steps; ++s) {
        const Index t = reverse ? steps - 1 - s : s;
        const Var gx = ag::slice_rows(projected, t, 1);
        const Var gh = recurrent_(h);
        const Var r = ag::sigmoid(ag::add(ag::slice_cols(gx, 0, hidden_), ag::slice_cols(gh, 0, hidden_)));
        const Var z = ag::sigmoid(ag::add(ag::slice_cols(gx, hidden_, hidden_), ag::slice_cols(gh, hidden_, hidden_)));
        const Var n = ag::tanh(ag::add(ag::slice_cols(gx, 2 * hidden_, hidden_),
                                       ag::mul(r, ag::slice_cols(gh, 2 * hidden_, hidden_))));
        // h' = n + z * (h - n)
        h = ag::add(n, ag::mul(z, ag::sub(h, n)));
        states[static_cast<std::size_t>(t)] = h;
    }
    return ag::concat_rows(states);
}

StackedGru::StackedGru(ParameterStore& store, const std::string& name, Index in, Index hidden, int layers)
    : hidden_(hidden) {
    for (int l = 0; l < layers; ++l) {
        const Index layer_in = l == 0 ? in : 2 * hidden;
        forward_.emplace_back(store, name + ".l" + std::to_string(l) + ".fwd", layer_in, hidden);
        backward_.emplace_back(store, name + ".l" + std::to_string(l) + ".bwd", layer_in, hidden);
    }
}

Var StackedGru::encode(const Var& sequence, bool bidirectional) const {
    if (sequence.rows() == 0) throw EmptyInputError("recurrent encoder: empty sequence");
    Var layer_input = sequence;
    Var fwd;
    Var bwd;
    for (std::size_t l = 0; l < forward_.size(); ++l) {
        fwd = forward_[l].run(layer_input, false);
        bwd = bidirectional ? backward_[l].run(layer_input, true) : ag::zeros(sequence.rows(), hidden_);
        const Var parts[] = {fwd, bwd};
        layer_input = ag::concat_cols(parts);
    }
    const Var final_parts[] = {ag::slice_rows(fwd, fwd.rows() - 1, 1), ag::slice_rows(bwd, 0, 1)};
    return ag::concat_cols(final_parts);
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, Index query_dim,
                                       Index kv_dim, Index d_qkv, Index out_dim, int heads)
    : q_(store, name + ".query", query_dim, d_qkv),
      k_(store, name + ".key", kv_dim, d_qkv),
      v_(store, name + ".value", kv_dim, d_qkv),
      out_(store, name + ".out", d_qkv, out_dim),
      heads_(heads),
      d_qkv_(d_qkv) {
    if (heads <= 0 || d_qkv % heads != 0) {
        throw ConfigError(name + ": d_qkv " + std::to_string(d_qkv) + " is not divisible by " +
                          std::to_string(heads) + " heads");
    }
}

AttentionResult MultiHeadAttention::operator()(const Var& query, const Var& key, const Var& value) const {
    if (key.rows() == 0 || key.rows() != value.rows()) {
        throw StructuralError("attention: key/value must be non-empty with equal row counts");
    }
    const Var q = q_(query);
    const Var k = k_(key);
    const Var v = v_(value);
    const Index d_head = d_qkv_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));

    AttentionResult result;
    std::vector<Var> head_out;
    for (int h = 0; h < heads_; ++h) {
        const Var qh = ag::slice_cols(q, h * d_head, d_head);
        const Var kh = ag::slice_cols(k, h * d_head, d_head);
        const Var vh = ag::slice_cols(v, h * d_head, d_head);
        const Var w = ag::softmax_rows(ag::affine(ag::matmul(qh, ag::transpose(kh)), scale, 0.0));
        result.weights.push_back(w.value());
        head_out.push_back(ag::matmul(w, vh));
    }
    result.output = out_(ag::concat_cols(head_out));
    return result;
}

Adam::Adam(const ParameterStore& store, AdamOptions options) : store_(&store), options_(options) {
    for (const auto& [name, p] : store.all()) {
        m_[name] = Matrix::Zero(p.rows(), p.cols());
        v_[name] = Matrix::Zero(p.rows(), p.cols());
    }
}

double Adam::step() {
    double sq = 0.0;
    for (const auto& [_, p] : store_->all()) {
        if (p.has_grad()) sq += p.node()->grad.squaredNorm();
    }
    const double norm = std::sqrt(sq);
    const double clip = (options_.grad_clip > 0 && norm > options_.grad_clip) ? options_.grad_clip / norm : 1.0;

    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    for (const auto& [name, p] : store_->all()) {
        if (!p.has_grad()) continue;
        const Matrix g = p.node()->grad * clip;
        auto& m = m_.at(name);
        auto& v = v_.at(name);
        m = options_.beta1 * m + (1.0 - options_.beta1) * g;
        v = options_.beta2 * v + (1.0 - options_.beta2) * g.cwiseProduct(g);
        const Matrix update =
            ((m.array() / bc1) / ((v.array() / bc2).sqrt() + options_.eps)).matrix() * options_.lr;
        p.node()->value -= update;
    }
    return norm;
}

Adam::State Adam::state() const { return State{t_, m_, v_}; }

void Adam::load_state(const State& state) {
    t_ = state.t;
    for (const auto& [name, m] : state.m) {
        if (!m_.count(name)) throw NotFoundError("optimizer state for unknown parameter " + name);
        m_[name] = m;
    }
    for (const auto& [name, v] : state.v) {
        if (!v_.count(name)) throw NotFoundError("optimizer state for unknown parameter " + name);
        v_[name] = v;
    }
}

Matrix sinusoid_positions(Index count, Index dim) {
    Matrix pe(count, dim);
    for (Index pos = 0; pos < count; ++pos) {
        for (Index i = 0; i < dim; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
            pe(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
        }
    }
    return pe;
}

}  // namespace emphtts::nn
