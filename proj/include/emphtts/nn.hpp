#pragma once

#include "emphtts/autograd.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace emphtts::nn {

using ag::Index;
using ag::Matrix;
using ag::Var;

// Owns every trainable tensor of a model under a hierarchical dotted name.
// Iteration order is the name order, which makes checkpoints and optimizer
// state layouts independent of construction order.
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

    Var xavier(const std::string& name, Index fan_in, Index fan_out);
    Var zeros(const std::string& name, Index rows, Index cols);
    Var ones(const std::string& name, Index rows, Index cols);
    Var normal(const std::string& name, Index rows, Index cols, double stddev);

    const std::map<std::string, Var>& all() const { return params_; }
    const Var& get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }
    // Parameters whose name starts with `prefix`.
    std::vector<Var> group(const std::string& prefix) const;

    void zero_grad() const;
    std::size_t scalar_count() const;

private:
    Var add(const std::string& name, Matrix value);

    std::map<std::string, Var> params_;
    std::mt19937_64 rng_;
};

class Linear {
public:
    Linear() = default;
    Linear(ParameterStore& store, const std::string& name, Index in, Index out, bool bias = true);

    Var operator()(const Var& x) const;
    Index in_features() const { return weight_.rows(); }
    Index out_features() const { return weight_.cols(); }
    const Var& weight() const { return weight_; }
    const Var& bias() const { return bias_; }

private:
    Var weight_;
    Var bias_;
    bool has_bias_ = false;
};

class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(ParameterStore& store, const std::string& name, Index dim);
    Var operator()(const Var& x) const;

private:
    Var gain_;
    Var bias_;
};

class Embedding {
public:
    Embedding() = default;
    Embedding(ParameterStore& store, const std::string& name, Index count, Index dim, double stddev = 1.0);
    Var operator()(std::span<const Index> ids) const;
    Var row(Index id) const;
    Index count() const { return table_.rows(); }
    const Var& table() const { return table_; }

private:
    Var table_;
};

// One unidirectional GRU layer (PyTorch gate layout: reset, update, new).
class GruLayer {
public:
    GruLayer() = default;
    GruLayer(ParameterStore& store, const std::string& name, Index in, Index hidden);

    // Returns the T x hidden state sequence; `reverse` processes rows T-1..0 and
    // writes each state back at its own row index.
    Var run(const Var& inputs, bool reverse) const;
    Index hidden() const { return hidden_; }

private:
    Linear input_;
    Linear recurrent_;
    Index hidden_ = 0;
};

// Stacked GRU, optionally bidirectional. The encoding is the concatenation of
// the final forward state and the final backward state of the top layer; the
// backward half is zero when the encoder runs forward-only.
class StackedGru {
public:
    StackedGru() = default;
    StackedGru(ParameterStore& store, const std::string& name, Index in, Index hidden, int layers);

    Var encode(const Var& sequence, bool bidirectional) const;
    Index output_dim() const { return 2 * hidden_; }

private:
    std::vector<GruLayer> forward_;
    std::vector<GruLayer> backward_;
    Index hidden_ = 0;
};

struct AttentionResult {
    Var output;
    std::vector<Matrix> weights;  // one (n_query x n_key) matrix per head
};

// Multi-head scaled dot-product attention with separate query and key/value
// input widths.
class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(ParameterStore& store, const std::string& name, Index query_dim, Index kv_dim,
                       Index d_qkv, Index out_dim, int heads);

    AttentionResult operator()(const Var& query, const Var& key, const Var& value) const;
    Var attend(const Var& query, const Var& key_value) const { return (*this)(query, key_value, key_value).output; }
    int heads() const { return heads_; }

private:
    Linear q_;
    Linear k_;
    Linear v_;
    Linear out_;
    int heads_ = 1;
    Index d_qkv_ = 0;
};

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
    double grad_clip = 1.0;  // global norm; <= 0 disables
};

class Adam {
public:
    Adam(const ParameterStore& store, AdamOptions options);

    // Applies one update from the accumulated gradients; returns the pre-clip
    // global gradient norm.
    double step();
    std::int64_t steps() const { return t_; }

    struct State {
        std::int64_t t = 0;
        std::map<std::string, Matrix> m;
        std::map<std::string, Matrix> v;
    };
    State state() const;
    void load_state(const State& state);

private:
    const ParameterStore* store_;
    AdamOptions options_;
    std::int64_t t_ = 0;
    std::map<std::string, Matrix> m_;
    std::map<std::string, Matrix> v_;
};

// Sinusoidal position table (rows = positions).
Matrix sinusoid_positions(Index count, Index dim);

}  // namespace emphtts::nn
