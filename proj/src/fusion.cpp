#include "emphtts/fusion.hpp"

#include "emphtts/error.hpp"

namespace emphtts {

void FusionConfig::validate() const {
    if (d_fuse < 1 || predictor_hidden < 1) throw ConfigError("fusion dimensions must be >= 1");
    if (heads < 1 || d_qkv % heads != 0) throw ConfigError("fusion.d_qkv must be divisible by fusion.heads");
}

HybridFusion::HybridFusion(nn::ParameterStore& store, const std::string& name, const FusionConfig& cfg,
                           bool word_aligned_fine)
    : cfg_(cfg), word_aligned_fine_(word_aligned_fine) {
    if (cfg.hybrid) attention_ = nn::MultiHeadAttention(store, name + ".attn", cfg.d_fuse, cfg.d_fuse, cfg.d_qkv, cfg.d_fuse, cfg.heads);
}

nn::AttentionResult HybridFusion::operator()(const std::optional<Var>& coarse, const Var& current,
                                             const std::optional<Var>& fine) const {
    if (current.cols() != cfg_.d_fuse) throw StructuralError("hybrid fusion: current word features must be d_fuse wide");
    if (coarse && (coarse->rows() != 1 || coarse->cols() != cfg_.d_fuse)) {
        throw StructuralError("hybrid fusion: coarse context must be 1 x d_fuse");
    }
    if (fine && fine->cols() != cfg_.d_fuse) throw StructuralError("hybrid fusion: fine context must be d_fuse wide");

    const Var global = coarse ? ag::add_row(current, *coarse) : current;
    if (!fine) return {global, {}};
    if (cfg_.hybrid) return attention_(global, *fine, *fine);
    if (word_aligned_fine_ && fine->rows() != current.rows()) {
        throw StructuralError("hybrid fusion: word-aligned fine context has the wrong row count");
    }
    const Var pooled = word_aligned_fine_ ? *fine : ag::repeat_row(ag::mean_rows(*fine), current.rows());
    return {ag::add(global, pooled), {}};
}

CrossModalityFusion::CrossModalityFusion(nn::ParameterStore& store, const std::string& name, const FusionConfig& cfg)
    : cfg_(cfg) {
    if (cfg.cross) attention_ = nn::MultiHeadAttention(store, name + ".attn", cfg.d_fuse, cfg.d_fuse, cfg.d_qkv, cfg.d_fuse, cfg.heads);
}

nn::AttentionResult CrossModalityFusion::operator()(const Var& text, const Var& audio) const {
    if (text.rows() != audio.rows() || text.cols() != audio.cols()) {
        throw StructuralError("cross-modality fusion: text and audio features must have the same shape");
    }
    if (!cfg_.cross) return {ag::add(text, audio), {}};
    auto result = attention_(text, audio, audio);
    result.output = ag::add(text, result.output);
    return result;
}

IntensityPredictor::IntensityPredictor(nn::ParameterStore& store, const std::string& name, Index d_fuse, Index hidden)
    : hidden_(store, name + ".hidden", d_fuse, hidden), output_(store, name + ".output", hidden, 1) {}

EmphasisPrediction IntensityPredictor::operator()(const Var& fused) const {
    const Var h = ag::relu(hidden_(fused));
    return {ag::sigmoid(output_(h)), h};
}

Var emphasis_loss(const Var& predicted, const std::vector<double>& target) {
    if (predicted.cols() != 1 || predicted.rows() != static_cast<Index>(target.size())) {
        throw StructuralError("emphasis loss: " + std::to_string(predicted.rows()) + " predictions for " +
                              std::to_string(target.size()) + " targets");
    }
    if (target.empty()) throw EmptyInputError("emphasis loss over zero words");
    const Eigen::Map<const Eigen::VectorXd> t(target.data(), static_cast<Index>(target.size()));
    const Var p = ag::clamp(predicted, kProbabilityClamp, 1.0 - kProbabilityClamp);
    const Var pos = ag::mul(ag::constant(t), ag::log(p));
    const Var neg = ag::mul(ag::constant((1.0 - t.array()).matrix()), ag::log(ag::affine(p, -1.0, 1.0)));
    return ag::affine(ag::mean_all(ag::add(pos, neg)), -1.0, 0.0);
}

Var emphasis_loss(const Var& predicted, const IntensityVector& target) {
    return emphasis_loss(predicted, target.values());
}

}  // namespace emphtts
