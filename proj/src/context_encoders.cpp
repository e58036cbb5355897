#include "emphtts/context_encoders.hpp"

#include "emphtts/error.hpp"

#include <numeric>

namespace emphtts {

namespace {

void require_history(std::size_t turns, std::size_t speakers, const char* who) {
    if (turns == 0) throw EmptyInputError(std::string(who) + ": empty dialogue history");
    if (speakers != turns) throw StructuralError(std::string(who) + ": one speaker vector per history turn required");
}

std::vector<std::size_t> forward_order(std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    return order;
}

std::vector<std::size_t> backward_order(std::size_t n) {
    auto order = forward_order(n);
    std::reverse(order.begin(), order.end());
    return order;
}

}  // namespace

void EncoderConfig::validate() const {
    if (d_fuse < 1 || gru_hidden < 1 || gru_layers < 1) throw ConfigError("encoder dimensions must be >= 1");
    if (fine_heads < 1 || fine_d_qkv % fine_heads != 0) {
        throw ConfigError("encoder.fine.d_qkv must be divisible by encoder.fine.heads");
    }
}

SpeakerConditioner::SpeakerConditioner(nn::ParameterStore& store, const std::string& name, Index d_speaker,
                                       Index d_feature)
    : proj_(store, name, d_speaker, d_feature) {}

Var SpeakerConditioner::operator()(const Var& rows, const Var& speaker) const {
    return ag::add_row(rows, proj_(speaker));
}

CoarseTextEncoder::CoarseTextEncoder(nn::ParameterStore& store, const std::string& name, Index d_sentence,
                                     Index d_speaker, const EncoderConfig& cfg)
    : cfg_(cfg),
      speaker_(store, name + ".speaker", d_speaker, d_sentence),
      gru_(store, name + ".gru", d_sentence, cfg.gru_hidden, cfg.gru_layers),
      out_(store, name + ".out", 2 * cfg.gru_hidden + d_sentence, cfg.d_fuse) {}

Var CoarseTextEncoder::operator()(std::span<const Var> history, std::span<const Var> speakers,
                                  const Var& current) const {
    require_history(history.size(), speakers.size(), "CTE");
    std::vector<Var> rows;
    for (std::size_t j = 0; j < history.size(); ++j) rows.push_back(speaker_(history[j], speakers[j]));
    const Var state = gru_.encode(ag::concat_rows(rows), cfg_.bidirectional);
    const Var joined[] = {state, current};
    return out_(ag::concat_cols(joined));
}

CoarseAudioEncoder::CoarseAudioEncoder(nn::ParameterStore& store, const std::string& name, Index d_sentence,
                                       Index d_speaker, const EncoderConfig& cfg)
    : cfg_(cfg),
      speaker_(store, name + ".speaker", d_speaker, d_sentence),
      gru_(store, name + ".gru", d_sentence, cfg.gru_hidden, cfg.gru_layers),
      out_(store, name + ".out", 2 * cfg.gru_hidden, cfg.d_fuse) {}

Var CoarseAudioEncoder::operator()(std::span<const Var> history, std::span<const Var> speakers) const {
    require_history(history.size(), speakers.size(), "CAE");
    std::vector<Var> rows;
    for (std::size_t j = 0; j < history.size(); ++j) rows.push_back(speaker_(history[j], speakers[j]));
    return out_(gru_.encode(ag::concat_rows(rows), cfg_.bidirectional));
}

Var emphasis_weights(const Var& intensity) {
    if (intensity.cols() != 1 || intensity.rows() < 1) throw StructuralError("intensity must be a non-empty column");
    return ag::transpose(ag::softmax_rows(ag::transpose(intensity)));
}

FineTextEncoder::FineTextEncoder(nn::ParameterStore& store, const std::string& name, Index d_word_history,
                                 Index d_word_current, Index d_speaker, const EncoderConfig& cfg)
    : cfg_(cfg),
      d_current_(d_word_current),
      speaker_(store, name + ".speaker", d_speaker, d_word_history),
      forward_attention_(store, name + ".attn_fwd", d_word_current, d_word_history, cfg.fine_d_qkv, cfg.d_fuse,
                         cfg.fine_heads),
      out_(store, name + ".out", 2 * cfg.d_fuse, cfg.d_fuse) {
    if (!cfg.tie_directions) {
        backward_attention_ = nn::MultiHeadAttention(store, name + ".attn_bwd", d_word_current, d_word_history,
                                                     cfg.fine_d_qkv, cfg.d_fuse, cfg.fine_heads);
    }
}

Var FineTextEncoder::pass(const std::vector<Var>& turns, std::span<const Var> intensities,
                          const std::vector<std::size_t>& order, const nn::MultiHeadAttention& attention,
                          const Var& current, DirectionalOutput* trace) const {
    Var memory;
    if (cfg_.memory) {
        Var carry;
        for (std::size_t j : order) {
            const Var effective = carry.defined() ? ag::add_row(turns[j], carry) : turns[j];
            memory = ag::mul_col(effective, emphasis_weights(intensities[j]));
            carry = ag::mean_rows(memory);
            if (trace) trace->weighted_forward.push_back(memory);
        }
    } else {
        std::vector<Var> weighted;
        for (std::size_t j : order) weighted.push_back(ag::mul_col(turns[j], emphasis_weights(intensities[j])));
        memory = ag::concat_rows(weighted);
        if (trace) trace->weighted_forward = weighted;
    }
    auto result = attention(current, memory, memory);
    if (trace) trace->attention.push_back(result);
    return result.output;
}

DirectionalOutput FineTextEncoder::directions(std::span<const Var> words, std::span<const Var> intensities,
                                              std::span<const Var> speakers, const Var& current) const {
    require_history(words.size(), speakers.size(), "MFTE");
    if (intensities.size() != words.size()) throw StructuralError("MFTE: one intensity vector per history turn required");
    if (current.cols() != d_current_) throw StructuralError("MFTE: current word width mismatch");
    std::vector<Var> turns;
    for (std::size_t j = 0; j < words.size(); ++j) {
        if (intensities[j].rows() != words[j].rows()) {
            throw StructuralError("MFTE: turn " + std::to_string(j + 1) + " has " + std::to_string(words[j].rows()) +
                                  " words but " + std::to_string(intensities[j].rows()) + " intensities");
        }
        turns.push_back(speaker_(words[j], speakers[j]));
    }
    DirectionalOutput out;
    out.forward = pass(turns, intensities, forward_order(turns.size()), forward_attention_, current, &out);
    if (cfg_.bidirectional) {
        DirectionalOutput scratch;
        const auto& attention = cfg_.tie_directions ? forward_attention_ : backward_attention_;
        out.backward = pass(turns, intensities, backward_order(turns.size()), attention, current, &scratch);
        for (auto& a : scratch.attention) out.attention.push_back(std::move(a));
    } else {
        out.backward = ag::zeros(current.rows(), cfg_.d_fuse);
    }
    return out;
}

Var FineTextEncoder::operator()(std::span<const Var> words, std::span<const Var> intensities,
                                std::span<const Var> speakers, const Var& current) const {
    const auto d = directions(words, intensities, speakers, current);
    const Var joined[] = {d.forward, d.backward};
    return out_(ag::concat_cols(joined));
}

std::vector<Index> align_rows(Index source, Index target) {
    std::vector<Index> idx(static_cast<std::size_t>(target));
    for (Index i = 0; i < target; ++i) idx[static_cast<std::size_t>(i)] = std::min(source - 1, i * source / target);
    return idx;
}

FineAudioEncoder::FineAudioEncoder(nn::ParameterStore& store, const std::string& name, Index d_frame,
                                   Index d_speaker, const EncoderConfig& cfg)
    : cfg_(cfg),
      d_frame_(d_frame),
      speaker_(store, name + ".speaker", d_speaker, d_frame),
      forward_attention_(store, name + ".attn_fwd", d_frame, d_frame, cfg.fine_d_qkv, d_frame, cfg.fine_heads),
      out_(store, name + ".out", 2 * d_frame, cfg.d_fuse) {
    if (!cfg.tie_directions) {
        backward_attention_ =
            nn::MultiHeadAttention(store, name + ".attn_bwd", d_frame, d_frame, cfg.fine_d_qkv, d_frame, cfg.fine_heads);
    }
}

Var FineAudioEncoder::pass(const std::vector<Var>& turns, const std::vector<std::size_t>& order,
                           const nn::MultiHeadAttention& attention, DirectionalOutput* trace) const {
    if (!cfg_.memory) {
        std::vector<Var> all;
        for (std::size_t j : order) all.push_back(turns[j]);
        return ag::concat_rows(all);
    }
    Var previous = turns[order.front()];
    for (std::size_t k = 1; k < order.size(); ++k) {
        const Var& frames = turns[order[k]];
        auto result = attention(frames, previous, previous);
        previous = ag::add(frames, result.output);
        if (trace) trace->attention.push_back(std::move(result));
    }
    return previous;
}

DirectionalOutput FineAudioEncoder::directions(std::span<const Var> frames, std::span<const Var> speakers) const {
    require_history(frames.size(), speakers.size(), "MFAE");
    std::vector<Var> turns;
    for (std::size_t j = 0; j < frames.size(); ++j) {
        if (frames[j].rows() < 1) throw EmptyInputError("MFAE: turn " + std::to_string(j + 1) + " has no frames");
        if (frames[j].cols() != d_frame_) throw StructuralError("MFAE: frame width mismatch");
        turns.push_back(speaker_(frames[j], speakers[j]));
    }
    DirectionalOutput out;
    out.forward = pass(turns, forward_order(turns.size()), forward_attention_, &out);
    if (cfg_.bidirectional) {
        const auto& attention = cfg_.tie_directions ? forward_attention_ : backward_attention_;
        const Var backward = pass(turns, backward_order(turns.size()), attention, &out);
        out.backward = backward.rows() == out.forward.rows()
                           ? backward
                           : ag::gather_rows(backward, align_rows(backward.rows(), out.forward.rows()));
    } else {
        out.backward = ag::zeros(out.forward.rows(), d_frame_);
    }
    return out;
}

Var FineAudioEncoder::operator()(std::span<const Var> frames, std::span<const Var> speakers) const {
    const auto d = directions(frames, speakers);
    const Var joined[] = {d.forward, d.backward};
    return out_(ag::concat_cols(joined));
}

}  // namespace emphtts
