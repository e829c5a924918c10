// Shared encoder and decoder over a joint bilingual vocabulary.
//
// One token-embedding table serves as both the input embedding and, through
// its transpose, the output projection (weight tying). A learned language
// embedding row is added to every token embedding of the language being
// processed. Blocks are pre-norm transformer layers with fixed sinusoidal
// positions; the decoder's hidden width equals the embedding width.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "unmt/corpus.hpp"
#include "unmt/params.hpp"
#include "unmt/tensor.hpp"

namespace unmt {

struct ModelConfig {
    size_t embed_dim = 64;
    size_t enc_layers = 2;
    size_t dec_layers = 2;
    size_t heads = 4;
    size_t ffn_dim = 256;
    size_t max_len = 32;
    double dropout = 0.0;

    void validate() const {
        if (embed_dim == 0 || enc_layers == 0 || dec_layers == 0 || heads == 0 || ffn_dim == 0 ||
            max_len == 0)
            throw std::invalid_argument("model config: all extents must be positive");
        if (embed_dim % heads != 0)
            throw std::invalid_argument("model config: embed_dim must be divisible by heads");
        if (dropout < 0.0 || dropout >= 1.0)
            throw std::invalid_argument("model config: dropout must be in [0, 1)");
    }

    bool operator==(const ModelConfig&) const = default;
};

// Decoder hidden vectors at output position 1, captured before the tied
// projection, together with their generation context.
struct FirstStepOutput {
    Tensor hidden;  // batch x embed_dim
    Lang input_lang = Lang::src;
    Lang output_lang = Lang::src;
    bool detached = false;
};

inline std::vector<double> sinusoidal_positions(size_t max_len, size_t d) {
    std::vector<double> pos(max_len * d);
    for (size_t p = 0; p < max_len; ++p) {
        for (size_t i = 0; i < d; i += 2) {
            const double angle =
                static_cast<double>(p) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
            pos[p * d + i] = std::sin(angle);
            if (i + 1 < d) pos[p * d + i + 1] = std::cos(angle);
        }
    }
    return pos;
}

// theta_Enc and theta_Dec. There is deliberately no output-projection matrix
// anywhere in here: logits always come from emb.tok transposed.
struct Parameters {
    ModelConfig cfg;
    size_t vocab_size = 0;
    ParamSet set;
    std::vector<double> pos;  // constant sinusoidal table, max_len x d

    Parameters() = default;

    Parameters(const ModelConfig& config, size_t vocab, Rng& rng) : cfg(config), vocab_size(vocab) {
        cfg.validate();
        if (vocab_size < Vocab::reserved) throw std::invalid_argument("parameters: vocab too small");
        const size_t d = cfg.embed_dim;
        const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
        set.add("emb.tok", normal_init({vocab_size, d}, emb_std, rng));
        set.add("emb.lang", normal_init({2, d}, emb_std, rng));
        for (size_t i = 0; i < cfg.enc_layers; ++i) add_block("enc." + std::to_string(i), false, rng);
        set.add("enc.ln_out.g", const_init({d}, 1.0));
        set.add("enc.ln_out.b", const_init({d}, 0.0));
        for (size_t i = 0; i < cfg.dec_layers; ++i) add_block("dec." + std::to_string(i), true, rng);
        set.add("dec.ln_out.g", const_init({d}, 1.0));
        set.add("dec.ln_out.b", const_init({d}, 0.0));
        pos = sinusoidal_positions(cfg.max_len, d);
    }

private:
    void add_attn(const std::string& prefix, Rng& rng) {
        const size_t d = cfg.embed_dim;
        for (const char* w : {"wq", "wk", "wv", "wo"})
            set.add(prefix + "." + w, xavier_uniform({d, d}, rng));
        // no key bias: softmax shift-invariance makes it a dead parameter
        for (const char* b : {"bq", "bv", "bo"})
            set.add(prefix + "." + b, const_init({d}, 0.0));
    }

    void add_block(const std::string& prefix, bool with_cross, Rng& rng) {
        const size_t d = cfg.embed_dim;
        set.add(prefix + ".ln1.g", const_init({d}, 1.0));
        set.add(prefix + ".ln1.b", const_init({d}, 0.0));
        add_attn(prefix + (with_cross ? ".self" : ".attn"), rng);
        set.add(prefix + ".ln2.g", const_init({d}, 1.0));
        set.add(prefix + ".ln2.b", const_init({d}, 0.0));
        if (with_cross) {
            add_attn(prefix + ".cross", rng);
            set.add(prefix + ".ln3.g", const_init({d}, 1.0));
            set.add(prefix + ".ln3.b", const_init({d}, 0.0));
        }
        set.add(prefix + ".ffn.w1", xavier_uniform({d, cfg.ffn_dim}, rng));
        set.add(prefix + ".ffn.b1", const_init({cfg.ffn_dim}, 0.0));
        set.add(prefix + ".ffn.w2", xavier_uniform({cfg.ffn_dim, d}, rng));
        set.add(prefix + ".ffn.b2", const_init({d}, 0.0));
    }
};

struct EncodeResult {
    Tensor states;  // (batch * width) x d
    size_t batch = 0;
    size_t width = 0;
    std::vector<int> lens;
    Lang lang = Lang::src;
};

struct DecodeResult {
    Tensor logits;  // (batch * width) x vocab
    Tensor hidden;  // (batch * width) x d, after the final norm
    FirstStepOutput first_step;
    size_t batch = 0;
    size_t width = 0;
};

namespace detail {

struct ForwardCtx {
    Graph* g = nullptr;
    Rng* dropout_rng = nullptr;  // active only when set and cfg.dropout > 0
};

inline Tensor maybe_dropout(const ForwardCtx& ctx, const Parameters& p, const Tensor& x) {
    if (!ctx.dropout_rng || p.cfg.dropout == 0.0) return x;
    return dropout(ctx.g, x, p.cfg.dropout, *ctx.dropout_rng);
}

inline Tensor attn_block(const ForwardCtx& ctx, const Parameters& p, const std::string& prefix,
                         const Tensor& x_q, const Tensor& x_kv, size_t batch, size_t lq, size_t lk,
                         const std::vector<int>& k_lens, bool causal) {
    Graph* g = ctx.g;
    const ParamSet& w = p.set;
    Tensor q = add_bias(g, matmul(g, x_q, w.at(prefix + ".wq")), w.at(prefix + ".bq"));
    Tensor k = matmul(g, x_kv, w.at(prefix + ".wk"));
    Tensor v = add_bias(g, matmul(g, x_kv, w.at(prefix + ".wv")), w.at(prefix + ".bv"));
    Tensor a = attention(g, q, k, v, batch, lq, lk, p.cfg.heads, k_lens, causal);
    return add_bias(g, matmul(g, a, w.at(prefix + ".wo")), w.at(prefix + ".bo"));
}

inline Tensor ffn_block(const ForwardCtx& ctx, const Parameters& p, const std::string& prefix,
                        const Tensor& x) {
    Graph* g = ctx.g;
    const ParamSet& w = p.set;
    Tensor h = relu(g, add_bias(g, matmul(g, x, w.at(prefix + ".w1")), w.at(prefix + ".b1")));
    return add_bias(g, matmul(g, h, w.at(prefix + ".w2")), w.at(prefix + ".b2"));
}

inline Tensor embed_tokens(const ForwardCtx& ctx, const Parameters& p, const std::vector<int>& ids,
                           size_t width, Lang lang) {
    Graph* g = ctx.g;
    Tensor x = embed(g, p.set.at("emb.tok"), ids);
    Tensor lang_row = gather_rows(g, p.set.at("emb.lang"), {static_cast<size_t>(lang)});
    x = add_bias(g, x, lang_row);
    return add_position(g, x, p.pos, width);
}

}  // namespace detail

inline EncodeResult encode(Graph* g, const Parameters& p, const Batch& batch, Lang lang,
                           Rng* dropout_rng = nullptr) {
    if (batch.width > p.cfg.max_len)
        throw std::invalid_argument("encode: batch wider than the configured max length");
    detail::ForwardCtx ctx{g, dropout_rng};
    Tensor x = detail::embed_tokens(ctx, p, batch.ids, batch.width, lang);
    for (size_t i = 0; i < p.cfg.enc_layers; ++i) {
        const std::string prefix = "enc." + std::to_string(i);
        Tensor h = layer_norm(g, x, p.set.at(prefix + ".ln1.g"), p.set.at(prefix + ".ln1.b"));
        Tensor a = detail::attn_block(ctx, p, prefix + ".attn", h, h, batch.batch_size, batch.width,
                                      batch.width, batch.lens, /*causal=*/false);
        x = add(g, x, detail::maybe_dropout(ctx, p, a));
        Tensor h2 = layer_norm(g, x, p.set.at(prefix + ".ln2.g"), p.set.at(prefix + ".ln2.b"));
        Tensor f = detail::ffn_block(ctx, p, prefix + ".ffn", h2);
        x = add(g, x, detail::maybe_dropout(ctx, p, f));
    }
    EncodeResult out;
    out.states = layer_norm(g, x, p.set.at("enc.ln_out.g"), p.set.at("enc.ln_out.b"));
    out.batch = batch.batch_size;
    out.width = batch.width;
    out.lens = batch.lens;
    out.lang = lang;
    return out;
}

// Teacher-forced decode. `target_in` is the decoder input (every row must
// begin with BOS); logits are the tied projection hidden * E^T; the
// first-step output is the final hidden state at position 0 of each row,
// i.e. the state that produces the first generated token.
inline DecodeResult decode_teacher_forced(Graph* g, const Parameters& p, const EncodeResult& enc,
                                          const Batch& target_in, Lang out_lang,
                                          Rng* dropout_rng = nullptr) {
    if (target_in.width > p.cfg.max_len)
        throw std::invalid_argument("decode: target wider than the configured max length");
    if (target_in.batch_size != enc.batch)
        throw std::invalid_argument("decode: batch size mismatch with encoder states");
    for (size_t r = 0; r < target_in.batch_size; ++r)
        if (target_in.at(r, 0) != Vocab::bos_id)
            throw std::invalid_argument("decode: target does not begin with BOS");

    detail::ForwardCtx ctx{g, dropout_rng};
    Tensor x = detail::embed_tokens(ctx, p, target_in.ids, target_in.width, out_lang);
    for (size_t i = 0; i < p.cfg.dec_layers; ++i) {
        const std::string prefix = "dec." + std::to_string(i);
        Tensor h = layer_norm(g, x, p.set.at(prefix + ".ln1.g"), p.set.at(prefix + ".ln1.b"));
        Tensor a = detail::attn_block(ctx, p, prefix + ".self", h, h, target_in.batch_size,
                                      target_in.width, target_in.width, target_in.lens, /*causal=*/true);
        x = add(g, x, detail::maybe_dropout(ctx, p, a));
        Tensor h2 = layer_norm(g, x, p.set.at(prefix + ".ln2.g"), p.set.at(prefix + ".ln2.b"));
        Tensor c = detail::attn_block(ctx, p, prefix + ".cross", h2, enc.states, enc.batch,
                                      target_in.width, enc.width, enc.lens, /*causal=*/false);
        x = add(g, x, detail::maybe_dropout(ctx, p, c));
        Tensor h3 = layer_norm(g, x, p.set.at(prefix + ".ln3.g"), p.set.at(prefix + ".ln3.b"));
        Tensor f = detail::ffn_block(ctx, p, prefix + ".ffn", h3);
        x = add(g, x, detail::maybe_dropout(ctx, p, f));
    }
    DecodeResult out;
    out.hidden = layer_norm(g, x, p.set.at("dec.ln_out.g"), p.set.at("dec.ln_out.b"));
    out.logits = matmul(g, out.hidden, p.set.at("emb.tok"), false, true);
    std::vector<size_t> first_rows(target_in.batch_size);
    for (size_t r = 0; r < target_in.batch_size; ++r) first_rows[r] = r * target_in.width;
    out.first_step.hidden = gather_rows(g, out.hidden, first_rows);
    out.first_step.input_lang = enc.lang;
    out.first_step.output_lang = out_lang;
    out.first_step.detached = (g == nullptr);
    out.batch = target_in.batch_size;
    out.width = target_in.width;
    return out;
}

// Decoder input/targets/weights for loss computation, derived from a wrapped
// batch: input drops the last column, targets drop the first, weights select
// real (non-PAD) target positions.
struct DecoderIO {
    Batch input;
    std::vector<int> targets;     // flat, batch * (width-1)
    std::vector<double> weights;  // 1.0 on real targets
};

inline DecoderIO make_decoder_io(const Batch& wrapped) {
    if (wrapped.width < 2) throw std::invalid_argument("make_decoder_io: batch too narrow");
    DecoderIO io;
    io.input.batch_size = wrapped.batch_size;
    io.input.width = wrapped.width - 1;
    io.input.lang = wrapped.lang;
    io.input.ids.resize(io.input.batch_size * io.input.width);
    io.input.lens.resize(wrapped.batch_size);
    io.targets.resize(io.input.batch_size * io.input.width);
    io.weights.assign(io.input.batch_size * io.input.width, 0.0);
    for (size_t r = 0; r < wrapped.batch_size; ++r) {
        io.input.lens[r] = wrapped.lens[r] - 1;
        for (size_t c = 0; c + 1 < wrapped.width; ++c) {
            io.input.ids[r * io.input.width + c] = wrapped.at(r, c);
            io.targets[r * io.input.width + c] = wrapped.at(r, c + 1);
            if (c + 1 < static_cast<size_t>(wrapped.lens[r]))
                io.weights[r * io.input.width + c] = 1.0;
        }
    }
    return io;
}

}  // namespace unmt
