// Training configuration, per-epoch metrics records, and the mutable
// training state, plus JSON conversions for everything that needs to live in
// config files and checkpoints.
#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "unmt/adam.hpp"
#include "unmt/corpus.hpp"
#include "unmt/discriminator.hpp"
#include "unmt/model.hpp"
#include "unmt/noise.hpp"

namespace unmt {

using json = nlohmann::json;

struct TrainConfig {
    double lambda_ld = 1.0;
    int64_t max_steps = std::numeric_limits<int64_t>::max();  // T
    size_t max_epochs = 20;
    size_t warmup_epochs = 2;  // DAE + LD only
    size_t batch_size = 32;
    NoiseConfig noise;
    size_t patience = 5;
    uint64_t seed = 1;
    double learning_rate = 1e-4;
    double clip_norm = 5.0;
    bool ld_enabled = true;
    // extension, off by default: also constrain the first-step outputs of the
    // reconstruction half of the BT round trip
    bool ld_on_reconstruction = false;
    size_t valid_batch_size = 64;

    void validate() const {
        if (lambda_ld < 0.0) throw std::invalid_argument("train config: lambda_ld must be >= 0");
        if (!ld_enabled && lambda_ld != 0.0)
            throw std::invalid_argument("train config: lambda_ld > 0 needs the discriminator enabled");
        if (patience < 1) throw std::invalid_argument("train config: patience must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
        if (max_steps < 0) throw std::invalid_argument("train config: max_steps must be >= 0");
        if (learning_rate <= 0.0) throw std::invalid_argument("train config: learning_rate must be > 0");
        noise.validate();
    }

    bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
    size_t epoch = 0;
    double dae_loss_src = 0.0, dae_loss_tgt = 0.0;
    double bt_loss_src = 0.0, bt_loss_tgt = 0.0;  // round trip starting from that side
    double ld_dae_loss = 0.0, ld_bt_loss = 0.0;
    double copy_src2tgt = 0.0, copy_tgt2src = 0.0;
    double bleu_src2tgt = 0.0, bleu_tgt2src = 0.0;
    double bleu_valid = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainState {
    Parameters model;
    DiscriminatorParams ld;
    bool ld_enabled = true;
    AdamState opt_model, opt_ld;
    int64_t step = 0;  // t, one per per-language block
    size_t epoch = 0;  // completed epochs
    double best_bleu = -1.0;
    size_t best_epoch = 0;
    size_t stagnant = 0;
    std::vector<EpochRecord> log;
    uint64_t seed = 1;
    // schedule counters used by the warm-up contract
    int64_t bt_updates = 0;
    int64_t generations = 0;
};

// ---------------------------------------------------------------------------
// JSON conversions
// ---------------------------------------------------------------------------

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw std::invalid_argument("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void maybe_get(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

inline json to_json(const ModelConfig& c) {
    return {{"embed_dim", c.embed_dim},   {"enc_layers", c.enc_layers},
            {"dec_layers", c.dec_layers}, {"heads", c.heads},
            {"ffn_dim", c.ffn_dim},       {"max_len", c.max_len},
            {"dropout", c.dropout}};
}

inline ModelConfig model_config_from_json(const json& j) {
    check_keys(j, {"embed_dim", "enc_layers", "dec_layers", "heads", "ffn_dim", "max_len", "dropout"},
               "model config");
    ModelConfig c;
    maybe_get(j, "embed_dim", c.embed_dim);
    maybe_get(j, "enc_layers", c.enc_layers);
    maybe_get(j, "dec_layers", c.dec_layers);
    maybe_get(j, "heads", c.heads);
    maybe_get(j, "ffn_dim", c.ffn_dim);
    maybe_get(j, "max_len", c.max_len);
    maybe_get(j, "dropout", c.dropout);
    c.validate();
    return c;
}

inline json to_json(const NoiseConfig& c) {
    return {{"shuffle_k", c.shuffle_k}, {"drop_prob", c.drop_prob}, {"blank_prob", c.blank_prob}};
}

inline NoiseConfig noise_config_from_json(const json& j) {
    check_keys(j, {"shuffle_k", "drop_prob", "blank_prob"}, "noise config");
    NoiseConfig c;
    maybe_get(j, "shuffle_k", c.shuffle_k);
    maybe_get(j, "drop_prob", c.drop_prob);
    maybe_get(j, "blank_prob", c.blank_prob);
    c.validate();
    return c;
}

inline json to_json(const TrainConfig& c) {
    return {{"lambda_ld", c.lambda_ld},
            {"max_steps", c.max_steps},
            {"max_epochs", c.max_epochs},
            {"warmup_epochs", c.warmup_epochs},
            {"batch_size", c.batch_size},
            {"noise", to_json(c.noise)},
            {"patience", c.patience},
            {"seed", c.seed},
            {"learning_rate", c.learning_rate},
            {"clip_norm", c.clip_norm},
            {"ld_enabled", c.ld_enabled},
            {"ld_on_reconstruction", c.ld_on_reconstruction},
            {"valid_batch_size", c.valid_batch_size}};
}

inline TrainConfig train_config_from_json(const json& j) {
    check_keys(j,
               {"lambda_ld", "max_steps", "max_epochs", "warmup_epochs", "batch_size", "noise",
                "patience", "seed", "learning_rate", "clip_norm", "ld_enabled",
                "ld_on_reconstruction", "valid_batch_size"},
               "train config");
    TrainConfig c;
    maybe_get(j, "lambda_ld", c.lambda_ld);
    maybe_get(j, "max_steps", c.max_steps);
    maybe_get(j, "max_epochs", c.max_epochs);
    maybe_get(j, "warmup_epochs", c.warmup_epochs);
    maybe_get(j, "batch_size", c.batch_size);
    if (j.contains("noise")) c.noise = noise_config_from_json(j.at("noise"));
    maybe_get(j, "patience", c.patience);
    maybe_get(j, "seed", c.seed);
    maybe_get(j, "learning_rate", c.learning_rate);
    maybe_get(j, "clip_norm", c.clip_norm);
    maybe_get(j, "ld_enabled", c.ld_enabled);
    maybe_get(j, "ld_on_reconstruction", c.ld_on_reconstruction);
    maybe_get(j, "valid_batch_size", c.valid_batch_size);
    c.validate();
    return c;
}

inline json to_json(const SyntheticSpec& s) {
    return {{"vocab_per_lang", s.vocab_per_lang},
            {"train_sentences", s.train_sentences},
            {"valid_sentences", s.valid_sentences},
            {"test_sentences", s.test_sentences},
            {"len_min", s.len_min},
            {"len_max", s.len_max},
            {"reorder", reorder_name(s.reorder)},
            {"seed", s.seed},
            {"zipf_exponent", s.zipf_exponent},
            {"bigram_bias", s.bigram_bias},
            {"successor_count", s.successor_count},
            {"reorder_window", s.reorder_window},
            {"cipher", s.cipher}};
}

inline SyntheticSpec synthetic_spec_from_json(const json& j) {
    check_keys(j,
               {"vocab_per_lang", "train_sentences", "valid_sentences", "test_sentences", "len_min",
                "len_max", "reorder", "seed", "zipf_exponent", "bigram_bias", "successor_count",
                "reorder_window", "cipher"},
               "data config");
    SyntheticSpec s;
    maybe_get(j, "vocab_per_lang", s.vocab_per_lang);
    maybe_get(j, "train_sentences", s.train_sentences);
    maybe_get(j, "valid_sentences", s.valid_sentences);
    maybe_get(j, "test_sentences", s.test_sentences);
    maybe_get(j, "len_min", s.len_min);
    maybe_get(j, "len_max", s.len_max);
    if (j.contains("reorder")) s.reorder = reorder_from_name(j.at("reorder").get<std::string>());
    maybe_get(j, "seed", s.seed);
    maybe_get(j, "zipf_exponent", s.zipf_exponent);
    maybe_get(j, "bigram_bias", s.bigram_bias);
    maybe_get(j, "successor_count", s.successor_count);
    maybe_get(j, "reorder_window", s.reorder_window);
    maybe_get(j, "cipher", s.cipher);
    s.validate();
    return s;
}

inline json to_json(const EpochRecord& r) {
    return {{"epoch", r.epoch},
            {"dae_loss_src", r.dae_loss_src},
            {"dae_loss_tgt", r.dae_loss_tgt},
            {"bt_loss_src", r.bt_loss_src},
            {"bt_loss_tgt", r.bt_loss_tgt},
            {"ld_dae_loss", r.ld_dae_loss},
            {"ld_bt_loss", r.ld_bt_loss},
            {"copy_src2tgt", r.copy_src2tgt},
            {"copy_tgt2src", r.copy_tgt2src},
            {"bleu_src2tgt", r.bleu_src2tgt},
            {"bleu_tgt2src", r.bleu_tgt2src},
            {"bleu_valid", r.bleu_valid}};
}

inline EpochRecord epoch_record_from_json(const json& j) {
    EpochRecord r;
    j.at("epoch").get_to(r.epoch);
    j.at("dae_loss_src").get_to(r.dae_loss_src);
    j.at("dae_loss_tgt").get_to(r.dae_loss_tgt);
    j.at("bt_loss_src").get_to(r.bt_loss_src);
    j.at("bt_loss_tgt").get_to(r.bt_loss_tgt);
    j.at("ld_dae_loss").get_to(r.ld_dae_loss);
    j.at("ld_bt_loss").get_to(r.ld_bt_loss);
    j.at("copy_src2tgt").get_to(r.copy_src2tgt);
    j.at("copy_tgt2src").get_to(r.copy_tgt2src);
    j.at("bleu_src2tgt").get_to(r.bleu_src2tgt);
    j.at("bleu_tgt2src").get_to(r.bleu_tgt2src);
    j.at("bleu_valid").get_to(r.bleu_valid);
    return r;
}

}  // namespace unmt
