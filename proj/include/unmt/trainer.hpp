// The training schedule. Each per-language block runs a DAE step followed
// (after warm-up) by a BT step:
//
//   DAE step: reconstruct the original batch from its noised version; the
//   reconstruction loss updates the encoder/decoder. The first-time-step
//   outputs are detached and train the discriminator alone.
//
//   BT step: greedily translate the batch into the other language while
//   capturing graph-linked first-step outputs, then reconstruct the original
//   from the intermediate translation. The reconstruction loss plus
//   lambda_ld times the discriminator loss on the captured outputs (with the
//   discriminator frozen) updates the encoder/decoder only. The intermediate
//   token sequences are treated as data.
//
// lambda_ld == 0 skips the discriminator branch entirely, so such a run is
// bit-for-bit the vanilla system.
#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "unmt/checkpoint.hpp"
#include "unmt/evaluate.hpp"
#include "unmt/noise.hpp"
#include "unmt/train_state.hpp"

namespace unmt {

inline TrainState init_train_state(const TrainConfig& cfg, const ModelConfig& mcfg,
                                   const Vocab& vocab) {
    cfg.validate();
    TrainState st;
    st.seed = cfg.seed;
    st.ld_enabled = cfg.ld_enabled;
    Rng model_rng = make_rng(cfg.seed, "init-model");
    st.model = Parameters(mcfg, vocab.size(), model_rng);
    st.opt_model = AdamState::for_params(st.model.set, AdamConfig{.lr = cfg.learning_rate});
    if (cfg.ld_enabled) {
        Rng ld_rng = make_rng(cfg.seed, "init-ld");
        st.ld = DiscriminatorParams(mcfg.embed_dim, ld_rng);
        st.opt_ld = AdamState::for_params(st.ld.set, AdamConfig{.lr = cfg.learning_rate});
    }
    return st;
}

// Noises each sentence of a wrapped batch and re-wraps.
inline Batch noised_batch(const Batch& batch, const NoiseConfig& cfg, Rng& rng) {
    std::vector<std::vector<int>> rows;
    rows.reserve(batch.batch_size);
    for (size_t r = 0; r < batch.batch_size; ++r) {
        std::vector<int> body;
        for (size_t c = 1; c + 1 < batch.width && batch.at(r, c) != Vocab::eos_id; ++c)
            body.push_back(batch.at(r, c));
        rows.push_back(apply_noise(body, cfg, rng));
    }
    return make_batch(rows, batch.lang);
}

// One DAE step on `batch`'s language. Returns (dae_loss, ld_train_loss).
inline std::pair<double, double> dae_step(TrainState& st, const TrainConfig& cfg, const Batch& batch,
                                          Lang lang, Rng& noise_rng, Rng* dropout_rng = nullptr) {
    if (batch.batch_size == 0) throw std::invalid_argument("dae_step: empty batch");
    Batch noised = noised_batch(batch, cfg.noise, noise_rng);

    Graph g;
    EncodeResult enc = encode(&g, st.model, noised, lang, dropout_rng);
    DecoderIO io = make_decoder_io(batch);
    DecodeResult dec = decode_teacher_forced(&g, st.model, enc, io.input, lang, dropout_rng);
    Tensor dae_loss = cross_entropy_rows(&g, dec.logits, io.targets, io.weights);

    g.backward(dae_loss);
    clip_global_norm(st.model.set, cfg.clip_norm);
    adam_step(st.model.set, st.opt_model);
    st.model.set.zero_grad();

    double ld_value = 0.0;
    if (st.ld_enabled) {
        // detached outputs on a fresh tape: only theta_LD can learn here
        Tensor detached = dec.first_step.hidden.detach();
        Graph g_ld;
        Tensor ld_train = ld_loss(&g_ld, st.ld, detached, static_cast<int>(lang));
        g_ld.backward(ld_train);
        clip_global_norm(st.ld.set, cfg.clip_norm);
        adam_step(st.ld.set, st.opt_ld);
        st.ld.set.zero_grad();
        ld_value = ld_train.item();
    }
    return {dae_loss.item(), ld_value};
}

// One BT step: src_lang -> tgt_lang -> src_lang. Returns
// (bt_loss, ld_constraint_loss).
inline std::pair<double, double> bt_step(TrainState& st, const TrainConfig& cfg, const Batch& batch,
                                         Lang src_lang, Lang tgt_lang, double lambda_ld,
                                         Rng* dropout_rng = nullptr) {
    if (src_lang == tgt_lang) throw std::invalid_argument("bt_step: languages must differ");
    if (batch.batch_size == 0) throw std::invalid_argument("bt_step: empty batch");
    const bool use_ld = st.ld_enabled && lambda_ld > 0.0;

    Graph g;
    const size_t gen_cap = st.model.cfg.max_len - 2;  // room for re-wrapping
    GreedyResult gen = generate_greedy(use_ld ? &g : nullptr, st.model, batch, src_lang, tgt_lang,
                                       gen_cap);
    st.generations += 1;

    // intermediate sentences as data; empty ones are skipped for L_BT
    std::vector<std::vector<int>> inter;
    std::vector<std::vector<int>> orig_rows;
    for (size_t r = 0; r < batch.batch_size; ++r) {
        std::vector<int> stripped = strip_specials(gen.sequences[r]);
        if (stripped.empty()) continue;
        inter.push_back(std::move(stripped));
        std::vector<int> body;
        for (size_t c = 1; c + 1 < batch.width && batch.at(r, c) != Vocab::eos_id; ++c)
            body.push_back(batch.at(r, c));
        orig_rows.push_back(std::move(body));
    }

    Tensor bt_loss = Tensor::scalar(0.0);
    Tensor recon_first;
    bool have_bt = !inter.empty();
    if (have_bt) {
        Batch inter_batch = make_batch(inter, tgt_lang);
        Batch orig_batch = make_batch(orig_rows, src_lang);
        EncodeResult enc_t = encode(&g, st.model, inter_batch, tgt_lang, dropout_rng);
        DecoderIO io = make_decoder_io(orig_batch);
        DecodeResult dec = decode_teacher_forced(&g, st.model, enc_t, io.input, src_lang, dropout_rng);
        bt_loss = cross_entropy_rows(&g, dec.logits, io.targets, io.weights);
        recon_first = dec.first_step.hidden;
    }

    double ld_value = 0.0;
    Tensor total = bt_loss;
    if (use_ld) {
        Tensor ld_constraint = ld_loss(&g, st.ld, gen.first_step, tgt_lang, /*frozen=*/true);
        ld_value = ld_constraint.item();
        Tensor weighted = scale(&g, ld_constraint, lambda_ld);
        if (cfg.ld_on_reconstruction && have_bt) {
            Tensor rev = ld_loss(&g, st.ld, recon_first, static_cast<int>(src_lang), /*frozen=*/true);
            weighted = add(&g, weighted, scale(&g, rev, lambda_ld));
        }
        total = have_bt ? add(&g, bt_loss, weighted) : weighted;
    }

    if (total.node() >= 0) {
        g.backward(total);
        clip_global_norm(st.model.set, cfg.clip_norm);
        adam_step(st.model.set, st.opt_model);
        st.model.set.zero_grad();
        st.bt_updates += 1;
    }
    return {have_bt ? bt_loss.item() : 0.0, ld_value};
}

struct DataBundle {
    Corpus train_src, train_tgt;
    Corpus valid_src, valid_tgt;  // parallel
    Corpus test_src, test_tgt;    // parallel
    Vocab vocab;

    static DataBundle from_pair(const SyntheticPair& pair) {
        DataBundle d;
        d.train_src = pair.train_src;
        d.train_tgt = pair.train_tgt;
        d.valid_src = pair.valid_src;
        d.valid_tgt = pair.valid_tgt;
        d.test_src = pair.test_src;
        d.test_tgt = pair.test_tgt;
        d.vocab = build_vocab({&pair.train_src, &pair.train_tgt});
        return d;
    }
};

struct TrainOptions {
    std::filesystem::path out_dir;  // empty: no checkpoints / metrics file
    bool resume = false;
    bool quiet = true;
};

inline void append_metrics_line(const std::filesystem::path& out_dir, const EpochRecord& rec) {
    if (out_dir.empty()) return;
    std::ofstream out(out_dir / "metrics.jsonl", std::ios::app);
    if (!out) throw std::runtime_error("cannot append metrics log in " + out_dir.string());
    out << to_json(rec).dump() << '\n';
}

// Full training loop: per epoch, interleaved per-language blocks over
// shuffled batches, then greedy validation in both directions, logging, and
// early stopping on the averaged validation BLEU.
inline TrainState train(const TrainConfig& cfg, const ModelConfig& mcfg, const DataBundle& data,
                        const TrainOptions& opts = {}) {
    cfg.validate();
    mcfg.validate();
    if (data.train_src.size() == 0 || data.train_tgt.size() == 0)
        throw std::invalid_argument("train: empty training corpus");
    if (data.valid_src.size() != data.valid_tgt.size() || data.valid_src.size() == 0)
        throw std::invalid_argument("train: validation split must be parallel and nonempty");

    TrainState st;
    if (opts.resume) {
        const auto path = opts.out_dir / "last.ckpt";
        LoadedCheckpoint loaded = load_checkpoint(path);
        if (to_json(loaded.train_cfg) != to_json(cfg))
            throw std::runtime_error("resume: checkpoint train config does not match");
        if (loaded.vocab.tokens() != data.vocab.tokens())
            throw std::runtime_error("resume: checkpoint vocabulary does not match the corpora");
        st = std::move(loaded.state);
    } else {
        st = init_train_state(cfg, mcfg, data.vocab);
        if (!opts.out_dir.empty()) {
            std::filesystem::create_directories(opts.out_dir);
            std::filesystem::remove(opts.out_dir / "metrics.jsonl");
        }
    }

    const size_t gen_max = mcfg.max_len - 2;
    bool stop = false;
    for (size_t epoch = st.epoch + 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
        if (st.step >= cfg.max_steps) break;
        auto src_batches = batch_iter(data.train_src, data.vocab, cfg.batch_size,
                                      derive_seed(cfg.seed, "order-src", epoch));
        auto tgt_batches = batch_iter(data.train_tgt, data.vocab, cfg.batch_size,
                                      derive_seed(cfg.seed, "order-tgt", epoch));
        Rng noise_src = Rng(derive_seed(cfg.seed, "noise-src", epoch));
        Rng noise_tgt = Rng(derive_seed(cfg.seed, "noise-tgt", epoch));
        Rng dropout_rng = Rng(derive_seed(cfg.seed, "dropout", epoch));
        Rng* drop = mcfg.dropout > 0.0 ? &dropout_rng : nullptr;
        const bool bt_active = epoch > cfg.warmup_epochs;

        EpochRecord rec;
        rec.epoch = epoch;
        size_t blocks_src = 0, blocks_tgt = 0;
        const size_t n_pairs = std::min(src_batches.size(), tgt_batches.size());
        for (size_t i = 0; i < n_pairs && st.step < cfg.max_steps; ++i) {
            {
                auto [dae, ld] = dae_step(st, cfg, src_batches[i], Lang::src, noise_src, drop);
                rec.dae_loss_src += dae;
                rec.ld_dae_loss += ld;
                if (bt_active) {
                    auto [bt, ldc] =
                        bt_step(st, cfg, src_batches[i], Lang::src, Lang::tgt, cfg.lambda_ld, drop);
                    rec.bt_loss_src += bt;
                    rec.ld_bt_loss += ldc;
                }
                st.step += 1;
                blocks_src += 1;
            }
            if (st.step >= cfg.max_steps) break;
            {
                auto [dae, ld] = dae_step(st, cfg, tgt_batches[i], Lang::tgt, noise_tgt, drop);
                rec.dae_loss_tgt += dae;
                rec.ld_dae_loss += ld;
                if (bt_active) {
                    auto [bt, ldc] =
                        bt_step(st, cfg, tgt_batches[i], Lang::tgt, Lang::src, cfg.lambda_ld, drop);
                    rec.bt_loss_tgt += bt;
                    rec.ld_bt_loss += ldc;
                }
                st.step += 1;
                blocks_tgt += 1;
            }
        }
        if (blocks_src) {
            rec.dae_loss_src /= static_cast<double>(blocks_src);
            rec.bt_loss_src /= static_cast<double>(blocks_src);
        }
        if (blocks_tgt) {
            rec.dae_loss_tgt /= static_cast<double>(blocks_tgt);
            rec.bt_loss_tgt /= static_cast<double>(blocks_tgt);
        }
        if (blocks_src + blocks_tgt) {
            rec.ld_dae_loss /= static_cast<double>(blocks_src + blocks_tgt);
            if (bt_active) rec.ld_bt_loss /= static_cast<double>(blocks_src + blocks_tgt);
        }

        // greedy validation, both directions
        auto hyp_s2t = translate_corpus(st.model, data.vocab, data.valid_src, Lang::src, Lang::tgt,
                                        cfg.valid_batch_size, 1, gen_max);
        auto hyp_t2s = translate_corpus(st.model, data.vocab, data.valid_tgt, Lang::tgt, Lang::src,
                                        cfg.valid_batch_size, 1, gen_max);
        rec.bleu_src2tgt = bleu(hyp_s2t, data.valid_tgt.sentences);
        rec.bleu_tgt2src = bleu(hyp_t2s, data.valid_src.sentences);
        rec.bleu_valid = 0.5 * (rec.bleu_src2tgt + rec.bleu_tgt2src);
        rec.copy_src2tgt = copying_ratio(data.valid_src.sentences, hyp_s2t);
        rec.copy_tgt2src = copying_ratio(data.valid_tgt.sentences, hyp_t2s);

        st.log.push_back(rec);
        st.epoch = epoch;
        append_metrics_line(opts.out_dir, rec);
        if (!opts.quiet) {
            std::fprintf(stderr,
                         "epoch %zu dae %.4f/%.4f bt %.4f/%.4f ld %.4f/%.4f copy %.3f/%.3f bleu %.2f\n",
                         epoch, rec.dae_loss_src, rec.dae_loss_tgt, rec.bt_loss_src, rec.bt_loss_tgt,
                         rec.ld_dae_loss, rec.ld_bt_loss, rec.copy_src2tgt, rec.copy_tgt2src,
                         rec.bleu_valid);
        }

        if (rec.bleu_valid > st.best_bleu) {
            st.best_bleu = rec.bleu_valid;
            st.best_epoch = epoch;
            st.stagnant = 0;
            if (!opts.out_dir.empty()) save_checkpoint(opts.out_dir / "best.ckpt", st, cfg, data.vocab);
        } else {
            st.stagnant += 1;
        }
        if (!opts.out_dir.empty()) save_checkpoint(opts.out_dir / "last.ckpt", st, cfg, data.vocab);
        if (st.stagnant >= cfg.patience) stop = true;
    }
    return st;
}

// ---------------------------------------------------------------------------
// lambda sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    double lambda_ld = 0.0;
    double bleu_src2tgt = 0.0, copy_src2tgt = 0.0;
    double bleu_tgt2src = 0.0, copy_tgt2src = 0.0;
};

// Trains once per lambda with identical seeds and data, then scores the test
// split with beam search. Rows land in the order of `lambdas`.
inline std::vector<SweepRow> sweep(const TrainConfig& base, const ModelConfig& mcfg,
                                   const std::vector<double>& lambdas, const DataBundle& data,
                                   size_t beam, const std::filesystem::path& out_root = {},
                                   bool quiet = true) {
    std::vector<SweepRow> rows;
    for (double lambda : lambdas) {
        if (lambda < 0.0) throw std::invalid_argument("sweep: lambda values must be >= 0");
        TrainConfig cfg = base;
        cfg.lambda_ld = lambda;
        TrainOptions opts;
        opts.quiet = quiet;
        if (!out_root.empty()) {
            std::ostringstream name;
            name << "lambda_" << lambda;
            opts.out_dir = out_root / name.str();
        }
        TrainState st = train(cfg, mcfg, data, opts);
        const size_t gen_max = mcfg.max_len - 2;
        auto s2t = evaluate_direction(st.model, data.vocab, data.test_src, data.test_tgt, Lang::src,
                                      Lang::tgt, cfg.valid_batch_size, beam, gen_max);
        auto t2s = evaluate_direction(st.model, data.vocab, data.test_tgt, data.test_src, Lang::tgt,
                                      Lang::src, cfg.valid_batch_size, beam, gen_max);
        rows.push_back({lambda, s2t.bleu_score, s2t.copying, t2s.bleu_score, t2s.copying});
    }
    return rows;
}

// Tab-separated table in the usual sweep layout: one row per lambda, BLEU and
// copying ratio per direction.
inline std::string sweep_table(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "lambda_ld\tbleu_src2tgt\tcopy_src2tgt\tbleu_tgt2src\tcopy_tgt2src\n";
    for (const auto& r : rows) {
        out << r.lambda_ld << '\t' << r.bleu_src2tgt << '\t' << r.copy_src2tgt << '\t'
            << r.bleu_tgt2src << '\t' << r.copy_tgt2src << '\n';
    }
    return out.str();
}

}  // namespace unmt
