// Corpus translation and evaluation: per-direction BLEU/chrF/copying/token
// accuracy, and the first-step-output PCA analysis over the four direction
// categories.
#pragma once

#include <string>
#include <vector>

#include "unmt/corpus.hpp"
#include "unmt/decoding.hpp"
#include "unmt/metrics.hpp"
#include "unmt/model.hpp"

namespace unmt {

// Translates in corpus order (no shuffling). beam == 1 uses batched greedy
// decoding; larger beams search per sentence.
inline std::vector<TokenSeq> translate_corpus(const Parameters& p, const Vocab& vocab,
                                              const Corpus& src, Lang src_lang, Lang out_lang,
                                              size_t batch_size, size_t beam, size_t max_len) {
    if (batch_size < 1) throw std::invalid_argument("translate_corpus: batch_size must be >= 1");
    std::vector<TokenSeq> hyps;
    hyps.reserve(src.size());
    for (size_t start = 0; start < src.size(); start += batch_size) {
        const size_t end = std::min(src.size(), start + batch_size);
        std::vector<std::vector<int>> rows;
        rows.reserve(end - start);
        for (size_t i = start; i < end; ++i) rows.push_back(to_ids(vocab, src.sentences[i]));
        Batch b = make_batch(rows, src_lang);
        std::vector<std::vector<int>> seqs;
        if (beam == 1) {
            seqs = generate_greedy(nullptr, p, b, src_lang, out_lang, max_len).sequences;
        } else {
            seqs = generate_beam(p, b, src_lang, out_lang, max_len, beam);
        }
        for (const auto& s : seqs) hyps.push_back(to_tokens(vocab, strip_specials(s)));
    }
    return hyps;
}

struct DirectionReport {
    double bleu_score = 0.0;
    double chrf_score = 0.0;
    double copying = 0.0;
    double token_acc = 0.0;
    std::vector<TokenSeq> hyps;
};

inline DirectionReport evaluate_direction(const Parameters& p, const Vocab& vocab,
                                          const Corpus& src, const Corpus& refs, Lang src_lang,
                                          Lang out_lang, size_t batch_size, size_t beam,
                                          size_t max_len) {
    if (src.size() != refs.size())
        throw std::invalid_argument("evaluate_direction: src/refs are not parallel");
    DirectionReport rep;
    rep.hyps = translate_corpus(p, vocab, src, src_lang, out_lang, batch_size, beam, max_len);
    rep.bleu_score = bleu(rep.hyps, refs.sentences);
    rep.chrf_score = chrf(rep.hyps, refs.sentences);
    rep.copying = copying_ratio(src.sentences, rep.hyps);
    rep.token_acc = token_accuracy(rep.hyps, refs.sentences);
    return rep;
}

// ---------------------------------------------------------------------------
// PCA over first-time-step outputs
// ---------------------------------------------------------------------------

struct PcaAnalysis {
    std::vector<std::string> labels;  // one of src2src / src2tgt / tgt2src / tgt2tgt per row
    PcaResult projection;
    // centroid distances in the 2-D projection
    double d_s2t_t2t = 0.0, d_s2t_s2s = 0.0, d_t2s_s2s = 0.0, d_t2s_t2t = 0.0;
    bool clustered_correctly = false;
};

namespace detail {

inline void collect_first_steps(const Parameters& p, const Vocab& vocab, const Corpus& corpus,
                                Lang in_lang, Lang out_lang, size_t count, size_t batch_size,
                                std::vector<double>& rows) {
    for (size_t start = 0; start < count; start += batch_size) {
        const size_t end = std::min(count, start + batch_size);
        std::vector<std::vector<int>> ids;
        for (size_t i = start; i < end; ++i) ids.push_back(to_ids(vocab, corpus.sentences[i]));
        Batch b = make_batch(ids, in_lang);
        EncodeResult enc = encode(nullptr, p, b, in_lang);
        std::vector<std::vector<int>> bos(end - start);
        DecodeResult d = decode_teacher_forced(nullptr, p, enc, prefix_batch(bos), out_lang);
        rows.insert(rows.end(), d.first_step.hidden.value().begin(),
                    d.first_step.hidden.value().end());
    }
}

}  // namespace detail

// First-step outputs for the four direction categories on the same parallel
// sentences, projected to 2-D. The clustering predicate asks whether each
// translation direction's outputs sit closer to the autoencoding outputs of
// its *output* language than to those of its input language.
inline PcaAnalysis pca_first_steps(const Parameters& p, const Vocab& vocab, const Corpus& src_pairs,
                                   const Corpus& tgt_pairs, size_t max_sentences = 512,
                                   size_t batch_size = 64) {
    if (src_pairs.size() != tgt_pairs.size() || src_pairs.size() == 0)
        throw std::invalid_argument("pca_first_steps: need nonempty parallel pairs");
    const size_t n = std::min(max_sentences, src_pairs.size());
    const size_t d = p.cfg.embed_dim;

    PcaAnalysis out;
    std::vector<double> rows;
    rows.reserve(4 * n * d);
    struct Cat {
        const char* label;
        const Corpus* corpus;
        Lang in, outl;
    };
    const Cat cats[4] = {{"src2src", &src_pairs, Lang::src, Lang::src},
                         {"src2tgt", &src_pairs, Lang::src, Lang::tgt},
                         {"tgt2src", &tgt_pairs, Lang::tgt, Lang::src},
                         {"tgt2tgt", &tgt_pairs, Lang::tgt, Lang::tgt}};
    for (const auto& c : cats) {
        detail::collect_first_steps(p, vocab, *c.corpus, c.in, c.outl, n, batch_size, rows);
        for (size_t i = 0; i < n; ++i) out.labels.emplace_back(c.label);
    }
    out.projection = pca_project(rows, 4 * n, d);

    double cx[4] = {}, cy[4] = {};
    for (size_t cat = 0; cat < 4; ++cat) {
        for (size_t i = 0; i < n; ++i) {
            cx[cat] += out.projection.coords[(cat * n + i) * 2];
            cy[cat] += out.projection.coords[(cat * n + i) * 2 + 1];
        }
        cx[cat] /= static_cast<double>(n);
        cy[cat] /= static_cast<double>(n);
    }
    auto dist = [&](size_t a, size_t b) {
        return std::hypot(cx[a] - cx[b], cy[a] - cy[b]);
    };
    // order: 0 src2src, 1 src2tgt, 2 tgt2src, 3 tgt2tgt
    out.d_s2t_t2t = dist(1, 3);
    out.d_s2t_s2s = dist(1, 0);
    out.d_t2s_s2s = dist(2, 0);
    out.d_t2s_t2t = dist(2, 3);
    out.clustered_correctly = out.d_s2t_t2t < out.d_s2t_s2s && out.d_t2s_s2s < out.d_t2s_t2t;
    return out;
}

}  // namespace unmt
