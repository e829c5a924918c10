// Greedy and beam decoding.
//
// The search itself is generic over a step scorer (prefix -> next-token
// log-probabilities) so it can be exercised against exhaustive enumeration
// on toy scorers. Beam ranking is by length-normalized log-probability; the
// pure greedy continuation is always kept as a candidate, so the returned
// hypothesis never scores below greedy under the same normalization.
#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "unmt/corpus.hpp"
#include "unmt/model.hpp"

namespace unmt {

using StepScorer = std::function<std::vector<double>(const std::vector<int>& prefix)>;

inline size_t argmax_index(const std::vector<double>& v) {
    size_t best = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// Argmax chain until EOS or max_len tokens.
inline std::vector<int> greedy_chain(const StepScorer& scorer, int eos, size_t max_len) {
    if (max_len < 1) throw std::invalid_argument("greedy_chain: max_len must be >= 1");
    std::vector<int> seq;
    while (seq.size() < max_len) {
        const auto scores = scorer(seq);
        const int tok = static_cast<int>(argmax_index(scores));
        seq.push_back(tok);
        if (tok == eos) break;
    }
    return seq;
}

inline double sequence_logprob(const StepScorer& scorer, const std::vector<int>& seq) {
    double lp = 0.0;
    std::vector<int> prefix;
    for (int tok : seq) {
        lp += scorer(prefix)[static_cast<size_t>(tok)];
        prefix.push_back(tok);
    }
    return lp;
}

inline std::vector<int> beam_decode(const StepScorer& scorer, int eos, size_t max_len, size_t beam) {
    if (beam < 1) throw std::invalid_argument("beam_decode: beam must be >= 1");
    if (max_len < 1) throw std::invalid_argument("beam_decode: max_len must be >= 1");

    struct Hyp {
        std::vector<int> tokens;
        double logp = 0.0;
        double norm() const {
            return tokens.empty() ? -std::numeric_limits<double>::infinity()
                                  : logp / static_cast<double>(tokens.size());
        }
    };

    std::vector<Hyp> live{{}};
    std::vector<Hyp> finished;
    for (size_t t = 0; t < max_len && !live.empty(); ++t) {
        struct Cand {
            size_t parent;
            int tok;
            double logp;
        };
        std::vector<Cand> cands;
        cands.reserve(live.size() * 8);
        for (size_t h = 0; h < live.size(); ++h) {
            const auto scores = scorer(live[h].tokens);
            for (size_t v = 0; v < scores.size(); ++v)
                cands.push_back({h, static_cast<int>(v), live[h].logp + scores[v]});
        }
        const size_t keep = std::min(beam, cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(),
                          [](const Cand& a, const Cand& b) {
                              if (a.logp != b.logp) return a.logp > b.logp;
                              if (a.parent != b.parent) return a.parent < b.parent;
                              return a.tok < b.tok;
                          });
        std::vector<Hyp> next;
        next.reserve(keep);
        for (size_t i = 0; i < keep; ++i) {
            Hyp h = live[cands[i].parent];
            h.tokens.push_back(cands[i].tok);
            h.logp = cands[i].logp;
            if (cands[i].tok == eos)
                finished.push_back(std::move(h));
            else
                next.push_back(std::move(h));
        }
        live = std::move(next);
    }
    for (auto& h : live) finished.push_back(std::move(h));  // ran into max_len

    // greedy shadow candidate
    Hyp greedy;
    greedy.tokens = greedy_chain(scorer, eos, max_len);
    greedy.logp = sequence_logprob(scorer, greedy.tokens);
    finished.push_back(std::move(greedy));

    size_t best = 0;
    for (size_t i = 1; i < finished.size(); ++i)
        if (finished[i].norm() > finished[best].norm()) best = i;
    return finished[best].tokens;
}

// ---------------------------------------------------------------------------
// model-level generation
// ---------------------------------------------------------------------------

struct GreedyResult {
    std::vector<std::vector<int>> sequences;  // per sentence, includes terminal EOS when emitted
    FirstStepOutput first_step;
};

namespace detail {

inline Batch prefix_batch(const std::vector<std::vector<int>>& prefixes) {
    Batch b;
    b.batch_size = prefixes.size();
    size_t w = 1;
    for (const auto& p : prefixes) w = std::max(w, p.size() + 1);
    b.width = w;
    b.ids.assign(b.batch_size * w, Vocab::pad_id);
    b.lens.resize(b.batch_size);
    for (size_t r = 0; r < prefixes.size(); ++r) {
        b.ids[r * w] = Vocab::bos_id;
        for (size_t i = 0; i < prefixes[r].size(); ++i) b.ids[r * w + 1 + i] = prefixes[r][i];
        b.lens[r] = static_cast<int>(prefixes[r].size() + 1);
    }
    return b;
}

inline EncodeResult detach_states(const EncodeResult& enc) {
    EncodeResult out = enc;
    out.states = enc.states.detach();
    return out;
}

}  // namespace detail

// Batched greedy generation. Runs in inference mode; when `g` is given, the
// encoder pass and the first decode step are built on the tape so the
// first-step outputs stay linked for backpropagation. All later steps use
// detached states: generated tokens are data either way.
inline GreedyResult generate_greedy(Graph* g, const Parameters& p, const Batch& src, Lang src_lang,
                                    Lang out_lang, size_t max_len) {
    if (max_len < 1) throw std::invalid_argument("generate_greedy: max_len must be >= 1");
    const size_t n = src.batch_size;

    EncodeResult enc = encode(g, p, src, src_lang);

    // first step on the tape: decode a BOS-only column
    std::vector<std::vector<int>> prefixes(n);
    DecodeResult d1 = decode_teacher_forced(g, p, enc, detail::prefix_batch(prefixes), out_lang);

    GreedyResult out;
    out.first_step = d1.first_step;
    out.sequences.assign(n, {});
    std::vector<bool> done(n, false);

    auto take_argmax = [&](const DecodeResult& d, size_t width) {
        size_t remaining = 0;
        for (size_t r = 0; r < n; ++r) {
            if (done[r]) continue;
            const size_t row = r * width + prefixes[r].size();  // last real position
            const double* lg = &d.logits.value()[row * p.vocab_size];
            int best = 0;
            for (size_t v2 = 1; v2 < p.vocab_size; ++v2)
                if (lg[v2] > lg[best]) best = static_cast<int>(v2);
            out.sequences[r].push_back(best);
            prefixes[r].push_back(best);
            if (best == Vocab::eos_id)
                done[r] = true;
            else
                ++remaining;
        }
        return remaining;
    };

    size_t remaining = take_argmax(d1, d1.width);
    EncodeResult enc_inf = g ? detail::detach_states(enc) : enc;
    for (size_t t = 1; t < max_len && remaining > 0; ++t) {
        Batch pb = detail::prefix_batch(prefixes);
        if (pb.width > p.cfg.max_len) break;  // hit the model's positional limit
        DecodeResult d = decode_teacher_forced(nullptr, p, enc_inf, pb, out_lang);
        remaining = take_argmax(d, d.width);
    }
    return out;
}

// Per-sentence beam search over the model, beam size k, length-normalized.
inline std::vector<std::vector<int>> generate_beam(const Parameters& p, const Batch& src,
                                                   Lang src_lang, Lang out_lang, size_t max_len,
                                                   size_t beam) {
    if (beam < 1) throw std::invalid_argument("generate_beam: beam must be >= 1");
    EncodeResult enc = encode(nullptr, p, src, src_lang);

    std::vector<std::vector<int>> out(src.batch_size);
    const size_t d = p.cfg.embed_dim;
    for (size_t s = 0; s < src.batch_size; ++s) {
        EncodeResult es;
        es.batch = 1;
        es.width = enc.width;
        es.lens = {enc.lens[s]};
        es.lang = enc.lang;
        es.states = Tensor::from({enc.width, d},
                                 std::vector<double>(enc.states.value().begin() + static_cast<long>(s * enc.width * d),
                                                     enc.states.value().begin() + static_cast<long>((s + 1) * enc.width * d)));
        StepScorer scorer = [&](const std::vector<int>& prefix) {
            Batch pb = detail::prefix_batch({prefix});
            DecodeResult dr = decode_teacher_forced(nullptr, p, es, pb, out_lang);
            const size_t row = prefix.size();
            std::vector<double> logits(dr.logits.value().begin() + static_cast<long>(row * p.vocab_size),
                                       dr.logits.value().begin() + static_cast<long>((row + 1) * p.vocab_size));
            // log-softmax
            double mx = logits[0];
            for (double v : logits) mx = std::max(mx, v);
            double z = 0.0;
            for (double v : logits) z += std::exp(v - mx);
            const double lz = mx + std::log(z);
            for (double& v : logits) v -= lz;
            return logits;
        };
        const size_t cap = std::min(max_len, p.cfg.max_len - 1);
        out[s] = beam_decode(scorer, Vocab::eos_id, cap, beam);
    }
    return out;
}

// Strips BOS/EOS/PAD, leaving the surface tokens of a generated sequence.
inline std::vector<int> strip_specials(const std::vector<int>& seq) {
    std::vector<int> out;
    out.reserve(seq.size());
    for (int t : seq) {
        if (t == Vocab::eos_id) break;
        if (t == Vocab::bos_id || t == Vocab::pad_id) continue;
        out.push_back(t);
    }
    return out;
}

}  // namespace unmt
