// Monolingual corpora: synthetic cipher-pair generation, plain-text
// ingestion, joint vocabulary construction and batching.
//
// The synthetic generator produces a source language and a target language
// related by a bijective token cipher plus an optional reordering, so the
// exact translation of any sentence is known. Training halves are drawn from
// disjoint samples; valid/test splits are kept parallel for scoring.
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "unmt/rng.hpp"
#include "unmt/vocab.hpp"

namespace unmt {

enum class Lang : int { src = 0, tgt = 1 };

inline Lang other(Lang l) { return l == Lang::src ? Lang::tgt : Lang::src; }
inline const char* lang_name(Lang l) { return l == Lang::src ? "src" : "tgt"; }

enum class Split { train, valid, test };

struct Corpus {
    Lang lang = Lang::src;
    Split split = Split::train;
    std::vector<std::vector<std::string>> sentences;

    size_t size() const { return sentences.size(); }
};

enum class Reorder { none, reverse, window };

inline const char* reorder_name(Reorder r) {
    switch (r) {
        case Reorder::none: return "none";
        case Reorder::reverse: return "reverse";
        case Reorder::window: return "window";
    }
    return "none";
}

inline Reorder reorder_from_name(const std::string& s) {
    if (s == "none") return Reorder::none;
    if (s == "reverse") return Reorder::reverse;
    if (s == "window") return Reorder::window;
    throw std::invalid_argument("unknown reorder mode: " + s);
}

struct SyntheticSpec {
    size_t vocab_per_lang = 200;
    size_t train_sentences = 5000;
    size_t valid_sentences = 500;
    size_t test_sentences = 500;
    size_t len_min = 3;
    size_t len_max = 12;
    Reorder reorder = Reorder::reverse;
    uint64_t seed = 1;
    // sentence sampler: Zipf unigram with a biased-successor bigram component
    double zipf_exponent = 1.0;
    double bigram_bias = 0.5;
    size_t successor_count = 8;
    size_t reorder_window = 3;
    // optional explicit cipher permutation (src index -> tgt index);
    // empty means a seeded random bijection
    std::vector<int> cipher;

    void validate() const {
        if (vocab_per_lang < 10) throw std::invalid_argument("synthetic: vocab_per_lang must be >= 10");
        if (train_sentences < 1 || valid_sentences < 1 || test_sentences < 1)
            throw std::invalid_argument("synthetic: sentence counts must be >= 1");
        if (len_min < 1 || len_max < len_min) throw std::invalid_argument("synthetic: bad length bounds");
        if (!cipher.empty()) {
            if (cipher.size() != vocab_per_lang)
                throw std::invalid_argument("synthetic: cipher size must equal vocab_per_lang");
            std::vector<bool> seen(vocab_per_lang, false);
            for (int t : cipher) {
                if (t < 0 || static_cast<size_t>(t) >= vocab_per_lang || seen[static_cast<size_t>(t)])
                    throw std::invalid_argument("synthetic: cipher is not a bijection");
                seen[static_cast<size_t>(t)] = true;
            }
        }
    }
};

namespace detail {

inline std::string src_token(size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%03zu", i);
    return buf;
}
inline std::string tgt_token(size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "t%03zu", i);
    return buf;
}

struct SentenceSampler {
    std::vector<double> cdf;              // Zipf unigram CDF
    std::vector<std::vector<size_t>> succ;  // successor sets per token
    double bigram_bias;

    explicit SentenceSampler(const SyntheticSpec& spec) : bigram_bias(spec.bigram_bias) {
        const size_t v = spec.vocab_per_lang;
        std::vector<double> p(v);
        double z = 0.0;
        for (size_t i = 0; i < v; ++i) {
            p[i] = 1.0 / std::pow(static_cast<double>(i + 1), spec.zipf_exponent);
            z += p[i];
        }
        cdf.resize(v);
        double acc = 0.0;
        for (size_t i = 0; i < v; ++i) {
            acc += p[i] / z;
            cdf[i] = acc;
        }
        cdf.back() = 1.0;
        Rng rng = make_rng(spec.seed, "sampler-succ");
        succ.resize(v);
        for (size_t i = 0; i < v; ++i) {
            auto perm = rand_perm(v, rng);
            succ[i].assign(perm.begin(), perm.begin() + static_cast<long>(std::min(spec.successor_count, v)));
        }
    }

    size_t draw_unigram(Rng& rng) const {
        const double u = rand_uniform(rng);
        return static_cast<size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    }

    std::vector<size_t> sample_sentence(size_t len, Rng& rng) const {
        std::vector<size_t> s(len);
        s[0] = draw_unigram(rng);
        for (size_t i = 1; i < len; ++i) {
            if (rand_uniform(rng) < bigram_bias) {
                const auto& options = succ[s[i - 1]];
                s[i] = options[static_cast<size_t>(rand_int(rng, 0, static_cast<int64_t>(options.size()) - 1))];
            } else {
                s[i] = draw_unigram(rng);
            }
        }
        return s;
    }
};

inline std::vector<int> make_cipher(const SyntheticSpec& spec) {
    if (!spec.cipher.empty()) return spec.cipher;
    Rng rng = make_rng(spec.seed, "cipher");
    auto perm = rand_perm(spec.vocab_per_lang, rng);
    return std::vector<int>(perm.begin(), perm.end());
}

template <typename T>
void apply_reorder(std::vector<T>& s, Reorder mode, size_t window) {
    if (mode == Reorder::reverse) {
        std::reverse(s.begin(), s.end());
    } else if (mode == Reorder::window && window > 1) {
        // fixed rotation within consecutive windows: [a b c] -> [c a b]
        for (size_t start = 0; start + window <= s.size(); start += window)
            std::rotate(s.begin() + static_cast<long>(start),
                        s.begin() + static_cast<long>(start + window - 1),
                        s.begin() + static_cast<long>(start + window));
    }
}

template <typename T>
void invert_reorder(std::vector<T>& s, Reorder mode, size_t window) {
    if (mode == Reorder::reverse) {
        std::reverse(s.begin(), s.end());
    } else if (mode == Reorder::window && window > 1) {
        for (size_t start = 0; start + window <= s.size(); start += window)
            std::rotate(s.begin() + static_cast<long>(start),
                        s.begin() + static_cast<long>(start + 1),
                        s.begin() + static_cast<long>(start + window));
    }
}

}  // namespace detail

// Exact translation oracle induced by the cipher and reorder mode.
inline std::vector<std::string> cipher_translate(const SyntheticSpec& spec,
                                                 const std::vector<std::string>& src_sentence) {
    auto cipher = detail::make_cipher(spec);
    std::vector<size_t> idx;
    idx.reserve(src_sentence.size());
    for (const auto& tok : src_sentence) {
        if (tok.size() < 2 || tok[0] != 's')
            throw std::invalid_argument("cipher_translate: not a source surface token: " + tok);
        idx.push_back(static_cast<size_t>(std::stoul(tok.substr(1))));
    }
    std::vector<std::string> out;
    out.reserve(idx.size());
    for (size_t i : idx) out.push_back(detail::tgt_token(static_cast<size_t>(cipher[i])));
    detail::apply_reorder(out, spec.reorder, spec.reorder_window);
    return out;
}

inline std::vector<std::string> cipher_back(const SyntheticSpec& spec,
                                            const std::vector<std::string>& tgt_sentence) {
    auto cipher = detail::make_cipher(spec);
    std::vector<int> inverse(cipher.size());
    for (size_t i = 0; i < cipher.size(); ++i) inverse[static_cast<size_t>(cipher[i])] = static_cast<int>(i);
    std::vector<std::string> toks = tgt_sentence;
    detail::invert_reorder(toks, spec.reorder, spec.reorder_window);
    std::vector<std::string> out;
    out.reserve(toks.size());
    for (const auto& tok : toks) {
        if (tok.size() < 2 || tok[0] != 't')
            throw std::invalid_argument("cipher_back: not a target surface token: " + tok);
        out.push_back(detail::src_token(static_cast<size_t>(inverse[std::stoul(tok.substr(1))])));
    }
    return out;
}

struct SyntheticPair {
    SyntheticSpec spec;
    Corpus train_src, train_tgt;
    Corpus valid_src, valid_tgt;  // line-aligned parallel
    Corpus test_src, test_tgt;    // line-aligned parallel (the gold alignment)
};

inline SyntheticPair gen_synthetic_pair(const SyntheticSpec& spec) {
    spec.validate();
    detail::SentenceSampler sampler(spec);
    Rng rng = make_rng(spec.seed, "sentences");

    auto draw = [&](size_t count) {
        std::vector<std::vector<std::string>> out;
        out.reserve(count);
        for (size_t i = 0; i < count; ++i) {
            const size_t len =
                static_cast<size_t>(rand_int(rng, static_cast<int64_t>(spec.len_min),
                                             static_cast<int64_t>(spec.len_max)));
            auto ids = sampler.sample_sentence(len, rng);
            std::vector<std::string> s;
            s.reserve(len);
            for (size_t t : ids) s.push_back(detail::src_token(t));
            out.push_back(std::move(s));
        }
        return out;
    };

    SyntheticPair pair;
    pair.spec = spec;
    // disjoint underlying samples for the two training halves
    pair.train_src.sentences = draw(spec.train_sentences);
    auto tgt_half = draw(spec.train_sentences);
    pair.train_tgt.sentences.reserve(tgt_half.size());
    for (auto& s : tgt_half) pair.train_tgt.sentences.push_back(cipher_translate(spec, s));

    pair.valid_src.sentences = draw(spec.valid_sentences);
    for (const auto& s : pair.valid_src.sentences)
        pair.valid_tgt.sentences.push_back(cipher_translate(spec, s));

    pair.test_src.sentences = draw(spec.test_sentences);
    for (const auto& s : pair.test_src.sentences)
        pair.test_tgt.sentences.push_back(cipher_translate(spec, s));

    pair.train_src.lang = pair.valid_src.lang = pair.test_src.lang = Lang::src;
    pair.train_tgt.lang = pair.valid_tgt.lang = pair.test_tgt.lang = Lang::tgt;
    pair.train_src.split = pair.train_tgt.split = Split::train;
    pair.valid_src.split = pair.valid_tgt.split = Split::valid;
    pair.test_src.split = pair.test_tgt.split = Split::test;
    return pair;
}

// Joint vocabulary: frequency-descending, ties broken lexicographically.
inline Vocab build_vocab(const std::vector<const Corpus*>& corpora) {
    if (corpora.empty()) throw std::invalid_argument("build_vocab: no corpora");
    size_t total = 0;
    std::map<std::string, size_t> freq;
    for (const Corpus* c : corpora) {
        total += c->size();
        for (const auto& s : c->sentences)
            for (const auto& tok : s) ++freq[tok];
    }
    if (total == 0) throw std::invalid_argument("build_vocab: corpora are empty");
    std::vector<std::pair<std::string, size_t>> entries(freq.begin(), freq.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab v;
    for (const auto& [tok, n] : entries) v.add_token(tok);
    return v;
}

// ---------------------------------------------------------------------------
// batching
// ---------------------------------------------------------------------------

// Padded id matrix with BOS/EOS wrapping. PAD appears only after EOS.
struct Batch {
    std::vector<int> ids;  // batch_size x width, row-major
    size_t batch_size = 0;
    size_t width = 0;
    std::vector<int> lens;  // wrapped lengths (incl BOS and EOS)
    Lang lang = Lang::src;

    int at(size_t row, size_t col) const { return ids[row * width + col]; }
};

inline Batch make_batch(const std::vector<std::vector<int>>& sentences, Lang lang) {
    if (sentences.empty()) throw std::invalid_argument("make_batch: empty batch");
    Batch b;
    b.lang = lang;
    b.batch_size = sentences.size();
    size_t max_len = 0;
    for (const auto& s : sentences) max_len = std::max(max_len, s.size());
    b.width = max_len + 2;
    b.ids.assign(b.batch_size * b.width, Vocab::pad_id);
    b.lens.resize(b.batch_size);
    for (size_t r = 0; r < b.batch_size; ++r) {
        const auto& s = sentences[r];
        b.ids[r * b.width] = Vocab::bos_id;
        for (size_t i = 0; i < s.size(); ++i) b.ids[r * b.width + 1 + i] = s[i];
        b.ids[r * b.width + 1 + s.size()] = Vocab::eos_id;
        b.lens[r] = static_cast<int>(s.size() + 2);
    }
    return b;
}

inline std::vector<int> to_ids(const Vocab& vocab, const std::vector<std::string>& sentence) {
    std::vector<int> out;
    out.reserve(sentence.size());
    for (const auto& tok : sentence) out.push_back(vocab.id(tok));
    return out;
}

inline std::vector<std::string> to_tokens(const Vocab& vocab, const std::vector<int>& ids) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(vocab.token(id));
    return out;
}

// Seeded shuffle, padding per batch, final partial batch included.
inline std::vector<Batch> batch_iter(const Corpus& corpus, const Vocab& vocab, size_t batch_size,
                                     uint64_t seed) {
    if (batch_size < 1) throw std::invalid_argument("batch_iter: batch_size must be >= 1");
    if (corpus.size() == 0) throw std::invalid_argument("batch_iter: empty corpus");
    Rng rng(seed);
    auto order = rand_perm(corpus.size(), rng);
    std::vector<Batch> batches;
    for (size_t start = 0; start < order.size(); start += batch_size) {
        const size_t end = std::min(order.size(), start + batch_size);
        std::vector<std::vector<int>> rows;
        rows.reserve(end - start);
        for (size_t i = start; i < end; ++i)
            rows.push_back(to_ids(vocab, corpus.sentences[order[i]]));
        batches.push_back(make_batch(rows, corpus.lang));
    }
    return batches;
}

// ---------------------------------------------------------------------------
// file I/O: one sentence per line, space-separated tokens
// ---------------------------------------------------------------------------

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write corpus file: " + path.string());
    for (const auto& s : corpus.sentences) {
        for (size_t i = 0; i < s.size(); ++i) {
            if (i) out << ' ';
            out << s[i];
        }
        out << '\n';
    }
}

inline Corpus load_corpus(const std::filesystem::path& path, Lang lang, Split split) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read corpus file: " + path.string());
    Corpus c;
    c.lang = lang;
    c.split = split;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream iss(line);
        std::vector<std::string> toks;
        std::string tok;
        while (iss >> tok) toks.push_back(tok);
        if (!toks.empty()) c.sentences.push_back(std::move(toks));
    }
    return c;
}

}  // namespace unmt
