// Input corruption for denoising autoencoding: bounded local shuffle, token
// drop, and blanking with UNK. Operates on raw token ids before BOS/EOS
// wrapping.
#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "unmt/rng.hpp"
#include "unmt/vocab.hpp"

namespace unmt {

struct NoiseConfig {
    int shuffle_k = 3;       // max displacement under the local shuffle
    double drop_prob = 0.1;  // independent token drop
    double blank_prob = 0.1; // surviving token replaced by UNK

    void validate() const {
        if (shuffle_k < 0) throw std::invalid_argument("noise: shuffle_k must be >= 0");
        if (drop_prob < 0.0 || drop_prob > 1.0 || blank_prob < 0.0 || blank_prob > 1.0)
            throw std::invalid_argument("noise: probabilities must be in [0, 1]");
    }
};

// Shuffle-then-drop-then-blank. If every token would be dropped, the first
// survivor rule keeps one so sentences never become empty.
inline std::vector<int> apply_noise(const std::vector<int>& sentence, const NoiseConfig& cfg, Rng& rng) {
    cfg.validate();
    const size_t n = sentence.size();
    if (n == 0) return {};

    // local shuffle: sort positions by i + U{0..k}; stable sort bounds the
    // displacement of every token by k
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (cfg.shuffle_k > 0) {
        std::vector<double> key(n);
        for (size_t i = 0; i < n; ++i)
            key[i] = static_cast<double>(i) + rand_uniform(rng) * static_cast<double>(cfg.shuffle_k);
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t a, size_t b) { return key[a] < key[b]; });
    }

    std::vector<int> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const int tok = sentence[order[i]];
        if (cfg.drop_prob > 0.0 && rand_uniform(rng) < cfg.drop_prob) continue;
        if (cfg.blank_prob > 0.0 && rand_uniform(rng) < cfg.blank_prob) {
            out.push_back(Vocab::unk_id);
        } else {
            out.push_back(tok);
        }
    }
    if (out.empty()) out.push_back(sentence[order[0]]);
    return out;
}

}  // namespace unmt
