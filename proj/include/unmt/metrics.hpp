// Evaluation metrics: copying ratio, corpus BLEU, chrF, paired bootstrap
// resampling, token-level accuracy, and a 2-D PCA projection with a
// deterministic sign convention.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "unmt/rng.hpp"

namespace unmt {

using TokenSeq = std::vector<std::string>;

// ---------------------------------------------------------------------------
// copying ratio
// ---------------------------------------------------------------------------

// Fraction of hypothesis tokens that also occur in the corresponding source
// input: sum_i copied(i) / sum_i |hyp_i|. With clipping (the default),
// copied(i) is the multiset intersection per token type, so a hypothesis
// repeating one source token cannot count it more often than the source
// contains it.
inline double copying_ratio(const std::vector<TokenSeq>& sources, const std::vector<TokenSeq>& hyps,
                            bool clipped = true) {
    if (sources.size() != hyps.size())
        throw std::invalid_argument("copying_ratio: sources/hypotheses length mismatch");
    size_t copied = 0, total = 0;
    for (size_t i = 0; i < hyps.size(); ++i) {
        total += hyps[i].size();
        std::map<std::string, size_t> src_count;
        for (const auto& t : sources[i]) ++src_count[t];
        if (clipped) {
            std::map<std::string, size_t> hyp_count;
            for (const auto& t : hyps[i]) ++hyp_count[t];
            for (const auto& [tok, n] : hyp_count) {
                auto it = src_count.find(tok);
                if (it != src_count.end()) copied += std::min(n, it->second);
            }
        } else {
            for (const auto& t : hyps[i])
                if (src_count.count(t)) ++copied;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(copied) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

namespace detail {

inline std::map<std::vector<std::string>, size_t> ngram_counts(const TokenSeq& s, size_t n) {
    std::map<std::vector<std::string>, size_t> counts;
    if (s.size() >= n)
        for (size_t i = 0; i + n <= s.size(); ++i)
            ++counts[std::vector<std::string>(s.begin() + static_cast<long>(i),
                                              s.begin() + static_cast<long>(i + n))];
    return counts;
}

}  // namespace detail

// Corpus BLEU: clipped n-gram precisions for n = 1..4, add-one smoothing on
// the higher orders, brevity penalty. Scores are in [0, 100].
inline double bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs,
                   size_t max_n = 4) {
    if (hyps.size() != refs.size()) throw std::invalid_argument("bleu: hyps/refs length mismatch");
    if (hyps.empty()) throw std::invalid_argument("bleu: empty corpus");
    std::vector<size_t> match(max_n + 1, 0), total(max_n + 1, 0);
    size_t hyp_len = 0, ref_len = 0;
    for (size_t i = 0; i < hyps.size(); ++i) {
        hyp_len += hyps[i].size();
        ref_len += refs[i].size();
        for (size_t n = 1; n <= max_n; ++n) {
            auto h = detail::ngram_counts(hyps[i], n);
            auto r = detail::ngram_counts(refs[i], n);
            for (const auto& [g, c] : h) {
                auto it = r.find(g);
                if (it != r.end()) match[n] += std::min(c, it->second);
            }
            total[n] += hyps[i].size() >= n ? hyps[i].size() - n + 1 : 0;
        }
    }
    if (hyp_len == 0 || total[1] == 0 || match[1] == 0) return 0.0;
    double log_p = std::log(static_cast<double>(match[1]) / static_cast<double>(total[1]));
    for (size_t n = 2; n <= max_n; ++n)
        log_p += std::log(static_cast<double>(match[n] + 1) / static_cast<double>(total[n] + 1));
    const double bp = hyp_len > ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return 100.0 * bp * std::exp(log_p / static_cast<double>(max_n));
}

// ---------------------------------------------------------------------------
// chrF
// ---------------------------------------------------------------------------

// chrF with character n-grams 1..n over the space-joined sentence (whitespace
// participates), uniform averaging over the orders that occur, F_beta from
// the averaged precision and recall. Scores are in [0, 100].
inline double chrf(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs,
                   size_t max_n = 6, double beta = 2.0) {
    if (hyps.size() != refs.size()) throw std::invalid_argument("chrf: hyps/refs length mismatch");
    if (hyps.empty()) throw std::invalid_argument("chrf: empty corpus");
    auto to_chars = [](const TokenSeq& s) {
        std::string joined;
        for (size_t i = 0; i < s.size(); ++i) {
            if (i) joined += ' ';
            joined += s[i];
        }
        return joined;
    };
    std::vector<size_t> match(max_n + 1, 0), hyp_total(max_n + 1, 0), ref_total(max_n + 1, 0);
    for (size_t i = 0; i < hyps.size(); ++i) {
        const std::string h = to_chars(hyps[i]);
        const std::string r = to_chars(refs[i]);
        for (size_t n = 1; n <= max_n; ++n) {
            std::map<std::string, size_t> hc, rc;
            if (h.size() >= n)
                for (size_t j = 0; j + n <= h.size(); ++j) ++hc[h.substr(j, n)];
            if (r.size() >= n)
                for (size_t j = 0; j + n <= r.size(); ++j) ++rc[r.substr(j, n)];
            for (const auto& [g, c] : hc) {
                auto it = rc.find(g);
                if (it != rc.end()) match[n] += std::min(c, it->second);
                hyp_total[n] += c;
            }
            for (const auto& [g, c] : rc) ref_total[n] += c;
        }
    }
    double prec_sum = 0.0, rec_sum = 0.0;
    size_t active = 0;
    for (size_t n = 1; n <= max_n; ++n) {
        if (hyp_total[n] == 0 && ref_total[n] == 0) continue;
        ++active;
        if (hyp_total[n] > 0)
            prec_sum += static_cast<double>(match[n]) / static_cast<double>(hyp_total[n]);
        if (ref_total[n] > 0)
            rec_sum += static_cast<double>(match[n]) / static_cast<double>(ref_total[n]);
    }
    if (active == 0) return 0.0;
    const double p = prec_sum / static_cast<double>(active);
    const double r = rec_sum / static_cast<double>(active);
    if (p == 0.0 && r == 0.0) return 0.0;
    const double b2 = beta * beta;
    return 100.0 * (1.0 + b2) * p * r / (b2 * p + r);
}

// ---------------------------------------------------------------------------
// token-level accuracy against an exact reference
// ---------------------------------------------------------------------------

// Position-wise matches over max(|hyp|, |gold|); 1.0 iff every sentence is
// reproduced exactly.
inline double token_accuracy(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& golds) {
    if (hyps.size() != golds.size())
        throw std::invalid_argument("token_accuracy: hyps/golds length mismatch");
    size_t matches = 0, total = 0;
    for (size_t i = 0; i < hyps.size(); ++i) {
        const size_t common = std::min(hyps[i].size(), golds[i].size());
        for (size_t j = 0; j < common; ++j)
            if (hyps[i][j] == golds[i][j]) ++matches;
        total += std::max(hyps[i].size(), golds[i].size());
    }
    return total == 0 ? 0.0 : static_cast<double>(matches) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// paired bootstrap resampling
// ---------------------------------------------------------------------------

struct BootstrapResult {
    double bleu_a = 0.0, bleu_b = 0.0;        // point estimates on the full corpus
    double ci_a_lo = 0.0, ci_a_hi = 0.0;      // 95% percentile intervals
    double ci_b_lo = 0.0, ci_b_hi = 0.0;
    double p_b_ge_a = 0.0;                    // ties count half
    bool a_significantly_better = false;       // p < 0.05
};

inline BootstrapResult paired_bootstrap(const std::vector<TokenSeq>& hyps_a,
                                        const std::vector<TokenSeq>& hyps_b,
                                        const std::vector<TokenSeq>& refs, size_t samples = 1000,
                                        uint64_t seed = 1) {
    if (hyps_a.size() != refs.size() || hyps_b.size() != refs.size())
        throw std::invalid_argument("paired_bootstrap: list length mismatch");
    if (samples < 100) throw std::invalid_argument("paired_bootstrap: need at least 100 samples");
    const size_t n = refs.size();
    if (n == 0) throw std::invalid_argument("paired_bootstrap: empty corpus");

    BootstrapResult res;
    res.bleu_a = bleu(hyps_a, refs);
    res.bleu_b = bleu(hyps_b, refs);

    Rng rng(seed);
    std::vector<double> scores_a(samples), scores_b(samples);
    double wins_b = 0.0;
    std::vector<TokenSeq> ha(n), hb(n), rr(n);
    for (size_t s = 0; s < samples; ++s) {
        for (size_t i = 0; i < n; ++i) {
            const size_t j = static_cast<size_t>(rand_int(rng, 0, static_cast<int64_t>(n) - 1));
            ha[i] = hyps_a[j];
            hb[i] = hyps_b[j];
            rr[i] = refs[j];
        }
        scores_a[s] = bleu(ha, rr);
        scores_b[s] = bleu(hb, rr);
        if (scores_b[s] > scores_a[s])
            wins_b += 1.0;
        else if (scores_b[s] == scores_a[s])
            wins_b += 0.5;
    }
    auto percentile = [](std::vector<double> v, double q) {
        std::sort(v.begin(), v.end());
        const double idx = q * static_cast<double>(v.size() - 1);
        const size_t lo = static_cast<size_t>(idx);
        const size_t hi = std::min(lo + 1, v.size() - 1);
        const double frac = idx - static_cast<double>(lo);
        return v[lo] * (1.0 - frac) + v[hi] * frac;
    };
    res.ci_a_lo = percentile(scores_a, 0.025);
    res.ci_a_hi = percentile(scores_a, 0.975);
    res.ci_b_lo = percentile(scores_b, 0.025);
    res.ci_b_hi = percentile(scores_b, 0.975);
    res.p_b_ge_a = wins_b / static_cast<double>(samples);
    res.a_significantly_better = res.p_b_ge_a < 0.05;
    return res;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

struct PcaResult {
    std::vector<double> coords;        // n x 2, row-major
    double explained_1 = 0.0;          // variance fractions, explained_1 >= explained_2
    double explained_2 = 0.0;
};

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major d x d).
// Returns eigenvalues descending with matching columns in V.
inline void jacobi_eigen(std::vector<double> a, size_t d, std::vector<double>& eigvals,
                         std::vector<double>& eigvecs) {
    std::vector<double> v(d * d, 0.0);
    for (size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (size_t i = 0; i < d; ++i)
            for (size_t j = i + 1; j < d; ++j) off += a[i * d + j] * a[i * d + j];
        if (off < 1e-24) break;
        for (size_t p = 0; p < d; ++p) {
            for (size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double app = a[p * d + p], aqq = a[q * d + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (size_t k = 0; k < d; ++k) {
                    const double akp = a[k * d + p], akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (size_t k = 0; k < d; ++k) {
                    const double apk = a[p * d + k], aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for (size_t k = 0; k < d; ++k) {
                    const double vkp = v[k * d + p], vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<size_t> order(d);
    for (size_t i = 0; i < d; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t x, size_t y) { return a[x * d + x] > a[y * d + y]; });
    eigvals.resize(d);
    eigvecs.assign(d * d, 0.0);
    for (size_t i = 0; i < d; ++i) {
        eigvals[i] = a[order[i] * d + order[i]];
        for (size_t k = 0; k < d; ++k) eigvecs[k * d + i] = v[k * d + order[i]];
    }
}

}  // namespace detail

// Mean-centers the rows, projects onto the top-2 principal directions of the
// covariance, and reports the two explained-variance fractions. Directions
// are sign-fixed so the first nonzero component is positive. Zero-variance
// input yields all-zero coordinates and zero explained variance.
inline PcaResult pca_project(const std::vector<double>& data, size_t n, size_t d) {
    if (n < 2 || d < 2) throw std::invalid_argument("pca_project: need n >= 2 and d >= 2");
    if (data.size() != n * d) throw std::invalid_argument("pca_project: data size mismatch");

    std::vector<double> centered(data);
    for (size_t c = 0; c < d; ++c) {
        double mean = 0.0;
        for (size_t r = 0; r < n; ++r) mean += data[r * d + c];
        mean /= static_cast<double>(n);
        for (size_t r = 0; r < n; ++r) centered[r * d + c] -= mean;
    }

    std::vector<double> cov(d * d, 0.0);
    for (size_t r = 0; r < n; ++r)
        for (size_t i = 0; i < d; ++i)
            for (size_t j = i; j < d; ++j) cov[i * d + j] += centered[r * d + i] * centered[r * d + j];
    for (size_t i = 0; i < d; ++i)
        for (size_t j = i; j < d; ++j) {
            cov[i * d + j] /= static_cast<double>(n - 1);
            cov[j * d + i] = cov[i * d + j];
        }

    PcaResult res;
    res.coords.assign(n * 2, 0.0);
    double trace = 0.0;
    for (size_t i = 0; i < d; ++i) trace += cov[i * d + i];
    if (trace <= 0.0) return res;  // zero variance

    std::vector<double> eigvals, eigvecs;
    detail::jacobi_eigen(cov, d, eigvals, eigvecs);
    for (size_t comp = 0; comp < 2; ++comp) {
        // sign convention: first component of magnitude above tolerance positive
        double flip = 1.0;
        for (size_t k = 0; k < d; ++k) {
            const double x = eigvecs[k * d + comp];
            if (std::fabs(x) > 1e-12) {
                flip = x > 0.0 ? 1.0 : -1.0;
                break;
            }
        }
        for (size_t r = 0; r < n; ++r) {
            double dot = 0.0;
            for (size_t k = 0; k < d; ++k) dot += centered[r * d + k] * eigvecs[k * d + comp];
            res.coords[r * 2 + comp] = dot * flip;
        }
    }
    res.explained_1 = std::max(0.0, eigvals[0]) / trace;
    res.explained_2 = std::max(0.0, eigvals[1]) / trace;
    return res;
}

}  // namespace unmt
