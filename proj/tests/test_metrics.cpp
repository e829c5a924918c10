#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "unmt/metrics.hpp"
#include "unmt/rng.hpp"

using namespace unmt;

namespace {

TokenSeq split_ws(const std::string& s) {
    std::istringstream iss(s);
    TokenSeq out;
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

std::vector<TokenSeq> random_corpus(Rng& rng, size_t n, size_t vocab, size_t max_len,
                                    bool allow_empty = false) {
    std::vector<TokenSeq> out(n);
    for (auto& s : out) {
        const size_t len = static_cast<size_t>(rand_int(rng, allow_empty ? 0 : 1,
                                                        static_cast<int64_t>(max_len)));
        for (size_t i = 0; i < len; ++i)
            s.push_back("w" + std::to_string(rand_int(rng, 0, static_cast<int64_t>(vocab) - 1)));
    }
    return out;
}

// Independent per-token scan: each hypothesis token consumes one matching
// source token if any remain.
double copying_ratio_bruteforce(const std::vector<TokenSeq>& sources,
                                const std::vector<TokenSeq>& hyps) {
    size_t copied = 0, total = 0;
    for (size_t i = 0; i < hyps.size(); ++i) {
        std::vector<std::string> pool = sources[i];
        for (const auto& tok : hyps[i]) {
            ++total;
            auto it = std::find(pool.begin(), pool.end(), tok);
            if (it != pool.end()) {
                ++copied;
                pool.erase(it);
            }
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(copied) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("copying ratio") {
    SECTION("pure copy is 1, disjoint is 0") {
        std::vector<TokenSeq> src = {{"a", "b"}, {"c"}};
        REQUIRE(copying_ratio(src, src) == 1.0);
        std::vector<TokenSeq> hyp = {{"x", "y"}, {"z"}};
        REQUIRE(copying_ratio(src, hyp) == 0.0);
    }
    SECTION("hand-counted example") {
        std::vector<TokenSeq> src = {{"ein", "mann", "hut"}};
        std::vector<TokenSeq> hyp = {{"a", "mann", "in", "hut"}};
        REQUIRE(copying_ratio(src, hyp) == Catch::Approx(0.5).margin(1e-15));
    }
    SECTION("clipping caps repeated hypothesis tokens") {
        std::vector<TokenSeq> src = {{"a", "b"}};
        std::vector<TokenSeq> hyp = {{"a", "a", "a", "a"}};
        REQUIRE(copying_ratio(src, hyp) == Catch::Approx(0.25).margin(1e-15));
        REQUIRE(copying_ratio(src, hyp, /*clipped=*/false) == Catch::Approx(1.0).margin(1e-15));
    }
    SECTION("empty hypotheses give 0") {
        std::vector<TokenSeq> src = {{"a"}, {"b"}};
        std::vector<TokenSeq> hyp = {{}, {}};
        REQUIRE(copying_ratio(src, hyp) == 0.0);
    }
    SECTION("matches the brute-force scan on 1000 random pairs") {
        Rng rng = make_rng(100, "copy-oracle");
        std::vector<TokenSeq> src = random_corpus(rng, 1000, 12, 10);
        std::vector<TokenSeq> hyp = random_corpus(rng, 1000, 12, 10, /*allow_empty=*/true);
        REQUIRE(copying_ratio(src, hyp) == copying_ratio_bruteforce(src, hyp));
    }
    SECTION("invariant under joint permutation and bounded") {
        Rng rng = make_rng(101, "copy-perm");
        auto src = random_corpus(rng, 50, 8, 6);
        auto hyp = random_corpus(rng, 50, 8, 6);
        const double r = copying_ratio(src, hyp);
        REQUIRE(r >= 0.0);
        REQUIRE(r <= 1.0);
        auto perm = rand_perm(50, rng);
        std::vector<TokenSeq> src2(50), hyp2(50);
        for (size_t i = 0; i < 50; ++i) {
            src2[i] = src[perm[i]];
            hyp2[i] = hyp[perm[i]];
        }
        REQUIRE(copying_ratio(src2, hyp2) == r);
    }
    SECTION("length mismatch rejected") {
        REQUIRE_THROWS_AS(copying_ratio({{"a"}}, {{"a"}, {"b"}}), std::invalid_argument);
    }
}

TEST_CASE("bleu and chrf match the frozen reference values") {
    std::ifstream in(std::string(UNMT_TEST_DATA_DIR) + "/metric_cases.json");
    REQUIRE(in.good());
    nlohmann::json cases = nlohmann::json::parse(in);
    REQUIRE(cases.size() == 20);
    for (const auto& c : cases) {
        std::vector<TokenSeq> hyps, refs;
        for (const auto& h : c["hyps"]) hyps.push_back(split_ws(h.get<std::string>()));
        for (const auto& r : c["refs"]) refs.push_back(split_ws(r.get<std::string>()));
        INFO(c["name"].get<std::string>());
        REQUIRE(bleu(hyps, refs) == Catch::Approx(c["bleu"].get<double>()).margin(1e-6));
        REQUIRE(chrf(hyps, refs) == Catch::Approx(c["chrf"].get<double>()).margin(1e-4));
    }
}

TEST_CASE("bleu properties") {
    Rng rng = make_rng(200, "bleu");
    auto h = random_corpus(rng, 30, 20, 9);
    SECTION("self score is 100 and order does not matter") {
        REQUIRE(bleu(h, h) == Catch::Approx(100.0).margin(1e-9));
        auto r = random_corpus(rng, 30, 20, 9);
        const double score = bleu(h, r);
        auto perm = rand_perm(30, rng);
        std::vector<TokenSeq> h2(30), r2(30);
        for (size_t i = 0; i < 30; ++i) {
            h2[i] = h[perm[i]];
            r2[i] = r[perm[i]];
        }
        REQUIRE(bleu(h2, r2) == Catch::Approx(score).margin(1e-12));
    }
    SECTION("zero unigram overlap scores 0") {
        std::vector<TokenSeq> hyp = {{"a", "b", "c"}};
        std::vector<TokenSeq> ref = {{"x", "y", "z"}};
        REQUIRE(bleu(hyp, ref) == 0.0);
    }
    SECTION("range and errors") {
        auto r = random_corpus(rng, 30, 20, 9);
        const double score = bleu(h, r);
        REQUIRE(score >= 0.0);
        REQUIRE(score <= 100.0);
        REQUIRE_THROWS_AS(bleu(h, random_corpus(rng, 29, 20, 9)), std::invalid_argument);
        REQUIRE_THROWS_AS(bleu({}, {}), std::invalid_argument);
    }
}

TEST_CASE("chrf properties") {
    SECTION("identical corpora score 100") {
        std::vector<TokenSeq> h = {{"hello", "world"}, {"abc"}};
        REQUIRE(chrf(h, h) == Catch::Approx(100.0).margin(1e-9));
    }
    SECTION("disjoint character sets score 0") {
        std::vector<TokenSeq> hyp = {{"aaa"}};
        std::vector<TokenSeq> ref = {{"zzz"}};
        REQUIRE(chrf(hyp, ref) == 0.0);
    }
    SECTION("length mismatch rejected") {
        REQUIRE_THROWS_AS(chrf({{"a"}}, {}), std::invalid_argument);
    }
}

TEST_CASE("token accuracy") {
    std::vector<TokenSeq> gold = {{"a", "b", "c"}, {"d", "e"}};
    REQUIRE(token_accuracy(gold, gold) == 1.0);
    std::vector<TokenSeq> hyp = {{"a", "x", "c"}, {"d", "e", "f"}};
    // 2 of 3 match, then 2 of max(3,2)=3
    REQUIRE(token_accuracy(hyp, gold) == Catch::Approx(4.0 / 6.0).margin(1e-15));
    REQUIRE(token_accuracy({{}, {}}, gold) == 0.0);
}

TEST_CASE("paired bootstrap") {
    Rng rng = make_rng(300, "boot");
    auto refs = random_corpus(rng, 40, 15, 8);
    SECTION("identical systems tie at exactly one half") {
        auto hyps = random_corpus(rng, 40, 15, 8);
        auto res = paired_bootstrap(hyps, hyps, refs, 200, 7);
        REQUIRE(res.p_b_ge_a == Catch::Approx(0.5).margin(1e-12));
        REQUIRE(res.ci_a_lo == res.ci_b_lo);
        REQUIRE(res.ci_a_hi == res.ci_b_hi);
        REQUIRE_FALSE(res.a_significantly_better);
    }
    SECTION("same seed reproduces the result") {
        auto a = random_corpus(rng, 40, 15, 8);
        auto b = random_corpus(rng, 40, 15, 8);
        auto r1 = paired_bootstrap(a, b, refs, 200, 11);
        auto r2 = paired_bootstrap(a, b, refs, 200, 11);
        REQUIRE(r1.p_b_ge_a == r2.p_b_ge_a);
        REQUIRE(r1.ci_a_lo == r2.ci_a_lo);
        REQUIRE(r1.ci_b_hi == r2.ci_b_hi);
    }
    SECTION("uniform dominance is significant") {
        // A reproduces every reference exactly; B garbles every sentence.
        auto hyps_a = refs;
        auto hyps_b = refs;
        for (auto& s : hyps_b)
            for (auto& tok : s) tok = "zz" + tok;
        auto res = paired_bootstrap(hyps_a, hyps_b, refs, 300, 13);
        REQUIRE(res.p_b_ge_a < 0.05);
        REQUIRE(res.a_significantly_better);
        REQUIRE(res.bleu_a == Catch::Approx(100.0).margin(1e-9));
    }
    SECTION("validation") {
        auto hyps = random_corpus(rng, 40, 15, 8);
        REQUIRE_THROWS_AS(paired_bootstrap(hyps, hyps, random_corpus(rng, 39, 15, 8), 200, 1),
                          std::invalid_argument);
        REQUIRE_THROWS_AS(paired_bootstrap(hyps, hyps, refs, 99, 1), std::invalid_argument);
    }
}

TEST_CASE("pca projection") {
    SECTION("planar data keeps pairwise distances") {
        Rng rng = make_rng(400, "pca-plane");
        const size_t n = 24, d = 10;
        // two orthonormal directions embedded in d dims
        std::vector<double> u(d, 0.0), w(d, 0.0);
        u[1] = 1.0;
        w[4] = 1.0;
        std::vector<double> data(n * d, 0.0);
        std::vector<std::pair<double, double>> plane(n);
        for (size_t r = 0; r < n; ++r) {
            const double a = rand_normal(rng) * 3.0;
            const double b = rand_normal(rng);
            plane[r] = {a, b};
            for (size_t c = 0; c < d; ++c) data[r * d + c] = a * u[c] + b * w[c];
        }
        auto res = pca_project(data, n, d);
        for (size_t i = 0; i < n; ++i) {
            for (size_t j = i + 1; j < n; ++j) {
                const double orig = std::hypot(plane[i].first - plane[j].first,
                                               plane[i].second - plane[j].second);
                const double proj = std::hypot(res.coords[i * 2] - res.coords[j * 2],
                                               res.coords[i * 2 + 1] - res.coords[j * 2 + 1]);
                REQUIRE(proj == Catch::Approx(orig).margin(1e-8));
            }
        }
        REQUIRE(res.explained_1 + res.explained_2 == Catch::Approx(1.0).margin(1e-10));
    }
    SECTION("collinear points have zero second coordinate") {
        const size_t n = 8, d = 5;
        std::vector<double> data(n * d, 0.0);
        for (size_t r = 0; r < n; ++r)
            for (size_t c = 0; c < d; ++c) data[r * d + c] = static_cast<double>(r) * (1.0 + static_cast<double>(c));
        auto res = pca_project(data, n, d);
        for (size_t r = 0; r < n; ++r)
            REQUIRE(res.coords[r * 2 + 1] == Catch::Approx(0.0).margin(1e-8));
        REQUIRE(res.explained_2 == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("matches an independent eigensolver on random data") {
        Rng rng = make_rng(401, "pca-oracle");
        const size_t n = 50, d = 16;
        std::vector<double> data(n * d);
        for (double& x : data) x = rand_normal(rng);
        auto res = pca_project(data, n, d);
        REQUIRE(res.explained_1 >= res.explained_2);

        // oracle: Eigen self-adjoint solver on the same covariance
        Eigen::MatrixXd X(n, d);
        for (size_t r = 0; r < n; ++r)
            for (size_t c = 0; c < d; ++c) X(static_cast<long>(r), static_cast<long>(c)) = data[r * d + c];
        Eigen::RowVectorXd mean = X.colwise().mean();
        Eigen::MatrixXd C = X.rowwise() - mean;
        Eigen::MatrixXd cov = C.transpose() * C / static_cast<double>(n - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
        const double trace = cov.trace();
        // eigenvalues ascending in Eigen; take the last two
        REQUIRE(res.explained_1 ==
                Catch::Approx(solver.eigenvalues()(d - 1) / trace).margin(1e-8));
        REQUIRE(res.explained_2 ==
                Catch::Approx(solver.eigenvalues()(d - 2) / trace).margin(1e-8));
        for (int comp = 0; comp < 2; ++comp) {
            Eigen::VectorXd dir = solver.eigenvectors().col(static_cast<long>(d) - 1 - comp);
            for (long k = 0; k < dir.size(); ++k) {
                if (std::fabs(dir(k)) > 1e-12) {
                    if (dir(k) < 0.0) dir = -dir;
                    break;
                }
            }
            Eigen::VectorXd proj = C * dir;
            for (size_t r = 0; r < n; ++r)
                REQUIRE(res.coords[r * 2 + static_cast<size_t>(comp)] ==
                        Catch::Approx(proj(static_cast<long>(r))).margin(1e-8));
        }
    }
    SECTION("zero variance input is not an error") {
        std::vector<double> data(6 * 4, 2.5);
        auto res = pca_project(data, 6, 4);
        for (double c : res.coords) REQUIRE(c == 0.0);
        REQUIRE(res.explained_1 == 0.0);
        REQUIRE(res.explained_2 == 0.0);
    }
    SECTION("row permutation consistency") {
        Rng rng = make_rng(402, "pca-perm");
        const size_t n = 12, d = 6;
        std::vector<double> data(n * d);
        for (double& x : data) x = rand_normal(rng);
        auto res = pca_project(data, n, d);
        auto perm = rand_perm(n, rng);
        std::vector<double> data2(n * d);
        for (size_t r = 0; r < n; ++r)
            for (size_t c = 0; c < d; ++c) data2[r * d + c] = data[perm[r] * d + c];
        auto res2 = pca_project(data2, n, d);
        for (size_t r = 0; r < n; ++r) {
            REQUIRE(res2.coords[r * 2] == Catch::Approx(res.coords[perm[r] * 2]).margin(1e-9));
            REQUIRE(res2.coords[r * 2 + 1] == Catch::Approx(res.coords[perm[r] * 2 + 1]).margin(1e-9));
        }
    }
    SECTION("tiny inputs rejected") {
        REQUIRE_THROWS_AS(pca_project({1.0, 2.0}, 1, 2), std::invalid_argument);
        REQUIRE_THROWS_AS(pca_project({1.0, 2.0}, 2, 1), std::invalid_argument);
    }
}
