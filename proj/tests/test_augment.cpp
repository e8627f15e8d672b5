#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "uda/augment.hpp"
#include "uda/errors.hpp"

using namespace uda;

namespace {

Vocabulary make_vocab(int n_words) {
    std::vector<std::vector<std::string>> source(1);
    for (int i = 0; i < n_words; ++i) {
        source[0].push_back("w" + std::to_string(i));
    }
    return build_vocabulary(source, 1);
}

}  // namespace

TEST_CASE("uniform replacement basics") {
    const Vocabulary vocab = make_vocab(20);
    PerturbationConfig cfg;
    Rng rng(1);

    SUBCASE("p=0 is the identity for every seed") {
        cfg.replace_prob = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng r(seed);
            const TokenSequence x{1, 2, 3, 4};
            CHECK(uniform_random_replace(x, cfg, vocab, r) == x);
        }
    }

    SUBCASE("p=1 always replaces with a different non-unk token") {
        cfg.replace_prob = 1;
        for (int trial = 0; trial < 1000; ++trial) {
            const TokenSequence x{1, 5, 19, 0};
            const auto out = uniform_random_replace(x, cfg, vocab, rng);
            REQUIRE(out.size() == x.size());
            for (std::size_t j = 0; j < x.size(); ++j) {
                CHECK(out[j] != x[j]);
                CHECK(out[j] != Vocabulary::kUnkId);
            }
        }
    }

    SUBCASE("deterministic given the seed") {
        cfg.replace_prob = 0.5;
        Rng a(99), b(99);
        const TokenSequence x{1, 2, 3, 4, 5, 6};
        CHECK(uniform_random_replace(x, cfg, vocab, a) ==
              uniform_random_replace(x, cfg, vocab, b));
    }

    SUBCASE("replacement rate converges to p") {
        cfg.replace_prob = 0.3;
        const TokenSequence x{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
        int replaced = 0;
        const int trials = 10000;
        for (int t = 0; t < trials; ++t) {
            const auto out = uniform_random_replace(x, cfg, vocab, rng);
            for (std::size_t j = 0; j < x.size(); ++j) {
                if (out[j] != x[j]) ++replaced;
            }
        }
        const double rate = replaced / (10.0 * trials);
        CHECK(std::abs(rate - 0.3) <= 0.02);
    }

    SUBCASE("tiny vocabulary rejected") {
        const Vocabulary tiny = make_vocab(1);
        cfg.replace_prob = 1;
        CHECK_THROWS_AS(uniform_random_replace({1}, cfg, tiny, rng), DataError);
    }
}

TEST_CASE("context proposer") {
    SUBCASE("learns the dominant center word") {
        std::vector<TokenSequence> corpus(50, TokenSequence{1, 2, 3});  // "a b c"
        const auto proposer = train_context_proposer(corpus, 5, 0.1);
        const auto scores = proposer.propose(1, 3);
        int best = 0;
        for (int t = 1; t < 5; ++t) {
            if (scores[t] > scores[best]) best = t;
        }
        CHECK(best == 2);
    }

    SUBCASE("unseen context backs off to the smoothed unigram") {
        std::vector<TokenSequence> corpus{{1, 2, 3}};
        const auto proposer = train_context_proposer(corpus, 4, 0.5);
        const auto backoff = proposer.propose(3, 1);
        // unigram counts: 0,1,1,1 over total 3, alpha 0.5, V 4
        CHECK(backoff[0] == doctest::Approx(0.5 / 5.0));
        CHECK(backoff[1] == doctest::Approx(1.5 / 5.0));
    }

    SUBCASE("proposals normalize and stay positive") {
        std::vector<TokenSequence> corpus{{1, 2, 3, 2, 1}};
        const auto proposer = train_context_proposer(corpus, 4, 0.1);
        for (TokenId l : {ContextProposer::kBoundary, 1, 2}) {
            for (TokenId r : {ContextProposer::kBoundary, 2, 3}) {
                const auto scores = proposer.propose(l, r);
                const double sum = std::accumulate(scores.begin(), scores.end(), 0.0);
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
                for (double s : scores) CHECK(s > 0);
            }
        }
    }

    SUBCASE("empty corpus and bad alpha rejected") {
        CHECK_THROWS_AS(train_context_proposer({}, 4, 0.1), DataError);
        CHECK_THROWS_AS(train_context_proposer({{1}}, 4, 0.0), DataError);
    }
}

TEST_CASE("contextual replacement") {
    PerturbationConfig cfg;
    cfg.mode = PerturbMode::kContextual;
    Rng rng(2);

    SUBCASE("p=0 is the identity") {
        std::vector<TokenSequence> corpus{{1, 2, 3}};
        const auto proposer = train_context_proposer(corpus, 4, 0.1);
        cfg.replace_prob = 0;
        const TokenSequence x{1, 2, 3};
        CHECK(contextual_replace(x, cfg, proposer, rng) == x);
    }

    SUBCASE("degenerate proposer forces its candidate") {
        // Train so that context (1, 3) overwhelmingly proposes token 2.
        std::vector<TokenSequence> corpus(500, TokenSequence{1, 2, 3});
        const auto proposer = train_context_proposer(corpus, 6, 1e-9);
        cfg.replace_prob = 1;
        const TokenSequence x{1, 4, 3};  // original center is 4, candidate c is 2
        const auto out = contextual_replace(x, cfg, proposer, rng);
        CHECK(out[1] == 2);
    }

    SUBCASE("replacements stay in the top-k and exclude the original") {
        std::vector<TokenSequence> corpus;
        Rng gen(7);
        for (int i = 0; i < 200; ++i) {
            TokenSequence s;
            for (int j = 0; j < 8; ++j) s.push_back(static_cast<TokenId>(1 + gen.below(30)));
            corpus.push_back(s);
        }
        const auto proposer = train_context_proposer(corpus, 31, 0.1);
        cfg.replace_prob = 1;
        cfg.top_k = 10;
        const TokenSequence x = corpus[0];
        for (int trial = 0; trial < 2000; ++trial) {
            const auto out = contextual_replace(x, cfg, proposer, rng);
            for (std::size_t j = 0; j < x.size(); ++j) {
                CHECK(out[j] != x[j]);
                CHECK(out[j] != Vocabulary::kUnkId);
                // Recompute the context's top-10 by score.
                const TokenId left = j > 0 ? x[j - 1] : ContextProposer::kBoundary;
                const TokenId right = j + 1 < x.size() ? x[j + 1] : ContextProposer::kBoundary;
                const auto scores = proposer.propose(left, right);
                std::vector<TokenId> ranked;
                for (TokenId t = 1; t < 31; ++t) ranked.push_back(t);
                std::stable_sort(ranked.begin(), ranked.end(),
                                 [&](TokenId a, TokenId b) { return scores[a] > scores[b]; });
                const std::set<TokenId> top10(ranked.begin(), ranked.begin() + 10);
                CHECK(top10.count(out[j]) == 1);
            }
        }
    }
}

TEST_CASE("paraphrase table") {
    const auto dir = std::filesystem::temp_directory_path();
    const Vocabulary vocab = build_vocabulary(
        {{"the", "movie", "was", "good", "bad"}}, 1);

    SUBCASE("loads and interns") {
        const auto path = (dir / "para.jsonl").string();
        std::ofstream(path) << "{\"id\":3,\"paraphrase\":\"the movie was good\"}\n";
        const auto table = load_paraphrase_pairs(path, 10, vocab);
        CHECK(table.size() == 1);
        CHECK(table.lookup(3).size() == 4);
        CHECK_THROWS_AS(table.lookup(4), DataError);
    }

    SUBCASE("duplicate and out-of-range ids rejected") {
        const auto dup = (dir / "dup.jsonl").string();
        std::ofstream(dup) << "{\"id\":1,\"paraphrase\":\"x\"}\n"
                              "{\"id\":1,\"paraphrase\":\"y\"}\n";
        CHECK_THROWS_WITH_AS(load_paraphrase_pairs(dup, 10, vocab),
                             doctest::Contains("1"), DataError);

        const auto oob = (dir / "oob.jsonl").string();
        std::ofstream(oob) << "{\"id\":10,\"paraphrase\":\"x\"}\n";
        CHECK_THROWS_AS(load_paraphrase_pairs(oob, 10, vocab), DataError);
    }

    SUBCASE("empty file yields an empty table") {
        const auto path = (dir / "none.jsonl").string();
        std::ofstream(path) << "";
        CHECK(load_paraphrase_pairs(path, 10, vocab).size() == 0);
    }
}
