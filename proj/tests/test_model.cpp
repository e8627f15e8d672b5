#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "uda/errors.hpp"
#include "uda/model.hpp"
#include "uda/rng.hpp"

using namespace uda;

namespace {

ModelParameters random_params(int vocab, int dim, int classes, int tags,
                              std::uint64_t seed) {
    ModelParameters p = ModelParameters::initialize(vocab, dim, classes, tags, seed);
    // Rough up transitions and biases so oracles see a generic instance.
    Rng rng(seed ^ 0x77);
    for (auto& v : p.transitions) v = rng.uniform() * 2 - 1;
    for (auto& v : p.class_bias) v = rng.uniform() - 0.5;
    for (auto& v : p.emission_bias) v = rng.uniform() - 0.5;
    return p;
}

// Enumeration oracle: scores every tag path explicitly.
struct BruteForce {
    int n, T;
    std::vector<double> e;
    const ModelParameters& p;

    BruteForce(const TokenSequence& x, const ModelParameters& params)
        : n(static_cast<int>(x.size())), T(params.num_tags),
          e(crf_emissions(x, params)), p(params) {}

    double path_score(const std::vector<int>& y) const {
        const int S = p.num_states();
        double s = p.transitions[p.start_tag() * S + y[0]] + e[y[0]];
        for (int j = 1; j < n; ++j) {
            s += p.transitions[y[j - 1] * S + y[j]] + e[j * T + y[j]];
        }
        return s + p.transitions[y[n - 1] * S + p.stop_tag()];
    }

    void enumerate(const std::function<void(const std::vector<int>&, double)>& f) const {
        std::vector<int> y(n, 0);
        while (true) {
            f(y, path_score(y));
            int j = n - 1;
            while (j >= 0 && ++y[j] == T) y[j--] = 0;
            if (j < 0) break;
        }
    }

    double log_z() const {
        double m = -1e300;
        enumerate([&](const std::vector<int>&, double s) { m = std::max(m, s); });
        double sum = 0;
        enumerate([&](const std::vector<int>&, double s) { sum += std::exp(s - m); });
        return m + std::log(sum);
    }

    std::vector<double> marginals() const {
        const double lz = log_z();
        std::vector<double> out(static_cast<std::size_t>(n) * T, 0.0);
        enumerate([&](const std::vector<int>& y, double s) {
            const double w = std::exp(s - lz);
            for (int j = 0; j < n; ++j) out[j * T + y[j]] += w;
        });
        return out;
    }

    double best_score() const {
        double best = -1e300;
        enumerate([&](const std::vector<int>&, double s) { best = std::max(best, s); });
        return best;
    }
};

// Central finite differences over every parameter coordinate.
void check_gradient(const std::function<double(const ModelParameters&)>& loss,
                    const ModelParameters& at, const ModelParameters& analytic,
                    double h = 1e-5, double tol = 1e-4) {
    ModelParameters probe = at;
    auto arrays = [&](ModelParameters& p) {
        std::vector<std::vector<double>*> out;
        p.for_each_array([&](std::vector<double>& a) { out.push_back(&a); });
        return out;
    };
    ModelParameters analytic_copy = analytic;
    const auto probe_arrays = arrays(probe);
    const auto grad_arrays = arrays(analytic_copy);
    for (std::size_t a = 0; a < probe_arrays.size(); ++a) {
        auto& arr = *probe_arrays[a];
        const auto& g = *grad_arrays[a];
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const double saved = arr[i];
            arr[i] = saved + h;
            const double up = loss(probe);
            arr[i] = saved - h;
            const double down = loss(probe);
            arr[i] = saved;
            const double numeric = (up - down) / (2 * h);
            const double denom = std::max(std::abs(numeric) + std::abs(g[i]), 1e-4);
            CHECK(std::abs(numeric - g[i]) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("classifier forward") {
    SUBCASE("zero weights give the uniform distribution") {
        const auto p = ModelParameters::zeros(5, 3, 4, 1);
        const auto probs = classify_forward({1, 2}, p);
        for (double v : probs) CHECK(v == doctest::Approx(0.25));
    }

    SUBCASE("hand-computed softmax") {
        auto p = ModelParameters::zeros(2, 1, 2, 1);
        p.embeddings = {0.0, 2.0};       // token 1 embeds to [2]
        p.class_weights = {1.0, -1.0};   // logits = [2, -2]
        const auto probs = classify_forward({1}, p);
        CHECK(probs[0] == doctest::Approx(0.9820137900).epsilon(1e-6));
        CHECK(probs[1] == doctest::Approx(0.0179862100).epsilon(1e-6));
    }

    SUBCASE("probabilities normalize") {
        const auto p = random_params(9, 4, 5, 1, 3);
        const auto probs = classify_forward({1, 3, 8, 2}, p);
        CHECK(std::accumulate(probs.begin(), probs.end(), 0.0) ==
              doctest::Approx(1.0).epsilon(1e-12));
        CHECK_THROWS_AS(classify_forward({}, p), DataError);
    }
}

TEST_CASE("CRF agrees with brute-force enumeration") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        Rng rng(seed * 31 + 5);
        const int tags = 1 + static_cast<int>(rng.below(3));
        const int n = 1 + static_cast<int>(rng.below(4));
        const auto p = random_params(8, 3, 2, tags, seed);
        TokenSequence x;
        for (int j = 0; j < n; ++j) x.push_back(static_cast<TokenId>(rng.below(8)));

        const BruteForce oracle(x, p);
        CHECK(log_partition(x, p) == doctest::Approx(oracle.log_z()).epsilon(1e-10));

        const auto m = tag_marginals(x, p);
        const auto mo = oracle.marginals();
        for (std::size_t i = 0; i < m.size(); ++i) {
            CHECK(std::abs(m[i] - mo[i]) < 1e-8);
        }

        const auto path = viterbi_decode(x, p);
        CHECK(oracle.path_score(path) == doctest::Approx(oracle.best_score()).epsilon(1e-10));
    }
}

TEST_CASE("CRF special cases") {
    SUBCASE("single step, zero transitions: logZ is logsumexp of emissions") {
        const auto p = random_params(6, 2, 2, 3, 11);
        auto pz = p;
        std::fill(pz.transitions.begin(), pz.transitions.end(), 0.0);
        const TokenSequence x{4};
        const auto e = crf_emissions(x, pz);
        double m = *std::max_element(e.begin(), e.end());
        double sum = 0;
        for (double v : e) sum += std::exp(v - m);
        CHECK(log_partition(x, pz) == doctest::Approx(m + std::log(sum)).epsilon(1e-12));
    }

    SUBCASE("zero transitions factorize the marginals") {
        auto p = random_params(6, 2, 2, 3, 13);
        std::fill(p.transitions.begin(), p.transitions.end(), 0.0);
        const TokenSequence x{1, 4, 2};
        const auto e = crf_emissions(x, p);
        const auto m = tag_marginals(x, p);
        for (int j = 0; j < 3; ++j) {
            double mx = std::max({e[j * 3], e[j * 3 + 1], e[j * 3 + 2]});
            double z = 0;
            for (int t = 0; t < 3; ++t) z += std::exp(e[j * 3 + t] - mx);
            for (int t = 0; t < 3; ++t) {
                CHECK(m[j * 3 + t] ==
                      doctest::Approx(std::exp(e[j * 3 + t] - mx) / z).epsilon(1e-10));
            }
        }
    }

    SUBCASE("adding a constant to one position's emissions shifts logZ by it") {
        const auto p = random_params(6, 2, 2, 3, 17);
        const TokenSequence x{1, 2, 3};
        const double base = log_partition(x, p);
        auto shifted = p;
        // Shift every emission at position 1 by c through the bias trick is
        // not possible per-position, so compare against a manual lattice on
        // shifted emissions via the marginal shift-invariance instead.
        const auto m = tag_marginals(x, p);
        auto p2 = p;
        for (auto& v : p2.emission_bias) v += 0.37;  // shifts every position
        const auto m2 = tag_marginals(x, p2);
        for (std::size_t i = 0; i < m.size(); ++i) {
            CHECK(m[i] == doctest::Approx(m2[i]).epsilon(1e-9));
        }
        CHECK(log_partition(x, p2) == doctest::Approx(base + 3 * 0.37).epsilon(1e-9));
        (void)shifted;
    }

    SUBCASE("single tag: marginals are 1 and the path is all zeros") {
        const auto p = random_params(6, 2, 2, 1, 19);
        const TokenSequence x{1, 2, 3, 4};
        for (double v : tag_marginals(x, p)) CHECK(v == doctest::Approx(1.0));
        CHECK(viterbi_decode(x, p) == std::vector<int>{0, 0, 0, 0});
    }

    SUBCASE("all-equal scores break ties toward the lowest tag id") {
        const auto p = ModelParameters::zeros(4, 2, 2, 3);
        CHECK(viterbi_decode({1, 2}, p) == std::vector<int>{0, 0});
    }
}

TEST_CASE("analytic gradients match finite differences") {
    SUBCASE("classification NLL") {
        const auto p = random_params(7, 3, 2, 1, 23);
        const TokenSequence x{1, 5, 2};
        ModelParameters g = ModelParameters::zeros(7, 3, 2, 1);
        classification_nll_grad(x, 1, p, g);
        check_gradient(
            [&](const ModelParameters& q) {
                return -std::log(classify_forward(x, q)[1]);
            },
            p, g);
    }

    SUBCASE("classification consistency with a frozen target") {
        const auto p = random_params(7, 3, 2, 1, 29);
        const TokenSequence x{1, 5, 2}, x_aug{1, 6, 2};
        const auto target = classify_forward(x, p);
        ModelParameters g = ModelParameters::zeros(7, 3, 2, 1);
        const double loss = classification_consistency_grad(x, x_aug, p, g);
        CHECK(loss >= 0);
        check_gradient(
            [&](const ModelParameters& q) {
                const auto online = classify_forward(x_aug, q);
                double kl = 0;
                for (std::size_t c = 0; c < target.size(); ++c) {
                    kl += target[c] * (std::log(target[c]) - std::log(online[c]));
                }
                return kl;
            },
            p, g);
    }

    SUBCASE("tagging NLL") {
        const auto p = random_params(7, 3, 2, 3, 31);
        const TokenSequence x{1, 5, 2, 4};
        const std::vector<int> y{0, 2, 1, 1};
        ModelParameters g = ModelParameters::zeros(7, 3, 2, 3);
        const double loss = tagging_nll_grad(x, y, p, g);
        CHECK(loss > 0);
        check_gradient(
            [&](const ModelParameters& q) {
                const BruteForce bf(x, q);
                return bf.log_z() - bf.path_score(y);
            },
            p, g);
    }

    SUBCASE("tagging consistency with frozen marginals") {
        const auto p = random_params(7, 3, 2, 3, 37);
        const TokenSequence x{1, 5, 2}, x_aug{1, 6, 2};
        const auto target = tag_marginals(x, p);
        ModelParameters g = ModelParameters::zeros(7, 3, 2, 3);
        const double loss = tagging_consistency_grad(x, x_aug, p, g);
        CHECK(loss >= 0);
        check_gradient(
            [&](const ModelParameters& q) {
                const auto online = tag_marginals(x_aug, q);
                double total = 0;
                for (std::size_t i = 0; i < target.size(); ++i) {
                    if (target[i] > 0) {
                        total += target[i] * (std::log(target[i]) - std::log(online[i]));
                    }
                }
                return total / 3.0;
            },
            p, g);
    }

    SUBCASE("duplicated example doubles the gradient") {
        const auto p = random_params(7, 3, 2, 1, 41);
        const TokenSequence x{2, 3};
        ModelParameters once = ModelParameters::zeros(7, 3, 2, 1);
        ModelParameters twice = ModelParameters::zeros(7, 3, 2, 1);
        classification_nll_grad(x, 0, p, once);
        classification_nll_grad(x, 0, p, twice);
        classification_nll_grad(x, 0, p, twice);
        for (std::size_t i = 0; i < once.embeddings.size(); ++i) {
            CHECK(twice.embeddings[i] == doctest::Approx(2 * once.embeddings[i]));
        }
    }
}

TEST_CASE("consistency losses vanish on identity perturbations") {
    const auto p = random_params(7, 3, 2, 3, 43);
    const TokenSequence x{1, 5, 2};
    CHECK(classification_consistency_value(x, x, p) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(tagging_consistency_value(x, x, p) == doctest::Approx(0.0).epsilon(1e-12));

    // The gradient is exactly zero at the minimum (online == target).
    ModelParameters g = ModelParameters::zeros(7, 3, 2, 3);
    classification_consistency_grad(x, x, p, g);
    tagging_consistency_grad(x, x, p, g);
    g.for_each_array([](const std::vector<double>& a) {
        for (double v : a) CHECK(std::abs(v) < 1e-12);
    });
}
