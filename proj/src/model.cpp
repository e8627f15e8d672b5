#include "uda/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "uda/errors.hpp"
#include "uda/rng.hpp"

namespace uda {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp(const double* v, int n) {
    double m = kNegInf;
    for (int i = 0; i < n; ++i) m = std::max(m, v[i]);
    if (m == kNegInf) return kNegInf;
    double s = 0;
    for (int i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

double gaussian(Rng& rng) {
    // Box-Muller; the second variate is discarded for simplicity.
    double u1 = rng.uniform();
    while (u1 == 0.0) u1 = rng.uniform();
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace

ModelParameters ModelParameters::zeros(int vocab_size, int dim, int num_classes,
                                       int num_tags) {
    ModelParameters p;
    p.vocab_size = vocab_size;
    p.dim = dim;
    p.num_classes = num_classes;
    p.num_tags = num_tags;
    p.embeddings.assign(static_cast<std::size_t>(vocab_size) * dim, 0.0);
    p.class_weights.assign(static_cast<std::size_t>(dim) * num_classes, 0.0);
    p.class_bias.assign(num_classes, 0.0);
    p.emission_weights.assign(static_cast<std::size_t>(kWindow) * dim * num_tags, 0.0);
    p.emission_bias.assign(num_tags, 0.0);
    p.transitions.assign(static_cast<std::size_t>(p.num_states()) * p.num_states(), 0.0);
    return p;
}

ModelParameters ModelParameters::initialize(int vocab_size, int dim, int num_classes,
                                            int num_tags, std::uint64_t seed) {
    ModelParameters p = zeros(vocab_size, dim, num_classes, num_tags);
    Rng rng = Rng::derive(seed, 0x1217);
    for (auto& v : p.embeddings) v = rng.uniform() * 0.2 - 0.1;
    const double class_std = 1.0 / std::sqrt(static_cast<double>(dim));
    for (auto& v : p.class_weights) v = gaussian(rng) * class_std;
    const double emit_std = 1.0 / std::sqrt(static_cast<double>(kWindow * dim));
    for (auto& v : p.emission_weights) v = gaussian(rng) * emit_std;
    return p;
}

void ModelParameters::for_each_array(
    const std::function<void(std::vector<double>&)>& f) {
    f(embeddings);
    f(class_weights);
    f(class_bias);
    f(emission_weights);
    f(emission_bias);
    f(transitions);
}

void ModelParameters::for_each_array(
    const std::function<void(const std::vector<double>&)>& f) const {
    f(embeddings);
    f(class_weights);
    f(class_bias);
    f(emission_weights);
    f(emission_bias);
    f(transitions);
}

bool ModelParameters::shape_matches(const ModelParameters& other) const {
    return vocab_size == other.vocab_size && dim == other.dim &&
           num_classes == other.num_classes && num_tags == other.num_tags;
}

// --- classifier -------------------------------------------------------------

namespace {

std::vector<double> mean_pool(const TokenSequence& x, const ModelParameters& p) {
    std::vector<double> pooled(p.dim, 0.0);
    for (TokenId id : x) {
        const double* e = &p.embeddings[static_cast<std::size_t>(id) * p.dim];
        for (int d = 0; d < p.dim; ++d) pooled[d] += e[d];
    }
    const double inv_n = 1.0 / static_cast<double>(x.size());
    for (double& v : pooled) v *= inv_n;
    return pooled;
}

std::vector<double> class_logits(const std::vector<double>& pooled,
                                 const ModelParameters& p) {
    std::vector<double> logits(p.class_bias);
    for (int d = 0; d < p.dim; ++d) {
        const double* w = &p.class_weights[static_cast<std::size_t>(d) * p.num_classes];
        for (int c = 0; c < p.num_classes; ++c) logits[c] += pooled[d] * w[c];
    }
    return logits;
}

std::vector<double> softmax(std::vector<double> logits) {
    const double lz = logsumexp(logits.data(), static_cast<int>(logits.size()));
    for (double& v : logits) v = std::exp(v - lz);
    return logits;
}

// Pushes a logit-space gradient back through the pooled classifier.
void backprop_classifier(const TokenSequence& x, const std::vector<double>& pooled,
                         const std::vector<double>& dlogits,
                         const ModelParameters& p, ModelParameters& grad) {
    for (int c = 0; c < p.num_classes; ++c) grad.class_bias[c] += dlogits[c];
    std::vector<double> dpooled(p.dim, 0.0);
    for (int d = 0; d < p.dim; ++d) {
        const double* w = &p.class_weights[static_cast<std::size_t>(d) * p.num_classes];
        double* gw = &grad.class_weights[static_cast<std::size_t>(d) * p.num_classes];
        for (int c = 0; c < p.num_classes; ++c) {
            gw[c] += pooled[d] * dlogits[c];
            dpooled[d] += w[c] * dlogits[c];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(x.size());
    for (TokenId id : x) {
        double* ge = &grad.embeddings[static_cast<std::size_t>(id) * p.dim];
        for (int d = 0; d < p.dim; ++d) ge[d] += dpooled[d] * inv_n;
    }
}

}  // namespace

std::vector<double> classify_forward(const TokenSequence& x,
                                     const ModelParameters& params) {
    if (x.empty()) throw DataError("cannot classify an empty sequence");
    return softmax(class_logits(mean_pool(x, params), params));
}

double classification_nll_grad(const TokenSequence& x, int label,
                               const ModelParameters& params,
                               ModelParameters& grad) {
    const auto pooled = mean_pool(x, params);
    auto logits = class_logits(pooled, params);
    const double lz = logsumexp(logits.data(), params.num_classes);
    const double loss = lz - logits[label];
    if (!std::isfinite(loss)) throw NumericError("non-finite classification loss");

    std::vector<double> dlogits(params.num_classes);
    for (int c = 0; c < params.num_classes; ++c) {
        dlogits[c] = std::exp(logits[c] - lz);
    }
    dlogits[label] -= 1.0;
    backprop_classifier(x, pooled, dlogits, params, grad);
    return loss;
}

namespace {

double kl_rows(const double* target, const double* online, int n) {
    double kl = 0;
    for (int i = 0; i < n; ++i) {
        if (target[i] > 0) kl += target[i] * (std::log(target[i]) - std::log(online[i]));
    }
    return kl;
}

}  // namespace

double classification_consistency_value(const TokenSequence& x,
                                        const TokenSequence& x_aug,
                                        const ModelParameters& params) {
    const auto target = classify_forward(x, params);
    const auto online = classify_forward(x_aug, params);
    const double kl = kl_rows(target.data(), online.data(), params.num_classes);
    if (!std::isfinite(kl)) throw NumericError("non-finite consistency loss");
    return kl;
}

double classification_consistency_grad(const TokenSequence& x,
                                       const TokenSequence& x_aug,
                                       const ModelParameters& params,
                                       ModelParameters& grad) {
    const auto target = classify_forward(x, params);  // frozen, no gradient
    const auto pooled_aug = mean_pool(x_aug, params);
    const auto online = softmax(class_logits(pooled_aug, params));
    const double kl = kl_rows(target.data(), online.data(), params.num_classes);
    if (!std::isfinite(kl)) throw NumericError("non-finite consistency loss");

    std::vector<double> dlogits(params.num_classes);
    for (int c = 0; c < params.num_classes; ++c) dlogits[c] = online[c] - target[c];
    backprop_classifier(x_aug, pooled_aug, dlogits, params, grad);
    return kl;
}

// --- CRF tagger -------------------------------------------------------------

std::vector<double> crf_emissions(const TokenSequence& x,
                                  const ModelParameters& p) {
    const int n = static_cast<int>(x.size());
    const int T = p.num_tags;
    std::vector<double> e(static_cast<std::size_t>(n) * T);
    for (int j = 0; j < n; ++j) {
        double* ej = &e[static_cast<std::size_t>(j) * T];
        for (int t = 0; t < T; ++t) ej[t] = p.emission_bias[t];
        for (int w = 0; w < ModelParameters::kWindow; ++w) {
            const int pos = j + w - 1;
            if (pos < 0 || pos >= n) continue;  // zero boundary vector
            const double* emb = &p.embeddings[static_cast<std::size_t>(x[pos]) * p.dim];
            for (int d = 0; d < p.dim; ++d) {
                const double* wt =
                    &p.emission_weights[(static_cast<std::size_t>(w) * p.dim + d) * T];
                for (int t = 0; t < T; ++t) ej[t] += emb[d] * wt[t];
            }
        }
    }
    return e;
}

namespace {

// Forward-backward lattice in log space with reverse-mode gradients through
// the recursions themselves. start/stop transitions live in the last two
// rows/columns of the transition matrix.
struct Lattice {
    int n, T;
    const ModelParameters& p;
    std::vector<double> e;      // n x T
    std::vector<double> alpha;  // n x T
    std::vector<double> beta;   // n x T
    double log_z = 0;

    Lattice(const TokenSequence& x, const ModelParameters& params)
        : n(static_cast<int>(x.size())), T(params.num_tags), p(params),
          e(crf_emissions(x, params)) {
        const int S = p.num_states();
        const double* tr = p.transitions.data();
        alpha.resize(e.size());
        beta.resize(e.size());
        std::vector<double> scratch(T);

        for (int t = 0; t < T; ++t) alpha[t] = tr[p.start_tag() * S + t] + e[t];
        for (int j = 1; j < n; ++j) {
            for (int t = 0; t < T; ++t) {
                for (int s = 0; s < T; ++s) {
                    scratch[s] = alpha[(j - 1) * T + s] + tr[s * S + t];
                }
                alpha[j * T + t] = logsumexp(scratch.data(), T) + e[j * T + t];
            }
        }
        for (int t = 0; t < T; ++t) {
            scratch[t] = alpha[(n - 1) * T + t] + tr[t * S + p.stop_tag()];
        }
        log_z = logsumexp(scratch.data(), T);

        for (int t = 0; t < T; ++t) beta[(n - 1) * T + t] = tr[t * S + p.stop_tag()];
        for (int j = n - 2; j >= 0; --j) {
            for (int t = 0; t < T; ++t) {
                for (int s = 0; s < T; ++s) {
                    scratch[s] = tr[t * S + s] + e[(j + 1) * T + s] + beta[(j + 1) * T + s];
                }
                beta[j * T + t] = logsumexp(scratch.data(), T);
            }
        }
    }

    std::vector<double> marginals() const {
        std::vector<double> m(e.size());
        for (std::size_t i = 0; i < m.size(); ++i) {
            m[i] = std::exp(alpha[i] + beta[i] - log_z);
        }
        return m;
    }

    // Reverse-mode sweep. dlogm seeds gradients of log marginals (may be
    // empty), dlogz seeds the partition function directly. Accumulates the
    // gradient w.r.t. emissions into de and w.r.t. transitions into dtr.
    void backward(const std::vector<double>& dlogm, double dlogz,
                  std::vector<double>& de, std::vector<double>& dtr) const {
        const int S = p.num_states();
        const double* tr = p.transitions.data();
        std::vector<double> da(e.size(), 0.0);
        std::vector<double> db(e.size(), 0.0);

        if (!dlogm.empty()) {
            for (std::size_t i = 0; i < e.size(); ++i) {
                da[i] += dlogm[i];
                db[i] += dlogm[i];
                dlogz -= dlogm[i];
            }
        }

        // log_z = lse_t(alpha[n-1][t] + tr[t][stop])
        for (int t = 0; t < T; ++t) {
            const double w = std::exp(alpha[(n - 1) * T + t] + tr[t * S + p.stop_tag()] - log_z);
            da[(n - 1) * T + t] += dlogz * w;
            dtr[t * S + p.stop_tag()] += dlogz * w;
        }

        // beta[j][t] = lse_s(tr[t][s] + e[j+1][s] + beta[j+1][s]); reverse in
        // increasing j so db[j] is complete before it propagates.
        for (int j = 0; j < n - 1; ++j) {
            for (int t = 0; t < T; ++t) {
                const double g = db[j * T + t];
                if (g == 0.0) continue;
                for (int s = 0; s < T; ++s) {
                    const double w = std::exp(tr[t * S + s] + e[(j + 1) * T + s] +
                                              beta[(j + 1) * T + s] - beta[j * T + t]);
                    dtr[t * S + s] += g * w;
                    de[(j + 1) * T + s] += g * w;
                    db[(j + 1) * T + s] += g * w;
                }
            }
        }
        for (int t = 0; t < T; ++t) {
            dtr[t * S + p.stop_tag()] += db[(n - 1) * T + t];
        }

        // alpha[j][t] = lse_s(alpha[j-1][s] + tr[s][t]) + e[j][t]
        for (int j = n - 1; j >= 1; --j) {
            for (int t = 0; t < T; ++t) {
                const double g = da[j * T + t];
                if (g == 0.0) continue;
                de[j * T + t] += g;
                const double inner = alpha[j * T + t] - e[j * T + t];
                for (int s = 0; s < T; ++s) {
                    const double w = std::exp(alpha[(j - 1) * T + s] + tr[s * S + t] - inner);
                    da[(j - 1) * T + s] += g * w;
                    dtr[s * S + t] += g * w;
                }
            }
        }
        for (int t = 0; t < T; ++t) {
            de[t] += da[t];
            dtr[p.start_tag() * S + t] += da[t];
        }
    }
};

// Backpropagates an emission-space gradient to weights, biases, embeddings.
void backprop_emissions(const TokenSequence& x, const std::vector<double>& de,
                        const ModelParameters& p, ModelParameters& grad) {
    const int n = static_cast<int>(x.size());
    const int T = p.num_tags;
    for (int j = 0; j < n; ++j) {
        const double* dej = &de[static_cast<std::size_t>(j) * T];
        for (int t = 0; t < T; ++t) grad.emission_bias[t] += dej[t];
        for (int w = 0; w < ModelParameters::kWindow; ++w) {
            const int pos = j + w - 1;
            if (pos < 0 || pos >= n) continue;
            const double* emb = &p.embeddings[static_cast<std::size_t>(x[pos]) * p.dim];
            double* gemb = &grad.embeddings[static_cast<std::size_t>(x[pos]) * p.dim];
            for (int d = 0; d < p.dim; ++d) {
                const std::size_t base = (static_cast<std::size_t>(w) * p.dim + d) * T;
                const double* wt = &p.emission_weights[base];
                double* gwt = &grad.emission_weights[base];
                for (int t = 0; t < T; ++t) {
                    gwt[t] += emb[d] * dej[t];
                    gemb[d] += wt[t] * dej[t];
                }
            }
        }
    }
}

}  // namespace

double log_partition(const TokenSequence& x, const ModelParameters& params) {
    if (x.empty()) throw DataError("cannot score an empty sequence");
    return Lattice(x, params).log_z;
}

std::vector<double> tag_marginals(const TokenSequence& x,
                                  const ModelParameters& params) {
    if (x.empty()) throw DataError("cannot score an empty sequence");
    return Lattice(x, params).marginals();
}

std::vector<int> viterbi_decode(const TokenSequence& x,
                                const ModelParameters& params) {
    if (x.empty()) throw DataError("cannot decode an empty sequence");
    const int n = static_cast<int>(x.size());
    const int T = params.num_tags;
    const int S = params.num_states();
    const double* tr = params.transitions.data();
    const auto e = crf_emissions(x, params);

    std::vector<double> delta(static_cast<std::size_t>(n) * T);
    std::vector<int> back(static_cast<std::size_t>(n) * T, 0);
    for (int t = 0; t < T; ++t) delta[t] = tr[params.start_tag() * S + t] + e[t];
    for (int j = 1; j < n; ++j) {
        for (int t = 0; t < T; ++t) {
            double best = kNegInf;
            int arg = 0;
            for (int s = 0; s < T; ++s) {
                const double v = delta[(j - 1) * T + s] + tr[s * S + t];
                if (v > best) {  // strict: ties keep the lower s
                    best = v;
                    arg = s;
                }
            }
            delta[j * T + t] = best + e[j * T + t];
            back[j * T + t] = arg;
        }
    }
    double best = kNegInf;
    int arg = 0;
    for (int t = 0; t < T; ++t) {
        const double v = delta[(n - 1) * T + t] + tr[t * S + params.stop_tag()];
        if (v > best) {
            best = v;
            arg = t;
        }
    }
    std::vector<int> path(n);
    path[n - 1] = arg;
    for (int j = n - 1; j >= 1; --j) path[j - 1] = back[j * T + path[j]];
    return path;
}

double tagging_nll_grad(const TokenSequence& x, const std::vector<int>& tags,
                        const ModelParameters& params, ModelParameters& grad) {
    if (x.size() != tags.size()) throw DataError("tag sequence length mismatch");
    const int n = static_cast<int>(x.size());
    const int T = params.num_tags;
    const int S = params.num_states();
    const double* tr = params.transitions.data();

    Lattice lat(x, params);
    double gold = tr[params.start_tag() * S + tags[0]] + lat.e[tags[0]];
    for (int j = 1; j < n; ++j) {
        gold += tr[tags[j - 1] * S + tags[j]] + lat.e[j * T + tags[j]];
    }
    gold += tr[tags[n - 1] * S + params.stop_tag()];
    const double loss = lat.log_z - gold;
    if (!std::isfinite(loss)) throw NumericError("non-finite tagging loss");

    std::vector<double> de(lat.e.size(), 0.0);
    std::vector<double> dtr(params.transitions.size(), 0.0);
    lat.backward({}, 1.0, de, dtr);  // expected counts

    de[tags[0]] -= 1.0;
    dtr[params.start_tag() * S + tags[0]] -= 1.0;
    for (int j = 1; j < n; ++j) {
        de[j * T + tags[j]] -= 1.0;
        dtr[tags[j - 1] * S + tags[j]] -= 1.0;
    }
    dtr[tags[n - 1] * S + params.stop_tag()] -= 1.0;

    backprop_emissions(x, de, params, grad);
    for (std::size_t i = 0; i < dtr.size(); ++i) grad.transitions[i] += dtr[i];
    return loss;
}

double tagging_consistency_value(const TokenSequence& x,
                                 const TokenSequence& x_aug,
                                 const ModelParameters& params) {
    if (x.size() != x_aug.size()) throw DataError("perturbed sequence length mismatch");
    const int n = static_cast<int>(x.size());
    const int T = params.num_tags;
    const auto target = tag_marginals(x, params);
    const auto online = tag_marginals(x_aug, params);
    double total = 0;
    for (int j = 0; j < n; ++j) {
        total += kl_rows(&target[static_cast<std::size_t>(j) * T],
                         &online[static_cast<std::size_t>(j) * T], T);
    }
    const double loss = total / n;
    if (!std::isfinite(loss)) throw NumericError("non-finite tagging consistency loss");
    return loss;
}

double tagging_consistency_grad(const TokenSequence& x,
                                const TokenSequence& x_aug,
                                const ModelParameters& params,
                                ModelParameters& grad) {
    if (x.size() != x_aug.size()) throw DataError("perturbed sequence length mismatch");
    const int n = static_cast<int>(x.size());
    const int T = params.num_tags;

    const auto target = tag_marginals(x, params);  // frozen, no gradient
    Lattice aug(x_aug, params);
    const auto online_log = [&](int j, int t) {
        return aug.alpha[j * T + t] + aug.beta[j * T + t] - aug.log_z;
    };

    double total = 0;
    std::vector<double> dlogm(aug.e.size(), 0.0);
    for (int j = 0; j < n; ++j) {
        for (int t = 0; t < T; ++t) {
            const double tgt = target[j * T + t];
            if (tgt > 0) {
                total += tgt * (std::log(tgt) - online_log(j, t));
                dlogm[j * T + t] = -tgt / n;
            }
        }
    }
    const double loss = total / n;
    if (!std::isfinite(loss)) throw NumericError("non-finite tagging consistency loss");

    std::vector<double> de(aug.e.size(), 0.0);
    std::vector<double> dtr(params.transitions.size(), 0.0);
    aug.backward(dlogm, 0.0, de, dtr);
    backprop_emissions(x_aug, de, params, grad);
    for (std::size_t i = 0; i < dtr.size(); ++i) grad.transitions[i] += dtr[i];
    return loss;
}

}  // namespace uda
