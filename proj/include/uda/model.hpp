#ifndef UDA_MODEL_HPP
#define UDA_MODEL_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "uda/corpus.hpp"

namespace uda {

// Trainable weights for both heads: a mean-pooled bag-of-embeddings softmax
// classifier and a windowed-emission linear-chain CRF tagger. Gradients reuse
// the same shape.
struct ModelParameters {
    static constexpr int kWindow = 3;  // previous, current, next

    int vocab_size = 0;
    int dim = 0;
    int num_classes = 0;
    int num_tags = 0;

    std::vector<double> embeddings;        // vocab_size x dim
    std::vector<double> class_weights;     // dim x num_classes
    std::vector<double> class_bias;        // num_classes
    std::vector<double> emission_weights;  // (kWindow*dim) x num_tags
    std::vector<double> emission_bias;     // num_tags
    std::vector<double> transitions;       // (num_tags+2)^2, row = from, col = to

    int start_tag() const { return num_tags; }
    int stop_tag() const { return num_tags + 1; }
    int num_states() const { return num_tags + 2; }

    static ModelParameters zeros(int vocab_size, int dim, int num_classes,
                                 int num_tags);
    // Embeddings uniform in [-0.1, 0.1]; weights normal with std 1/sqrt(fan-in);
    // biases and transitions zero.
    static ModelParameters initialize(int vocab_size, int dim, int num_classes,
                                      int num_tags, std::uint64_t seed);

    // Applies f to every parameter array, in a fixed order.
    void for_each_array(const std::function<void(std::vector<double>&)>& f);
    void for_each_array(const std::function<void(const std::vector<double>&)>& f) const;

    bool shape_matches(const ModelParameters& other) const;
};

// --- classifier -------------------------------------------------------------

std::vector<double> classify_forward(const TokenSequence& x,
                                     const ModelParameters& params);

// Negative log-likelihood of the gold class; gradient accumulated into grad.
double classification_nll_grad(const TokenSequence& x, int label,
                               const ModelParameters& params,
                               ModelParameters& grad);

// KL(stop_grad(p(x)) || p(x_aug)); gradient flows through the perturbed
// branch only.
double classification_consistency_grad(const TokenSequence& x,
                                       const TokenSequence& x_aug,
                                       const ModelParameters& params,
                                       ModelParameters& grad);
double classification_consistency_value(const TokenSequence& x,
                                        const TokenSequence& x_aug,
                                        const ModelParameters& params);

// --- CRF tagger -------------------------------------------------------------

// Emission scores, n x num_tags row-major.
std::vector<double> crf_emissions(const TokenSequence& x,
                                  const ModelParameters& params);

double log_partition(const TokenSequence& x, const ModelParameters& params);

// Exact per-token marginals, n x num_tags row-major.
std::vector<double> tag_marginals(const TokenSequence& x,
                                  const ModelParameters& params);

// Argmax tag path, ties toward the lower tag id.
std::vector<int> viterbi_decode(const TokenSequence& x,
                                const ModelParameters& params);

// Sequence negative log-likelihood (logZ minus gold path score).
double tagging_nll_grad(const TokenSequence& x, const std::vector<int>& tags,
                        const ModelParameters& params, ModelParameters& grad);

// Mean per-token KL between frozen clean marginals and perturbed marginals.
double tagging_consistency_grad(const TokenSequence& x,
                                const TokenSequence& x_aug,
                                const ModelParameters& params,
                                ModelParameters& grad);
double tagging_consistency_value(const TokenSequence& x,
                                 const TokenSequence& x_aug,
                                 const ModelParameters& params);

}  // namespace uda

#endif
