// Compares the serial reference batch gradient against the OpenMP fan-out
// on a synthetic tagging batch and verifies that both produce identical bits.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "uda/consistency.hpp"
#include "uda/rng.hpp"

using namespace uda;

namespace {

double time_batch(const TrainData& data, const std::vector<LabeledRef>& labeled,
                  const std::vector<UnlabeledRef>& unlabeled,
                  const ModelParameters& params, bool parallel, int reps,
                  ModelParameters& grad_out) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        ModelParameters grad = ModelParameters::zeros(params.vocab_size, params.dim,
                                                      params.num_classes,
                                                      params.num_tags);
        const auto t0 = std::chrono::steady_clock::now();
        total_loss_grad(data, labeled, unlabeled, 1.0, params, grad, parallel);
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (dt < best) best = dt;
        grad_out = grad;
    }
    return best;
}

}  // namespace

int main() {
    const int vocab = 500, dim = 32, tags = 5, seq_len = 40, batch = 64;

    Rng rng(12345);
    TrainData data;
    data.task = Task::kTagging;
    data.vocab_size = vocab;
    data.num_tags = tags;
    for (int i = 0; i < 2 * batch; ++i) {
        TokenSequence x(seq_len);
        std::vector<int> y(seq_len);
        for (int j = 0; j < seq_len; ++j) {
            x[j] = static_cast<TokenId>(1 + rng.below(vocab - 1));
            y[j] = static_cast<int>(rng.below(tags));
        }
        data.texts.push_back(std::move(x));
        data.tags.push_back(std::move(y));
    }

    std::vector<LabeledRef> labeled;
    std::vector<UnlabeledRef> unlabeled;
    for (int i = 0; i < batch; ++i) {
        labeled.push_back({static_cast<std::size_t>(i)});
        TokenSequence perturbed = data.texts[batch + i];
        perturbed[0] = static_cast<TokenId>(1 + rng.below(vocab - 1));
        unlabeled.push_back({static_cast<std::size_t>(batch + i), std::move(perturbed)});
    }

    const ModelParameters params =
        ModelParameters::initialize(vocab, dim, 1, tags, 7);
    ModelParameters grad_serial = params, grad_parallel = params;

    const double t_serial =
        time_batch(data, labeled, unlabeled, params, false, 3, grad_serial);
    const double t_parallel =
        time_batch(data, labeled, unlabeled, params, true, 3, grad_parallel);

    bool identical = true;
    const auto check = [&](const std::vector<double>& a, const std::vector<double>& b) {
        if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) {
            identical = false;
        }
    };
    check(grad_serial.embeddings, grad_parallel.embeddings);
    check(grad_serial.emission_weights, grad_parallel.emission_weights);
    check(grad_serial.emission_bias, grad_parallel.emission_bias);
    check(grad_serial.transitions, grad_parallel.transitions);

    std::printf("batch gradient, %d labeled + %d unlabeled, n=%d, tags=%d, dim=%d\n",
                batch, batch, seq_len, tags, dim);
    std::printf("serial:   %.4f s\n", t_serial);
    std::printf("parallel: %.4f s  (speedup %.2fx)\n", t_parallel,
                t_serial / t_parallel);
    std::printf("gradients bit-identical: %s\n", identical ? "yes" : "NO");
    return identical ? 0 : 1;
}
