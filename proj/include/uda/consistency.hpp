#ifndef UDA_CONSISTENCY_HPP
#define UDA_CONSISTENCY_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "uda/augment.hpp"
#include "uda/corpus.hpp"
#include "uda/model.hpp"

namespace uda {

enum class Task { kClassification, kTagging };

enum class TrainMode { kBaseline, kSupervisedConsistency, kSemiSupervised };

struct TrainingConfig {
    double lambda = 1.0;
    TrainMode mode = TrainMode::kSemiSupervised;
    int repetition_ratio = 20;
    double learning_rate = 2e-5;  // 1e-3 for tagging
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int labeled_batch = 8;
    int unlabeled_batch = 8;
    int epochs = 30;
    int embedding_dim = 16;
    std::uint64_t master_seed = 0;
    bool parallel = true;  // OpenMP batch fan-out; serial path kept for testing
};

struct OptimizerState {
    ModelParameters first_moment;
    ModelParameters second_moment;
    std::int64_t step = 0;

    static OptimizerState zeros_like(const ModelParameters& params);
};

// Sum KL divergence between two normalized rows, with 0*log(0) = 0.
double kl_divergence(const std::vector<double>& target,
                     const std::vector<double>& online);

// In-place Adam update with bias correction.
void adam_step(ModelParameters& params, const ModelParameters& grad,
               OptimizerState& state, const TrainingConfig& cfg);

// Interned training pool; gold labels/tags are indexed alongside texts.
struct TrainData {
    Task task = Task::kClassification;
    std::vector<TokenSequence> texts;
    std::vector<int> labels;                // classification, -1 when absent
    std::vector<std::vector<int>> tags;     // tagging, empty when absent
    int num_classes = 0;
    int num_tags = 0;
    int vocab_size = 0;
};

// How unlabeled examples are perturbed during training.
struct AugmentSpec {
    PerturbationConfig cfg;
    const Vocabulary* vocab = nullptr;          // uniform mode
    const ContextProposer* proposer = nullptr;  // contextual mode
    const ParaphraseTable* paraphrases = nullptr;  // paraphrase mode
};

struct LabeledRef {
    std::size_t index;  // into TrainData
};

struct UnlabeledRef {
    std::size_t index;       // into TrainData (clean side)
    TokenSequence perturbed;  // sampled fresh per visit
};

struct LossParts {
    double supervised = 0;
    double consistency = 0;
    double total(double lambda) const { return supervised + lambda * consistency; }
};

// Composite objective: supervised sum plus lambda times the consistency sum.
LossParts total_loss_parts(const TrainData& data,
                           const std::vector<LabeledRef>& labeled,
                           const std::vector<UnlabeledRef>& unlabeled,
                           double lambda, const ModelParameters& params);
double total_loss(const TrainData& data, const std::vector<LabeledRef>& labeled,
                  const std::vector<UnlabeledRef>& unlabeled, double lambda,
                  const ModelParameters& params);

// Same composite loss with its analytic gradient accumulated into grad.
// Per-example terms are computed in parallel when requested and reduced in
// example order, so both paths produce identical bits.
LossParts total_loss_grad(const TrainData& data,
                          const std::vector<LabeledRef>& labeled,
                          const std::vector<UnlabeledRef>& unlabeled, double lambda,
                          const ModelParameters& params, ModelParameters& grad,
                          bool parallel);

// The index stream consumed as "unlabeled" data: U for semi-supervised
// training, the labeled pool repeated repetition_ratio times (labels
// stripped) for supervised consistency, empty for the baseline.
std::vector<std::size_t> unlabeled_stream(const DatasetSplit& split, TrainMode mode,
                                          int repetition_ratio);

struct EpochRecord {
    int epoch = 0;
    double supervised_loss = 0;
    double consistency_loss = 0;
    double total_loss = 0;
    double eval_metric = 0;
};

struct TrainResult {
    ModelParameters params;
    std::vector<EpochRecord> history;
};

using EvalCallback = std::function<double(const ModelParameters&)>;

TrainResult train(const TrainData& data, const DatasetSplit& split,
                  const TrainingConfig& cfg, const AugmentSpec& augment,
                  const EvalCallback& eval = nullptr);

void write_history_csv(const std::vector<EpochRecord>& history,
                       const std::string& path);

}  // namespace uda

#endif
