#include "uda/consistency.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "uda/errors.hpp"
#include "uda/rng.hpp"

namespace uda {

OptimizerState OptimizerState::zeros_like(const ModelParameters& params) {
    OptimizerState state;
    state.first_moment = ModelParameters::zeros(params.vocab_size, params.dim,
                                                params.num_classes, params.num_tags);
    state.second_moment = state.first_moment;
    return state;
}

double kl_divergence(const std::vector<double>& target,
                     const std::vector<double>& online) {
    if (target.size() != online.size()) {
        throw DataError("KL divergence rows have different sizes");
    }
    double kl = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] > 0) {
            kl += target[i] * (std::log(target[i]) - std::log(online[i]));
        }
    }
    if (!std::isfinite(kl)) throw NumericError("non-finite KL divergence");
    return kl;
}

namespace {

std::array<std::vector<double>*, 6> arrays_of(ModelParameters& p) {
    return {&p.embeddings, &p.class_weights, &p.class_bias,
            &p.emission_weights, &p.emission_bias, &p.transitions};
}

std::array<const std::vector<double>*, 6> arrays_of(const ModelParameters& p) {
    return {&p.embeddings, &p.class_weights, &p.class_bias,
            &p.emission_weights, &p.emission_bias, &p.transitions};
}

}  // namespace

void adam_step(ModelParameters& params, const ModelParameters& grad,
               OptimizerState& state, const TrainingConfig& cfg) {
    if (!params.shape_matches(grad)) throw DataError("gradient shape mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    auto theta = arrays_of(params);
    auto g = arrays_of(grad);
    auto m = arrays_of(state.first_moment);
    auto v = arrays_of(state.second_moment);
    for (std::size_t a = 0; a < theta.size(); ++a) {
        auto& tv = *theta[a];
        const auto& gv = *g[a];
        auto& mv = *m[a];
        auto& vv = *v[a];
        for (std::size_t i = 0; i < tv.size(); ++i) {
            mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * gv[i];
            vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * gv[i] * gv[i];
            const double update =
                cfg.learning_rate * (mv[i] / bc1) / (std::sqrt(vv[i] / bc2) + cfg.epsilon);
            if (!std::isfinite(update)) throw NumericError("non-finite Adam update");
            tv[i] -= update;
        }
    }
}

namespace {

double supervised_value(const TrainData& data, std::size_t index,
                        const ModelParameters& params) {
    if (data.task == Task::kClassification) {
        const auto probs = classify_forward(data.texts[index], params);
        return -std::log(probs[data.labels[index]]);
    }
    ModelParameters scratch = ModelParameters::zeros(params.vocab_size, params.dim,
                                                     params.num_classes, params.num_tags);
    return tagging_nll_grad(data.texts[index], data.tags[index], params, scratch);
}

double supervised_grad(const TrainData& data, std::size_t index,
                       const ModelParameters& params, ModelParameters& grad) {
    if (data.task == Task::kClassification) {
        return classification_nll_grad(data.texts[index], data.labels[index], params,
                                       grad);
    }
    return tagging_nll_grad(data.texts[index], data.tags[index], params, grad);
}

double consistency_value(const TrainData& data, const UnlabeledRef& item,
                         const ModelParameters& params) {
    if (data.task == Task::kClassification) {
        return classification_consistency_value(data.texts[item.index], item.perturbed,
                                                params);
    }
    return tagging_consistency_value(data.texts[item.index], item.perturbed, params);
}

double consistency_grad(const TrainData& data, const UnlabeledRef& item,
                        const ModelParameters& params, ModelParameters& grad) {
    if (data.task == Task::kClassification) {
        return classification_consistency_grad(data.texts[item.index], item.perturbed,
                                               params, grad);
    }
    return tagging_consistency_grad(data.texts[item.index], item.perturbed, params,
                                    grad);
}

}  // namespace

LossParts total_loss_parts(const TrainData& data,
                           const std::vector<LabeledRef>& labeled,
                           const std::vector<UnlabeledRef>& unlabeled,
                           double lambda, const ModelParameters& params) {
    LossParts parts;
    for (const auto& item : labeled) {
        parts.supervised += supervised_value(data, item.index, params);
    }
    if (lambda != 0.0) {
        for (const auto& item : unlabeled) {
            parts.consistency += consistency_value(data, item, params);
        }
    }
    return parts;
}

double total_loss(const TrainData& data, const std::vector<LabeledRef>& labeled,
                  const std::vector<UnlabeledRef>& unlabeled, double lambda,
                  const ModelParameters& params) {
    return total_loss_parts(data, labeled, unlabeled, lambda, params).total(lambda);
}

LossParts total_loss_grad(const TrainData& data,
                          const std::vector<LabeledRef>& labeled,
                          const std::vector<UnlabeledRef>& unlabeled, double lambda,
                          const ModelParameters& params, ModelParameters& grad,
                          bool parallel) {
    const std::size_t n_labeled = labeled.size();
    const std::size_t n_unlabeled = lambda != 0.0 ? unlabeled.size() : 0;
    const std::size_t n_items = n_labeled + n_unlabeled;

    std::vector<ModelParameters> item_grads(
        n_items, ModelParameters::zeros(params.vocab_size, params.dim,
                                        params.num_classes, params.num_tags));
    std::vector<double> item_losses(n_items, 0.0);

#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::size_t i = 0; i < n_items; ++i) {
        if (i < n_labeled) {
            item_losses[i] = supervised_grad(data, labeled[i].index, params,
                                             item_grads[i]);
        } else {
            item_losses[i] = consistency_grad(data, unlabeled[i - n_labeled], params,
                                              item_grads[i]);
        }
    }

    // Reduce in example order; identical bits regardless of thread count.
    LossParts parts;
    auto out = arrays_of(grad);
    for (std::size_t i = 0; i < n_items; ++i) {
        const bool is_labeled = i < n_labeled;
        const double scale = is_labeled ? 1.0 : lambda;
        (is_labeled ? parts.supervised : parts.consistency) += item_losses[i];
        auto in = arrays_of(item_grads[i]);
        for (std::size_t a = 0; a < out.size(); ++a) {
            auto& dst = *out[a];
            const auto& src = *in[a];
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
        }
    }
    return parts;
}

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
        std::swap(v[i], v[i + rng.below(v.size() - i)]);
    }
}

TokenSequence perturb(const TrainData& data, const AugmentSpec& aug,
                      std::size_t index, Rng& rng) {
    switch (aug.cfg.mode) {
        case PerturbMode::kUniform:
            return uniform_random_replace(data.texts[index], aug.cfg, *aug.vocab, rng);
        case PerturbMode::kContextual:
            return contextual_replace(data.texts[index], aug.cfg, *aug.proposer, rng);
        case PerturbMode::kParaphrase:
            if (data.task == Task::kTagging) {
                throw DataError("paraphrase perturbation is classification-only");
            }
            return aug.paraphrases->lookup(index);
    }
    throw DataError("unknown perturbation mode");
}

}  // namespace

std::vector<std::size_t> unlabeled_stream(const DatasetSplit& split, TrainMode mode,
                                          int repetition_ratio) {
    std::vector<std::size_t> stream;
    if (mode == TrainMode::kSemiSupervised) {
        stream = split.unlabeled;
    } else if (mode == TrainMode::kSupervisedConsistency) {
        for (std::size_t i : split.labeled) {
            for (int r = 0; r < repetition_ratio; ++r) stream.push_back(i);
        }
    }
    return stream;
}

TrainResult train(const TrainData& data, const DatasetSplit& split,
                  const TrainingConfig& cfg, const AugmentSpec& augment,
                  const EvalCallback& eval) {
    if (split.labeled.empty()) throw DataError("cannot train with an empty labeled set");

    const double lambda = cfg.mode == TrainMode::kBaseline ? 0.0 : cfg.lambda;

    TrainResult result;
    result.params = ModelParameters::initialize(
        data.vocab_size, cfg.embedding_dim, std::max(data.num_classes, 1),
        std::max(data.num_tags, 1), Rng::derive(cfg.master_seed, 0x1a17).next());
    OptimizerState state = OptimizerState::zeros_like(result.params);

    std::vector<std::size_t> labeled_order(split.labeled);
    std::vector<std::size_t> stream =
        unlabeled_stream(split, cfg.mode, cfg.repetition_ratio);

    Rng shuffle_l = Rng::derive(cfg.master_seed, 0xdead01);
    Rng shuffle_u = Rng::derive(cfg.master_seed, 0xdead02);
    Rng perturb_rng = Rng::derive(cfg.master_seed, 0xdead03);

    std::size_t cursor = 0;
    if (!stream.empty()) shuffle(stream, shuffle_u);

    const bool use_unlabeled = lambda != 0.0 && !stream.empty();
    double first_step_total = 0, last_step_total = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(labeled_order, shuffle_l);
        EpochRecord record;
        record.epoch = epoch;

        const std::size_t steps =
            (labeled_order.size() + cfg.labeled_batch - 1) / cfg.labeled_batch;
        for (std::size_t step = 0; step < steps; ++step) {
            std::vector<LabeledRef> labeled_batch;
            const std::size_t begin = step * cfg.labeled_batch;
            const std::size_t end =
                std::min(begin + cfg.labeled_batch, labeled_order.size());
            for (std::size_t i = begin; i < end; ++i) {
                labeled_batch.push_back({labeled_order[i]});
            }

            std::vector<UnlabeledRef> unlabeled_batch;
            if (use_unlabeled) {
                for (int i = 0; i < cfg.unlabeled_batch; ++i) {
                    if (cursor >= stream.size()) {
                        shuffle(stream, shuffle_u);
                        cursor = 0;
                    }
                    const std::size_t idx = stream[cursor++];
                    unlabeled_batch.push_back({idx, perturb(data, augment, idx, perturb_rng)});
                }
            }

            ModelParameters grad = ModelParameters::zeros(
                result.params.vocab_size, result.params.dim,
                result.params.num_classes, result.params.num_tags);
            const LossParts parts = total_loss_grad(data, labeled_batch, unlabeled_batch,
                                                    lambda, result.params, grad,
                                                    cfg.parallel);
            adam_step(result.params, grad, state, cfg);

            record.supervised_loss += parts.supervised;
            record.consistency_loss += parts.consistency;
            if (epoch == 0) {
                if (step == 0) first_step_total = parts.total(lambda);
                last_step_total = parts.total(lambda);
            }
        }
        record.total_loss = record.supervised_loss + lambda * record.consistency_loss;
        if (eval) record.eval_metric = eval(result.params);
        result.history.push_back(record);

        if (epoch == 0 && result.history[0].total_loss > 0 &&
            last_step_total >= first_step_total && steps > 1) {
            std::fprintf(stderr,
                         "warning: training loss did not decrease over the first epoch\n");
        }
    }
    return result;
}

void write_history_csv(const std::vector<EpochRecord>& history,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write history file: " + path);
    out << "epoch,supervised_loss,consistency_loss,total_loss,eval_metric\n";
    char buf[256];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g\n", r.epoch,
                      r.supervised_loss, r.consistency_loss, r.total_loss,
                      r.eval_metric);
        out << buf;
    }
}

}  // namespace uda
