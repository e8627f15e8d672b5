#include "uda/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "uda/errors.hpp"
#include "uda/rng.hpp"

namespace uda {

std::string mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::kBaseline: return "baseline";
        case TrainMode::kSupervisedConsistency: return "supervised_consistency";
        case TrainMode::kSemiSupervised: return "semi_supervised";
    }
    return "?";
}

TrainMode mode_from_name(const std::string& name) {
    if (name == "baseline") return TrainMode::kBaseline;
    if (name == "supervised_consistency") return TrainMode::kSupervisedConsistency;
    if (name == "semi_supervised") return TrainMode::kSemiSupervised;
    throw DataError("unknown training mode: " + name);
}

namespace {

std::string perturb_name(PerturbMode mode) {
    switch (mode) {
        case PerturbMode::kUniform: return "uniform";
        case PerturbMode::kContextual: return "contextual";
        case PerturbMode::kParaphrase: return "paraphrase";
    }
    return "?";
}

PerturbMode perturb_from_name(const std::string& name) {
    if (name == "uniform") return PerturbMode::kUniform;
    if (name == "contextual") return PerturbMode::kContextual;
    if (name == "paraphrase") return PerturbMode::kParaphrase;
    throw DataError("unknown perturbation mode: " + name);
}

// Rounds to 6 significant digits so report aggregates are exactly
// recomputable from the emitted CSV text.
double round6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::strtod(buf, nullptr);
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (j.contains("task")) {
        const std::string t = j["task"].get<std::string>();
        if (t == "classification") {
            cfg.task = Task::kClassification;
        } else if (t == "tagging") {
            cfg.task = Task::kTagging;
        } else {
            throw DataError("unknown task: " + t);
        }
    }
    auto get = [&](const char* key, auto& out) {
        if (j.contains(key)) out = j[key].template get<std::decay_t<decltype(out)>>();
    };
    get("train_path", cfg.train_path);
    get("test_path", cfg.test_path);
    get("paraphrase_path", cfg.paraphrase_path);
    get("per_class", cfg.per_class);
    get("sentence_count", cfg.sentence_count);
    get("subset_seeds", cfg.subset_seeds);
    get("unlabeled_fractions", cfg.unlabeled_fractions);
    get("labeled_sizes", cfg.labeled_sizes);
    get("out_dir", cfg.out_dir);
    get("vocab_min_count", cfg.vocab_min_count);
    get("proposer_alpha", cfg.proposer_alpha);
    if (j.contains("modes")) {
        cfg.modes.clear();
        for (const auto& m : j["modes"]) cfg.modes.push_back(mode_from_name(m));
    }
    if (j.contains("training")) {
        const auto& t = j["training"];
        auto tget = [&](const char* key, auto& out) {
            if (t.contains(key)) out = t[key].template get<std::decay_t<decltype(out)>>();
        };
        tget("lambda", cfg.training.lambda);
        if (t.contains("mode")) {
            cfg.training.mode = mode_from_name(t["mode"].get<std::string>());
        }
        tget("repetition_ratio", cfg.training.repetition_ratio);
        if (t.contains("learning_rate")) {
            cfg.training.learning_rate = t["learning_rate"].get<double>();
            cfg.lr_explicit = true;
        }
        tget("beta1", cfg.training.beta1);
        tget("beta2", cfg.training.beta2);
        tget("epsilon", cfg.training.epsilon);
        tget("labeled_batch", cfg.training.labeled_batch);
        tget("unlabeled_batch", cfg.training.unlabeled_batch);
        tget("epochs", cfg.training.epochs);
        tget("embedding_dim", cfg.training.embedding_dim);
        tget("master_seed", cfg.training.master_seed);
        tget("parallel", cfg.training.parallel);
    }
    if (j.contains("perturbation")) {
        const auto& p = j["perturbation"];
        if (p.contains("replace_prob")) {
            cfg.perturbation.replace_prob = p["replace_prob"].get<double>();
        }
        if (p.contains("top_k")) cfg.perturbation.top_k = p["top_k"].get<int>();
        if (p.contains("mode")) {
            cfg.perturbation.mode = perturb_from_name(p["mode"].get<std::string>());
        }
    }
    if (!cfg.lr_explicit && cfg.task == Task::kTagging) {
        cfg.training.learning_rate = 1e-3;
    }
    if (cfg.subset_seeds.empty()) throw DataError("need at least one subset seed");
    for (double f : cfg.unlabeled_fractions) {
        if (f < 0 || f > 1) throw DataError("unlabeled fractions must lie in [0,1]");
    }
    if (!std::is_sorted(cfg.unlabeled_fractions.begin(), cfg.unlabeled_fractions.end())) {
        throw DataError("unlabeled fractions must be sorted ascending");
    }
    return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["task"] = cfg.task == Task::kClassification ? "classification" : "tagging";
    j["train_path"] = cfg.train_path;
    j["test_path"] = cfg.test_path;
    j["paraphrase_path"] = cfg.paraphrase_path;
    j["per_class"] = cfg.per_class;
    j["sentence_count"] = cfg.sentence_count;
    j["subset_seeds"] = cfg.subset_seeds;
    std::vector<std::string> modes;
    for (TrainMode m : cfg.modes) modes.push_back(mode_name(m));
    j["modes"] = modes;
    j["training"] = {{"lambda", cfg.training.lambda},
                     {"mode", mode_name(cfg.training.mode)},
                     {"repetition_ratio", cfg.training.repetition_ratio},
                     {"learning_rate", cfg.training.learning_rate},
                     {"beta1", cfg.training.beta1},
                     {"beta2", cfg.training.beta2},
                     {"epsilon", cfg.training.epsilon},
                     {"labeled_batch", cfg.training.labeled_batch},
                     {"unlabeled_batch", cfg.training.unlabeled_batch},
                     {"epochs", cfg.training.epochs},
                     {"embedding_dim", cfg.training.embedding_dim},
                     {"master_seed", cfg.training.master_seed},
                     {"parallel", cfg.training.parallel}};
    j["perturbation"] = {{"replace_prob", cfg.perturbation.replace_prob},
                         {"top_k", cfg.perturbation.top_k},
                         {"mode", perturb_name(cfg.perturbation.mode)}};
    j["unlabeled_fractions"] = cfg.unlabeled_fractions;
    j["labeled_sizes"] = cfg.labeled_sizes;
    j["out_dir"] = cfg.out_dir;
    j["vocab_min_count"] = cfg.vocab_min_count;
    j["proposer_alpha"] = cfg.proposer_alpha;
    return j;
}

// --- metrics ----------------------------------------------------------------

namespace {

int argmax_row(const double* row, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i) {
        if (row[i] > row[best]) best = i;
    }
    return best;
}

}  // namespace

ClassificationMetrics evaluate_classifier(const ModelParameters& params,
                                          const std::vector<TokenSequence>& texts,
                                          const std::vector<int>& gold) {
    if (texts.empty()) throw DataError("cannot evaluate on an empty test set");
    const int C = params.num_classes;
    std::vector<std::int64_t> tp(C, 0), fp(C, 0), fn(C, 0);
    std::int64_t correct = 0;

    std::vector<int> predictions(texts.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto probs = classify_forward(texts[i], params);
        predictions[i] = argmax_row(probs.data(), C);
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const int pred = predictions[i];
        if (pred == gold[i]) {
            ++correct;
            ++tp[pred];
        } else {
            ++fp[pred];
            ++fn[gold[i]];
        }
    }
    ClassificationMetrics m;
    m.accuracy = static_cast<double>(correct) / texts.size();
    double f1_sum = 0;
    for (int c = 0; c < C; ++c) {
        const double denom = 2.0 * tp[c] + fp[c] + fn[c];
        f1_sum += denom > 0 ? 2.0 * tp[c] / denom : 0.0;  // absent class counts 0
    }
    m.macro_f1 = f1_sum / C;
    return m;
}

std::vector<Span> extract_spans(const std::vector<int>& tags,
                                const std::vector<std::string>& tag_names) {
    std::vector<Span> spans;
    std::string open_type;
    int open_begin = 0;
    auto close = [&](int end) {
        if (!open_type.empty()) spans.push_back({open_type, open_begin, end});
        open_type.clear();
    };
    for (std::size_t j = 0; j < tags.size(); ++j) {
        const std::string& name = tag_names.at(tags[j]);
        if (name == "O") {
            close(static_cast<int>(j));
        } else {
            const char kind = name[0];
            const std::string type = name.substr(2);
            if (kind == 'B' || type != open_type) {
                close(static_cast<int>(j));
                open_type = type;
                open_begin = static_cast<int>(j);
            }
        }
    }
    close(static_cast<int>(tags.size()));
    return spans;
}

TaggingMetrics evaluate_tagger(const ModelParameters& params,
                               const std::vector<TokenSequence>& texts,
                               const std::vector<std::vector<int>>& gold,
                               const std::vector<std::string>& tag_names) {
    if (texts.empty()) throw DataError("cannot evaluate on an empty test set");
    const int o_tag = 0;  // O interned first by the loader
    std::int64_t tokens = 0, token_correct = 0;
    std::int64_t tok_tp = 0, tok_pred = 0, tok_gold = 0;
    std::int64_t span_tp = 0, span_pred = 0, span_gold = 0;

    std::vector<std::vector<int>> predictions(texts.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < texts.size(); ++i) {
        predictions[i] = viterbi_decode(texts[i], params);
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto& pred = predictions[i];
        const auto& ref = gold[i];
        for (std::size_t j = 0; j < ref.size(); ++j) {
            ++tokens;
            if (pred[j] == ref[j]) ++token_correct;
            if (pred[j] != o_tag) ++tok_pred;
            if (ref[j] != o_tag) ++tok_gold;
            if (pred[j] != o_tag && pred[j] == ref[j]) ++tok_tp;
        }
        const auto pred_spans = extract_spans(pred, tag_names);
        const auto gold_spans = extract_spans(ref, tag_names);
        std::set<Span> gold_set(gold_spans.begin(), gold_spans.end());
        for (const auto& s : pred_spans) {
            if (gold_set.count(s)) ++span_tp;
        }
        span_pred += static_cast<std::int64_t>(pred_spans.size());
        span_gold += static_cast<std::int64_t>(gold_spans.size());
    }

    auto f1 = [](std::int64_t tp, std::int64_t pred, std::int64_t gold_n) {
        const double p = pred > 0 ? static_cast<double>(tp) / pred : 0.0;
        const double r = gold_n > 0 ? static_cast<double>(tp) / gold_n : 0.0;
        return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
    };
    TaggingMetrics m;
    m.token_accuracy = static_cast<double>(token_correct) / tokens;
    m.token_f1 = f1(tok_tp, tok_pred, tok_gold);
    m.span_f1 = f1(span_tp, span_pred, span_gold);
    return m;
}

std::map<std::string, double> span_statistics(const TaggingCorpus& corpus) {
    std::map<std::string, std::pair<std::int64_t, std::int64_t>> acc;  // type -> (len sum, count)
    for (const auto& ex : corpus.examples) {
        if (!ex.tags) continue;
        for (const auto& span : extract_spans(*ex.tags, corpus.tag_names)) {
            auto& [len_sum, count] = acc[span.type];
            len_sum += span.end - span.begin;
            ++count;
        }
    }
    if (acc.empty()) throw DataError("corpus contains no spans");
    std::map<std::string, double> means;
    for (const auto& [type, sums] : acc) {
        means[type] = static_cast<double>(sums.first) / sums.second;
    }
    return means;
}

// --- orchestration ----------------------------------------------------------

namespace {

struct LoadedData {
    ClassificationCorpus ctrain, ctest;
    TaggingCorpus ttrain, ttest;
};

LoadedData load_all(const ExperimentConfig& cfg) {
    LoadedData d;
    if (cfg.task == Task::kClassification) {
        d.ctrain = load_classification_corpus(cfg.train_path);
        if (!cfg.test_path.empty()) d.ctest = load_classification_corpus(cfg.test_path);
    } else {
        d.ttrain = load_conll_corpus(cfg.train_path);
        if (!cfg.test_path.empty()) d.ttest = load_conll_corpus(cfg.test_path);
    }
    return d;
}

struct TrialSpec {
    std::uint64_t subset_seed = 0;
    TrainMode mode = TrainMode::kBaseline;
    std::optional<double> unlabeled_fraction;
    std::optional<int> labeled_size;
};

TrialResult run_trial(const ExperimentConfig& cfg, const LoadedData& data,
                      const TrialSpec& spec) {
    const auto start = std::chrono::steady_clock::now();

    // Sample the labeled subset.
    DatasetSplit split;
    if (cfg.task == Task::kClassification) {
        int per_class = cfg.per_class;
        if (spec.labeled_size) {
            const int classes = static_cast<int>(data.ctrain.label_names.size());
            if (*spec.labeled_size % classes != 0) {
                throw DataError("labeled size " + std::to_string(*spec.labeled_size) +
                                " is not divisible by " + std::to_string(classes) +
                                " classes");
            }
            per_class = *spec.labeled_size / classes;
        }
        split = sample_labeled_subset(data.ctrain, per_class, spec.subset_seed);
    } else {
        const int sentences = spec.labeled_size.value_or(cfg.sentence_count);
        split = sample_labeled_subset(data.ttrain, sentences, spec.subset_seed);
    }

    // Optional truncation of U: fixed shuffle keyed by the seeds, so fraction
    // curves are nested subsets.
    if (spec.unlabeled_fraction) {
        Rng rng = Rng::derive(cfg.training.master_seed, spec.subset_seed, 0xF5ac);
        auto& u = split.unlabeled;
        for (std::size_t i = 0; i + 1 < u.size(); ++i) {
            std::swap(u[i], u[i + rng.below(u.size() - i)]);
        }
        u.resize(static_cast<std::size_t>(
            std::ceil(*spec.unlabeled_fraction * static_cast<double>(u.size()))));
    }

    // Vocabulary over L and U only, one id space for model and replacement.
    std::vector<std::vector<std::string>> vocab_source;
    const std::size_t pool_size = cfg.task == Task::kClassification
                                      ? data.ctrain.examples.size()
                                      : data.ttrain.examples.size();
    std::vector<bool> in_split(pool_size, false);
    for (std::size_t i : split.labeled) in_split[i] = true;
    for (std::size_t i : split.unlabeled) in_split[i] = true;
    for (std::size_t i = 0; i < pool_size; ++i) {
        if (!in_split[i]) continue;
        vocab_source.push_back(cfg.task == Task::kClassification
                                   ? data.ctrain.examples[i].tokens
                                   : data.ttrain.examples[i].tokens);
    }
    const Vocabulary vocab = build_vocabulary(vocab_source, cfg.vocab_min_count);

    TrainData train_data;
    train_data.task = cfg.task;
    train_data.vocab_size = vocab.size();
    if (cfg.task == Task::kClassification) {
        train_data.num_classes = static_cast<int>(data.ctrain.label_names.size());
        for (const auto& ex : data.ctrain.examples) {
            train_data.texts.push_back(intern(ex.tokens, vocab));
            train_data.labels.push_back(ex.label.value_or(-1));
        }
    } else {
        train_data.num_tags = static_cast<int>(data.ttrain.tag_names.size());
        for (const auto& ex : data.ttrain.examples) {
            train_data.texts.push_back(intern(ex.tokens, vocab));
            train_data.tags.push_back(ex.tags.value_or(std::vector<int>{}));
        }
    }

    AugmentSpec augment;
    augment.cfg = cfg.perturbation;
    augment.vocab = &vocab;
    ContextProposer proposer;
    ParaphraseTable paraphrases;
    if (cfg.perturbation.mode == PerturbMode::kContextual) {
        std::vector<TokenSequence> proposer_corpus;
        for (std::size_t i : split.labeled) proposer_corpus.push_back(train_data.texts[i]);
        for (std::size_t i : split.unlabeled) proposer_corpus.push_back(train_data.texts[i]);
        proposer = train_context_proposer(proposer_corpus, vocab.size(),
                                          cfg.proposer_alpha);
        augment.proposer = &proposer;
    } else if (cfg.perturbation.mode == PerturbMode::kParaphrase) {
        paraphrases = load_paraphrase_pairs(cfg.paraphrase_path,
                                            train_data.texts.size(), vocab);
        augment.paraphrases = &paraphrases;
    }

    TrainingConfig tcfg = cfg.training;
    tcfg.mode = spec.mode;
    tcfg.master_seed = Rng::derive(cfg.training.master_seed, spec.subset_seed,
                                   static_cast<std::uint64_t>(spec.mode))
                           .next();

    const TrainResult trained = train(train_data, split, tcfg, augment);

    TrialResult result;
    result.subset_seed = spec.subset_seed;
    result.mode = mode_name(spec.mode);
    if (cfg.task == Task::kClassification) {
        std::vector<TokenSequence> texts;
        std::vector<int> gold;
        for (const auto& ex : data.ctest.examples) {
            if (!ex.label) continue;
            texts.push_back(intern(ex.tokens, vocab));
            gold.push_back(*ex.label);
        }
        result.metric_name = "accuracy";
        result.metric_value = round6(evaluate_classifier(trained.params, texts, gold).accuracy);
    } else {
        std::vector<TokenSequence> texts;
        std::vector<std::vector<int>> gold;
        for (const auto& ex : data.ttest.examples) {
            if (!ex.tags) continue;
            texts.push_back(intern(ex.tokens, vocab));
            gold.push_back(*ex.tags);
        }
        result.metric_name = "span_f1";
        result.metric_value = round6(
            evaluate_tagger(trained.params, texts, gold, data.ttrain.tag_names).span_f1);
    }
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::vector<TrialResult> run_trials(const ExperimentConfig& cfg,
                                    const LoadedData& data,
                                    const std::vector<TrialSpec>& specs) {
    std::vector<TrialResult> results(specs.size());
    std::string failure;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < specs.size(); ++i) {
        try {
            results[i] = run_trial(cfg, data, specs[i]);
        } catch (const std::exception& e) {
#pragma omp critical
            if (failure.empty()) {
                failure = "trial failed (subset seed " +
                          std::to_string(specs[i].subset_seed) + ", mode " +
                          mode_name(specs[i].mode) + "): " + e.what();
            }
        }
    }
    if (!failure.empty()) throw DataError(failure);
    return results;
}

}  // namespace

std::map<std::string, ModeAggregate> aggregate_by_mode(
    const std::vector<TrialResult>& trials) {
    std::map<std::string, ModeAggregate> agg;
    for (const auto& t : trials) {
        auto& a = agg[t.mode];
        if (a.count == 0) {
            a.min = a.max = t.metric_value;
        } else {
            a.min = std::min(a.min, t.metric_value);
            a.max = std::max(a.max, t.metric_value);
        }
        a.mean += t.metric_value;  // sum for now
        ++a.count;
    }
    for (auto& [mode, a] : agg) a.mean /= a.count;
    return agg;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
    if (cfg.test_path.empty()) throw DataError("experiment requires a test_path");
    const LoadedData data = load_all(cfg);
    std::vector<TrialSpec> specs;
    for (std::uint64_t seed : cfg.subset_seeds) {
        for (TrainMode mode : cfg.modes) specs.push_back({seed, mode, {}, {}});
    }
    RunReport report;
    report.trials = run_trials(cfg, data, specs);
    report.config_echo = config_to_json(cfg);
    return report;
}

RunReport unlabeled_quantity_sweep(const ExperimentConfig& cfg) {
    if (cfg.unlabeled_fractions.empty()) {
        throw DataError("sweep-unlabeled requires unlabeled_fractions");
    }
    const LoadedData data = load_all(cfg);
    RunReport report;
    report.config_echo = config_to_json(cfg);
    for (double f : cfg.unlabeled_fractions) {
        std::vector<TrialSpec> specs;
        for (std::uint64_t seed : cfg.subset_seeds) {
            specs.push_back({seed, TrainMode::kSemiSupervised, f, {}});
        }
        auto trials = run_trials(cfg, data, specs);
        const auto agg = aggregate_by_mode(trials);
        const auto& a = agg.at(mode_name(TrainMode::kSemiSupervised));
        report.curves.push_back({"unlabeled", f, mode_name(TrainMode::kSemiSupervised),
                                 round6(a.mean), a.min, a.max});
        report.trials.insert(report.trials.end(), trials.begin(), trials.end());
    }
    return report;
}

RunReport labeled_quantity_sweep(const ExperimentConfig& cfg) {
    if (cfg.labeled_sizes.empty()) {
        throw DataError("sweep-labeled requires labeled_sizes");
    }
    const LoadedData data = load_all(cfg);
    RunReport report;
    report.config_echo = config_to_json(cfg);
    for (int size : cfg.labeled_sizes) {
        for (TrainMode mode : cfg.modes) {
            std::vector<TrialSpec> specs;
            for (std::uint64_t seed : cfg.subset_seeds) {
                specs.push_back({seed, mode, {}, size});
            }
            auto trials = run_trials(cfg, data, specs);
            const auto agg = aggregate_by_mode(trials);
            const auto& a = agg.at(mode_name(mode));
            report.curves.push_back({"labeled", static_cast<double>(size),
                                     mode_name(mode), round6(a.mean), a.min, a.max});
            report.trials.insert(report.trials.end(), trials.begin(), trials.end());
        }
    }
    return report;
}

namespace {

void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + tmp);
        out << content;
        if (!out) throw DataError("write failure on " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot rename into place: " + path);
    }
}

}  // namespace

void emit_report(const RunReport& report, const std::string& dir) {
    if (!report.trials.empty()) {
        std::string csv = "subset_seed,mode,metric,value\n";
        for (const auto& t : report.trials) {
            csv += std::to_string(t.subset_seed) + "," + t.mode + "," + t.metric_name +
                   "," + fmt6(t.metric_value) + "\n";
        }
        atomic_write(dir + "/trials.csv", csv);
    }

    nlohmann::json summary;
    summary["config"] = report.config_echo;
    nlohmann::json aggregates = nlohmann::json::object();
    for (const auto& [mode, a] : aggregate_by_mode(report.trials)) {
        aggregates[mode] = {{"mean", a.mean}, {"min", a.min}, {"max", a.max},
                            {"count", a.count}};
    }
    summary["aggregates"] = aggregates;
    atomic_write(dir + "/summary.json", summary.dump(2) + "\n");

    if (!report.curves.empty()) {
        std::string csv = "sweep,x,mode,mean,min,max\n";
        for (const auto& c : report.curves) {
            csv += c.sweep + "," + fmt6(c.x) + "," + c.mode + "," + fmt6(c.mean) + "," +
                   fmt6(c.min) + "," + fmt6(c.max) + "\n";
        }
        atomic_write(dir + "/curves.csv", csv);
    } else {
        // A report without sweeps owns the directory too: drop stale curves.
        std::filesystem::remove(dir + "/curves.csv");
    }
}

}  // namespace uda
