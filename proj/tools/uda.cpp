// Command-line front end: training, evaluation, experiments, sweeps,
// augmentation previews, and span statistics.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "CLI11.hpp"
#include "json.hpp"
#include "uda/checkpoint.hpp"
#include "uda/errors.hpp"
#include "uda/harness.hpp"

namespace {

using nlohmann::json;

// Applies a --set key=value override onto the config JSON. Dotted keys
// address nested objects (training.epochs=5); values are parsed as JSON
// first, falling back to a plain string.
void apply_override(json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw CLI::ValidationError("--set expects key=value, got: " + assignment);
    }
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json* node = &cfg;
    std::size_t pos = 0;
    while (true) {
        const auto dot = key.find('.', pos);
        if (dot == std::string::npos) {
            (*node)[key.substr(pos)] = value;
            break;
        }
        node = &(*node)[key.substr(pos, dot - pos)];
        pos = dot + 1;
    }
}

struct GlobalArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

uda::ExperimentConfig resolve_config(const GlobalArgs& args) {
    json j = json::object();
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw uda::DataError("cannot open config file: " + args.config_path);
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw uda::DataError(std::string("malformed config JSON: ") + e.what());
        }
    }
    for (const auto& assignment : args.overrides) apply_override(j, assignment);
    uda::ExperimentConfig cfg = uda::config_from_json(j);
    if (args.seed) cfg.training.master_seed = *args.seed;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    std::filesystem::create_directories(cfg.out_dir);
    return cfg;
}

// Builds the single-trial training context the `train` subcommand uses:
// the whole pool, the sampled split, and the interned data.
struct TrainContext {
    uda::TrainData data;
    uda::DatasetSplit split;
    uda::Vocabulary vocab;
    uda::ClassificationCorpus ctest;
    uda::TaggingCorpus ttest;
    std::vector<std::string> tag_names;
};

TrainContext prepare(const uda::ExperimentConfig& cfg, std::uint64_t subset_seed) {
    TrainContext ctx;
    ctx.data.task = cfg.task;
    std::vector<std::vector<std::string>> vocab_source;
    if (cfg.task == uda::Task::kClassification) {
        const auto pool = uda::load_classification_corpus(cfg.train_path);
        ctx.split = uda::sample_labeled_subset(pool, cfg.per_class, subset_seed);
        for (const auto& ex : pool.examples) vocab_source.push_back(ex.tokens);
        ctx.vocab = uda::build_vocabulary(vocab_source, cfg.vocab_min_count);
        ctx.data.num_classes = static_cast<int>(pool.label_names.size());
        for (const auto& ex : pool.examples) {
            ctx.data.texts.push_back(uda::intern(ex.tokens, ctx.vocab));
            ctx.data.labels.push_back(ex.label.value_or(-1));
        }
        if (!cfg.test_path.empty()) ctx.ctest = uda::load_classification_corpus(cfg.test_path);
    } else {
        const auto pool = uda::load_conll_corpus(cfg.train_path);
        ctx.split = uda::sample_labeled_subset(pool, cfg.sentence_count, subset_seed);
        for (const auto& ex : pool.examples) vocab_source.push_back(ex.tokens);
        ctx.vocab = uda::build_vocabulary(vocab_source, cfg.vocab_min_count);
        ctx.data.num_tags = static_cast<int>(pool.tag_names.size());
        ctx.tag_names = pool.tag_names;
        for (const auto& ex : pool.examples) {
            ctx.data.texts.push_back(uda::intern(ex.tokens, ctx.vocab));
            ctx.data.tags.push_back(ex.tags.value_or(std::vector<int>{}));
        }
        if (!cfg.test_path.empty()) ctx.ttest = uda::load_conll_corpus(cfg.test_path);
    }
    ctx.data.vocab_size = ctx.vocab.size();
    return ctx;
}

int cmd_train(const uda::ExperimentConfig& cfg) {
    TrainContext ctx = prepare(cfg, cfg.subset_seeds.front());

    uda::AugmentSpec augment;
    augment.cfg = cfg.perturbation;
    augment.vocab = &ctx.vocab;
    uda::ContextProposer proposer;
    uda::ParaphraseTable paraphrases;
    if (cfg.perturbation.mode == uda::PerturbMode::kContextual) {
        proposer = uda::train_context_proposer(ctx.data.texts, ctx.vocab.size(),
                                               cfg.proposer_alpha);
        augment.proposer = &proposer;
    } else if (cfg.perturbation.mode == uda::PerturbMode::kParaphrase) {
        paraphrases = uda::load_paraphrase_pairs(cfg.paraphrase_path,
                                                 ctx.data.texts.size(), ctx.vocab);
        augment.paraphrases = &paraphrases;
    }

    uda::EvalCallback eval;
    if (cfg.task == uda::Task::kClassification && !ctx.ctest.examples.empty()) {
        auto texts = std::make_shared<std::vector<uda::TokenSequence>>();
        auto gold = std::make_shared<std::vector<int>>();
        for (const auto& ex : ctx.ctest.examples) {
            if (!ex.label) continue;
            texts->push_back(uda::intern(ex.tokens, ctx.vocab));
            gold->push_back(*ex.label);
        }
        eval = [texts, gold](const uda::ModelParameters& p) {
            return uda::evaluate_classifier(p, *texts, *gold).accuracy;
        };
    } else if (cfg.task == uda::Task::kTagging && !ctx.ttest.examples.empty()) {
        auto texts = std::make_shared<std::vector<uda::TokenSequence>>();
        auto gold = std::make_shared<std::vector<std::vector<int>>>();
        for (const auto& ex : ctx.ttest.examples) {
            if (!ex.tags) continue;
            texts->push_back(uda::intern(ex.tokens, ctx.vocab));
            gold->push_back(*ex.tags);
        }
        auto names = std::make_shared<std::vector<std::string>>(ctx.tag_names);
        eval = [texts, gold, names](const uda::ModelParameters& p) {
            return uda::evaluate_tagger(p, *texts, *gold, *names).span_f1;
        };
    }

    const uda::TrainResult result = uda::train(ctx.data, ctx.split, cfg.training,
                                               augment, eval);
    uda::write_history_csv(result.history, cfg.out_dir + "/history.csv");
    uda::save_checkpoint(result.params, ctx.vocab.hash(), cfg.out_dir + "/model.ckpt");
    if (!result.history.empty() && eval) {
        std::printf("final eval metric: %.6g\n", result.history.back().eval_metric);
    }
    std::printf("wrote %s/history.csv and %s/model.ckpt\n", cfg.out_dir.c_str(),
                cfg.out_dir.c_str());
    return 0;
}

int cmd_evaluate(const uda::ExperimentConfig& cfg, const std::string& ckpt_path) {
    const uda::Checkpoint ckpt = uda::load_checkpoint(ckpt_path);
    TrainContext ctx = prepare(cfg, cfg.subset_seeds.front());
    if (ckpt.vocab_hash != ctx.vocab.hash()) {
        std::fprintf(stderr, "warning: checkpoint vocabulary hash does not match corpus\n");
    }
    if (cfg.task == uda::Task::kClassification) {
        std::vector<uda::TokenSequence> texts;
        std::vector<int> gold;
        for (const auto& ex : ctx.ctest.examples) {
            if (!ex.label) continue;
            texts.push_back(uda::intern(ex.tokens, ctx.vocab));
            gold.push_back(*ex.label);
        }
        const auto m = uda::evaluate_classifier(ckpt.params, texts, gold);
        std::printf("accuracy: %.6g\nmacro_f1: %.6g\n", m.accuracy, m.macro_f1);
    } else {
        std::vector<uda::TokenSequence> texts;
        std::vector<std::vector<int>> gold;
        for (const auto& ex : ctx.ttest.examples) {
            if (!ex.tags) continue;
            texts.push_back(uda::intern(ex.tokens, ctx.vocab));
            gold.push_back(*ex.tags);
        }
        const auto m = uda::evaluate_tagger(ckpt.params, texts, gold, ctx.tag_names);
        std::printf("token_accuracy: %.6g\ntoken_f1: %.6g\nspan_f1: %.6g\n",
                    m.token_accuracy, m.token_f1, m.span_f1);
    }
    return 0;
}

int cmd_augment_preview(const uda::ExperimentConfig& cfg, int count) {
    TrainContext ctx = prepare(cfg, cfg.subset_seeds.front());
    uda::ContextProposer proposer;
    if (cfg.perturbation.mode == uda::PerturbMode::kContextual) {
        proposer = uda::train_context_proposer(ctx.data.texts, ctx.vocab.size(),
                                               cfg.proposer_alpha);
    }
    uda::Rng rng = uda::Rng::derive(cfg.training.master_seed, 0xbeef);
    const int n = std::min<int>(count, static_cast<int>(ctx.data.texts.size()));
    for (int i = 0; i < n; ++i) {
        const auto& original = ctx.data.texts[i];
        uda::TokenSequence perturbed;
        if (cfg.perturbation.mode == uda::PerturbMode::kContextual) {
            perturbed = uda::contextual_replace(original, cfg.perturbation, proposer, rng);
        } else {
            perturbed = uda::uniform_random_replace(original, cfg.perturbation,
                                                    ctx.vocab, rng);
        }
        auto render = [&](const uda::TokenSequence& seq) {
            std::string s;
            for (uda::TokenId id : seq) {
                if (!s.empty()) s += ' ';
                s += ctx.vocab.surface(id);
            }
            return s;
        };
        std::printf("original:  %s\nperturbed: %s\n\n", render(original).c_str(),
                    render(perturbed).c_str());
    }
    return 0;
}

int cmd_stats(const uda::ExperimentConfig& cfg) {
    const auto corpus = uda::load_conll_corpus(cfg.train_path);
    for (const auto& [type, mean] : uda::span_statistics(corpus)) {
        std::printf("%s: %.1f\n", type.c_str(), mean);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Consistency-training toolkit for text classification and tagging"};
    app.require_subcommand(1);

    GlobalArgs args;
    app.add_option("--config", args.config_path, "JSON config file");
    app.add_option("--set", args.overrides, "Override a config key (key=value)");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Master seed override");
    app.add_option("--out-dir", args.out_dir, "Output directory override");

    auto* train_cmd = app.add_subcommand("train", "Train a single model");
    auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint");
    std::string ckpt_path;
    eval_cmd->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
    auto* exp_cmd = app.add_subcommand("experiment",
                                       "Run all subset seeds and modes, emit a report");
    auto* sweep_u_cmd = app.add_subcommand("sweep-unlabeled",
                                           "Vary the unlabeled data fraction");
    auto* sweep_l_cmd = app.add_subcommand("sweep-labeled",
                                           "Vary the labeled data quantity");
    auto* preview_cmd = app.add_subcommand("augment-preview",
                                           "Print original vs perturbed examples");
    int preview_count = 5;
    preview_cmd->add_option("--count", preview_count, "Examples to preview");
    auto* stats_cmd = app.add_subcommand("stats", "Per-class mean span length");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (seed_opt->count() > 0) args.seed = seed_value;
        const uda::ExperimentConfig cfg = resolve_config(args);
        if (train_cmd->parsed()) return cmd_train(cfg);
        if (eval_cmd->parsed()) return cmd_evaluate(cfg, ckpt_path);
        if (exp_cmd->parsed()) {
            uda::emit_report(uda::run_experiment(cfg), cfg.out_dir);
            std::printf("report written to %s\n", cfg.out_dir.c_str());
            return 0;
        }
        if (sweep_u_cmd->parsed()) {
            uda::emit_report(uda::unlabeled_quantity_sweep(cfg), cfg.out_dir);
            std::printf("sweep written to %s\n", cfg.out_dir.c_str());
            return 0;
        }
        if (sweep_l_cmd->parsed()) {
            uda::emit_report(uda::labeled_quantity_sweep(cfg), cfg.out_dir);
            std::printf("sweep written to %s\n", cfg.out_dir.c_str());
            return 0;
        }
        if (preview_cmd->parsed()) return cmd_augment_preview(cfg, preview_count);
        if (stats_cmd->parsed()) return cmd_stats(cfg);
    } catch (const uda::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const uda::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
