#ifndef UDA_HARNESS_HPP
#define UDA_HARNESS_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uda/consistency.hpp"
#include "uda/corpus.hpp"

namespace uda {

struct ExperimentConfig {
    Task task = Task::kClassification;
    std::string train_path;
    std::string test_path;
    std::string paraphrase_path;
    int per_class = 10;        // classification subset spec
    int sentence_count = 200;  // tagging subset spec
    std::vector<std::uint64_t> subset_seeds{1, 2, 3, 4, 5};
    std::vector<TrainMode> modes{TrainMode::kBaseline,
                                 TrainMode::kSupervisedConsistency,
                                 TrainMode::kSemiSupervised};
    TrainingConfig training;
    PerturbationConfig perturbation;
    std::vector<double> unlabeled_fractions;
    std::vector<int> labeled_sizes{10, 100, 1000, 10000};
    std::string out_dir = ".";
    int vocab_min_count = 1;  // one id space serves model and replacement
    double proposer_alpha = 0.1;
    bool lr_explicit = false;  // task default applied when false
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

std::string mode_name(TrainMode mode);
TrainMode mode_from_name(const std::string& name);

struct TrialResult {
    std::uint64_t subset_seed = 0;
    std::string mode;
    std::string metric_name;
    double metric_value = 0;
    double wall_seconds = 0;  // in-memory only, excluded from report files
};

struct CurveRow {
    std::string sweep;  // "unlabeled" or "labeled"
    double x = 0;       // fraction or labeled size
    std::string mode;
    double mean = 0, min = 0, max = 0;
};

struct ModeAggregate {
    double mean = 0, min = 0, max = 0;
    int count = 0;
};

struct RunReport {
    std::vector<TrialResult> trials;
    std::vector<CurveRow> curves;
    nlohmann::json config_echo;
};

std::map<std::string, ModeAggregate> aggregate_by_mode(
    const std::vector<TrialResult>& trials);

// --- metrics ----------------------------------------------------------------

struct ClassificationMetrics {
    double accuracy = 0;
    double macro_f1 = 0;
};

struct TaggingMetrics {
    double token_accuracy = 0;
    double token_f1 = 0;  // micro F1 over non-O tokens
    double span_f1 = 0;   // exact type+boundary match, micro
};

ClassificationMetrics evaluate_classifier(const ModelParameters& params,
                                          const std::vector<TokenSequence>& texts,
                                          const std::vector<int>& gold);

TaggingMetrics evaluate_tagger(const ModelParameters& params,
                               const std::vector<TokenSequence>& texts,
                               const std::vector<std::vector<int>>& gold,
                               const std::vector<std::string>& tag_names);

struct Span {
    std::string type;
    int begin = 0;
    int end = 0;  // exclusive
    bool operator==(const Span&) const = default;
    auto operator<=>(const Span&) const = default;
};

// Lenient BIO decoding: an I-tag without a matching B opens a new span.
std::vector<Span> extract_spans(const std::vector<int>& tags,
                                const std::vector<std::string>& tag_names);

// Mean span length in words per span type.
std::map<std::string, double> span_statistics(const TaggingCorpus& corpus);

// --- orchestration ----------------------------------------------------------

RunReport run_experiment(const ExperimentConfig& cfg);
RunReport unlabeled_quantity_sweep(const ExperimentConfig& cfg);
RunReport labeled_quantity_sweep(const ExperimentConfig& cfg);

// Writes trials.csv, summary.json, and curves.csv (when sweeps ran) with
// 6-significant-digit formatting, atomically (write then rename).
void emit_report(const RunReport& report, const std::string& dir);

}  // namespace uda

#endif
