#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advdet/attacks.hpp"
#include "advdet/dataset.hpp"
#include "advdet/detector.hpp"
#include "advdet/distortions.hpp"
#include "advdet/evaluation.hpp"
#include "advdet/model.hpp"

namespace advdet {

// Fully resolved run description. Loaded from JSON; every field has a desk
// default so a config file only lists overrides. Seeds are always explicit in
// the emitted report.
struct ExperimentConfig {
    int num_classes = 10;
    int train_per_class = 200;
    int test_per_class = 100;
    int image_size = 16;
    std::uint32_t data_seed = 11;

    std::uint32_t model_seed = 21;
    std::uint32_t substitute_seed = 22;
    std::uint32_t train_seed = 31;
    int epochs = 32;
    int batch_size = 32;
    float learning_rate = 0.1f;

    int adv_epochs = 8;
    float adv_learning_rate = 0.05f;
    float adv_epsilon = 0.04f;

    float fgsm_epsilon = 0.04f;
    float cw_kappa = 0.0f;
    int attack_max_samples = 150;  // 0 = attack every eligible sample

    std::vector<std::string> distortions = {"median:3", "bit_depth:5", "gray"};
    double target_fpr = 0.05;
    std::uint32_t pair_seed = 41;
    int histogram_bins = 20;

    std::string out_dir = "run";

    void validate() const;
    std::string to_json() const;                       // sorted keys, no volatile fields
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::string& path);  // strict: unknown keys rejected
};

// Artifact locations under the run directory; one naming scheme shared by the
// CLI commands and the tests.
struct RunPaths {
    std::string out_dir;

    std::string train_data() const { return out_dir + "/train.advt"; }
    std::string test_data() const { return out_dir + "/test.advt"; }
    std::string checkpoint(const std::string& name) const { return out_dir + "/" + name + ".advk"; }
    std::string statistics(const std::string& name = "stats") const {
        return out_dir + "/" + name + ".advs";
    }
    std::string attack_set(const std::string& kind) const {
        return out_dir + "/attack_" + kind + ".advt";
    }
    std::string eval_json(const std::string& kind) const { return out_dir + "/eval_" + kind + ".json"; }
    std::string roc_csv(const std::string& kind, const std::string& detector) const {
        return out_dir + "/roc_" + kind + "_" + detector + ".csv";
    }
    std::string histogram_csv(const std::string& kind, const std::string& detector) const {
        return out_dir + "/hist_" + kind + "_" + detector + ".csv";
    }
    std::string report() const { return out_dir + "/report.json"; }
};

ModelConfig victim_config(const ExperimentConfig& cfg);
ModelConfig substitute_config(const ExperimentConfig& cfg);
DistortionSet resolve_distortions(const std::vector<std::string>& names);
AttackConfig resolve_attack(const ExperimentConfig& cfg, AttackKind kind);

LabeledDataset make_train_data(const ExperimentConfig& cfg);
LabeledDataset make_test_data(const ExperimentConfig& cfg);

// Trains the victim from scratch and fills in TrainMeta accuracies.
Model train_victim(const ExperimentConfig& cfg, const LabeledDataset& train,
                   const LabeledDataset& test);

// Both detectors on one paired split, sharing the pairing and the victim.
struct EvalOutcome {
    ScoredSet ours;
    ScoredSet fs;
    double ours_auc = 0.0;
    double fs_auc = 0.0;
    double ours_threshold = 0.0;
    double fs_threshold = 0.0;
    DetectionRates ours_rates;
    DetectionRates fs_rates;
};

EvalOutcome evaluate_attack_set(const Model& victim, const ClassStatistics& stats,
                                const AttackSet& attacks, const LabeledDataset& testset,
                                std::uint32_t pair_seed, double target_fpr);

// Serialized eval fragment for one attack kind (sorted keys, deterministic).
std::string eval_outcome_json(const ExperimentConfig& cfg, const std::string& kind,
                              const AttackSet& attacks, const EvalOutcome& outcome);

// Attack-set persistence on top of the tensor container (metadata carries the
// per-sample attack record fields).
void save_attack_set(const AttackSet& attacks, int num_classes, const std::string& path);
AttackSet load_attack_set(const std::string& path);

// Distortion ablation: both detectors across the three single-distortion
// configurations plus the two- and three-distortion combinations.
struct AblationRow {
    std::string label;
    std::vector<std::string> distortions;
    double ours_auc = 0.0;
    double fs_auc = 0.0;
};

std::vector<AblationRow> run_distortion_ablation(const Model& victim, const LabeledDataset& train,
                                                 const LabeledDataset& test, const AttackSet& attacks,
                                                 std::uint32_t pair_seed, double target_fpr);
std::string ablation_json(const ExperimentConfig& cfg, const std::string& kind,
                          const std::vector<AblationRow>& rows);

// Final report: resolved config, seeds, model accuracies, per-attack eval
// fragments found in the run directory.
std::string assemble_report(const ExperimentConfig& cfg, const std::vector<std::string>& kinds);

}  // namespace advdet
