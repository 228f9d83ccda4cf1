#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "advdet/experiment.hpp"
#include "advdet/io.hpp"
#include "json.hpp"

namespace {

using namespace advdet;

struct GlobalFlags {
    std::string config_path;
    std::string out_dir;
    std::int64_t master_seed = -1;

    ExperimentConfig resolve() const {
        ExperimentConfig cfg =
            config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
        if (master_seed >= 0) {
            const auto base = static_cast<std::uint32_t>(master_seed);
            cfg.data_seed = base;
            cfg.model_seed = base + 1;
            cfg.substitute_seed = base + 2;
            cfg.train_seed = base + 3;
            cfg.pair_seed = base + 4;
        }
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        cfg.validate();
        return cfg;
    }
};

void cmd_gen_data(const ExperimentConfig& cfg) {
    const RunPaths paths{cfg.out_dir};
    const LabeledDataset train = make_train_data(cfg);
    const LabeledDataset test = make_test_data(cfg);
    io::save_dataset(train, paths.train_data());
    io::save_dataset(test, paths.test_data());
    io::write_text_file_atomic(cfg.out_dir + "/config.json", cfg.to_json());
    std::cout << "wrote " << train.size() << " train / " << test.size() << " test samples to "
              << cfg.out_dir << "\n";
}

void cmd_train(const ExperimentConfig& cfg, const std::string& arch, std::string name, int epochs) {
    const RunPaths paths{cfg.out_dir};
    const LabeledDataset train = io::load_dataset(paths.train_data());
    const LabeledDataset test = io::load_dataset(paths.test_data());
    if (name.empty()) name = arch == "substitute" ? "substitute" : "model";

    Model model(arch == "substitute" ? substitute_config(cfg) : victim_config(cfg));
    TrainOptions opt;
    opt.epochs = epochs >= 0 ? epochs : cfg.epochs;
    opt.batch_size = cfg.batch_size;
    opt.learning_rate = cfg.learning_rate;
    opt.seed = arch == "substitute" ? cfg.train_seed ^ 0x9e3779b9u : cfg.train_seed;
    advdet::train(model, train, opt);
    model.meta().test_accuracy = model.accuracy_on(test);
    io::save_checkpoint(model, paths.checkpoint(name));
    std::cout << name << ": train accuracy " << model.meta().train_accuracy << ", test accuracy "
              << model.meta().test_accuracy << "\n";
}

void cmd_adv_train(const ExperimentConfig& cfg, const std::string& from, const std::string& name,
                   int epochs, float epsilon) {
    const RunPaths paths{cfg.out_dir};
    const LabeledDataset train = io::load_dataset(paths.train_data());
    const LabeledDataset test = io::load_dataset(paths.test_data());
    Model model = io::load_checkpoint(paths.checkpoint(from));
    TrainOptions opt;
    opt.epochs = epochs >= 0 ? epochs : cfg.adv_epochs;
    opt.batch_size = cfg.batch_size;
    opt.learning_rate = cfg.adv_learning_rate;
    opt.seed = cfg.train_seed + 101;
    adversarial_finetune(model, train, opt, epsilon >= 0.0f ? epsilon : cfg.adv_epsilon);
    model.meta().test_accuracy = model.accuracy_on(test);
    io::save_checkpoint(model, paths.checkpoint(name));
    std::cout << name << ": train accuracy " << model.meta().train_accuracy << ", test accuracy "
              << model.meta().test_accuracy << "\n";
}

void cmd_stats(const ExperimentConfig& cfg, const std::string& checkpoint, bool exclude_misclassified,
               const std::string& stats_name) {
    const RunPaths paths{cfg.out_dir};
    const Model model = io::load_checkpoint(paths.checkpoint(checkpoint));
    const LabeledDataset train = io::load_dataset(paths.train_data());
    const ClassStatistics stats = compute_class_statistics(
        model, train, resolve_distortions(cfg.distortions), !exclude_misclassified);
    io::save_statistics(stats, paths.statistics(stats_name));
    std::cout << "wrote per-class statistics for " << stats.num_classes << " classes, "
              << stats.distortions.size() << " distortions\n";
}

void cmd_attack(const ExperimentConfig& cfg, const std::string& kind_name,
                const std::string& checkpoint, const std::string& victim_name, bool keep_failed,
                int max_samples, std::string out_name) {
    const RunPaths paths{cfg.out_dir};
    const AttackKind kind = parse_attack_kind(kind_name);
    const LabeledDataset test = io::load_dataset(paths.test_data());
    const Model crafting = io::load_checkpoint(paths.checkpoint(checkpoint));
    std::optional<Model> victim;
    if (!victim_name.empty() && victim_name != checkpoint) {
        victim = io::load_checkpoint(paths.checkpoint(victim_name));
    }
    AttackSetOptions options;
    options.max_samples = static_cast<std::size_t>(max_samples >= 0 ? max_samples : cfg.attack_max_samples);
    options.retain_only_successful = !keep_failed;
    const AttackSet set = build_attack_set(crafting, test, resolve_attack(cfg, kind),
                                           victim ? *victim : crafting, options);
    const std::string path =
        out_name.empty() ? paths.attack_set(attack_kind_name(kind)) : cfg.out_dir + "/" + out_name + ".advt";
    save_attack_set(set, cfg.num_classes, path);
    std::cout << attack_kind_name(kind) << ": attempted " << set.attempted << ", retained "
              << set.items.size() << " adversarial samples -> " << path << "\n";
}

void cmd_detect(const ExperimentConfig& cfg, const std::string& checkpoint, const std::string& input,
                int index, double threshold) {
    const RunPaths paths{cfg.out_dir};
    const Model model = io::load_checkpoint(paths.checkpoint(checkpoint));
    const ClassStatistics stats = io::load_statistics(paths.statistics());
    const io::TensorContainer container = io::load_container(input);
    if (index < 0 || static_cast<std::size_t>(index) >= container.records.size()) {
        throw std::runtime_error("detect: record index " + std::to_string(index) + " outside [0," +
                                 std::to_string(container.records.size()) + ")");
    }
    const DetectionVerdict v =
        detect(model, stats, container.records[static_cast<std::size_t>(index)].tensor, threshold);
    nlohmann::json j;
    j["predicted_class"] = v.predicted_class;
    j["score"] = v.score;
    j["threshold"] = v.threshold;
    j["verdict"] = v.legitimate ? "legitimate" : "adversarial";
    std::cout << j.dump(2) << "\n";
}

void cmd_eval(const ExperimentConfig& cfg, const std::string& kind, const std::string& checkpoint,
              std::string attack_file, std::string tag, const std::string& stats_name) {
    const RunPaths paths{cfg.out_dir};
    if (tag.empty()) tag = kind;
    if (attack_file.empty()) attack_file = paths.attack_set(kind);
    const Model victim = io::load_checkpoint(paths.checkpoint(checkpoint));
    const ClassStatistics stats = io::load_statistics(paths.statistics(stats_name));
    const LabeledDataset test = io::load_dataset(paths.test_data());
    const AttackSet attacks = load_attack_set(attack_file);
    const EvalOutcome outcome =
        evaluate_attack_set(victim, stats, attacks, test, cfg.pair_seed, cfg.target_fpr);
    io::write_text_file_atomic(paths.eval_json(tag), eval_outcome_json(cfg, tag, attacks, outcome));
    io::write_text_file_atomic(paths.roc_csv(tag, "ours"), roc_curve(outcome.ours).to_csv());
    io::write_text_file_atomic(paths.roc_csv(tag, "fs"), roc_curve(outcome.fs).to_csv());
    export_histogram(outcome.ours, cfg.histogram_bins, paths.histogram_csv(tag, "ours"));
    export_histogram(outcome.fs, cfg.histogram_bins, paths.histogram_csv(tag, "fs"));
    std::cout << tag << ": ours auc " << outcome.ours_auc << ", feature squeezing auc "
              << outcome.fs_auc << "\n";
}

void cmd_ablate(const ExperimentConfig& cfg, const std::string& kind, const std::string& checkpoint) {
    const RunPaths paths{cfg.out_dir};
    const Model victim = io::load_checkpoint(paths.checkpoint(checkpoint));
    const LabeledDataset train = io::load_dataset(paths.train_data());
    const LabeledDataset test = io::load_dataset(paths.test_data());
    const AttackSet attacks = load_attack_set(paths.attack_set(kind));
    const std::vector<AblationRow> rows =
        run_distortion_ablation(victim, train, test, attacks, cfg.pair_seed, cfg.target_fpr);
    io::write_text_file_atomic(cfg.out_dir + "/ablation_" + kind + ".json",
                               ablation_json(cfg, kind, rows));
    for (const AblationRow& row : rows) {
        std::cout << kind << " " << row.label << ": ours auc " << row.ours_auc << ", feature squeezing auc "
                  << row.fs_auc << "\n";
    }
}

void cmd_report(const ExperimentConfig& cfg, std::vector<std::string> kinds) {
    const RunPaths paths{cfg.out_dir};
    if (kinds.empty()) {
        namespace fs = std::filesystem;
        for (const auto& entry : fs::directory_iterator(cfg.out_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("eval_", 0) == 0 && name.size() > 10 &&
                name.substr(name.size() - 5) == ".json") {
                kinds.push_back(name.substr(5, name.size() - 10));
            }
        }
        std::sort(kinds.begin(), kinds.end());
    }
    if (kinds.empty()) throw std::runtime_error("report: no eval fragments found in " + cfg.out_dir);
    io::write_text_file_atomic(paths.report(), assemble_report(cfg, kinds));
    std::cout << "wrote " << paths.report() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarial-example detection workbench"};
    app.require_subcommand(1);
    app.fallthrough();  // lets global flags appear after the subcommand name

    GlobalFlags flags;
    app.add_option("--config", flags.config_path, "experiment config JSON (defaults apply if omitted)");
    app.add_option("--out", flags.out_dir, "run directory override");
    app.add_option("--seed", flags.master_seed, "master seed; derives every stage seed");

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic train/test splits");
    gen->callback([&] { cmd_gen_data(flags.resolve()); });

    auto* train = app.add_subcommand("train", "train a classifier from scratch");
    std::string train_arch = "victim", train_name;
    int train_epochs = -1;
    train->add_option("--arch", train_arch, "victim | substitute")
        ->check(CLI::IsMember({"victim", "substitute"}));
    train->add_option("--name", train_name, "checkpoint name (default model / substitute)");
    train->add_option("--epochs", train_epochs, "epoch count override");
    train->callback([&] { cmd_train(flags.resolve(), train_arch, train_name, train_epochs); });

    auto* advtrain = app.add_subcommand("adv-train", "adversarially fine-tune a checkpoint");
    std::string advtrain_from = "model", advtrain_name = "adv_model";
    int advtrain_epochs = -1;
    float advtrain_epsilon = -1.0f;
    advtrain->add_option("--from", advtrain_from, "source checkpoint name");
    advtrain->add_option("--name", advtrain_name, "output checkpoint name");
    advtrain->add_option("--epochs", advtrain_epochs, "epoch count override");
    advtrain->add_option("--epsilon", advtrain_epsilon, "FGSM step for crafted half-batches");
    advtrain->callback([&] {
        cmd_adv_train(flags.resolve(), advtrain_from, advtrain_name, advtrain_epochs, advtrain_epsilon);
    });

    auto* stats = app.add_subcommand("stats", "compute per-class signature statistics");
    std::string stats_checkpoint = "model", stats_name = "stats";
    bool stats_exclude = false;
    stats->add_option("--checkpoint", stats_checkpoint, "checkpoint name");
    stats->add_option("--name", stats_name, "output artifact name");
    stats->add_flag("--exclude-misclassified", stats_exclude,
                    "drop training samples the model misclassifies");
    stats->callback([&] { cmd_stats(flags.resolve(), stats_checkpoint, stats_exclude, stats_name); });

    auto* attack = app.add_subcommand("attack", "craft an adversarial attack set");
    std::string attack_kind, attack_checkpoint = "model", attack_victim, attack_out;
    bool attack_keep_failed = false;
    int attack_max = -1;
    attack->add_option("--kind", attack_kind, "fgsm | deepfool | cw")->required();
    attack->add_option("--checkpoint", attack_checkpoint, "crafting checkpoint name");
    attack->add_option("--victim", attack_victim, "victim checkpoint (black-box when it differs)");
    attack->add_flag("--keep-failed", attack_keep_failed, "retain unsuccessful attacks too");
    attack->add_option("--max-samples", attack_max, "cap on attacked samples");
    attack->add_option("--name", attack_out, "output artifact name");
    attack->callback([&] {
        cmd_attack(flags.resolve(), attack_kind, attack_checkpoint, attack_victim, attack_keep_failed,
                   attack_max, attack_out);
    });

    auto* detect = app.add_subcommand("detect", "score one stored sample against the statistics");
    std::string detect_checkpoint = "model", detect_input;
    int detect_index = 0;
    double detect_threshold = 0.5;
    detect->add_option("--checkpoint", detect_checkpoint, "checkpoint name");
    detect->add_option("--input", detect_input, "tensor container with the samples")->required();
    detect->add_option("--index", detect_index, "record index inside the container");
    detect->add_option("--threshold", detect_threshold, "legitimacy threshold");
    detect->callback([&] {
        cmd_detect(flags.resolve(), detect_checkpoint, detect_input, detect_index, detect_threshold);
    });

    auto* eval = app.add_subcommand("eval", "paired ROC/AUC evaluation of one attack set");
    std::string eval_kind, eval_checkpoint = "model", eval_attack_file, eval_tag, eval_stats = "stats";
    eval->add_option("--kind", eval_kind, "fgsm | deepfool | cw")->required();
    eval->add_option("--checkpoint", eval_checkpoint, "victim checkpoint name");
    eval->add_option("--attack-file", eval_attack_file, "attack artifact (defaults by kind)");
    eval->add_option("--tag", eval_tag, "output tag (defaults to kind)");
    eval->add_option("--stats", eval_stats, "statistics artifact name");
    eval->callback([&] {
        cmd_eval(flags.resolve(), eval_kind, eval_checkpoint, eval_attack_file, eval_tag, eval_stats);
    });

    auto* ablate = app.add_subcommand("ablate", "both detectors across the five distortion configs");
    std::string ablate_kind = "cw", ablate_checkpoint = "model";
    ablate->add_option("--kind", ablate_kind, "attack set to score (fgsm | deepfool | cw)");
    ablate->add_option("--checkpoint", ablate_checkpoint, "victim checkpoint name");
    ablate->callback([&] { cmd_ablate(flags.resolve(), ablate_kind, ablate_checkpoint); });

    auto* report = app.add_subcommand("report", "assemble the run report from eval fragments");
    std::vector<std::string> report_kinds;
    report->add_option("--kinds", report_kinds, "eval tags to include (default: all found)");
    report->callback([&] { cmd_report(flags.resolve(), report_kinds); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
