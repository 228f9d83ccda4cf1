#include "advdet/experiment.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "advdet/io.hpp"
#include "json.hpp"

namespace advdet {

namespace {

using nlohmann::json;

json config_to_json_obj(const ExperimentConfig& c) {
    json j;
    j["num_classes"] = c.num_classes;
    j["train_per_class"] = c.train_per_class;
    j["test_per_class"] = c.test_per_class;
    j["image_size"] = c.image_size;
    j["data_seed"] = c.data_seed;
    j["model_seed"] = c.model_seed;
    j["substitute_seed"] = c.substitute_seed;
    j["train_seed"] = c.train_seed;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["adv_epochs"] = c.adv_epochs;
    j["adv_learning_rate"] = c.adv_learning_rate;
    j["adv_epsilon"] = c.adv_epsilon;
    j["fgsm_epsilon"] = c.fgsm_epsilon;
    j["cw_kappa"] = c.cw_kappa;
    j["attack_max_samples"] = c.attack_max_samples;
    j["distortions"] = c.distortions;
    j["target_fpr"] = c.target_fpr;
    j["pair_seed"] = c.pair_seed;
    j["histogram_bins"] = c.histogram_bins;
    j["out_dir"] = c.out_dir;
    return j;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (num_classes < 2 || num_classes > 30) {
        throw std::invalid_argument("config: num_classes must lie in [2, 30]");
    }
    if (train_per_class < 1 || test_per_class < 1) {
        throw std::invalid_argument("config: per-class sample counts must be >= 1");
    }
    if (image_size < 8) throw std::invalid_argument("config: image_size must be >= 8");
    if (epochs < 0 || adv_epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (!(learning_rate > 0.0f) || !(adv_learning_rate > 0.0f)) {
        throw std::invalid_argument("config: learning_rate must be > 0");
    }
    if (adv_epsilon < 0.0f || fgsm_epsilon < 0.0f || cw_kappa < 0.0f) {
        throw std::invalid_argument("config: attack magnitudes must be >= 0");
    }
    if (attack_max_samples < 0) throw std::invalid_argument("config: attack_max_samples must be >= 0");
    if (distortions.empty()) throw std::invalid_argument("config: distortion set must be nonempty");
    if (!(target_fpr > 0.0 && target_fpr < 1.0)) {
        throw std::invalid_argument("config: target_fpr must lie in (0, 1)");
    }
    if (histogram_bins < 2) throw std::invalid_argument("config: histogram_bins must be >= 2");
    if (out_dir.empty()) throw std::invalid_argument("config: out_dir must be set");
    resolve_distortions(distortions);
}

std::string ExperimentConfig::to_json() const { return config_to_json_obj(*this).dump(2) + "\n"; }

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
    ExperimentConfig c;
    json known = config_to_json_obj(c);
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
        known[key] = value;
    }
    c.num_classes = known["num_classes"].get<int>();
    c.train_per_class = known["train_per_class"].get<int>();
    c.test_per_class = known["test_per_class"].get<int>();
    c.image_size = known["image_size"].get<int>();
    c.data_seed = known["data_seed"].get<std::uint32_t>();
    c.model_seed = known["model_seed"].get<std::uint32_t>();
    c.substitute_seed = known["substitute_seed"].get<std::uint32_t>();
    c.train_seed = known["train_seed"].get<std::uint32_t>();
    c.epochs = known["epochs"].get<int>();
    c.batch_size = known["batch_size"].get<int>();
    c.learning_rate = known["learning_rate"].get<float>();
    c.adv_epochs = known["adv_epochs"].get<int>();
    c.adv_learning_rate = known["adv_learning_rate"].get<float>();
    c.adv_epsilon = known["adv_epsilon"].get<float>();
    c.fgsm_epsilon = known["fgsm_epsilon"].get<float>();
    c.cw_kappa = known["cw_kappa"].get<float>();
    c.attack_max_samples = known["attack_max_samples"].get<int>();
    c.distortions = known["distortions"].get<std::vector<std::string>>();
    c.target_fpr = known["target_fpr"].get<double>();
    c.pair_seed = known["pair_seed"].get<std::uint32_t>();
    c.histogram_bins = known["histogram_bins"].get<int>();
    c.out_dir = known["out_dir"].get<std::string>();
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    return from_json(io::read_text_file(path));
}

ModelConfig victim_config(const ExperimentConfig& cfg) {
    return ModelConfig::desk_cnn(cfg.image_size, cfg.image_size, 3, cfg.num_classes, cfg.model_seed);
}

ModelConfig substitute_config(const ExperimentConfig& cfg) {
    return ModelConfig::desk_substitute(cfg.image_size, cfg.image_size, 3, cfg.num_classes,
                                        cfg.substitute_seed);
}

DistortionSet resolve_distortions(const std::vector<std::string>& names) {
    DistortionSet set;
    set.reserve(names.size());
    for (const std::string& name : names) set.push_back(parse_distortion(name));
    if (set.empty()) throw std::invalid_argument("distortion set must be nonempty");
    return set;
}

AttackConfig resolve_attack(const ExperimentConfig& cfg, AttackKind kind) {
    AttackConfig a;
    a.kind = kind;
    a.epsilon = cfg.fgsm_epsilon;
    a.kappa = cfg.cw_kappa;
    a.validate();
    return a;
}

LabeledDataset make_train_data(const ExperimentConfig& cfg) {
    return generate_synthetic_dataset(cfg.num_classes, cfg.train_per_class, cfg.image_size,
                                      cfg.data_seed, Split::Train);
}

LabeledDataset make_test_data(const ExperimentConfig& cfg) {
    // Shifted seed keeps the test split disjoint from training draws.
    return generate_synthetic_dataset(cfg.num_classes, cfg.test_per_class, cfg.image_size,
                                      cfg.data_seed ^ 0x5f375a86u, Split::Test);
}

Model train_victim(const ExperimentConfig& cfg, const LabeledDataset& train,
                   const LabeledDataset& test) {
    Model model(victim_config(cfg));
    TrainOptions opt;
    opt.epochs = cfg.epochs;
    opt.batch_size = cfg.batch_size;
    opt.learning_rate = cfg.learning_rate;
    opt.seed = cfg.train_seed;
    advdet::train(model, train, opt);
    model.meta().test_accuracy = model.accuracy_on(test);
    return model;
}

EvalOutcome evaluate_attack_set(const Model& victim, const ClassStatistics& stats,
                                const AttackSet& attacks, const LabeledDataset& testset,
                                std::uint32_t pair_seed, double target_fpr) {
    const PairedSets paired = pair_sets(attacks, testset, victim, pair_seed);
    const LegitimacyScorer ours_scorer = [&](const Tensor& x) {
        return detect(victim, stats, x, 0.0).score;
    };
    const LegitimacyScorer fs_scorer = [&](const Tensor& x) {
        return fs_legitimacy(fs_score(victim, x, stats.distortions));
    };

    EvalOutcome out;
    out.ours = score_paired(paired, testset, attacks, victim, ours_scorer);
    out.fs = score_paired(paired, testset, attacks, victim, fs_scorer);
    out.ours_auc = auc(roc_curve(out.ours));
    out.fs_auc = auc(roc_curve(out.fs));

    std::vector<double> leg_ours, leg_fs;
    for (const auto& r : out.ours.records) {
        if (!r.adversarial) leg_ours.push_back(r.score);
    }
    for (const auto& r : out.fs.records) {
        if (!r.adversarial) leg_fs.push_back(r.score);
    }
    out.ours_threshold = calibrate_threshold(leg_ours, target_fpr);
    out.fs_threshold = calibrate_threshold(leg_fs, target_fpr);
    out.ours_rates = detection_rate(out.ours, out.ours_threshold);
    out.fs_rates = detection_rate(out.fs, out.fs_threshold);
    return out;
}

std::string eval_outcome_json(const ExperimentConfig& cfg, const std::string& kind,
                              const AttackSet& attacks, const EvalOutcome& outcome) {
    double l2 = 0.0;
    for (const auto& item : attacks.items) l2 += item.result.l2_norm;
    json j;
    j["attack"] = kind;
    j["attempted"] = attacks.attempted;
    j["retained"] = attacks.items.size();
    j["mean_l2"] = attacks.items.empty() ? 0.0 : l2 / static_cast<double>(attacks.items.size());
    j["pair_seed"] = cfg.pair_seed;
    j["target_fpr"] = cfg.target_fpr;
    json ours;
    ours["auc"] = outcome.ours_auc;
    ours["threshold"] = outcome.ours_threshold;
    ours["legitimate_pass_rate"] = outcome.ours_rates.legitimate_pass_rate;
    ours["detection_rate"] = outcome.ours_rates.adversarial_detection_rate;
    json fs;
    fs["auc"] = outcome.fs_auc;
    fs["threshold"] = outcome.fs_threshold;
    fs["legitimate_pass_rate"] = outcome.fs_rates.legitimate_pass_rate;
    fs["detection_rate"] = outcome.fs_rates.adversarial_detection_rate;
    j["ours"] = ours;
    j["feature_squeezing"] = fs;
    return j.dump(2) + "\n";
}

void save_attack_set(const AttackSet& attacks, int num_classes, const std::string& path) {
    io::TensorContainer c;
    c.num_classes = num_classes;
    c.test_split = true;
    c.records.reserve(attacks.items.size());
    for (const auto& item : attacks.items) {
        json meta;
        meta["attack"] = attack_kind_name(attacks.config.kind);
        meta["attempted"] = attacks.attempted;
        meta["source_index"] = item.result.source_index;
        meta["success"] = item.result.success;
        meta["iterations"] = item.result.iterations;
        meta["l2"] = item.result.l2_norm;
        c.records.push_back({item.result.adversarial, item.label, meta.dump()});
    }
    io::save_container(c, path);
}

AttackSet load_attack_set(const std::string& path) {
    const io::TensorContainer c = io::load_container(path);
    if (c.records.empty()) throw std::runtime_error(path + ": attack set has no records");
    AttackSet out;
    for (const auto& rec : c.records) {
        if (!rec.label || rec.metadata.empty()) {
            throw std::runtime_error(path + ": attack records need labels and metadata");
        }
        json meta = json::parse(rec.metadata);
        AttackSetItem item;
        item.result.adversarial = rec.tensor;
        item.result.source_index = meta.at("source_index").get<int>();
        item.result.success = meta.at("success").get<bool>();
        item.result.iterations = meta.at("iterations").get<int>();
        item.result.l2_norm = meta.at("l2").get<double>();
        item.label = *rec.label;
        out.items.push_back(std::move(item));
    }
    json first = json::parse(c.records.front().metadata);
    out.config.kind = parse_attack_kind(first.at("attack").get<std::string>());
    out.attempted = first.at("attempted").get<std::uint64_t>();
    return out;
}

std::vector<AblationRow> run_distortion_ablation(const Model& victim, const LabeledDataset& train,
                                                 const LabeledDataset& test, const AttackSet& attacks,
                                                 std::uint32_t pair_seed, double target_fpr) {
    const std::vector<AblationRow> configs = {
        {"median", {"median:3"}, 0.0, 0.0},
        {"bit_depth", {"bit_depth:5"}, 0.0, 0.0},
        {"gray", {"gray"}, 0.0, 0.0},
        {"2dist", {"median:3", "bit_depth:5"}, 0.0, 0.0},
        {"3dist", {"median:3", "bit_depth:5", "gray"}, 0.0, 0.0},
    };
    std::vector<AblationRow> out;
    out.reserve(configs.size());
    for (const AblationRow& row : configs) {
        const ClassStatistics stats =
            compute_class_statistics(victim, train, resolve_distortions(row.distortions), true);
        const EvalOutcome outcome =
            evaluate_attack_set(victim, stats, attacks, test, pair_seed, target_fpr);
        out.push_back({row.label, row.distortions, outcome.ours_auc, outcome.fs_auc});
    }
    return out;
}

std::string ablation_json(const ExperimentConfig& cfg, const std::string& kind,
                          const std::vector<AblationRow>& rows) {
    json j;
    j["attack"] = kind;
    j["pair_seed"] = cfg.pair_seed;
    json arr = json::array();
    for (const AblationRow& row : rows) {
        json r;
        r["label"] = row.label;
        r["distortions"] = row.distortions;
        r["ours_auc"] = row.ours_auc;
        r["fs_auc"] = row.fs_auc;
        arr.push_back(r);
    }
    j["rows"] = arr;
    return j.dump(2) + "\n";
}

std::string assemble_report(const ExperimentConfig& cfg, const std::vector<std::string>& kinds) {
    const RunPaths paths{cfg.out_dir};
    json j;
    j["config"] = json::parse(cfg.to_json());
    const Model victim = io::load_checkpoint(paths.checkpoint("model"));
    json model;
    model["epochs"] = victim.meta().epochs;
    model["train_accuracy"] = victim.meta().train_accuracy;
    model["test_accuracy"] = victim.meta().test_accuracy;
    model["fingerprint"] = victim.fingerprint();
    j["model"] = model;
    json attacks = json::object();
    for (const std::string& kind : kinds) {
        attacks[kind] = json::parse(io::read_text_file(paths.eval_json(kind)));
    }
    j["attacks"] = attacks;
    return j.dump(2) + "\n";
}

}  // namespace advdet
