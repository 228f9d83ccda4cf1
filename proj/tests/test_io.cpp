#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "advdet/attacks.hpp"
#include "advdet/dataset.hpp"
#include "advdet/detector.hpp"
#include "advdet/experiment.hpp"
#include "advdet/io.hpp"
#include "advdet/model.hpp"
#include "advdet/rng.hpp"
#include "doctest.h"
#include "support/testutil.hpp"

namespace fs = std::filesystem;
namespace io = advdet::io;

using advdet::AttackKind;
using advdet::AttackSet;
using advdet::AttackSetItem;
using advdet::ClassStatistics;
using advdet::ExperimentConfig;
using advdet::LabeledDataset;
using advdet::Model;
using advdet::ModelConfig;
using advdet::Split;
using advdet::Tensor;
using advdet::TrainMeta;
using testutil::TempDir;

namespace {

std::string thrown_message(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           (a.size() == 0 ||
            std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(float)) == 0);
}

Tensor random_tensor(std::vector<int> shape, std::uint32_t seed) {
    advdet::Rng rng(seed);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.normal(0.0f, 0.3f);
    return t;
}

// Shape [2], one labeled record; every offset below is pinned by the layout:
// 18-byte header, then rank u8, dim u32, two f32, label u16.
io::TensorContainer tiny_labeled() {
    io::TensorContainer c;
    c.num_classes = 5;
    c.records.push_back({Tensor({2}, {0.5f, 0.25f}), 1, ""});
    return c;
}

}  // namespace

TEST_CASE("unlabeled container round trips byte-identically across ranks") {
    TempDir dir("io-plain");
    io::TensorContainer c;
    c.records.push_back({random_tensor({2}, 1), std::nullopt, ""});
    c.records.push_back({random_tensor({2, 3}, 2), std::nullopt, ""});
    c.records.push_back({random_tensor({2, 2, 2}, 3), std::nullopt, ""});
    c.records.push_back({random_tensor({1, 2, 2, 3}, 4), std::nullopt, ""});
    c.records[0].tensor[0] = -0.0f;
    c.records[0].tensor[1] = 0.0f;

    const std::string p1 = dir.file("a.advt");
    const std::string p2 = dir.file("b.advt");
    io::save_container(c, p1);
    io::TensorContainer loaded = io::load_container(p1);

    REQUIRE(loaded.records.size() == 4);
    CHECK(loaded.num_classes == 0);
    CHECK_FALSE(loaded.test_split);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(bitwise_equal(loaded.records[i].tensor, c.records[i].tensor));
        CHECK_FALSE(loaded.records[i].label.has_value());
        CHECK(loaded.records[i].metadata.empty());
    }

    io::save_container(loaded, p2);
    CHECK(testutil::read_file_bytes(p1) == testutil::read_file_bytes(p2));
}

TEST_CASE("labels, metadata and the test flag survive a round trip") {
    TempDir dir("io-flags");
    io::TensorContainer c;
    c.num_classes = 5;
    c.test_split = true;
    c.records.push_back({random_tensor({3}, 5), 0, "alpha"});
    c.records.push_back({random_tensor({2, 2}, 6), 4, ""});
    c.records.push_back({random_tensor({4}, 7), 2, "{\"k\":1}"});

    const std::string p1 = dir.file("a.advt");
    const std::string p2 = dir.file("b.advt");
    io::save_container(c, p1);
    io::TensorContainer loaded = io::load_container(p1);

    REQUIRE(loaded.records.size() == 3);
    CHECK(loaded.num_classes == 5);
    CHECK(loaded.test_split);
    CHECK(loaded.records[0].label == 0);
    CHECK(loaded.records[1].label == 4);
    CHECK(loaded.records[2].label == 2);
    CHECK(loaded.records[0].metadata == "alpha");
    CHECK(loaded.records[1].metadata == "");
    CHECK(loaded.records[2].metadata == "{\"k\":1}");
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(bitwise_equal(loaded.records[i].tensor, c.records[i].tensor));
    }

    io::save_container(loaded, p2);
    CHECK(testutil::read_file_bytes(p1) == testutil::read_file_bytes(p2));
}

TEST_CASE("loader pinpoints corrupted bytes by offset") {
    TempDir dir("io-corrupt");
    const std::string path = dir.file("t.advt");
    io::save_container(tiny_labeled(), path);
    const std::vector<std::uint8_t> clean = testutil::read_file_bytes(path);
    REQUIRE(clean.size() == 33);

    auto load_with = [&](std::vector<std::uint8_t> bytes) {
        testutil::write_file_bytes(path, bytes);
        return thrown_message([&] { io::load_container(path); });
    };

    std::vector<std::uint8_t> bad = clean;
    bad[31] = 0xFF;
    bad[32] = 0xFF;
    std::string msg = load_with(bad);
    CHECK(msg.find("record 0 label 65535") != std::string::npos);
    CHECK(msg.find("outside [0,5)") != std::string::npos);

    bad = clean;
    bad[18] = 9;
    msg = load_with(bad);
    CHECK(msg.find("tensor rank 9 out of range [1,4]") != std::string::npos);
    CHECK(msg.find("at byte offset 18") != std::string::npos);

    bad = clean;
    bad[19] = bad[20] = bad[21] = bad[22] = 0;
    msg = load_with(bad);
    CHECK(msg.find("tensor dimension 0 out of range") != std::string::npos);
    CHECK(msg.find("at byte offset 19") != std::string::npos);

    bad = clean;
    bad.resize(30);
    msg = load_with(bad);
    CHECK(msg.find("truncated: need 8 bytes for tensor payload of 2 floats, have 7") !=
          std::string::npos);
    CHECK(msg.find("at byte offset 23") != std::string::npos);

    bad = clean;
    bad.resize(10);
    msg = load_with(bad);
    CHECK(msg.find("truncated") != std::string::npos);

    bad = clean;
    bad[0] = 'X';
    msg = load_with(bad);
    CHECK(msg.find("expected magic 'ADVT'") != std::string::npos);

    bad = clean;
    bad[4] = 9;
    msg = load_with(bad);
    CHECK(msg.find("unsupported format version 9") != std::string::npos);

    bad = clean;
    bad.push_back(0xAB);
    msg = load_with(bad);
    CHECK(msg.find("1 trailing bytes after the last record") != std::string::npos);
    CHECK(msg.find("at byte offset 33") != std::string::npos);
}

TEST_CASE("save refuses inconsistent labeling and leaves no file behind") {
    TempDir dir("io-reject");
    const std::string path = dir.file("t.advt");

    io::TensorContainer mixed;
    mixed.num_classes = 2;
    mixed.records.push_back({random_tensor({2}, 8), 1, ""});
    mixed.records.push_back({random_tensor({2}, 9), std::nullopt, ""});
    std::string msg = thrown_message([&] { io::save_container(mixed, path); });
    CHECK(msg.find("mixed labeled and unlabeled") != std::string::npos);
    CHECK_FALSE(fs::exists(path));

    io::TensorContainer range;
    range.num_classes = 2;
    range.records.push_back({random_tensor({2}, 10), 5, ""});
    msg = thrown_message([&] { io::save_container(range, path); });
    CHECK(msg.find("label 5 outside [0,2)") != std::string::npos);
    CHECK_FALSE(fs::exists(path));
}

TEST_CASE("dataset files preserve pixels, labels and split") {
    TempDir dir("io-data");
    LabeledDataset d = advdet::generate_synthetic_dataset(3, 4, 8, 77, Split::Test);
    const std::string path = dir.file("d.advt");
    io::save_dataset(d, path);
    LabeledDataset back = io::load_dataset(path);

    CHECK(back.num_classes == 3);
    CHECK(back.split == Split::Test);
    CHECK(back.labels == d.labels);
    REQUIRE(back.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(bitwise_equal(back.images[i], d.images[i]));
    }
}

TEST_CASE("checkpoints restore the exact model") {
    TempDir dir("io-ckpt");
    ModelConfig cfg = ModelConfig::desk_cnn(8, 8, 3, 2, 814);
    Model fresh(cfg);
    TrainMeta meta;
    meta.epochs = 3;
    meta.train_accuracy = 0.75;
    meta.test_accuracy = 0.5;
    Model m(cfg, fresh.params(), meta);

    const std::string path = dir.file("m.advk");
    io::save_checkpoint(m, path);
    Model back = io::load_checkpoint(path);

    CHECK(back.config().canonical_string() == cfg.canonical_string());
    CHECK(back.config().seed == cfg.seed);
    CHECK(back.meta().epochs == 3);
    CHECK(back.meta().train_accuracy == 0.75);
    CHECK(back.meta().test_accuracy == 0.5);
    CHECK(back.fingerprint() == m.fingerprint());
    REQUIRE(back.params().size() == m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        CHECK(bitwise_equal(back.params()[i], m.params()[i]));
    }

    Tensor probe = random_tensor({8, 8, 3}, 815);
    for (auto& v : probe.values()) v = std::clamp(v + 0.5f, 0.0f, 1.0f);
    CHECK(bitwise_equal(back.predict(probe), m.predict(probe)));
}

TEST_CASE("statistics files restore every mean bitwise") {
    TempDir dir("io-stats");
    Model m(ModelConfig::desk_cnn(8, 8, 3, 2, 816));
    LabeledDataset data;
    data.num_classes = 2;
    for (int i = 0; i < 4; ++i) {
        Tensor img = random_tensor({8, 8, 3}, 900 + static_cast<std::uint32_t>(i));
        for (auto& v : img.values()) v = std::clamp(v + 0.5f, 0.0f, 1.0f);
        data.images.push_back(img);
        data.labels.push_back(i % 2);
    }
    const advdet::DistortionSet set = {{advdet::DistortionKind::MedianFilter, 3},
                                       {advdet::DistortionKind::BitDepthReduce, 5}};
    ClassStatistics stats = advdet::compute_class_statistics(m, data, set);

    const std::string path = dir.file("s.advs");
    io::save_statistics(stats, path);
    ClassStatistics back = io::load_statistics(path);

    CHECK(back.num_classes == stats.num_classes);
    CHECK(back.counts == stats.counts);
    CHECK(back.distortions == stats.distortions);
    CHECK(back.model_fingerprint == stats.model_fingerprint);
    REQUIRE(back.mu.size() == stats.mu.size());
    for (std::size_t j = 0; j < stats.mu.size(); ++j) {
        REQUIRE(back.mu[j].size() == stats.mu[j].size());
        CHECK(std::memcmp(back.mu[j].data(), stats.mu[j].data(),
                          stats.mu[j].size() * sizeof(float)) == 0);
    }
}

TEST_CASE("atomic writers create parents and leave no temp files") {
    TempDir dir("io-atomic");
    const std::string nested = dir.file("a/b/c.txt");
    io::write_text_file_atomic(nested, "hello\nworld\n");
    CHECK(io::read_text_file(nested) == "hello\nworld\n");

    io::write_text_file_atomic(nested, "rewritten");
    CHECK(io::read_text_file(nested) == "rewritten");

    std::size_t entries = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir.path())) {
        ++entries;
        CHECK(e.path().string().find(".tmp") == std::string::npos);
    }
    CHECK(entries == 3);  // a, a/b, a/b/c.txt

    const std::vector<std::uint8_t> blob = {0x00, 0xFF, 0x10, 0x7F};
    const std::string bin = dir.file("blob.bin");
    io::write_bytes_atomic(bin, blob);
    CHECK(testutil::read_file_bytes(bin) == blob);

    CHECK_THROWS_AS(io::read_text_file(dir.file("missing.txt")), std::runtime_error);
}

TEST_CASE("experiment config json round trips field by field") {
    ExperimentConfig cfg;
    cfg.num_classes = 7;
    cfg.train_per_class = 33;
    cfg.test_per_class = 12;
    cfg.image_size = 9;
    cfg.data_seed = 101;
    cfg.model_seed = 102;
    cfg.substitute_seed = 103;
    cfg.train_seed = 104;
    cfg.epochs = 5;
    cfg.batch_size = 17;
    cfg.learning_rate = 0.22f;
    cfg.adv_epochs = 2;
    cfg.adv_learning_rate = 0.03f;
    cfg.adv_epsilon = 0.06f;
    cfg.fgsm_epsilon = 0.05f;
    cfg.cw_kappa = 0.4f;
    cfg.attack_max_samples = 66;
    cfg.distortions = {"gray", "median:5"};
    cfg.target_fpr = 0.08;
    cfg.pair_seed = 105;
    cfg.histogram_bins = 12;
    cfg.out_dir = "elsewhere";
    cfg.validate();

    ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.num_classes == cfg.num_classes);
    CHECK(back.train_per_class == cfg.train_per_class);
    CHECK(back.test_per_class == cfg.test_per_class);
    CHECK(back.image_size == cfg.image_size);
    CHECK(back.data_seed == cfg.data_seed);
    CHECK(back.model_seed == cfg.model_seed);
    CHECK(back.substitute_seed == cfg.substitute_seed);
    CHECK(back.train_seed == cfg.train_seed);
    CHECK(back.epochs == cfg.epochs);
    CHECK(back.batch_size == cfg.batch_size);
    CHECK(back.learning_rate == cfg.learning_rate);
    CHECK(back.adv_epochs == cfg.adv_epochs);
    CHECK(back.adv_learning_rate == cfg.adv_learning_rate);
    CHECK(back.adv_epsilon == cfg.adv_epsilon);
    CHECK(back.fgsm_epsilon == cfg.fgsm_epsilon);
    CHECK(back.cw_kappa == cfg.cw_kappa);
    CHECK(back.attack_max_samples == cfg.attack_max_samples);
    CHECK(back.distortions == cfg.distortions);
    CHECK(back.target_fpr == cfg.target_fpr);
    CHECK(back.pair_seed == cfg.pair_seed);
    CHECK(back.histogram_bins == cfg.histogram_bins);
    CHECK(back.out_dir == cfg.out_dir);

    TempDir dir("io-cfg");
    const std::string path = dir.file("cfg.json");
    io::write_text_file_atomic(path, cfg.to_json());
    ExperimentConfig from_file = ExperimentConfig::load(path);
    CHECK(from_file.to_json() == cfg.to_json());
}

TEST_CASE("experiment config parsing is strict") {
    const std::string msg = thrown_message(
        [] { ExperimentConfig::from_json("{\"bogus\": 1}"); });
    CHECK(msg.find("unknown key 'bogus'") != std::string::npos);

    CHECK_THROWS_AS(ExperimentConfig::from_json("[]"), std::invalid_argument);

    ExperimentConfig cfg;
    cfg.num_classes = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ExperimentConfig{};
    cfg.image_size = 4;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ExperimentConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ExperimentConfig{};
    cfg.target_fpr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ExperimentConfig{};
    cfg.histogram_bins = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ExperimentConfig{};
    cfg.distortions.clear();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ExperimentConfig{};
    cfg.out_dir.clear();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("attack set files carry every per-item field") {
    TempDir dir("io-attack");
    AttackSet set;
    set.config.kind = AttackKind::Fgsm;
    set.config.epsilon = 0.05f;
    set.attempted = 7;
    for (int i = 0; i < 2; ++i) {
        AttackSetItem item;
        Tensor adv = random_tensor({4, 4, 1}, 950 + static_cast<std::uint32_t>(i));
        for (auto& v : adv.values()) v = std::clamp(v + 0.5f, 0.0f, 1.0f);
        item.result.adversarial = adv;
        item.result.perturbation = adv;  // dropped by the file format
        item.result.source_index = 40 + i;
        item.result.success = i == 0;
        item.result.iterations = 3 + i;
        item.result.l2_norm = 0.125 * (i + 1);
        item.source = adv;
        item.label = i;
        set.items.push_back(item);
    }

    const std::string path = dir.file("atk.advt");
    advdet::save_attack_set(set, 2, path);
    AttackSet back = advdet::load_attack_set(path);

    CHECK(back.config.kind == AttackKind::Fgsm);
    CHECK(back.attempted == 7);
    REQUIRE(back.items.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        const AttackSetItem& a = set.items[i];
        const AttackSetItem& b = back.items[i];
        CHECK(bitwise_equal(b.result.adversarial, a.result.adversarial));
        CHECK(b.result.source_index == a.result.source_index);
        CHECK(b.result.success == a.result.success);
        CHECK(b.result.iterations == a.result.iterations);
        CHECK(b.result.l2_norm == a.result.l2_norm);
        CHECK(b.label == a.label);
        CHECK(b.source.size() == 0);
        CHECK(b.result.perturbation.size() == 0);
    }

    AttackSet empty;
    empty.config.kind = AttackKind::Fgsm;
    const std::string empty_path = dir.file("empty.advt");
    advdet::save_attack_set(empty, 2, empty_path);
    CHECK_THROWS_AS(advdet::load_attack_set(empty_path), std::runtime_error);
}

TEST_CASE("run paths follow one naming scheme") {
    advdet::RunPaths paths{"x"};
    CHECK(paths.train_data() == "x/train.advt");
    CHECK(paths.test_data() == "x/test.advt");
    CHECK(paths.checkpoint("victim") == "x/victim.advk");
    CHECK(paths.statistics() == "x/stats.advs");
    CHECK(paths.statistics("after") == "x/after.advs");
    CHECK(paths.attack_set("fgsm") == "x/attack_fgsm.advt");
    CHECK(paths.eval_json("cw") == "x/eval_cw.json");
    CHECK(paths.roc_csv("cw", "ours") == "x/roc_cw_ours.csv");
    CHECK(paths.histogram_csv("fgsm", "fs") == "x/hist_fgsm_fs.csv");
    CHECK(paths.report() == "x/report.json");
}
