#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "advdet/attacks.hpp"
#include "advdet/dataset.hpp"
#include "advdet/evaluation.hpp"
#include "advdet/model.hpp"
#include "advdet/rng.hpp"
#include "doctest.h"
#include "support/testutil.hpp"

using advdet::AttackSet;
using advdet::AttackSetItem;
using advdet::LabeledDataset;
using advdet::LayerKind;
using advdet::Model;
using advdet::ModelConfig;
using advdet::ScoredRecord;
using advdet::ScoredSet;
using advdet::Split;
using advdet::Tensor;

namespace {

std::string thrown_message(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

// Predicts 0 iff x0 >= x1 on [1,1,2] images.
Model diagonal_toy() {
    ModelConfig cfg;
    cfg.layers = {{LayerKind::Flatten, 0, 0, advdet::Padding::Same},
                  {LayerKind::Dense, 2, 0, advdet::Padding::Same},
                  {LayerKind::Softmax, 0, 0, advdet::Padding::Same}};
    cfg.height = 1;
    cfg.width = 1;
    cfg.channels = 2;
    cfg.num_classes = 2;
    cfg.seed = 601;
    Model m(cfg);
    m.params()[0] = Tensor({2, 2}, {10.0f, 0.0f, 0.0f, 10.0f});
    m.params()[1] = Tensor({2}, {0.0f, 0.0f});
    return m;
}

// Ten samples; the toy gets indices 4 and 9 wrong (labels flipped there).
LabeledDataset toy_test_set() {
    LabeledDataset d;
    d.num_classes = 2;
    d.split = Split::Test;
    for (int i = 0; i < 5; ++i) {
        d.images.push_back(Tensor({1, 1, 2}, {0.90f - 0.01f * static_cast<float>(i), 0.10f}));
        d.labels.push_back(i == 4 ? 1 : 0);
    }
    for (int i = 0; i < 5; ++i) {
        d.images.push_back(Tensor({1, 1, 2}, {0.10f, 0.90f - 0.01f * static_cast<float>(i)}));
        d.labels.push_back(i == 4 ? 0 : 1);
    }
    return d;
}

AttackSet toy_attacks(std::size_t k) {
    AttackSet set;
    set.attempted = k;
    for (std::size_t i = 0; i < k; ++i) {
        AttackSetItem item;
        item.result.adversarial = Tensor({1, 1, 2}, {0.25f, 0.30f});
        item.result.perturbation = Tensor({1, 1, 2}, {0.0f, 0.0f});
        item.result.source_index = 100 + static_cast<int>(i);
        item.result.success = true;
        item.source = Tensor({1, 1, 2}, {0.25f, 0.30f});
        item.label = 0;
        set.items.push_back(item);
    }
    return set;
}

double pixel0(const Tensor& t) { return static_cast<double>(t[0]); }

ScoredSet handmade(std::vector<double> legit, std::vector<double> adv) {
    ScoredSet s;
    int id = 0;
    for (double v : legit) {
        ScoredRecord r;
        r.sample_id = id++;
        r.score = v;
        r.adversarial = false;
        s.records.push_back(r);
    }
    for (double v : adv) {
        ScoredRecord r;
        r.sample_id = id++;
        r.score = v;
        r.adversarial = true;
        s.records.push_back(r);
    }
    return s;
}

}  // namespace

TEST_CASE("pairing draws only correctly predicted test samples") {
    Model m = diagonal_toy();
    LabeledDataset test = toy_test_set();
    AttackSet attacks = toy_attacks(3);

    advdet::PairedSets paired = advdet::pair_sets(attacks, test, m, 77);
    REQUIRE(paired.legitimate_indices.size() == 3);
    for (std::size_t idx : paired.legitimate_indices) {
        REQUIRE(idx < test.size());
        CHECK(m.predicted_class(test.images[idx]) == test.labels[idx]);
    }
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = a + 1; b < 3; ++b) {
            CHECK(paired.legitimate_indices[a] != paired.legitimate_indices[b]);
        }
    }

    advdet::PairedSets again = advdet::pair_sets(attacks, test, m, 77);
    CHECK(again.legitimate_indices == paired.legitimate_indices);

    bool any_different = false;
    for (std::uint32_t seed = 78; seed < 83; ++seed) {
        if (advdet::pair_sets(attacks, test, m, seed).legitimate_indices !=
            paired.legitimate_indices) {
            any_different = true;
        }
    }
    CHECK(any_different);
}

TEST_CASE("pairing rejects empty or oversized attack sets") {
    Model m = diagonal_toy();
    LabeledDataset test = toy_test_set();
    CHECK_THROWS_AS(advdet::pair_sets(AttackSet{}, test, m, 1), std::invalid_argument);

    const std::string msg = thrown_message(
        [&] { advdet::pair_sets(toy_attacks(9), test, m, 1); });
    CHECK(msg.find("need 9") != std::string::npos);
    CHECK(msg.find("have 8") != std::string::npos);
}

TEST_CASE("paired scoring tags and scores both branches") {
    Model m = diagonal_toy();
    LabeledDataset test = toy_test_set();
    AttackSet attacks = toy_attacks(4);
    advdet::PairedSets paired = advdet::pair_sets(attacks, test, m, 9);

    ScoredSet scored = advdet::score_paired(paired, test, attacks, m, pixel0);
    REQUIRE(scored.records.size() == 8);
    CHECK(scored.count(false) == 4);
    CHECK(scored.count(true) == 4);

    for (std::size_t i = 0; i < 4; ++i) {
        const ScoredRecord& r = scored.records[i];
        const std::size_t idx = paired.legitimate_indices[i];
        CHECK_FALSE(r.adversarial);
        CHECK(r.sample_id == static_cast<int>(idx));
        CHECK(r.score == pixel0(test.images[idx]));
        CHECK(r.predicted_class == m.predicted_class(test.images[idx]));
    }
    for (std::size_t i = 0; i < 4; ++i) {
        const ScoredRecord& r = scored.records[4 + i];
        CHECK(r.adversarial);
        CHECK(r.sample_id == 100 + static_cast<int>(i));
        CHECK(r.score == 0.25);
    }
}

TEST_CASE("roc of a perfectly separated set") {
    ScoredSet s = handmade({0.9, 0.8, 0.7}, {0.25, 0.2, 0.1});
    advdet::RocCurve roc = advdet::roc_curve(s);
    REQUIRE(roc.points.size() >= 2);
    CHECK(roc.points.front().fpr == 0.0);
    CHECK(roc.points.front().tpr == 0.0);
    CHECK(roc.points.back().fpr == 1.0);
    CHECK(roc.points.back().tpr == 1.0);
    CHECK(std::isinf(roc.points.back().threshold));

    bool has_corner = false;
    for (const auto& p : roc.points) {
        if (p.fpr == 0.0 && p.tpr == 1.0) has_corner = true;
    }
    CHECK(has_corner);
    CHECK(advdet::auc(roc) == doctest::Approx(1.0).epsilon(1e-12));

    for (auto& r : s.records) r.adversarial = !r.adversarial;
    CHECK(advdet::auc(advdet::roc_curve(s)) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("roc of indistinguishable scores is the diagonal") {
    ScoredSet s = handmade({0.7, 0.7, 0.7}, {0.7, 0.7, 0.7});
    advdet::RocCurve roc = advdet::roc_curve(s);
    REQUIRE(roc.points.size() == 2);
    CHECK(advdet::auc(roc) == 0.5);
}

TEST_CASE("roc area equals the brute-force rank statistic") {
    advdet::Rng rng(2203);
    for (int trial = 0; trial < 50; ++trial) {
        ScoredSet s;
        const std::size_t n = 2 + rng.below(199);
        const bool discretize = trial % 2 == 0;
        const std::uint32_t grid = 2 + rng.below(7);
        for (std::size_t i = 0; i < n; ++i) {
            ScoredRecord r;
            r.sample_id = static_cast<int>(i);
            r.adversarial = i == 0 ? false : (i == 1 ? true : rng.uniform() < 0.5f);
            r.score = discretize
                          ? static_cast<double>(rng.below(grid)) / static_cast<double>(grid)
                          : static_cast<double>(rng.uniform());
            s.records.push_back(r);
        }
        std::vector<double> legit, adv;
        for (const auto& r : s.records) (r.adversarial ? adv : legit).push_back(r.score);

        const double fast = advdet::auc(advdet::roc_curve(s));
        const double brute = testutil::mann_whitney_auc(legit, adv);
        INFO("trial " << trial << " n " << n << " fast " << fast << " brute " << brute);
        CHECK(std::abs(fast - brute) <= 1e-9);
    }
}

TEST_CASE("auc rejects degenerate or non-monotone curves") {
    advdet::RocCurve bad;
    bad.points = {{0.0, 0.0, 0.1}};
    CHECK_THROWS_AS(advdet::auc(bad), std::invalid_argument);
    bad.points = {{0.0, 0.0, 0.1}, {0.5, 0.4, 0.2}, {0.3, 0.6, 0.3}};
    CHECK_THROWS_AS(advdet::auc(bad), std::invalid_argument);
}

TEST_CASE("detection rates split on the threshold") {
    ScoredSet s = handmade({0.9, 0.5}, {0.5, 0.1});

    advdet::DetectionRates at_half = advdet::detection_rate(s, 0.5);
    CHECK(at_half.legitimate_pass_rate == 1.0);  // 0.5 >= 0.5 passes
    CHECK(at_half.adversarial_detection_rate == 0.5);

    advdet::DetectionRates at_zero = advdet::detection_rate(s, 0.0);
    CHECK(at_zero.legitimate_pass_rate == 1.0);
    CHECK(at_zero.adversarial_detection_rate == 0.0);

    advdet::DetectionRates above = advdet::detection_rate(s, 1.5);
    CHECK(above.legitimate_pass_rate == 0.0);
    CHECK(above.adversarial_detection_rate == 1.0);
}

TEST_CASE("histograms conserve counts and clamp out-of-range scores") {
    ScoredSet s = handmade({0.9, 0.26, -0.3, 1.7, 1.0}, {0.1, 0.1, 0.74});
    advdet::Histogram h = advdet::make_histogram(s, 4);
    REQUIRE(h.bins == 4);
    std::uint64_t legit_total = 0, adv_total = 0;
    for (auto v : h.legitimate) legit_total += v;
    for (auto v : h.adversarial) adv_total += v;
    CHECK(legit_total == s.count(false));
    CHECK(adv_total == s.count(true));

    CHECK(h.legitimate[0] == 1);  // -0.3 clamps down
    CHECK(h.legitimate[1] == 1);  // 0.26
    CHECK(h.legitimate[3] == 3);  // 0.9, clamped 1.7, and the 1.0 edge
    CHECK(h.adversarial[0] == 2);
    CHECK(h.adversarial[2] == 1);

    CHECK_THROWS_AS(advdet::make_histogram(s, 1), std::invalid_argument);
    CHECK_THROWS_AS(advdet::make_histogram(s, 0), std::invalid_argument);
    CHECK_THROWS_AS(advdet::make_histogram(s, -3), std::invalid_argument);
}

TEST_CASE("csv exports carry fixed headers and one line per row") {
    ScoredSet s = handmade({0.9, 0.8}, {0.2, 0.1});
    advdet::RocCurve roc = advdet::roc_curve(s);
    const std::string roc_csv = roc.to_csv();
    CHECK(roc_csv.rfind("threshold,fpr,tpr\n", 0) == 0);
    std::size_t newlines = 0;
    for (char c : roc_csv) newlines += c == '\n' ? 1 : 0;
    CHECK(newlines == roc.points.size() + 1);

    const std::string hist_csv = advdet::make_histogram(s, 4).to_csv();
    CHECK(hist_csv.rfind("bin_lo,bin_hi,legitimate,adversarial\n", 0) == 0);
    CHECK(hist_csv.find("0.25,0.5") != std::string::npos);
    newlines = 0;
    for (char c : hist_csv) newlines += c == '\n' ? 1 : 0;
    CHECK(newlines == 5);
}

TEST_CASE("scored sets demand finite scores and both tags") {
    ScoredSet bad = handmade({0.5}, {0.4});
    bad.records[0].score = std::nan("");
    const std::string nan_msg = thrown_message([&] { bad.validate(); });
    CHECK(nan_msg.find("non-finite") != std::string::npos);

    ScoredSet one_sided = handmade({0.5, 0.6}, {});
    const std::string msg = thrown_message([&] { one_sided.validate(); });
    CHECK(msg.find("2 legitimate") != std::string::npos);
    CHECK(msg.find("0 adversarial") != std::string::npos);

    CHECK_THROWS_AS(advdet::roc_curve(one_sided), std::invalid_argument);
}
