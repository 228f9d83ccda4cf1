#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "advdet/dataset.hpp"
#include "advdet/experiment.hpp"
#include "doctest.h"

using advdet::generate_synthetic_dataset;
using advdet::LabeledDataset;
using advdet::Split;
using advdet::Tensor;

namespace {

bool same_images(const LabeledDataset& a, const LabeledDataset& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a.images[i].same_shape(b.images[i])) return false;
        if (std::memcmp(a.images[i].data(), b.images[i].data(),
                        a.images[i].size() * sizeof(float)) != 0) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
    auto a = generate_synthetic_dataset(4, 5, 12, 77);
    auto b = generate_synthetic_dataset(4, 5, 12, 77);
    CHECK(same_images(a, b));
    CHECK(a.labels == b.labels);

    auto c = generate_synthetic_dataset(4, 5, 12, 78);
    CHECK_FALSE(same_images(a, c));
}

TEST_CASE("class balance, label layout, and value range") {
    auto data = generate_synthetic_dataset(10, 20, 16, 5);
    data.validate();
    CHECK(data.size() == 200);
    CHECK(data.num_classes == 10);
    CHECK(data.split == Split::Train);

    std::vector<int> counts(10, 0);
    for (int l : data.labels) counts[static_cast<std::size_t>(l)] += 1;
    for (int c : counts) CHECK(c == 20);

    float lo = 1.0f, hi = 0.0f;
    for (const auto& img : data.images) {
        CHECK(img.shape() == std::vector<int>{16, 16, 3});
        for (float v : img.values()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    CHECK(lo >= 0.0f);
    CHECK(hi <= 1.0f);
    // Glyph against background must produce real contrast, not a flat field.
    CHECK(hi - lo > 0.3f);
}

TEST_CASE("split tag is honored and changes the content stream") {
    auto train = generate_synthetic_dataset(3, 4, 12, 9, Split::Train);
    auto test = generate_synthetic_dataset(3, 4, 12, 9, Split::Test);
    CHECK(train.split == Split::Train);
    CHECK(test.split == Split::Test);
}

TEST_CASE("derived train and test pools differ under one config seed") {
    advdet::ExperimentConfig cfg;
    cfg.num_classes = 3;
    cfg.train_per_class = 4;
    cfg.test_per_class = 4;
    cfg.image_size = 12;
    auto train = advdet::make_train_data(cfg);
    auto test = advdet::make_test_data(cfg);
    CHECK(train.split == Split::Train);
    CHECK(test.split == Split::Test);
    CHECK_FALSE(same_images(train, test));
}

TEST_CASE("generator parameter validation") {
    CHECK_THROWS_AS(generate_synthetic_dataset(1, 5, 16, 0), std::invalid_argument);
    CHECK_THROWS_AS(generate_synthetic_dataset(3, 0, 16, 0), std::invalid_argument);
    CHECK_THROWS_AS(generate_synthetic_dataset(3, 5, 7, 0), std::invalid_argument);
    CHECK_THROWS_AS(generate_synthetic_dataset(31, 1, 16, 0), std::invalid_argument);
    CHECK_NOTHROW(generate_synthetic_dataset(30, 1, 16, 0));
    CHECK_NOTHROW(generate_synthetic_dataset(2, 1, 8, 0));
}

TEST_CASE("thirty classes stay pairwise renderable") {
    auto data = generate_synthetic_dataset(30, 1, 16, 3);
    data.validate();
    CHECK(data.size() == 30);
    std::vector<int> seen;
    for (int l : data.labels) seen.push_back(l);
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < 30; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("validate rejects malformed datasets") {
    LabeledDataset d;
    d.num_classes = 2;
    d.images.push_back(Tensor({8, 8, 3}));
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);  // images vs labels

    d.labels.push_back(2);
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);  // label out of range

    d.labels[0] = 1;
    CHECK_NOTHROW(d.validate());

    d.num_classes = 1;
    d.labels[0] = 0;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);  // need two classes

    d.num_classes = 2;
    d.images[0][3] = 1.5f;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);  // intensity range
    d.images[0][3] = -0.5f;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}
