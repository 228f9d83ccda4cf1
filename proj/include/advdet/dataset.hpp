#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advdet/tensor.hpp"

namespace advdet {

enum class Split { Train, Test };

struct LabeledDataset {
    std::vector<Tensor> images;  // each [H,W,C], intensities in [0,1]
    std::vector<int> labels;     // class indices in [0, num_classes)
    int num_classes = 0;
    Split split = Split::Train;

    std::size_t size() const { return images.size(); }
    void validate() const;
};

// Renders class-distinctive glyphs (shape x color) onto noisy gray backgrounds.
// Deterministic given the seed. Rejects images too small to hold a glyph.
LabeledDataset generate_synthetic_dataset(int n_classes, int samples_per_class, int image_size,
                                          std::uint32_t seed, Split split = Split::Train);

}  // namespace advdet
