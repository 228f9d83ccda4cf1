#include "advdet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "advdet/rng.hpp"

namespace advdet {

void LabeledDataset::validate() const {
    if (images.size() != labels.size()) {
        throw std::invalid_argument("dataset: " + std::to_string(images.size()) + " images vs " +
                                    std::to_string(labels.size()) + " labels");
    }
    if (num_classes < 2) throw std::invalid_argument("dataset: need at least 2 classes");
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw std::invalid_argument("dataset: label " + std::to_string(labels[i]) +
                                        " out of range at index " + std::to_string(i));
        }
        for (float v : images[i].values()) {
            if (!(v >= 0.0f && v <= 1.0f)) {
                throw std::invalid_argument("dataset: intensity outside [0,1] at index " +
                                            std::to_string(i));
            }
        }
    }
}

namespace {

constexpr int kNumShapes = 5;

struct Rgb {
    float r, g, b;
};

// Colors keep their luma outside the background band [0.35, 0.55] so the
// gray-scale distortion leaves a class signal. The first two feed the default
// 10-class benchmark.
constexpr Rgb kPalette[] = {
    {0.85f, 0.10f, 0.10f},  // red, luma ~0.27
    {0.20f, 0.90f, 0.25f},  // green, luma ~0.62
    {0.15f, 0.20f, 0.95f},  // blue, luma ~0.27
    {0.95f, 0.80f, 0.20f},  // yellow, luma ~0.78
    {0.45f, 0.10f, 0.55f},  // violet, luma ~0.26
    {0.30f, 0.85f, 0.85f},  // cyan, luma ~0.69
};
constexpr int kNumColors = static_cast<int>(sizeof(kPalette) / sizeof(kPalette[0]));

// Signed distance to the glyph boundary; negative inside.
float glyph_distance(int shape, float dx, float dy, float r) {
    switch (shape) {
        case 0:  // square
            return std::max(std::fabs(dx), std::fabs(dy)) - r;
        case 1:  // circle
            return std::sqrt(dx * dx + dy * dy) - r;
        case 2: {  // upward triangle
            const float d1 = dy - r * 0.85f;
            const float d2 = -dy - 0.5f * r + 0.9f * dx;
            const float d3 = -dy - 0.5f * r - 0.9f * dx;
            return std::max(d1, std::max(d2, d3));
        }
        case 3: {  // plus
            const float arm = 0.38f * r;
            const float h = std::max(std::fabs(dx) - r, std::fabs(dy) - arm);
            const float v = std::max(std::fabs(dx) - arm, std::fabs(dy) - r);
            return std::min(h, v);
        }
        default: {  // ring
            const float d = std::sqrt(dx * dx + dy * dy);
            return std::fabs(d - 0.72f * r) - 0.32f * r;
        }
    }
}

}  // namespace

LabeledDataset generate_synthetic_dataset(int n_classes, int samples_per_class, int image_size,
                                          std::uint32_t seed, Split split) {
    if (n_classes < 2) throw std::invalid_argument("generate_synthetic_dataset: need >= 2 classes");
    if (samples_per_class < 1) {
        throw std::invalid_argument("generate_synthetic_dataset: need >= 1 sample per class");
    }
    if (image_size < 8) {
        throw std::invalid_argument("generate_synthetic_dataset: image size " +
                                    std::to_string(image_size) + " too small for glyph rendering");
    }
    if (n_classes > kNumShapes * kNumColors) {
        throw std::invalid_argument("generate_synthetic_dataset: at most " +
                                    std::to_string(kNumShapes * kNumColors) + " distinct classes");
    }

    Rng rng(seed);
    LabeledDataset out;
    out.num_classes = n_classes;
    out.split = split;
    out.images.reserve(static_cast<std::size_t>(n_classes) * samples_per_class);
    out.labels.reserve(out.images.capacity());

    const float s = static_cast<float>(image_size);
    for (int cls = 0; cls < n_classes; ++cls) {
        const int shape = cls % kNumShapes;
        const Rgb base = kPalette[cls / kNumShapes];
        for (int k = 0; k < samples_per_class; ++k) {
            Tensor img({image_size, image_size, 3});
            const float bg = rng.uniform(0.35f, 0.55f);
            const float cx = s * 0.5f + rng.uniform(-s * 0.1f, s * 0.1f);
            const float cy = s * 0.5f + rng.uniform(-s * 0.1f, s * 0.1f);
            const float r = s * rng.uniform(0.26f, 0.34f);
            Rgb col{std::clamp(base.r + rng.uniform(-0.06f, 0.06f), 0.0f, 1.0f),
                    std::clamp(base.g + rng.uniform(-0.06f, 0.06f), 0.0f, 1.0f),
                    std::clamp(base.b + rng.uniform(-0.06f, 0.06f), 0.0f, 1.0f)};
            // Saturation varies per image, skewed low, so luminance alone still
            // separates the colors.
            const float luma = 0.299f * col.r + 0.587f * col.g + 0.114f * col.b;
            const float u = rng.uniform(0.0f, 1.0f);
            const float sat = 0.05f + 0.95f * u * u;
            col = {luma + sat * (col.r - luma), luma + sat * (col.g - luma),
                   luma + sat * (col.b - luma)};
            for (int y = 0; y < image_size; ++y) {
                for (int x = 0; x < image_size; ++x) {
                    const float d = glyph_distance(shape, x + 0.5f - cx, y + 0.5f - cy, r);
                    const float alpha = std::clamp(0.5f - d, 0.0f, 1.0f);  // 1px soft edge
                    float ch[3] = {col.r, col.g, col.b};
                    for (int c = 0; c < 3; ++c) {
                        float v = bg * (1.0f - alpha) + ch[c] * alpha;
                        v += rng.normal(0.0f, 0.05f);
                        img.at3(y, x, c) = std::clamp(v, 0.0f, 1.0f);
                    }
                }
            }
            out.images.push_back(std::move(img));
            out.labels.push_back(cls);
        }
    }
    return out;
}

}  // namespace advdet
