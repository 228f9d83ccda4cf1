#include "advdet/distortions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace advdet {

namespace {
void require_image(const Tensor& t, const char* op) {
    if (t.rank() != 3) {
        throw std::invalid_argument(std::string(op) + ": expected [H,W,C] image, got " +
                                    shape_to_string(t.shape()));
    }
}
}  // namespace

Tensor median_filter(const Tensor& image, int window) {
    require_image(image, "median_filter");
    if (window < 3 || window % 2 == 0) {
        throw std::invalid_argument("median_filter: window must be odd and >= 3, got " +
                                    std::to_string(window));
    }
    const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
    if (h < window || w < window) {
        throw std::invalid_argument("median_filter: image " + shape_to_string(image.shape()) +
                                    " smaller than window " + std::to_string(window));
    }
    const int half = window / 2;
    Tensor out({h, w, c});
    std::vector<float> vals(static_cast<std::size_t>(window) * window);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                std::size_t k = 0;
                for (int dy = -half; dy <= half; ++dy) {
                    const int yy = std::clamp(y + dy, 0, h - 1);  // edge replication
                    for (int dx = -half; dx <= half; ++dx) {
                        const int xx = std::clamp(x + dx, 0, w - 1);
                        vals[k++] = image.at3(yy, xx, ch);
                    }
                }
                auto mid = vals.begin() + static_cast<std::ptrdiff_t>(vals.size() / 2);
                std::nth_element(vals.begin(), mid, vals.end());
                out.at3(y, x, ch) = *mid;
            }
        }
    }
    return out;
}

Tensor bit_depth_reduce(const Tensor& image, int bits) {
    require_image(image, "bit_depth_reduce");
    if (bits < 1 || bits > 7) {
        throw std::invalid_argument("bit_depth_reduce: bits must be in [1,7], got " +
                                    std::to_string(bits));
    }
    const float levels = static_cast<float>((1 << bits) - 1);
    Tensor out = image;
    for (auto& v : out.values()) {
        v = std::clamp(std::round(v * levels) / levels, 0.0f, 1.0f);
    }
    return out;
}

Tensor grayscale_stack(const Tensor& image) {
    require_image(image, "grayscale_stack");
    if (image.dim(2) != 3) {
        throw std::invalid_argument("grayscale_stack: expected 3 channels, got " +
                                    std::to_string(image.dim(2)));
    }
    const int h = image.dim(0), w = image.dim(1);
    Tensor out({h, w, 3});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // Luma in double so an already-gray pixel reproduces itself exactly
            // after the float32 cast.
            const double luma = 0.299 * image.at3(y, x, 0) + 0.587 * image.at3(y, x, 1) +
                                0.114 * image.at3(y, x, 2);
            const float v = std::clamp(static_cast<float>(luma), 0.0f, 1.0f);
            out.at3(y, x, 0) = v;
            out.at3(y, x, 1) = v;
            out.at3(y, x, 2) = v;
        }
    }
    return out;
}

Tensor apply_distortion(const Tensor& image, const Distortion& d) {
    switch (d.kind) {
        case DistortionKind::MedianFilter: return median_filter(image, d.param);
        case DistortionKind::BitDepthReduce: return bit_depth_reduce(image, d.param);
        case DistortionKind::GrayscaleStack: return grayscale_stack(image);
    }
    throw std::invalid_argument("apply_distortion: unknown kind");
}

std::vector<Tensor> apply_set(const Tensor& image, const DistortionSet& set) {
    if (set.empty()) throw std::invalid_argument("apply_set: empty distortion set");
    std::vector<Tensor> replicas;
    replicas.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        try {
            replicas.push_back(apply_distortion(image, set[i]));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("distortion " + std::to_string(i) + ": " + e.what());
        }
    }
    return replicas;
}

std::string distortion_name(const Distortion& d) {
    switch (d.kind) {
        case DistortionKind::MedianFilter: return "median:" + std::to_string(d.param);
        case DistortionKind::BitDepthReduce: return "bit_depth:" + std::to_string(d.param);
        case DistortionKind::GrayscaleStack: return "gray";
    }
    return "?";
}

Distortion parse_distortion(const std::string& text) {
    const auto colon = text.find(':');
    const std::string name = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    if (name == "median") return {DistortionKind::MedianFilter, arg.empty() ? 3 : std::stoi(arg)};
    if (name == "bit_depth") return {DistortionKind::BitDepthReduce, arg.empty() ? 5 : std::stoi(arg)};
    if (name == "gray" || name == "grayscale") return {DistortionKind::GrayscaleStack, 0};
    throw std::invalid_argument("unknown distortion '" + text + "'");
}

DistortionSet default_distortion_pair() {
    return {{DistortionKind::MedianFilter, 3}, {DistortionKind::BitDepthReduce, 5}};
}

DistortionSet all_distortions() {
    return {{DistortionKind::MedianFilter, 3},
            {DistortionKind::BitDepthReduce, 5},
            {DistortionKind::GrayscaleStack, 0}};
}

}  // namespace advdet
