#pragma once

#include <string>
#include <vector>

#include "advdet/tensor.hpp"

namespace advdet {

enum class DistortionKind { MedianFilter, BitDepthReduce, GrayscaleStack };

struct Distortion {
    DistortionKind kind;
    int param = 0;  // window for median, bits for bit-depth, unused for gray-scale

    bool operator==(const Distortion&) const = default;
};

// Ordered set of distortions; its order is serialized with the detector
// statistics so signature blocks always line up with the stored means.
using DistortionSet = std::vector<Distortion>;

// Per-channel spatial median over an odd window, edge-replicated borders.
Tensor median_filter(const Tensor& image, int window);

// Re-quantizes intensities to the given bit depth: round(x*(2^b-1))/(2^b-1).
Tensor bit_depth_reduce(const Tensor& image, int bits);

// BT.601 luma replicated into all three channels, preserving the input shape.
Tensor grayscale_stack(const Tensor& image);

Tensor apply_distortion(const Tensor& image, const Distortion& d);

// Independent replicas, one per distortion, in set order (never chained).
std::vector<Tensor> apply_set(const Tensor& image, const DistortionSet& set);

std::string distortion_name(const Distortion& d);
Distortion parse_distortion(const std::string& text);  // "median:3", "bit_depth:5", "gray"

DistortionSet default_distortion_pair();  // median 3 + bit-depth 5
DistortionSet all_distortions();          // median 3 + bit-depth 5 + gray-scale

}  // namespace advdet
