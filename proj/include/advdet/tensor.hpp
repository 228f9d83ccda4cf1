#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace advdet {

// Dense row-major float32 tensor. Shapes are lists of positive dims.
// Reductions that need extra headroom (losses, scores) accumulate in double.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<float> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, float value);
    static Tensor scalar(float value) { return Tensor({1}, {value}); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& values() { return data_; }
    const std::vector<float>& values() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // Spatial indexers for image-like tensors.
    float& at3(int h, int w, int c);        // [H,W,C]
    const float& at3(int h, int w, int c) const;
    float& at4(int n, int h, int w, int c); // [N,H,W,C]
    const float& at4(int n, int h, int w, int c) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void require_finite(const std::string& what) const;

    double sum() const;      // double accumulation
    double l2_norm() const;
    std::size_t argmax() const;

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

std::string shape_to_string(const std::vector<int>& shape);
std::size_t shape_product(const std::vector<int>& shape);

// Throws std::invalid_argument naming both shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const std::string& op);

}  // namespace advdet
