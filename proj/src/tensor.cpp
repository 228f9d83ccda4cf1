#include "advdet/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace advdet {

std::size_t shape_product(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace {
void validate_shape(const std::vector<int>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive, got " + shape_to_string(shape));
    }
}
}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_product(shape_), 0.0f);
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_product(shape_)) {
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_to_string(shape_));
    }
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
}

float& Tensor::at3(int h, int w, int c) {
    return data_[(static_cast<std::size_t>(h) * shape_[1] + w) * shape_[2] + c];
}
const float& Tensor::at3(int h, int w, int c) const {
    return data_[(static_cast<std::size_t>(h) * shape_[1] + w) * shape_[2] + c];
}
float& Tensor::at4(int n, int h, int w, int c) {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
}
const float& Tensor::at4(int n, int h, int w, int c) const {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::require_finite(const std::string& what) const {
    if (!all_finite()) throw std::runtime_error("non-finite values in " + what);
}

double Tensor::sum() const {
    double acc = 0.0;
    for (float v : data_) acc += v;
    return acc;
}

double Tensor::l2_norm() const {
    double acc = 0.0;
    for (float v : data_) acc += static_cast<double>(v) * v;
    return std::sqrt(acc);
}

std::size_t Tensor::argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < data_.size(); ++i) {
        if (data_[i] > data_[best]) best = i;
    }
    return best;
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(op + ": shape mismatch " + shape_to_string(a.shape()) +
                                    " vs " + shape_to_string(b.shape()));
    }
}

}  // namespace advdet
