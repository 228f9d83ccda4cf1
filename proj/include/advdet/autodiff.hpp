#pragma once

#include <cstddef>
#include <vector>

#include "advdet/tensor.hpp"

namespace advdet {

enum class Padding { Same, Valid };

// Forward kernels shared by the tape and the tape-free inference path.
namespace kernels {
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);  // same shape, or b = trailing-dim bias
Tensor relu(const Tensor& a);
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Padding padding);
Tensor maxpool2(const Tensor& x);
Tensor flatten(const Tensor& x);
Tensor softmax(const Tensor& logits);
Tensor cross_entropy(const Tensor& probs, const std::vector<int>& labels);
}  // namespace kernels

// Reverse-mode tape. Ops append nodes in creation order, so reverse creation
// order is a reverse topological order of the graph. A tape is confined to a
// single thread for its lifetime.
class Tape {
public:
    using ValueId = std::size_t;

    ValueId input(Tensor value);

    ValueId matmul(ValueId a, ValueId b);
    ValueId add(ValueId a, ValueId b);
    ValueId relu(ValueId a);
    ValueId conv2d(ValueId x, ValueId kernel, ValueId bias, Padding padding);
    ValueId maxpool2(ValueId x);
    ValueId flatten(ValueId x);
    ValueId softmax(ValueId logits);
    ValueId cross_entropy(ValueId probs, std::vector<int> labels);

    const Tensor& value(ValueId id) const;
    std::size_t node_count() const { return nodes_.size(); }

    // Backward from a scalar loss (seed 1), or from any node with an explicit
    // seed of the node's shape. Gradients accumulate until zero_gradients().
    void backward(ValueId loss);
    void backward_seeded(ValueId out, const Tensor& seed);
    const Tensor& gradient(ValueId id);
    void zero_gradients();

private:
    enum class Op { Input, MatMul, Add, Relu, Conv2d, MaxPool2, Flatten, Softmax, CrossEntropy };

    struct Node {
        Op op = Op::Input;
        Tensor value;
        Tensor grad;  // empty until touched by a backward pass
        ValueId parents[3] = {0, 0, 0};
        int parent_count = 0;
        Padding padding = Padding::Same;
        std::vector<int> labels;  // cross_entropy only
    };

    ValueId push(Node node);
    Tensor& grad_slot(ValueId id);
    void check_id(ValueId id, const char* what) const;
    void propagate(ValueId id);

    std::vector<Node> nodes_;
};

// param' = param - learning_rate * grad, elementwise. Rejects pairwise shape
// mismatches and non-finite gradients.
void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, float learning_rate);

}  // namespace advdet
