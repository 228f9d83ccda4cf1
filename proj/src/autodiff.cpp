#include "advdet/autodiff.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <stdexcept>
#include <string>

namespace advdet {
namespace kernels {

namespace {

bool is_bias_broadcast(const Tensor& a, const Tensor& b) {
    return b.rank() == 1 && a.rank() >= 2 && a.shape().back() == b.dim(0);
}

void require_image_batch(const Tensor& x, const char* op) {
    if (x.rank() != 4) {
        throw std::invalid_argument(std::string(op) + ": expected [N,H,W,C] input, got " +
                                    shape_to_string(x.shape()));
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_to_string(a.shape()) +
                                    " vs " + shape_to_string(b.shape()));
    }
    const int rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
    Tensor out({rows, cols});
    for (int i = 0; i < rows; ++i) {
        const float* arow = a.data() + static_cast<std::size_t>(i) * inner;
        float* orow = out.data() + static_cast<std::size_t>(i) * cols;
        for (int k = 0; k < inner; ++k) {
            const float av = arow[k];
            if (av == 0.0f) continue;
            const float* brow = b.data() + static_cast<std::size_t>(k) * cols;
            for (int j = 0; j < cols; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.same_shape(b)) {
        Tensor out = a;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
        return out;
    }
    if (is_bias_broadcast(a, b)) {
        Tensor out = a;
        const std::size_t n = static_cast<std::size_t>(b.dim(0));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % n];
        return out;
    }
    throw std::invalid_argument("add: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
}

Tensor relu(const Tensor& a) {
    Tensor out = a;
    for (auto& v : out.values()) v = v > 0.0f ? v : 0.0f;
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Padding padding) {
    require_image_batch(x, "conv2d");
    if (kernel.rank() != 4 || kernel.dim(2) != x.dim(3)) {
        throw std::invalid_argument("conv2d: kernel " + shape_to_string(kernel.shape()) +
                                    " incompatible with input " + shape_to_string(x.shape()));
    }
    const int kh = kernel.dim(0), kw = kernel.dim(1), ci = kernel.dim(2), co = kernel.dim(3);
    if (bias.rank() != 1 || bias.dim(0) != co) {
        throw std::invalid_argument("conv2d: bias " + shape_to_string(bias.shape()) +
                                    " must be [" + std::to_string(co) + "]");
    }
    if (padding == Padding::Same && (kh % 2 == 0 || kw % 2 == 0)) {
        throw std::invalid_argument("conv2d: same padding requires odd kernel dims, got " +
                                    shape_to_string(kernel.shape()));
    }
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int ph = padding == Padding::Same ? (kh - 1) / 2 : 0;
    const int pw = padding == Padding::Same ? (kw - 1) / 2 : 0;
    const int oh = padding == Padding::Same ? h : h - kh + 1;
    const int ow = padding == Padding::Same ? w : w - kw + 1;
    if (oh <= 0 || ow <= 0) {
        throw std::invalid_argument("conv2d: kernel " + shape_to_string(kernel.shape()) +
                                    " larger than input " + shape_to_string(x.shape()));
    }
    Tensor out({n, oh, ow, co});
    for (int b = 0; b < n; ++b) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                float* optr = &out.at4(b, oy, ox, 0);
                for (int c = 0; c < co; ++c) optr[c] = bias[static_cast<std::size_t>(c)];
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy + ky - ph;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox + kx - pw;
                        if (ix < 0 || ix >= w) continue;
                        const float* xptr = &x.at4(b, iy, ix, 0);
                        const float* kptr =
                            kernel.data() + (static_cast<std::size_t>(ky) * kw + kx) * ci * co;
                        for (int c = 0; c < ci; ++c) {
                            const float xv = xptr[c];
                            if (xv == 0.0f) continue;
                            const float* krow = kptr + static_cast<std::size_t>(c) * co;
                            for (int oc = 0; oc < co; ++oc) optr[oc] += xv * krow[oc];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor maxpool2(const Tensor& x) {
    require_image_batch(x, "maxpool2");
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int oh = h / 2, ow = w / 2;
    if (oh == 0 || ow == 0) {
        throw std::invalid_argument("maxpool2: input too small " + shape_to_string(x.shape()));
    }
    Tensor out({n, oh, ow, c});
    for (int b = 0; b < n; ++b) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                for (int ch = 0; ch < c; ++ch) {
                    float m = x.at4(b, 2 * oy, 2 * ox, ch);
                    m = std::max(m, x.at4(b, 2 * oy, 2 * ox + 1, ch));
                    m = std::max(m, x.at4(b, 2 * oy + 1, 2 * ox, ch));
                    m = std::max(m, x.at4(b, 2 * oy + 1, 2 * ox + 1, ch));
                    out.at4(b, oy, ox, ch) = m;
                }
            }
        }
    }
    return out;
}

Tensor flatten(const Tensor& x) {
    if (x.rank() < 2) {
        throw std::invalid_argument("flatten: expected batched input, got " +
                                    shape_to_string(x.shape()));
    }
    int features = 1;
    for (int i = 1; i < x.rank(); ++i) features *= x.dim(i);
    return Tensor({x.dim(0), features}, x.values());
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) {
        throw std::invalid_argument("softmax: expected [N,n] logits, got " +
                                    shape_to_string(logits.shape()));
    }
    const int n = logits.dim(0), k = logits.dim(1);
    Tensor out({n, k});
    for (int b = 0; b < n; ++b) {
        const float* row = logits.data() + static_cast<std::size_t>(b) * k;
        float* orow = out.data() + static_cast<std::size_t>(b) * k;
        // Subtract the row max before exponentiation; attacks push logits to
        // extremes and the naive form overflows.
        float mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < k; ++j) {
            orow[j] = std::exp(row[j] - mx);
            denom += orow[j];
        }
        for (int j = 0; j < k; ++j) {
            orow[j] = std::max(static_cast<float>(orow[j] / denom), FLT_MIN);
        }
    }
    return out;
}

Tensor cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
    if (probs.rank() != 2) {
        throw std::invalid_argument("cross_entropy: expected [N,n] probabilities, got " +
                                    shape_to_string(probs.shape()));
    }
    const int n = probs.dim(0), k = probs.dim(1);
    if (static_cast<int>(labels.size()) != n) {
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for batch of " + std::to_string(n));
    }
    double acc = 0.0;
    for (int b = 0; b < n; ++b) {
        const int l = labels[static_cast<std::size_t>(b)];
        if (l < 0 || l >= k) {
            throw std::invalid_argument("cross_entropy: label " + std::to_string(l) +
                                        " out of range [0," + std::to_string(k) + ")");
        }
        const float p = probs[static_cast<std::size_t>(b) * k + l];
        acc -= std::log(static_cast<double>(std::max(p, FLT_MIN)));
    }
    return Tensor::scalar(static_cast<float>(acc / n));
}

}  // namespace kernels

Tape::ValueId Tape::push(Node node) {
    node.value.require_finite("tape op output");
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

void Tape::check_id(ValueId id, const char* what) const {
    if (id >= nodes_.size()) {
        throw std::invalid_argument(std::string(what) + ": value id " + std::to_string(id) +
                                    " is not on this tape");
    }
}

Tape::ValueId Tape::input(Tensor value) {
    Node n;
    n.op = Op::Input;
    n.value = std::move(value);
    return push(std::move(n));
}

Tape::ValueId Tape::matmul(ValueId a, ValueId b) {
    check_id(a, "matmul");
    check_id(b, "matmul");
    Node n;
    n.op = Op::MatMul;
    n.value = kernels::matmul(nodes_[a].value, nodes_[b].value);
    n.parents[0] = a;
    n.parents[1] = b;
    n.parent_count = 2;
    return push(std::move(n));
}

Tape::ValueId Tape::add(ValueId a, ValueId b) {
    check_id(a, "add");
    check_id(b, "add");
    Node n;
    n.op = Op::Add;
    n.value = kernels::add(nodes_[a].value, nodes_[b].value);
    n.parents[0] = a;
    n.parents[1] = b;
    n.parent_count = 2;
    return push(std::move(n));
}

Tape::ValueId Tape::relu(ValueId a) {
    check_id(a, "relu");
    Node n;
    n.op = Op::Relu;
    n.value = kernels::relu(nodes_[a].value);
    n.parents[0] = a;
    n.parent_count = 1;
    return push(std::move(n));
}

Tape::ValueId Tape::conv2d(ValueId x, ValueId kernel, ValueId bias, Padding padding) {
    check_id(x, "conv2d");
    check_id(kernel, "conv2d");
    check_id(bias, "conv2d");
    Node n;
    n.op = Op::Conv2d;
    n.value = kernels::conv2d(nodes_[x].value, nodes_[kernel].value, nodes_[bias].value, padding);
    n.parents[0] = x;
    n.parents[1] = kernel;
    n.parents[2] = bias;
    n.parent_count = 3;
    n.padding = padding;
    return push(std::move(n));
}

Tape::ValueId Tape::maxpool2(ValueId x) {
    check_id(x, "maxpool2");
    Node n;
    n.op = Op::MaxPool2;
    n.value = kernels::maxpool2(nodes_[x].value);
    n.parents[0] = x;
    n.parent_count = 1;
    return push(std::move(n));
}

Tape::ValueId Tape::flatten(ValueId x) {
    check_id(x, "flatten");
    Node n;
    n.op = Op::Flatten;
    n.value = kernels::flatten(nodes_[x].value);
    n.parents[0] = x;
    n.parent_count = 1;
    return push(std::move(n));
}

Tape::ValueId Tape::softmax(ValueId logits) {
    check_id(logits, "softmax");
    Node n;
    n.op = Op::Softmax;
    n.value = kernels::softmax(nodes_[logits].value);
    n.parents[0] = logits;
    n.parent_count = 1;
    return push(std::move(n));
}

Tape::ValueId Tape::cross_entropy(ValueId probs, std::vector<int> labels) {
    check_id(probs, "cross_entropy");
    Node n;
    n.op = Op::CrossEntropy;
    n.value = kernels::cross_entropy(nodes_[probs].value, labels);
    n.parents[0] = probs;
    n.parent_count = 1;
    n.labels = std::move(labels);
    return push(std::move(n));
}

const Tensor& Tape::value(ValueId id) const {
    check_id(id, "value");
    return nodes_[id].value;
}

Tensor& Tape::grad_slot(ValueId id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

const Tensor& Tape::gradient(ValueId id) {
    check_id(id, "gradient");
    return grad_slot(id);
}

void Tape::zero_gradients() {
    for (auto& n : nodes_) n.grad = Tensor();
}

void Tape::backward(ValueId loss) {
    check_id(loss, "backward");
    if (nodes_[loss].value.size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_to_string(nodes_[loss].value.shape()));
    }
    backward_seeded(loss, Tensor::scalar(1.0f));
}

void Tape::backward_seeded(ValueId out, const Tensor& seed) {
    check_id(out, "backward");
    require_same_shape(nodes_[out].value, seed, "backward seed");
    Tensor& g = grad_slot(out);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    // Descending creation order visits every node after all of its consumers.
    for (ValueId id = out + 1; id-- > 0;) {
        if (!nodes_[id].grad.empty()) propagate(id);
    }
}

void Tape::propagate(ValueId id) {
    Node& node = nodes_[id];
    const Tensor& gy = node.grad;
    switch (node.op) {
        case Op::Input:
            break;
        case Op::MatMul: {
            const Tensor& a = nodes_[node.parents[0]].value;
            const Tensor& b = nodes_[node.parents[1]].value;
            Tensor& ga = grad_slot(node.parents[0]);
            Tensor& gb = grad_slot(node.parents[1]);
            const int rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
            for (int i = 0; i < rows; ++i) {
                const float* gyrow = gy.data() + static_cast<std::size_t>(i) * cols;
                for (int k = 0; k < inner; ++k) {
                    const float* brow = b.data() + static_cast<std::size_t>(k) * cols;
                    double acc = 0.0;
                    for (int j = 0; j < cols; ++j) acc += static_cast<double>(gyrow[j]) * brow[j];
                    ga[static_cast<std::size_t>(i) * inner + k] += static_cast<float>(acc);
                }
            }
            for (int k = 0; k < inner; ++k) {
                float* gbrow = gb.data() + static_cast<std::size_t>(k) * cols;
                for (int i = 0; i < rows; ++i) {
                    const float av = a[static_cast<std::size_t>(i) * inner + k];
                    if (av == 0.0f) continue;
                    const float* gyrow = gy.data() + static_cast<std::size_t>(i) * cols;
                    for (int j = 0; j < cols; ++j) gbrow[j] += av * gyrow[j];
                }
            }
            break;
        }
        case Op::Add: {
            const Tensor& a = nodes_[node.parents[0]].value;
            const Tensor& b = nodes_[node.parents[1]].value;
            Tensor& ga = grad_slot(node.parents[0]);
            Tensor& gb = grad_slot(node.parents[1]);
            for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
            if (a.same_shape(b)) {
                for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
            } else {
                const std::size_t n = b.size();
                for (std::size_t i = 0; i < gy.size(); ++i) gb[i % n] += gy[i];
            }
            break;
        }
        case Op::Relu: {
            const Tensor& x = nodes_[node.parents[0]].value;
            Tensor& gx = grad_slot(node.parents[0]);
            for (std::size_t i = 0; i < gy.size(); ++i) {
                if (x[i] > 0.0f) gx[i] += gy[i];
            }
            break;
        }
        case Op::Conv2d: {
            const Tensor& x = nodes_[node.parents[0]].value;
            const Tensor& kernel = nodes_[node.parents[1]].value;
            Tensor& gx = grad_slot(node.parents[0]);
            Tensor& gk = grad_slot(node.parents[1]);
            Tensor& gb = grad_slot(node.parents[2]);
            const int n = x.dim(0), h = x.dim(1), w = x.dim(2);
            const int kh = kernel.dim(0), kw = kernel.dim(1), ci = kernel.dim(2),
                      co = kernel.dim(3);
            const int ph = node.padding == Padding::Same ? (kh - 1) / 2 : 0;
            const int pw = node.padding == Padding::Same ? (kw - 1) / 2 : 0;
            const int oh = gy.dim(1), ow = gy.dim(2);
            for (int b = 0; b < n; ++b) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        const float* gptr = &gy.at4(b, oy, ox, 0);
                        for (int oc = 0; oc < co; ++oc) gb[static_cast<std::size_t>(oc)] += gptr[oc];
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy + ky - ph;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox + kx - pw;
                                if (ix < 0 || ix >= w) continue;
                                const float* xptr = &x.at4(b, iy, ix, 0);
                                float* gxptr = &gx.at4(b, iy, ix, 0);
                                const std::size_t koff =
                                    (static_cast<std::size_t>(ky) * kw + kx) * ci * co;
                                for (int c = 0; c < ci; ++c) {
                                    const float* krow = kernel.data() + koff + static_cast<std::size_t>(c) * co;
                                    float* gkrow = gk.data() + koff + static_cast<std::size_t>(c) * co;
                                    double acc = 0.0;
                                    for (int oc = 0; oc < co; ++oc) {
                                        acc += static_cast<double>(gptr[oc]) * krow[oc];
                                        gkrow[oc] += xptr[c] * gptr[oc];
                                    }
                                    gxptr[c] += static_cast<float>(acc);
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        case Op::MaxPool2: {
            const Tensor& x = nodes_[node.parents[0]].value;
            Tensor& gx = grad_slot(node.parents[0]);
            const int n = gy.dim(0), oh = gy.dim(1), ow = gy.dim(2), c = gy.dim(3);
            for (int b = 0; b < n; ++b) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        for (int ch = 0; ch < c; ++ch) {
                            // Route to the first maximum in scan order; ties are
                            // resolved deterministically.
                            int by = 2 * oy, bx = 2 * ox;
                            float best = x.at4(b, by, bx, ch);
                            for (int dy = 0; dy < 2; ++dy) {
                                for (int dx = 0; dx < 2; ++dx) {
                                    const float v = x.at4(b, 2 * oy + dy, 2 * ox + dx, ch);
                                    if (v > best) {
                                        best = v;
                                        by = 2 * oy + dy;
                                        bx = 2 * ox + dx;
                                    }
                                }
                            }
                            gx.at4(b, by, bx, ch) += gy.at4(b, oy, ox, ch);
                        }
                    }
                }
            }
            break;
        }
        case Op::Flatten: {
            Tensor& gx = grad_slot(node.parents[0]);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
            break;
        }
        case Op::Softmax: {
            const Tensor& y = node.value;
            Tensor& gz = grad_slot(node.parents[0]);
            const int n = y.dim(0), k = y.dim(1);
            for (int b = 0; b < n; ++b) {
                const float* yrow = y.data() + static_cast<std::size_t>(b) * k;
                const float* grow = gy.data() + static_cast<std::size_t>(b) * k;
                double dot = 0.0;
                for (int j = 0; j < k; ++j) dot += static_cast<double>(grow[j]) * yrow[j];
                float* gzrow = gz.data() + static_cast<std::size_t>(b) * k;
                for (int j = 0; j < k; ++j) {
                    gzrow[j] += yrow[j] * static_cast<float>(grow[j] - dot);
                }
            }
            break;
        }
        case Op::CrossEntropy: {
            const Tensor& p = nodes_[node.parents[0]].value;
            Tensor& gp = grad_slot(node.parents[0]);
            const int n = p.dim(0), k = p.dim(1);
            const float upstream = gy[0];
            for (int b = 0; b < n; ++b) {
                const int l = node.labels[static_cast<std::size_t>(b)];
                const float pv = std::max(p[static_cast<std::size_t>(b) * k + l], FLT_MIN);
                gp[static_cast<std::size_t>(b) * k + l] -= upstream / (pv * static_cast<float>(n));
            }
            break;
        }
    }
}

void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, float learning_rate) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("sgd_step: " + std::to_string(params.size()) + " params vs " +
                                    std::to_string(grads.size()) + " grads");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(params[i], grads[i], "sgd_step param " + std::to_string(i));
        if (!grads[i].all_finite()) {
            throw std::runtime_error("sgd_step: non-finite gradient for param " + std::to_string(i));
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        float* p = params[i].data();
        const float* g = grads[i].data();
        for (std::size_t j = 0; j < params[i].size(); ++j) p[j] -= learning_rate * g[j];
    }
}

}  // namespace advdet
