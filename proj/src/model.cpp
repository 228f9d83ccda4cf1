#include "advdet/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "advdet/rng.hpp"

namespace advdet {

ModelConfig ModelConfig::desk_cnn(int h, int w, int c, int n, std::uint32_t seed) {
    ModelConfig cfg;
    cfg.height = h;
    cfg.width = w;
    cfg.channels = c;
    cfg.num_classes = n;
    cfg.seed = seed;
    cfg.layers = {
        {LayerKind::Conv, 8, 3, Padding::Same},  {LayerKind::Relu},
        {LayerKind::MaxPool},                    {LayerKind::Conv, 16, 3, Padding::Same},
        {LayerKind::Relu},                       {LayerKind::MaxPool},
        {LayerKind::Flatten},                    {LayerKind::Dense, 64},
        {LayerKind::Relu},                       {LayerKind::Dense, n},
        {LayerKind::Softmax},
    };
    return cfg;
}

ModelConfig ModelConfig::desk_substitute(int h, int w, int c, int n, std::uint32_t seed) {
    ModelConfig cfg = desk_cnn(h, w, c, n, seed);
    cfg.layers[0].units = 16;
    cfg.layers[3].units = 32;
    cfg.layers[7].units = 128;
    return cfg;
}

void ModelConfig::validate() const {
    if (height < 1 || width < 1 || channels < 1) {
        throw std::invalid_argument("model config: invalid input shape");
    }
    if (num_classes < 2) throw std::invalid_argument("model config: need at least 2 classes");
    if (layers.size() < 2 || layers.back().kind != LayerKind::Softmax) {
        throw std::invalid_argument("model config: final layer must be softmax");
    }
    const LayerSpec& last_dense = layers[layers.size() - 2];
    if (last_dense.kind != LayerKind::Dense || last_dense.units != num_classes) {
        throw std::invalid_argument("model config: layer before softmax must be dense(" +
                                    std::to_string(num_classes) + ")");
    }
    for (const auto& l : layers) {
        if (l.kind == LayerKind::Conv && (l.kernel < 1 || l.units < 1)) {
            throw std::invalid_argument("model config: conv layer needs kernel and channel counts");
        }
        if (l.kind == LayerKind::Dense && l.units < 1) {
            throw std::invalid_argument("model config: dense layer needs a unit count");
        }
    }
}

std::string ModelConfig::canonical_string() const {
    std::ostringstream os;
    os << height << "x" << width << "x" << channels << "/" << num_classes << "#" << seed << ":";
    for (const auto& l : layers) {
        switch (l.kind) {
            case LayerKind::Conv:
                os << "conv(" << l.units << "," << l.kernel << ","
                   << (l.padding == Padding::Same ? "same" : "valid") << ");";
                break;
            case LayerKind::Relu: os << "relu;"; break;
            case LayerKind::MaxPool: os << "maxpool;"; break;
            case LayerKind::Flatten: os << "flatten;"; break;
            case LayerKind::Dense: os << "dense(" << l.units << ");"; break;
            case LayerKind::Softmax: os << "softmax;"; break;
        }
    }
    return os.str();
}

namespace {

struct ShapeCursor {
    int h, w, c;      // spatial form while rank-3
    int features;     // valid once flattened
    bool flat = false;
};

// Walks the layer stack once, sizing parameters as it goes.
std::vector<Tensor> init_params(const ModelConfig& cfg) {
    Rng rng(cfg.seed);
    std::vector<Tensor> params;
    ShapeCursor cur{cfg.height, cfg.width, cfg.channels, 0, false};
    for (const auto& l : cfg.layers) {
        switch (l.kind) {
            case LayerKind::Conv: {
                if (cur.flat) throw std::invalid_argument("model config: conv after flatten");
                const int k = l.kernel, ci = cur.c, co = l.units;
                const float bound =
                    std::sqrt(6.0f / static_cast<float>(k * k * ci + k * k * co));
                Tensor kernel({k, k, ci, co});
                for (auto& v : kernel.values()) v = rng.uniform(-bound, bound);
                params.push_back(std::move(kernel));
                params.push_back(Tensor({co}));
                if (l.padding == Padding::Valid) {
                    cur.h -= (k - 1);
                    cur.w -= (k - 1);
                    if (cur.h < 1 || cur.w < 1) {
                        throw std::invalid_argument("model config: conv output collapses");
                    }
                }
                cur.c = co;
                break;
            }
            case LayerKind::MaxPool:
                if (cur.flat) throw std::invalid_argument("model config: maxpool after flatten");
                cur.h /= 2;
                cur.w /= 2;
                if (cur.h < 1 || cur.w < 1) {
                    throw std::invalid_argument("model config: maxpool output collapses");
                }
                break;
            case LayerKind::Flatten:
                cur.features = cur.h * cur.w * cur.c;
                cur.flat = true;
                break;
            case LayerKind::Dense: {
                if (!cur.flat) throw std::invalid_argument("model config: dense before flatten");
                const int in = cur.features, units = l.units;
                const float bound = std::sqrt(6.0f / static_cast<float>(in + units));
                Tensor weight({in, units});
                for (auto& v : weight.values()) v = rng.uniform(-bound, bound);
                params.push_back(std::move(weight));
                params.push_back(Tensor({units}));
                cur.features = units;
                break;
            }
            case LayerKind::Relu:
            case LayerKind::Softmax:
                break;
        }
    }
    return params;
}

}  // namespace

Model::Model(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    params_ = init_params(config_);
}

Model::Model(ModelConfig config, std::vector<Tensor> params, TrainMeta meta)
    : config_(std::move(config)), params_(std::move(params)), meta_(meta) {
    config_.validate();
    std::vector<Tensor> expected = init_params(config_);
    if (expected.size() != params_.size()) {
        throw std::invalid_argument("model: parameter count mismatch with config");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        require_same_shape(expected[i], params_[i], "model param " + std::to_string(i));
    }
}

void Model::check_image_shape(const Tensor& image) const {
    const std::vector<int> want{config_.height, config_.width, config_.channels};
    if (image.shape() != want) {
        throw std::invalid_argument("model: input shape " + shape_to_string(image.shape()) +
                                    " does not match model input " + shape_to_string(want));
    }
}

Model::TapeForward Model::forward_on_tape(Tape& tape, const Tensor& batch,
                                          std::vector<Tape::ValueId>* param_ids) const {
    if (batch.rank() != 4 || batch.dim(1) != config_.height || batch.dim(2) != config_.width ||
        batch.dim(3) != config_.channels) {
        throw std::invalid_argument("model: batch shape " + shape_to_string(batch.shape()) +
                                    " does not match model input");
    }
    TapeForward fwd{};
    fwd.input = tape.input(batch);
    Tape::ValueId cur = fwd.input;
    std::size_t p = 0;
    auto param_leaf = [&](std::size_t idx) {
        Tape::ValueId id = tape.input(params_[idx]);
        if (param_ids) param_ids->push_back(id);
        return id;
    };
    for (const auto& l : config_.layers) {
        switch (l.kind) {
            case LayerKind::Conv: {
                Tape::ValueId k = param_leaf(p++);
                Tape::ValueId b = param_leaf(p++);
                cur = tape.conv2d(cur, k, b, l.padding);
                break;
            }
            case LayerKind::Relu: cur = tape.relu(cur); break;
            case LayerKind::MaxPool: cur = tape.maxpool2(cur); break;
            case LayerKind::Flatten: cur = tape.flatten(cur); break;
            case LayerKind::Dense: {
                Tape::ValueId w = param_leaf(p++);
                Tape::ValueId b = param_leaf(p++);
                cur = tape.add(tape.matmul(cur, w), b);
                break;
            }
            case LayerKind::Softmax:
                fwd.logits = cur;
                cur = tape.softmax(cur);
                break;
        }
    }
    fwd.probs = cur;
    return fwd;
}

Tensor Model::predict_batch(const Tensor& batch) const {
    if (batch.rank() != 4 || batch.dim(1) != config_.height || batch.dim(2) != config_.width ||
        batch.dim(3) != config_.channels) {
        throw std::invalid_argument("model: batch shape " + shape_to_string(batch.shape()) +
                                    " does not match model input");
    }
    Tensor cur = batch;
    std::size_t p = 0;
    for (const auto& l : config_.layers) {
        switch (l.kind) {
            case LayerKind::Conv: {
                const Tensor& k = params_[p];
                const Tensor& b = params_[p + 1];
                p += 2;
                cur = kernels::conv2d(cur, k, b, l.padding);
                break;
            }
            case LayerKind::Relu: cur = kernels::relu(cur); break;
            case LayerKind::MaxPool: cur = kernels::maxpool2(cur); break;
            case LayerKind::Flatten: cur = kernels::flatten(cur); break;
            case LayerKind::Dense: {
                cur = kernels::add(kernels::matmul(cur, params_[p]), params_[p + 1]);
                p += 2;
                break;
            }
            case LayerKind::Softmax: cur = kernels::softmax(cur); break;
        }
    }
    return cur;
}

Tensor Model::predict(const Tensor& image) const {
    check_image_shape(image);
    Tensor probs = predict_batch(single_image_batch(image));
    return Tensor({config_.num_classes}, probs.values());
}

Tensor Model::logits(const Tensor& image) const {
    check_image_shape(image);
    Tensor cur = single_image_batch(image);
    std::size_t p = 0;
    for (const auto& l : config_.layers) {
        switch (l.kind) {
            case LayerKind::Conv:
                cur = kernels::conv2d(cur, params_[p], params_[p + 1], l.padding);
                p += 2;
                break;
            case LayerKind::Relu: cur = kernels::relu(cur); break;
            case LayerKind::MaxPool: cur = kernels::maxpool2(cur); break;
            case LayerKind::Flatten: cur = kernels::flatten(cur); break;
            case LayerKind::Dense:
                cur = kernels::add(kernels::matmul(cur, params_[p]), params_[p + 1]);
                p += 2;
                break;
            case LayerKind::Softmax:
                return Tensor({config_.num_classes}, cur.values());
        }
    }
    return Tensor({config_.num_classes}, cur.values());
}

int Model::predicted_class(const Tensor& image) const {
    return static_cast<int>(predict(image).argmax());
}

Tensor Model::input_gradient(const Tensor& image, int label) const {
    check_image_shape(image);
    if (label < 0 || label >= config_.num_classes) {
        throw std::invalid_argument("input_gradient: label " + std::to_string(label) +
                                    " out of range");
    }
    Tape tape;
    TapeForward fwd = forward_on_tape(tape, single_image_batch(image));
    Tape::ValueId loss = tape.cross_entropy(fwd.probs, {label});
    tape.backward(loss);
    const Tensor& g = tape.gradient(fwd.input);
    return Tensor(image.shape(), g.values());
}

double Model::accuracy_on(const LabeledDataset& data) const {
    if (data.images.empty()) throw std::invalid_argument("accuracy_on: empty dataset");
    std::size_t correct = 0;
    const std::size_t chunk = 64;
    for (std::size_t start = 0; start < data.images.size(); start += chunk) {
        const std::size_t end = std::min(start + chunk, data.images.size());
        std::vector<Tensor> imgs(data.images.begin() + start, data.images.begin() + end);
        Tensor probs = predict_batch(make_batch(imgs));
        const int n = config_.num_classes;
        for (std::size_t i = start; i < end; ++i) {
            const float* row = probs.data() + (i - start) * n;
            int best = 0;
            for (int j = 1; j < n; ++j) {
                if (row[j] > row[best]) best = j;
            }
            if (best == data.labels[i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.images.size());
}

std::uint64_t Model::fingerprint() const {
    // FNV-1a over the canonical config string and raw parameter bytes.
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](const void* ptr, std::size_t len) {
        const unsigned char* p = static_cast<const unsigned char*>(ptr);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    const std::string cfg = config_.canonical_string();
    mix(cfg.data(), cfg.size());
    for (const auto& t : params_) {
        mix(t.data(), t.size() * sizeof(float));
    }
    return h;
}

Tensor make_batch(const std::vector<Tensor>& images) {
    if (images.empty()) throw std::invalid_argument("make_batch: no images");
    const auto& s = images.front().shape();
    if (s.size() != 3) {
        throw std::invalid_argument("make_batch: images must be [H,W,C], got " +
                                    shape_to_string(s));
    }
    Tensor batch({static_cast<int>(images.size()), s[0], s[1], s[2]});
    const std::size_t stride = images.front().size();
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].shape() != s) {
            throw std::invalid_argument("make_batch: mixed image shapes");
        }
        std::copy(images[i].values().begin(), images[i].values().end(),
                  batch.values().begin() + i * stride);
    }
    return batch;
}

Tensor single_image_batch(const Tensor& image) {
    if (image.rank() != 3) {
        throw std::invalid_argument("single_image_batch: expected [H,W,C], got " +
                                    shape_to_string(image.shape()));
    }
    return Tensor({1, image.dim(0), image.dim(1), image.dim(2)}, image.values());
}

namespace {

// Shared mini-batch loop for plain and adversarial training. adversarial=false
// never touches the batch, so both paths consume the RNG identically.
void run_training(Model& model, const LabeledDataset& trainset, const TrainOptions& options,
                  bool adversarial, float epsilon) {
    trainset.validate();
    if (trainset.split != Split::Train) {
        throw std::invalid_argument("train: dataset split must be train");
    }
    if (trainset.num_classes != model.config().num_classes) {
        throw std::invalid_argument("train: dataset classes " +
                                    std::to_string(trainset.num_classes) + " vs model " +
                                    std::to_string(model.config().num_classes));
    }
    if (options.epochs < 0 || options.batch_size < 1 || options.learning_rate <= 0.0f) {
        throw std::invalid_argument("train: hyperparameters must be positive");
    }
    if (adversarial && epsilon < 0.0f) {
        throw std::invalid_argument("adversarial_finetune: epsilon must be >= 0");
    }

    Rng rng(options.seed);
    std::vector<std::size_t> order(trainset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(order);
        const std::size_t nbatches =
            (order.size() + options.batch_size - 1) / static_cast<std::size_t>(options.batch_size);
        for (std::size_t b = 0; b < nbatches; ++b) {
            const std::size_t lo = b * static_cast<std::size_t>(options.batch_size);
            const std::size_t hi = std::min(lo + options.batch_size, order.size());
            std::vector<Tensor> imgs;
            std::vector<int> labels;
            imgs.reserve(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) {
                imgs.push_back(trainset.images[order[i]]);
                labels.push_back(trainset.labels[order[i]]);
            }
            Tensor batch = make_batch(imgs);

            if (adversarial) {
                // Replace the second half with FGSM versions crafted against
                // the current parameters, ground-truth labels.
                const std::size_t count = imgs.size();
                const std::size_t adv_lo = count / 2;
                if (adv_lo < count) {
                    std::vector<Tensor> half(imgs.begin() + adv_lo, imgs.end());
                    std::vector<int> half_labels(labels.begin() + adv_lo, labels.end());
                    Tensor half_batch = make_batch(half);
                    Tape tape;
                    Model::TapeForward fwd = model.forward_on_tape(tape, half_batch);
                    tape.backward(tape.cross_entropy(fwd.probs, half_labels));
                    const Tensor& g = tape.gradient(fwd.input);
                    const std::size_t stride = imgs.front().size();
                    for (std::size_t i = 0; i < half.size(); ++i) {
                        float* dst = batch.data() + (adv_lo + i) * stride;
                        const float* gp = g.data() + i * stride;
                        for (std::size_t j = 0; j < stride; ++j) {
                            const float step =
                                gp[j] > 0.0f ? epsilon : (gp[j] < 0.0f ? -epsilon : 0.0f);
                            dst[j] = std::clamp(dst[j] + step, 0.0f, 1.0f);
                        }
                    }
                }
            }

            Tape tape;
            std::vector<Tape::ValueId> param_ids;
            Model::TapeForward fwd = model.forward_on_tape(tape, batch, &param_ids);
            Tape::ValueId loss = tape.cross_entropy(fwd.probs, labels);
            const float loss_value = tape.value(loss)[0];
            if (!std::isfinite(loss_value)) {
                throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(b));
            }
            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(param_ids.size());
            for (Tape::ValueId id : param_ids) grads.push_back(tape.gradient(id));
            try {
                sgd_step(model.params(), grads, options.learning_rate);
            } catch (const std::runtime_error& e) {
                throw std::runtime_error(std::string(e.what()) + " (epoch " +
                                         std::to_string(epoch) + ", batch " + std::to_string(b) +
                                         ")");
            }
        }
    }

    model.meta().epochs += options.epochs;
    model.meta().train_accuracy = model.accuracy_on(trainset);
}

}  // namespace

void train(Model& model, const LabeledDataset& trainset, const TrainOptions& options) {
    run_training(model, trainset, options, false, 0.0f);
}

void adversarial_finetune(Model& model, const LabeledDataset& trainset,
                          const TrainOptions& options, float epsilon) {
    run_training(model, trainset, options, true, epsilon);
}

}  // namespace advdet
