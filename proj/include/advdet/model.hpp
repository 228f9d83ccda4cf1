#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advdet/autodiff.hpp"
#include "advdet/dataset.hpp"
#include "advdet/tensor.hpp"

namespace advdet {

enum class LayerKind { Conv, Relu, MaxPool, Flatten, Dense, Softmax };

struct LayerSpec {
    LayerKind kind;
    int units = 0;   // Conv: output channels, Dense: output width
    int kernel = 0;  // Conv only
    Padding padding = Padding::Same;
};

struct ModelConfig {
    std::vector<LayerSpec> layers;
    int height = 0, width = 0, channels = 0;
    int num_classes = 0;
    std::uint32_t seed = 0;

    // Smallest CNN that trains past 90% on the synthetic benchmark in minutes.
    static ModelConfig desk_cnn(int h, int w, int c, int n, std::uint32_t seed);
    // Same stack with doubled channel counts, for the black-box substitute.
    static ModelConfig desk_substitute(int h, int w, int c, int n, std::uint32_t seed);

    void validate() const;
    std::string canonical_string() const;  // stable serialization, feeds the fingerprint
};

struct TrainMeta {
    int epochs = 0;
    double train_accuracy = -1.0;
    double test_accuracy = -1.0;
};

// Trained (or freshly initialized) classifier; doubles as the in-memory form
// of a checkpoint. Prediction is a pure function of (parameters, image) and is
// safe for concurrent readers.
class Model {
public:
    explicit Model(ModelConfig config);  // seeded uniform +-sqrt(6/(fan_in+fan_out)) init
    Model(ModelConfig config, std::vector<Tensor> params, TrainMeta meta);

    const ModelConfig& config() const { return config_; }
    const std::vector<Tensor>& params() const { return params_; }
    std::vector<Tensor>& params() { return params_; }
    const TrainMeta& meta() const { return meta_; }
    TrainMeta& meta() { return meta_; }

    Tensor predict(const Tensor& image) const;        // [H,W,C] -> [n] on the simplex
    Tensor predict_batch(const Tensor& batch) const;  // [N,H,W,C] -> [N,n]
    Tensor logits(const Tensor& image) const;         // [H,W,C] -> [n]
    int predicted_class(const Tensor& image) const;

    // Gradient of the cross-entropy loss w.r.t. the input pixels.
    Tensor input_gradient(const Tensor& image, int label) const;

    struct TapeForward {
        Tape::ValueId input;
        Tape::ValueId logits;
        Tape::ValueId probs;
    };
    // Records a full forward pass for a [N,H,W,C] batch; parameters enter the
    // tape as fresh leaves whose ids are appended to param_ids when requested.
    TapeForward forward_on_tape(Tape& tape, const Tensor& batch,
                                std::vector<Tape::ValueId>* param_ids = nullptr) const;

    double accuracy_on(const LabeledDataset& data) const;
    std::uint64_t fingerprint() const;  // hash of architecture + parameter bytes

private:
    void check_image_shape(const Tensor& image) const;

    ModelConfig config_;
    std::vector<Tensor> params_;
    TrainMeta meta_;
};

struct TrainOptions {
    int epochs = 10;
    int batch_size = 32;
    float learning_rate = 0.1f;
    std::uint32_t seed = 0;
};

// Plain SGD training with a seeded shuffle per epoch. Deterministic given the
// seed; aborts with the epoch/batch index if the loss goes non-finite.
void train(Model& model, const LabeledDataset& trainset, const TrainOptions& options);

// Fine-tuning where the second half of every mini-batch is replaced by FGSM
// versions crafted against the current parameters. epsilon = 0 degenerates to
// plain training on the same batch schedule.
void adversarial_finetune(Model& model, const LabeledDataset& trainset,
                          const TrainOptions& options, float epsilon);

Tensor make_batch(const std::vector<Tensor>& images);
Tensor single_image_batch(const Tensor& image);

}  // namespace advdet
