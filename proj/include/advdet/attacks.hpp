#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "advdet/dataset.hpp"
#include "advdet/model.hpp"
#include "advdet/tensor.hpp"

namespace advdet {

enum class AttackKind { Fgsm, DeepFool, CarliniWagner };

struct CwOptions {
    float learning_rate = 1e-2f;
    int binary_search_steps = 5;
    int max_iterations = 200;      // gradient steps per tradeoff constant
    float initial_tradeoff = 1e-2f;
    // The paper quotes kappa in [0,1]; canonical C&W applies it on the logit
    // scale, so the effective margin is kappa * logit_scale.
    float logit_scale = 10.0f;
};

struct AttackConfig {
    AttackKind kind = AttackKind::Fgsm;
    float epsilon = 0.0f;   // FGSM step size
    float kappa = 0.0f;     // C&W confidence
    int max_iterations = 50;
    float overshoot = 0.02f;  // DeepFool
    CwOptions cw;

    void validate() const;
};

struct AttackResult {
    Tensor adversarial;   // x', clipped to [0,1]
    Tensor perturbation;  // eta, with x' == clip(x + eta) bit-exactly
    int source_index = -1;
    bool success = false;  // argmax f(x') != argmax f(x) on the evaluating model
    int iterations = 0;
    double l2_norm = 0.0;
};

// Canonicalizes a raw adversarial candidate: clips, derives eta = x' - x, and
// re-clips until clip(x + eta) == x' holds bit-exactly; then evaluates the
// success flag against `eval_model`.
AttackResult finalize_attack(const Model& eval_model, const Tensor& source, Tensor raw_adversarial,
                             int iterations, int source_index = -1);

// Single gradient-sign step: eta = epsilon * sign(grad_x CE(x, label)).
AttackResult fgsm(const Model& model, const Tensor& image, int label, float epsilon);

// Iterative nearest-boundary crossing on the linearized logit differences.
// `reference` is the class the input is pushed away from; defaults to the
// model's prediction on the input.
AttackResult deepfool(const Model& model, const Tensor& image, const AttackConfig& config,
                      std::optional<int> reference = std::nullopt);

// L2 Carlini-Wagner with tanh box parameterization and binary search over the
// tradeoff constant; returns the successful candidate of smallest L2.
AttackResult carlini_wagner(const Model& model, const Tensor& image, float kappa,
                            const AttackConfig& config);

struct AttackSetItem {
    AttackResult result;
    Tensor source;
    int label = -1;  // ground-truth class of the source sample
};

struct AttackSet {
    std::vector<AttackSetItem> items;
    AttackConfig config;
    std::size_t attempted = 0;  // correctly-classified samples attacked
};

struct AttackSetOptions {
    std::size_t max_samples = 0;       // 0 = every eligible sample
    bool retain_only_successful = true;
};

struct EmptyAttackSetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Crafts attacks with `crafting` on test samples it classifies correctly;
// success (and the retention filter) is judged on `victim`. Throws if the
// retained set comes out empty.
AttackSet build_attack_set(const Model& crafting, const LabeledDataset& testset,
                           const AttackConfig& config, const Model& victim,
                           const AttackSetOptions& options = {});

std::string attack_kind_name(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);

}  // namespace advdet
