#include "advdet/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace advdet {

void AttackConfig::validate() const {
    if (epsilon < 0.0f) throw std::invalid_argument("attack config: epsilon must be >= 0");
    if (kappa < 0.0f) throw std::invalid_argument("attack config: kappa must be >= 0");
    if (max_iterations < 1) throw std::invalid_argument("attack config: max_iterations must be >= 1");
    if (overshoot < 0.0f) throw std::invalid_argument("attack config: overshoot must be >= 0");
    if (cw.binary_search_steps < 1 || cw.max_iterations < 1 || cw.learning_rate <= 0.0f ||
        cw.initial_tradeoff <= 0.0f || cw.logit_scale <= 0.0f) {
        throw std::invalid_argument("attack config: invalid carlini-wagner options");
    }
}

AttackResult finalize_attack(const Model& eval_model, const Tensor& source, Tensor raw_adversarial,
                             int iterations, int source_index) {
    require_same_shape(source, raw_adversarial, "finalize_attack");
    AttackResult r;
    Tensor adv = std::move(raw_adversarial);
    for (auto& v : adv.values()) v = std::clamp(v, 0.0f, 1.0f);
    Tensor eta(source.shape());
    // Settle eta = x' - x and x' = clip(x + eta) to a joint fixed point so the
    // clip invariant holds bit-exactly on the stored tensors.
    for (int pass = 0; pass < 16; ++pass) {
        bool stable = true;
        for (std::size_t i = 0; i < adv.size(); ++i) {
            eta[i] = adv[i] - source[i];
            const float back = std::clamp(source[i] + eta[i], 0.0f, 1.0f);
            if (back != adv[i]) {
                adv[i] = back;
                stable = false;
            }
        }
        if (stable) break;
    }
    r.l2_norm = eta.l2_norm();
    r.success = eval_model.predicted_class(adv) != eval_model.predicted_class(source);
    r.adversarial = std::move(adv);
    r.perturbation = std::move(eta);
    r.iterations = iterations;
    r.source_index = source_index;
    return r;
}

AttackResult fgsm(const Model& model, const Tensor& image, int label, float epsilon) {
    if (epsilon < 0.0f) throw std::invalid_argument("fgsm: epsilon must be >= 0");
    Tensor grad = model.input_gradient(image, label);
    Tensor raw = image;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const float g = grad[i];
        raw[i] += g > 0.0f ? epsilon : (g < 0.0f ? -epsilon : 0.0f);
    }
    return finalize_attack(model, image, raw, 1);
}

AttackResult deepfool(const Model& model, const Tensor& image, const AttackConfig& config,
                      std::optional<int> reference) {
    config.validate();
    const int n = model.config().num_classes;
    const int k0 = reference.value_or(model.predicted_class(image));
    if (k0 < 0 || k0 >= n) throw std::invalid_argument("deepfool: reference class out of range");

    const double scale = 1.0 + static_cast<double>(config.overshoot);
    std::vector<double> r_total(image.size(), 0.0);
    int iters = 0;

    for (; iters < config.max_iterations; ++iters) {
        Tensor current(image.shape());
        for (std::size_t i = 0; i < current.size(); ++i) {
            current[i] = static_cast<float>(image[i] + scale * r_total[i]);
        }
        Tape tape;
        Model::TapeForward fwd = model.forward_on_tape(tape, single_image_batch(current));
        const Tensor& z = tape.value(fwd.logits);
        int top = 0;
        for (int j = 1; j < n; ++j) {
            if (z[static_cast<std::size_t>(j)] > z[static_cast<std::size_t>(top)]) top = j;
        }
        if (top != k0) break;  // crossing condition already met

        // Linearize every logit difference z_k - z_k0 at the current point and
        // step toward the nearest boundary.
        double best_ratio = std::numeric_limits<double>::infinity();
        double best_f = 0.0, best_norm2 = 0.0;
        std::vector<float> best_w;
        for (int k = 0; k < n; ++k) {
            if (k == k0) continue;
            tape.zero_gradients();
            Tensor seed({1, n});
            seed[static_cast<std::size_t>(k)] = 1.0f;
            seed[static_cast<std::size_t>(k0)] = -1.0f;
            tape.backward_seeded(fwd.logits, seed);
            const Tensor& w = tape.gradient(fwd.input);
            double norm2 = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) {
                norm2 += static_cast<double>(w[i]) * w[i];
            }
            if (norm2 < 1e-20) continue;
            const double f = static_cast<double>(z[static_cast<std::size_t>(k)]) -
                             static_cast<double>(z[static_cast<std::size_t>(k0)]);
            const double ratio = std::fabs(f) / std::sqrt(norm2);
            if (ratio < best_ratio) {
                best_ratio = ratio;
                best_f = f;
                best_norm2 = norm2;
                best_w.assign(w.values().begin(), w.values().end());
            }
        }
        if (best_w.empty()) break;  // all boundary gradients vanished

        const double coef = std::fabs(best_f) / best_norm2;
        for (std::size_t i = 0; i < r_total.size(); ++i) {
            r_total[i] += coef * best_w[i];
        }
    }

    Tensor raw(image.shape());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = static_cast<float>(image[i] + scale * r_total[i]);
    }
    return finalize_attack(model, image, raw, iters);
}

AttackResult carlini_wagner(const Model& model, const Tensor& image, float kappa,
                            const AttackConfig& config) {
    if (kappa < 0.0f) throw std::invalid_argument("carlini_wagner: kappa must be >= 0");
    config.validate();
    const CwOptions& cw = config.cw;
    const int n = model.config().num_classes;
    const int true_class = model.predicted_class(image);
    const double margin_target = static_cast<double>(kappa) * cw.logit_scale;
    const std::size_t sz = image.size();

    // tanh-space start point reproducing the input.
    std::vector<double> w0(sz);
    for (std::size_t i = 0; i < sz; ++i) {
        const double t = std::clamp(2.0 * image[i] - 1.0, -1.0 + 1e-6, 1.0 - 1e-6);
        w0[i] = std::atanh(t);
    }

    double lower = 0.0, upper = -1.0;
    double c = cw.initial_tradeoff;
    bool any_success = false;
    double best_l2 = std::numeric_limits<double>::infinity();
    Tensor best_adv;
    double closest_hinge = std::numeric_limits<double>::infinity();
    Tensor closest_adv = image;
    int total_iterations = 0;

    for (int step = 0; step < cw.binary_search_steps; ++step) {
        std::vector<double> w = w0, m(sz, 0.0), v(sz, 0.0);
        bool success_this_c = false;
        for (int it = 1; it <= cw.max_iterations; ++it, ++total_iterations) {
            Tensor adv(image.shape());
            std::vector<double> th(sz);
            for (std::size_t i = 0; i < sz; ++i) {
                th[i] = std::tanh(w[i]);
                adv[i] = static_cast<float>((th[i] + 1.0) * 0.5);
            }

            Tape tape;
            Model::TapeForward fwd = model.forward_on_tape(tape, single_image_batch(adv));
            const Tensor& z = tape.value(fwd.logits);
            int best_other = true_class == 0 ? 1 : 0;
            for (int j = 0; j < n; ++j) {
                if (j == true_class) continue;
                if (z[static_cast<std::size_t>(j)] > z[static_cast<std::size_t>(best_other)]) {
                    best_other = j;
                }
            }
            const double hinge = static_cast<double>(z[static_cast<std::size_t>(true_class)]) -
                                 static_cast<double>(z[static_cast<std::size_t>(best_other)]) +
                                 margin_target;
            double l2sq = 0.0;
            for (std::size_t i = 0; i < sz; ++i) {
                const double d = static_cast<double>(adv[i]) - image[i];
                l2sq += d * d;
            }
            if (hinge <= 0.0) {
                success_this_c = true;
                any_success = true;
                if (std::sqrt(l2sq) < best_l2) {
                    best_l2 = std::sqrt(l2sq);
                    best_adv = adv;
                }
            } else if (hinge < closest_hinge) {
                closest_hinge = hinge;
                closest_adv = adv;
            }

            // d/dx' of ||x'-x||^2 + c * max(Z_t - Z_j* + kappa', 0).
            std::vector<double> grad_adv(sz);
            for (std::size_t i = 0; i < sz; ++i) {
                grad_adv[i] = 2.0 * (static_cast<double>(adv[i]) - image[i]);
            }
            if (hinge > 0.0) {
                Tensor seed({1, n});
                seed[static_cast<std::size_t>(true_class)] = 1.0f;
                seed[static_cast<std::size_t>(best_other)] = -1.0f;
                tape.backward_seeded(fwd.logits, seed);
                const Tensor& g = tape.gradient(fwd.input);
                for (std::size_t i = 0; i < sz; ++i) {
                    grad_adv[i] += c * static_cast<double>(g[i]);
                }
            }

            // Adam step in tanh space.
            const double b1 = 0.9, b2 = 0.999;
            const double b1t = 1.0 - std::pow(b1, it), b2t = 1.0 - std::pow(b2, it);
            for (std::size_t i = 0; i < sz; ++i) {
                const double gw = grad_adv[i] * 0.5 * (1.0 - th[i] * th[i]);
                m[i] = b1 * m[i] + (1.0 - b1) * gw;
                v[i] = b2 * v[i] + (1.0 - b2) * gw * gw;
                w[i] -= cw.learning_rate * (m[i] / b1t) / (std::sqrt(v[i] / b2t) + 1e-8);
            }
        }

        if (success_this_c) {
            upper = c;
            c = (lower + upper) * 0.5;
        } else {
            lower = c;
            c = upper < 0.0 ? c * 10.0 : (lower + upper) * 0.5;
        }
    }

    Tensor chosen = any_success ? best_adv : closest_adv;
    return finalize_attack(model, image, std::move(chosen), total_iterations);
}

namespace {

AttackResult run_attack(const Model& crafting, const Tensor& image, int label,
                        const AttackConfig& config) {
    switch (config.kind) {
        case AttackKind::Fgsm: return fgsm(crafting, image, label, config.epsilon);
        case AttackKind::DeepFool: return deepfool(crafting, image, config, label);
        case AttackKind::CarliniWagner:
            return carlini_wagner(crafting, image, config.kappa, config);
    }
    throw std::invalid_argument("unknown attack kind");
}

}  // namespace

AttackSet build_attack_set(const Model& crafting, const LabeledDataset& testset,
                           const AttackConfig& config, const Model& victim,
                           const AttackSetOptions& options) {
    config.validate();
    testset.validate();
    if (testset.split != Split::Test) {
        throw std::invalid_argument("build_attack_set: dataset split must be test");
    }
    AttackSet out;
    out.config = config;
    for (std::size_t idx = 0; idx < testset.size(); ++idx) {
        if (options.max_samples > 0 && out.attempted >= options.max_samples) break;
        const Tensor& img = testset.images[idx];
        const int label = testset.labels[idx];
        if (crafting.predicted_class(img) != label) continue;  // attack only correct ones
        ++out.attempted;
        AttackResult r = run_attack(crafting, img, label, config);
        r.source_index = static_cast<int>(idx);
        // The retention filter judges success on the victim, which is the
        // crafting model itself in the white-box setting.
        r.success = victim.predicted_class(r.adversarial) != victim.predicted_class(img);
        if (options.retain_only_successful && !r.success) continue;
        out.items.push_back({std::move(r), img, label});
    }
    if (out.items.empty()) {
        throw EmptyAttackSetError("attack set is empty: " + std::to_string(out.attempted) +
                                  " samples attacked with " + attack_kind_name(config.kind) +
                                  ", none retained");
    }
    return out;
}

std::string attack_kind_name(AttackKind kind) {
    switch (kind) {
        case AttackKind::Fgsm: return "fgsm";
        case AttackKind::DeepFool: return "deepfool";
        case AttackKind::CarliniWagner: return "cw";
    }
    return "?";
}

AttackKind parse_attack_kind(const std::string& name) {
    if (name == "fgsm") return AttackKind::Fgsm;
    if (name == "deepfool" || name == "df") return AttackKind::DeepFool;
    if (name == "cw" || name == "carlini_wagner") return AttackKind::CarliniWagner;
    throw std::invalid_argument("unknown attack kind '" + name + "'");
}

}  // namespace advdet
