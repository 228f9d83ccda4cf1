#include "advdet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace advdet {

namespace {

void check_simplex_blocks(const std::vector<float>& values, int n, int m, const char* what) {
    if (n < 1 || m < 1 || values.size() != static_cast<std::size_t>(n) * m) {
        throw std::invalid_argument(std::string(what) + ": length " + std::to_string(values.size()) +
                                    " does not match " + std::to_string(m) + " blocks of " +
                                    std::to_string(n));
    }
    for (int b = 0; b < m; ++b) {
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            const float v = values[static_cast<std::size_t>(b) * n + j];
            if (!(v >= 0.0f)) {
                throw std::invalid_argument(std::string(what) + ": negative or non-finite entry in block " +
                                            std::to_string(b));
            }
            sum += v;
        }
        if (std::fabs(sum - 1.0) > 1e-6) {
            throw std::invalid_argument(std::string(what) + ": block " + std::to_string(b) +
                                        " sums to " + std::to_string(sum) + ", expected 1");
        }
    }
}

}  // namespace

void Signature::validate() const {
    check_simplex_blocks(values, num_classes, num_distortions, "signature");
}

void ClassStatistics::validate() const {
    if (num_classes < 2) throw std::invalid_argument("class statistics: need at least 2 classes");
    if (distortions.empty()) throw std::invalid_argument("class statistics: empty distortion set");
    if (mu.size() != static_cast<std::size_t>(num_classes) ||
        counts.size() != static_cast<std::size_t>(num_classes)) {
        throw std::invalid_argument("class statistics: expected " + std::to_string(num_classes) +
                                    " class means, have " + std::to_string(mu.size()));
    }
    const int m = static_cast<int>(distortions.size());
    for (int j = 0; j < num_classes; ++j) {
        if (counts[static_cast<std::size_t>(j)] == 0) {
            throw std::invalid_argument("class statistics: class " + std::to_string(j) +
                                        " has no samples");
        }
        check_simplex_blocks(mu[static_cast<std::size_t>(j)], num_classes, m, "class mean");
    }
}

Signature build_signature(const Model& model, const Tensor& image, const DistortionSet& distortions) {
    if (distortions.empty()) throw std::invalid_argument("build_signature: empty distortion set");
    const int n = model.config().num_classes;
    Signature sig;
    sig.num_classes = n;
    sig.num_distortions = static_cast<int>(distortions.size());
    sig.values.reserve(static_cast<std::size_t>(n) * distortions.size());
    for (const Tensor& replica : apply_set(image, distortions)) {
        const Tensor probs = model.predict(replica);
        sig.values.insert(sig.values.end(), probs.values().begin(), probs.values().end());
    }
    return sig;
}

ClassStatistics compute_class_statistics(const Model& model, const LabeledDataset& trainset,
                                         const DistortionSet& distortions,
                                         bool include_misclassified) {
    trainset.validate();
    if (trainset.split != Split::Train) {
        throw std::invalid_argument("compute_class_statistics: dataset split must be train");
    }
    if (distortions.empty()) {
        throw std::invalid_argument("compute_class_statistics: empty distortion set");
    }
    const int n = model.config().num_classes;
    const std::size_t len = static_cast<std::size_t>(n) * distortions.size();

    std::vector<std::vector<double>> sums(static_cast<std::size_t>(n), std::vector<double>(len, 0.0));
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(n), 0);

    for (std::size_t i = 0; i < trainset.size(); ++i) {
        const int label = trainset.labels[i];
        if (!include_misclassified && model.predicted_class(trainset.images[i]) != label) continue;
        const Signature sig = build_signature(model, trainset.images[i], distortions);
        auto& acc = sums[static_cast<std::size_t>(label)];
        for (std::size_t k = 0; k < len; ++k) acc[k] += sig.values[k];
        ++counts[static_cast<std::size_t>(label)];
    }

    ClassStatistics stats;
    stats.num_classes = n;
    stats.distortions = distortions;
    stats.model_fingerprint = model.fingerprint();
    stats.counts = counts;
    stats.mu.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        if (counts[static_cast<std::size_t>(j)] == 0) {
            throw std::runtime_error("compute_class_statistics: class " + std::to_string(j) +
                                     " has no contributing samples");
        }
        auto& mu = stats.mu[static_cast<std::size_t>(j)];
        mu.resize(len);
        const double inv = 1.0 / static_cast<double>(counts[static_cast<std::size_t>(j)]);
        for (std::size_t k = 0; k < len; ++k) {
            mu[k] = static_cast<float>(sums[static_cast<std::size_t>(j)][k] * inv);
        }
    }
    stats.validate();
    return stats;
}

double projection_score(const std::vector<float>& signature, const std::vector<float>& mu) {
    if (signature.size() != mu.size()) {
        throw std::invalid_argument("projection_score: length mismatch " +
                                    std::to_string(signature.size()) + " vs " +
                                    std::to_string(mu.size()));
    }
    if (signature.empty()) throw std::invalid_argument("projection_score: empty vectors");
    if (signature == mu) return 1.0;  // exact self-similarity, no rounding
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < signature.size(); ++i) {
        const double a = signature[i], b = mu[i];
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if (na <= 0.0 || nb <= 0.0) throw std::invalid_argument("projection_score: zero-norm vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

DetectionVerdict detect(const Model& model, const ClassStatistics& stats, const Tensor& image,
                        double threshold) {
    stats.validate();
    if (stats.model_fingerprint != model.fingerprint()) {
        throw std::runtime_error("detect: statistics were built for a different model (fingerprint " +
                                 std::to_string(stats.model_fingerprint) + " vs " +
                                 std::to_string(model.fingerprint()) + ")");
    }
    if (stats.num_classes != model.config().num_classes) {
        throw std::runtime_error("detect: statistics class count mismatch");
    }
    DetectionVerdict v;
    v.predicted_class = model.predicted_class(image);
    const Signature sig = build_signature(model, image, stats.distortions);
    v.score = projection_score(sig.values, stats.mu[static_cast<std::size_t>(v.predicted_class)]);
    v.threshold = threshold;
    v.legitimate = v.score >= threshold;
    return v;
}

double fs_score(const Model& model, const Tensor& image, const DistortionSet& distortions) {
    if (distortions.empty()) throw std::invalid_argument("fs_score: empty distortion set");
    const Tensor base = model.predict(image);
    double worst = 0.0;
    for (const Tensor& replica : apply_set(image, distortions)) {
        const Tensor probs = model.predict(replica);
        double l1 = 0.0;
        for (std::size_t i = 0; i < base.size(); ++i) {
            l1 += std::fabs(static_cast<double>(base[i]) - probs[i]);
        }
        worst = std::max(worst, l1);
    }
    return worst;
}

double fs_legitimacy(double fs) { return std::clamp((2.0 - fs) * 0.5, 0.0, 1.0); }

double calibrate_threshold(std::vector<double> legitimate_scores, double target_fpr,
                           ScoreOrientation orientation) {
    if (legitimate_scores.empty()) {
        throw std::invalid_argument("calibrate_threshold: no legitimate scores");
    }
    if (!(target_fpr > 0.0 && target_fpr < 1.0)) {
        throw std::invalid_argument("calibrate_threshold: target_fpr must lie in (0, 1)");
    }
    std::sort(legitimate_scores.begin(), legitimate_scores.end());
    const std::size_t n = legitimate_scores.size();
    const std::size_t k = static_cast<std::size_t>(target_fpr * static_cast<double>(n));
    if (orientation == ScoreOrientation::HigherIsLegitimate) {
        return legitimate_scores[std::min(k, n - 1)];
    }
    return legitimate_scores[n - 1 - std::min(k, n - 1)];
}

}  // namespace advdet
