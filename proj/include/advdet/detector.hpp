#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advdet/dataset.hpp"
#include "advdet/distortions.hpp"
#include "advdet/model.hpp"
#include "advdet/tensor.hpp"

namespace advdet {

// Concatenated probability blocks [f(psi_1(x)) | ... | f(psi_m(x))]. The
// undistorted prediction is not part of the signature.
struct Signature {
    std::vector<float> values;  // length m * n
    int num_classes = 0;
    int num_distortions = 0;

    void validate() const;
};

struct ClassStatistics {
    std::vector<std::vector<float>> mu;  // n vectors of length m * n
    std::vector<std::uint64_t> counts;   // samples contributing to each mu_j
    DistortionSet distortions;
    std::uint64_t model_fingerprint = 0;
    int num_classes = 0;

    void validate() const;
};

struct DetectionVerdict {
    int predicted_class = -1;
    double score = 0.0;
    double threshold = 0.0;
    bool legitimate = false;
};

enum class ScoreOrientation { HigherIsLegitimate, LowerIsLegitimate };

Signature build_signature(const Model& model, const Tensor& image, const DistortionSet& distortions);

// mu_j = mean signature over the training samples whose ground-truth label is
// j. `include_misclassified` keeps samples the model itself gets wrong; the
// false setting exists for ablation.
ClassStatistics compute_class_statistics(const Model& model, const LabeledDataset& trainset,
                                         const DistortionSet& distortions,
                                         bool include_misclassified = true);

// Cosine of the angle between two nonnegative vectors, in [0, 1].
double projection_score(const std::vector<float>& signature, const std::vector<float>& mu);

DetectionVerdict detect(const Model& model, const ClassStatistics& stats, const Tensor& image,
                        double threshold);

// Feature-Squeezing score: max_i of the L1 gap between f(x) and f(psi_i(x)).
// Higher means more suspicious; range [0, 2].
double fs_score(const Model& model, const Tensor& image, const DistortionSet& distortions);

// Maps an fs_score onto the same higher-is-legitimate [0, 1] axis as the
// projection score, so one thresholding path serves both detectors.
double fs_legitimacy(double fs);

// Largest threshold rejecting at most floor(target_fpr * N) of the given
// legitimate scores, where reject means score < threshold. The inverted
// orientation mirrors this for raw suspicion scores (reject = score > t).
double calibrate_threshold(std::vector<double> legitimate_scores, double target_fpr,
                           ScoreOrientation orientation = ScoreOrientation::HigherIsLegitimate);

}  // namespace advdet
