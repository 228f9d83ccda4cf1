#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "advdet/attacks.hpp"
#include "advdet/dataset.hpp"
#include "advdet/model.hpp"

namespace advdet {

struct ScoredRecord {
    int sample_id = -1;
    double score = 0.0;      // legitimacy score, higher = more legitimate
    bool adversarial = false;
    int predicted_class = -1;
};

struct ScoredSet {
    std::vector<ScoredRecord> records;

    std::size_t count(bool adversarial) const;
    void validate() const;  // finite scores, both truth tags present
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // ordered by threshold, (0,0) to (1,1)

    std::string to_csv() const;
};

// Seeded uniform choice of as many correctly-predicted test samples as the
// attack set holds. Indices refer to the test set.
struct PairedSets {
    std::vector<std::size_t> legitimate_indices;
};

PairedSets pair_sets(const AttackSet& attacks, const LabeledDataset& testset, const Model& victim,
                     std::uint32_t seed);

// Scores every sample of a paired split with the given legitimacy scorer.
using LegitimacyScorer = std::function<double(const Tensor&)>;
ScoredSet score_paired(const PairedSets& paired, const LabeledDataset& testset,
                       const AttackSet& attacks, const Model& victim,
                       const LegitimacyScorer& scorer);

// Tie-aware sweep; positive class = adversarial, flagged when the legitimacy
// score falls below the threshold.
RocCurve roc_curve(const ScoredSet& scored);

double auc(const RocCurve& roc);

struct DetectionRates {
    double legitimate_pass_rate = 0.0;       // fraction of legitimate with score >= threshold
    double adversarial_detection_rate = 0.0; // fraction of adversarial with score < threshold
};

DetectionRates detection_rate(const ScoredSet& scored, double threshold);

struct Histogram {
    int bins = 0;
    std::vector<std::uint64_t> legitimate;
    std::vector<std::uint64_t> adversarial;

    std::string to_csv() const;  // bin_lo,bin_hi,legitimate,adversarial
};

Histogram make_histogram(const ScoredSet& scored, int bins);
void export_histogram(const ScoredSet& scored, int bins, const std::string& path);

}  // namespace advdet
