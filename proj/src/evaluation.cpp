#include "advdet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "advdet/io.hpp"
#include "advdet/rng.hpp"

namespace advdet {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::size_t ScoredSet::count(bool adversarial) const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.adversarial == adversarial ? 1 : 0;
    return n;
}

void ScoredSet::validate() const {
    for (const auto& r : records) {
        if (!std::isfinite(r.score)) {
            throw std::invalid_argument("scored set: non-finite score for sample " +
                                        std::to_string(r.sample_id));
        }
    }
    if (count(true) == 0 || count(false) == 0) {
        throw std::invalid_argument("scored set: need both legitimate and adversarial samples, have " +
                                    std::to_string(count(false)) + " legitimate / " +
                                    std::to_string(count(true)) + " adversarial");
    }
}

PairedSets pair_sets(const AttackSet& attacks, const LabeledDataset& testset, const Model& victim,
                     std::uint32_t seed) {
    testset.validate();
    if (attacks.items.empty()) throw std::invalid_argument("pair_sets: attack set is empty");
    std::vector<std::size_t> correct;
    for (std::size_t i = 0; i < testset.size(); ++i) {
        if (victim.predicted_class(testset.images[i]) == testset.labels[i]) correct.push_back(i);
    }
    const std::size_t k = attacks.items.size();
    if (correct.size() < k) {
        throw std::runtime_error("pair_sets: need " + std::to_string(k) +
                                 " correctly predicted test samples, have " +
                                 std::to_string(correct.size()));
    }
    Rng rng(seed);
    rng.shuffle(correct);
    correct.resize(k);
    return PairedSets{std::move(correct)};
}

ScoredSet score_paired(const PairedSets& paired, const LabeledDataset& testset,
                       const AttackSet& attacks, const Model& victim,
                       const LegitimacyScorer& scorer) {
    ScoredSet out;
    out.records.reserve(paired.legitimate_indices.size() + attacks.items.size());
    for (std::size_t idx : paired.legitimate_indices) {
        ScoredRecord r;
        r.sample_id = static_cast<int>(idx);
        r.adversarial = false;
        r.score = scorer(testset.images[idx]);
        r.predicted_class = victim.predicted_class(testset.images[idx]);
        out.records.push_back(r);
    }
    for (const AttackSetItem& item : attacks.items) {
        ScoredRecord r;
        r.sample_id = item.result.source_index;
        r.adversarial = true;
        r.score = scorer(item.result.adversarial);
        r.predicted_class = victim.predicted_class(item.result.adversarial);
        out.records.push_back(r);
    }
    out.validate();
    return out;
}

RocCurve roc_curve(const ScoredSet& scored) {
    scored.validate();
    const double n_adv = static_cast<double>(scored.count(true));
    const double n_leg = static_cast<double>(scored.count(false));

    std::vector<std::pair<double, bool>> points;  // (score, adversarial)
    points.reserve(scored.records.size());
    for (const auto& r : scored.records) points.emplace_back(r.score, r.adversarial);
    std::sort(points.begin(), points.end());

    RocCurve roc;
    std::size_t below_adv = 0, below_leg = 0, i = 0;
    while (i < points.size()) {
        const double t = points[i].first;
        roc.points.push_back({static_cast<double>(below_leg) / n_leg,
                              static_cast<double>(below_adv) / n_adv, t});
        // Consume the whole tie group so equal scores form a single step.
        while (i < points.size() && points[i].first == t) {
            (points[i].second ? below_adv : below_leg) += 1;
            ++i;
        }
    }
    roc.points.push_back({1.0, 1.0, std::numeric_limits<double>::infinity()});
    return roc;
}

double auc(const RocCurve& roc) {
    if (roc.points.size() < 2) throw std::invalid_argument("auc: curve needs at least 2 points");
    double area = 0.0;
    for (std::size_t i = 1; i < roc.points.size(); ++i) {
        const auto& a = roc.points[i - 1];
        const auto& b = roc.points[i];
        if (b.fpr < a.fpr || b.tpr < a.tpr) throw std::invalid_argument("auc: curve not monotone");
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    return area;
}

DetectionRates detection_rate(const ScoredSet& scored, double threshold) {
    scored.validate();
    std::size_t leg_pass = 0, adv_hit = 0;
    for (const auto& r : scored.records) {
        if (r.adversarial) {
            adv_hit += r.score < threshold ? 1 : 0;
        } else {
            leg_pass += r.score >= threshold ? 1 : 0;
        }
    }
    DetectionRates rates;
    rates.legitimate_pass_rate = static_cast<double>(leg_pass) / static_cast<double>(scored.count(false));
    rates.adversarial_detection_rate =
        static_cast<double>(adv_hit) / static_cast<double>(scored.count(true));
    return rates;
}

Histogram make_histogram(const ScoredSet& scored, int bins) {
    if (bins < 2) throw std::invalid_argument("histogram: bins must be >= 2");
    Histogram h;
    h.bins = bins;
    h.legitimate.assign(static_cast<std::size_t>(bins), 0);
    h.adversarial.assign(static_cast<std::size_t>(bins), 0);
    for (const auto& r : scored.records) {
        const double s = std::clamp(r.score, 0.0, 1.0);
        const int idx = std::min(bins - 1, static_cast<int>(s * bins));
        (r.adversarial ? h.adversarial : h.legitimate)[static_cast<std::size_t>(idx)] += 1;
    }
    return h;
}

std::string Histogram::to_csv() const {
    std::string out = "bin_lo,bin_hi,legitimate,adversarial\n";
    for (int i = 0; i < bins; ++i) {
        out += fmt(static_cast<double>(i) / bins) + "," + fmt(static_cast<double>(i + 1) / bins) +
               "," + std::to_string(legitimate[static_cast<std::size_t>(i)]) + "," +
               std::to_string(adversarial[static_cast<std::size_t>(i)]) + "\n";
    }
    return out;
}

std::string RocCurve::to_csv() const {
    std::string out = "threshold,fpr,tpr\n";
    for (const auto& p : points) {
        out += fmt(p.threshold) + "," + fmt(p.fpr) + "," + fmt(p.tpr) + "\n";
    }
    return out;
}

void export_histogram(const ScoredSet& scored, int bins, const std::string& path) {
    io::write_text_file_atomic(path, make_histogram(scored, bins).to_csv());
}

}  // namespace advdet
