#pragma once

#include "emphtts/corpus.hpp"

#include <optional>
#include <set>
#include <vector>

namespace emphtts {

struct EmphasisTestInstance {
    std::vector<double> ground_truth;
    std::vector<double> predicted;
};

// Indices of the m largest values; ties go to the lower index.
std::set<std::size_t> top_m(const std::vector<double>& values, std::size_t m);

// Mean over instances of |G_m ∩ Ĝ_m| / min(m, |u|).
double match_m(const std::vector<EmphasisTestInstance>& test_set, std::size_t m);
// Macro F1 between top-m sets.
double f1_m(const std::vector<EmphasisTestInstance>& test_set, std::size_t m);

double mae(const std::vector<double>& predicted, const std::vector<double>& truth);
// Durations rescaled to n * d_i / sum(d) before the absolute error.
double mae_duration(const std::vector<int>& predicted, const std::vector<int>& truth);

struct KappaResult {
    std::optional<double> kappa;  // empty when expected agreement is 1
    double observed_agreement = 0.0;
    double expected_agreement = 0.0;
    bool degenerate() const { return !kappa.has_value(); }
};

// counts[item][category] = raters choosing category; every row must sum to the
// same n >= 2.
KappaResult fleiss_kappa(const std::vector<std::vector<int>>& counts);
// Items are words, categories {I, O}; records grouped per (conversation, turn).
KappaResult fleiss_kappa(const std::vector<AnnotationRecord>& records);

// Area under the ROC curve with ties counted as 1/2; nullopt without both classes.
std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels);

}  // namespace emphtts
