#include "emphtts/metrics.hpp"

#include "emphtts/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace emphtts {

namespace {

void check_instance(const EmphasisTestInstance& inst) {
    if (inst.ground_truth.empty()) throw EmptyInputError("emphasis test instance without words");
    if (inst.ground_truth.size() != inst.predicted.size()) {
        throw StructuralError("emphasis test instance: " + std::to_string(inst.predicted.size()) + " predictions for " +
                              std::to_string(inst.ground_truth.size()) + " words");
    }
}

std::size_t overlap(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
    std::size_t n = 0;
    for (auto i : a) n += b.count(i);
    return n;
}

}  // namespace

std::set<std::size_t> top_m(const std::vector<double>& values, std::size_t m) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    idx.resize(std::min(m, idx.size()));
    return {idx.begin(), idx.end()};
}

double match_m(const std::vector<EmphasisTestInstance>& test_set, std::size_t m) {
    if (test_set.empty()) throw EmptyInputError("Match_m over an empty test set");
    if (m < 1) throw ConfigError("Match_m needs m >= 1");
    double sum = 0.0;
    for (const auto& inst : test_set) {
        check_instance(inst);
        const auto g = top_m(inst.ground_truth, m);
        const auto p = top_m(inst.predicted, m);
        sum += static_cast<double>(overlap(g, p)) / static_cast<double>(std::min(m, inst.ground_truth.size()));
    }
    return sum / static_cast<double>(test_set.size());
}

double f1_m(const std::vector<EmphasisTestInstance>& test_set, std::size_t m) {
    if (test_set.empty()) throw EmptyInputError("F1_m over an empty test set");
    if (m < 1) throw ConfigError("F1_m needs m >= 1");
    double sum = 0.0;
    for (const auto& inst : test_set) {
        check_instance(inst);
        const auto g = top_m(inst.ground_truth, m);
        const auto p = top_m(inst.predicted, m);
        const double tp = static_cast<double>(overlap(g, p));
        if (tp == 0.0) continue;
        const double precision = tp / static_cast<double>(p.size());
        const double recall = tp / static_cast<double>(g.size());
        sum += 2.0 * precision * recall / (precision + recall);
    }
    return sum / static_cast<double>(test_set.size());
}

double mae(const std::vector<double>& predicted, const std::vector<double>& truth) {
    if (predicted.size() != truth.size()) throw StructuralError("MAE: series lengths differ");
    if (truth.empty()) throw EmptyInputError("MAE over empty series");
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) sum += std::abs(predicted[i] - truth[i]);
    return sum / static_cast<double>(truth.size());
}

double mae_duration(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw StructuralError("MAE-D: duration counts differ");
    if (truth.empty()) throw EmptyInputError("MAE-D over empty durations");
    auto normalize = [](const std::vector<int>& d) {
        const double total = std::accumulate(d.begin(), d.end(), 0.0);
        std::vector<double> out(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) out[i] = total > 0 ? static_cast<double>(d.size()) * d[i] / total : 0.0;
        return out;
    };
    return mae(normalize(predicted), normalize(truth));
}

KappaResult fleiss_kappa(const std::vector<std::vector<int>>& counts) {
    if (counts.empty()) throw EmptyInputError("Fleiss kappa over zero items");
    const std::size_t k = counts.front().size();
    if (k < 1) throw StructuralError("Fleiss kappa needs at least one category");
    const int n = std::accumulate(counts.front().begin(), counts.front().end(), 0);
    if (n < 2) throw StructuralError("Fleiss kappa needs at least two raters per item");
    const double N = static_cast<double>(counts.size());

    std::vector<double> category_totals(k, 0.0);
    double p_bar = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const auto& row = counts[i];
        if (row.size() != k) throw StructuralError("Fleiss kappa: item " + std::to_string(i) + " has a different category count");
        if (std::accumulate(row.begin(), row.end(), 0) != n) {
            throw StructuralError("Fleiss kappa: item " + std::to_string(i) + " has a different number of raters");
        }
        double agree = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (row[j] < 0) throw StructuralError("Fleiss kappa: negative count");
            agree += static_cast<double>(row[j]) * (row[j] - 1);
            category_totals[j] += row[j];
        }
        p_bar += agree / (static_cast<double>(n) * (n - 1));
    }
    p_bar /= N;
    double p_e = 0.0;
    for (double t : category_totals) {
        const double pj = t / (N * n);
        p_e += pj * pj;
    }
    KappaResult r;
    r.observed_agreement = p_bar;
    r.expected_agreement = p_e;
    if (std::abs(1.0 - p_e) > 1e-15) r.kappa = (p_bar - p_e) / (1.0 - p_e);
    return r;
}

KappaResult fleiss_kappa(const std::vector<AnnotationRecord>& records) {
    std::map<std::pair<std::string, int>, std::vector<const AnnotationRecord*>> groups;
    for (const auto& r : records) groups[{r.conversation_id, r.turn_index}].push_back(&r);
    std::vector<std::vector<int>> counts;
    for (const auto& [key, group] : groups) {
        const std::size_t words = group.front()->labels.size();
        std::vector<std::vector<int>> turn(words, std::vector<int>(2, 0));
        for (const auto* r : group) {
            if (r->labels.size() != words) {
                throw StructuralError("Fleiss kappa: label count differs across annotators in conversation '" +
                                      key.first + "' turn " + std::to_string(key.second));
            }
            for (std::size_t w = 0; w < words; ++w) ++turn[w][r->labels[w] == Label::I ? 0 : 1];
        }
        counts.insert(counts.end(), turn.begin(), turn.end());
    }
    return fleiss_kappa(counts);
}

std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw StructuralError("ROC-AUC: scores and labels differ in length");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Mann-Whitney U with mid-ranks.
    double rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t) {
            if (labels[idx[t]]) {
                rank_sum += mid;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0) return std::nullopt;
    const double p = static_cast<double>(positives);
    return (rank_sum - p * (p + 1) / 2.0) / (p * static_cast<double>(negatives));
}

}  // namespace emphtts
