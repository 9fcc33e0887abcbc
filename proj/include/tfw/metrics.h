#pragma once
// Confusion matrix and the support-weighted precision/recall/F1 family.
// All percentages. Weighted recall coincides with accuracy by construction
// (sum over classes of support/N * TP/support = trace/N), and the report
// keeps both so downstream consumers can rely on the identity.
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tfw/tensor.h"

namespace tfw {

struct ConfusionMatrix {
    int64_t C = 0;
    std::vector<int64_t> counts;  // row-major, entry (true, pred)

    int64_t& at(int64_t t, int64_t p) { return counts[static_cast<size_t>(t * C + p)]; }
    int64_t at(int64_t t, int64_t p) const { return counts[static_cast<size_t>(t * C + p)]; }
    int64_t total() const {
        int64_t n = 0;
        for (int64_t v : counts) n += v;
        return n;
    }
};

inline ConfusionMatrix confusion_matrix(const std::vector<int64_t>& preds,
                                        const std::vector<int64_t>& labels, int64_t C) {
    if (preds.size() != labels.size())
        throw ShapeError("confusion: " + std::to_string(preds.size()) + " preds vs " +
                         std::to_string(labels.size()) + " labels");
    ConfusionMatrix cm;
    cm.C = C;
    cm.counts.assign(static_cast<size_t>(C * C), 0);
    for (size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= C || preds[i] < 0 || preds[i] >= C)
            throw std::out_of_range("confusion: value outside [0," + std::to_string(C) + ") at sample " +
                                    std::to_string(i));
        cm.at(labels[i], preds[i]) += 1;
    }
    return cm;
}

struct MetricsReport {
    double accuracy = 0.0;  // percent; equals weighted recall
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    std::vector<double> per_class_precision, per_class_recall;  // percent
    ConfusionMatrix confusion;
    int64_t n_samples = 0;
};

// weighted (support-weighted) precision/recall/f1 in percent

inline void weighted_prf(const ConfusionMatrix& cm, double& precision, double& recall, double& f1,
                         std::vector<double>* per_class_p = nullptr,
                         std::vector<double>* per_class_r = nullptr) {
    const int64_t n = cm.total();
    if (cm.C <= 0 || n == 0) throw StateError("weighted_prf: empty confusion matrix");
    precision = recall = f1 = 0.0;
    if (per_class_p) per_class_p->assign(static_cast<size_t>(cm.C), 0.0);
    if (per_class_r) per_class_r->assign(static_cast<size_t>(cm.C), 0.0);
    for (int64_t c = 0; c < cm.C; ++c) {
        const double tp = static_cast<double>(cm.at(c, c));
        int64_t support = 0, predicted = 0;
        for (int64_t j = 0; j < cm.C; ++j) {
            support += cm.at(c, j);
            predicted += cm.at(j, c);
        }
        const double p = predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
        const double r = support > 0 ? tp / static_cast<double>(support) : 0.0;
        const double f = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        const double w = static_cast<double>(support) / static_cast<double>(n);
        precision += w * p;
        recall += w * r;
        f1 += w * f;
        if (per_class_p) (*per_class_p)[static_cast<size_t>(c)] = 100.0 * p;
        if (per_class_r) (*per_class_r)[static_cast<size_t>(c)] = 100.0 * r;
    }
    precision *= 100.0;
    recall *= 100.0;
    f1 *= 100.0;
}

inline MetricsReport metrics_from_confusion(ConfusionMatrix cm) {
    MetricsReport r;
    r.n_samples = cm.total();
    if (r.n_samples == 0) throw StateError("metrics: no samples");
    weighted_prf(cm, r.precision, r.recall, r.f1, &r.per_class_precision, &r.per_class_recall);
    // accuracy IS the weighted recall: sum_c (support_c/n)(tp_c/support_c)
    // = trace/n; sharing the computation keeps the identity bit-exact
    r.accuracy = r.recall;
    r.confusion = std::move(cm);
    return r;
}

struct CrossValReport {
    std::vector<MetricsReport> folds;
    double mean_accuracy = 0.0, std_accuracy = 0.0;
    double mean_precision = 0.0, std_precision = 0.0;
    double mean_recall = 0.0, std_recall = 0.0;
    double mean_f1 = 0.0, std_f1 = 0.0;
};

inline CrossValReport aggregate_folds(std::vector<MetricsReport> folds) {
    if (folds.empty()) throw StateError("aggregate: no folds");
    CrossValReport r;
    auto stats = [&](auto field, double& mean, double& sd) {
        double s = 0.0;
        for (const auto& f : folds) s += field(f);
        mean = s / static_cast<double>(folds.size());
        double v = 0.0;
        for (const auto& f : folds) v += (field(f) - mean) * (field(f) - mean);
        sd = std::sqrt(v / static_cast<double>(folds.size()));
    };
    stats([](const MetricsReport& m) { return m.accuracy; }, r.mean_accuracy, r.std_accuracy);
    stats([](const MetricsReport& m) { return m.precision; }, r.mean_precision, r.std_precision);
    stats([](const MetricsReport& m) { return m.recall; }, r.mean_recall, r.std_recall);
    stats([](const MetricsReport& m) { return m.f1; }, r.mean_f1, r.std_f1);
    r.folds = std::move(folds);
    return r;
}

}  // namespace tfw
