#include "vogcl/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

#include <json.hpp>

#include "vogcl/errors.hpp"
#include "vogcl/log.hpp"

namespace vogcl {

std::size_t Prediction::predicted_label() const {
    if (collapsed_label) return *collapsed_label;
    if (scores.empty()) throw ContractError("prediction " + sample_id + " has no scores");
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c) {
        if (scores[c] > scores[best]) best = c;
    }
    return best;
}

namespace {

void require_nonempty(std::span<const Prediction> predictions, const char* what) {
    if (predictions.empty()) throw ContractError(std::string(what) + " needs at least one prediction");
}

std::size_t class_count(std::span<const Prediction> predictions) {
    std::size_t n = 0;
    for (const Prediction& p : predictions) n = std::max({n, p.scores.size(), p.true_label + 1});
    return n;
}

struct ClassCounts {
    std::vector<std::size_t> tp, fp, fn, support;
};

ClassCounts class_counts(const ConfusionMatrix& cm) {
    const std::size_t k = cm.size();
    ClassCounts c{std::vector<std::size_t>(k, 0), std::vector<std::size_t>(k, 0), std::vector<std::size_t>(k, 0),
                  std::vector<std::size_t>(k, 0)};
    for (std::size_t t = 0; t < k; ++t) {
        for (std::size_t p = 0; p < k; ++p) {
            c.support[t] += cm[t][p];
            if (t == p) {
                c.tp[t] += cm[t][p];
            } else {
                c.fn[t] += cm[t][p];
                c.fp[p] += cm[t][p];
            }
        }
    }
    return c;
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const Prediction> predictions, std::size_t num_classes) {
    ConfusionMatrix cm(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (const Prediction& p : predictions) {
        const std::size_t pred = p.predicted_label();
        if (p.true_label >= num_classes || pred >= num_classes) {
            throw LabelError("prediction " + p.sample_id + " has label outside [0, " + std::to_string(num_classes) + ")");
        }
        ++cm[p.true_label][pred];
    }
    return cm;
}

double accuracy(std::span<const Prediction> predictions) {
    require_nonempty(predictions, "accuracy");
    std::size_t correct = 0;
    for (const Prediction& p : predictions) correct += p.predicted_label() == p.true_label ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double recall_of_class(std::span<const Prediction> predictions, std::size_t positive_class) {
    require_nonempty(predictions, "recall");
    std::size_t tp = 0, support = 0;
    for (const Prediction& p : predictions) {
        if (p.true_label != positive_class) continue;
        ++support;
        tp += p.predicted_label() == positive_class ? 1 : 0;
    }
    if (support == 0) throw UndefinedMetricError("recall undefined: class " + std::to_string(positive_class) +
                                                 " has no samples");
    return static_cast<double>(tp) / static_cast<double>(support);
}

double balanced_accuracy(const ConfusionMatrix& confusion) {
    const ClassCounts c = class_counts(confusion);
    double total = 0.0;
    std::size_t classes = 0;
    for (std::size_t k = 0; k < confusion.size(); ++k) {
        if (c.support[k] == 0) {
            log_warning("balanced accuracy: class " + std::to_string(k) + " has no samples, excluded");
            continue;
        }
        total += static_cast<double>(c.tp[k]) / static_cast<double>(c.support[k]);
        ++classes;
    }
    if (classes == 0) throw UndefinedMetricError("balanced accuracy undefined: no classes with samples");
    return total / static_cast<double>(classes);
}

double balanced_accuracy(std::span<const Prediction> predictions) {
    require_nonempty(predictions, "balanced_accuracy");
    return balanced_accuracy(confusion_matrix(predictions, class_count(predictions)));
}

double recall_macro(std::span<const Prediction> predictions) {
    require_nonempty(predictions, "recall");
    const ConfusionMatrix cm = confusion_matrix(predictions, class_count(predictions));
    const ClassCounts c = class_counts(cm);
    double total = 0.0;
    std::size_t classes = 0;
    for (std::size_t k = 0; k < cm.size(); ++k) {
        if (c.support[k] == 0) continue;
        total += static_cast<double>(c.tp[k]) / static_cast<double>(c.support[k]);
        ++classes;
    }
    return total / static_cast<double>(classes);
}

double f1_macro(std::span<const Prediction> predictions) {
    require_nonempty(predictions, "f1");
    const ConfusionMatrix cm = confusion_matrix(predictions, class_count(predictions));
    const ClassCounts c = class_counts(cm);
    double total = 0.0;
    std::size_t classes = 0;
    for (std::size_t k = 0; k < cm.size(); ++k) {
        if (c.support[k] == 0) continue;
        const double tp = static_cast<double>(c.tp[k]);
        const double denom = 2.0 * tp + static_cast<double>(c.fp[k] + c.fn[k]);
        total += denom > 0.0 ? 2.0 * tp / denom : 0.0;
        ++classes;
    }
    return total / static_cast<double>(classes);
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Twice the Mann-Whitney U, kept integral: doubled midrank of a tie
    // group occupying sorted positions [start, end) is start + end + 1.
    std::uint64_t rank_sum2 = 0, positives = 0;
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start + 1;
        while (end < n && scores[order[end]] == scores[order[start]]) ++end;
        for (std::size_t i = start; i < end; ++i) {
            if (labels[order[i]] != 0) {
                rank_sum2 += start + end + 1;
                ++positives;
            }
        }
        start = end;
    }
    const std::uint64_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        throw UndefinedMetricError("AUC undefined: need both positive and negative examples");
    }
    const std::uint64_t u2 = rank_sum2 - positives * (positives + 1);
    return static_cast<double>(u2) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double auc_trapezoid(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    // Walk thresholds from high to low; each tie group moves the ROC point by
    // (fp_g, tp_g). Twice the trapezoid area stays an integer.
    std::uint64_t tp = 0, fp = 0, area2 = 0;
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start + 1;
        while (end < n && scores[order[end]] == scores[order[start]]) ++end;
        std::uint64_t tp_g = 0, fp_g = 0;
        for (std::size_t i = start; i < end; ++i) {
            if (labels[order[i]] != 0) {
                ++tp_g;
            } else {
                ++fp_g;
            }
        }
        area2 += fp_g * (2 * tp + tp_g);
        tp += tp_g;
        fp += fp_g;
        start = end;
    }
    if (tp == 0 || fp == 0) throw UndefinedMetricError("AUC undefined: need both positive and negative examples");
    return static_cast<double>(area2) / (2.0 * static_cast<double>(tp) * static_cast<double>(fp));
}

double auc(std::span<const Prediction> predictions, std::size_t positive_class) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(predictions.size());
    labels.reserve(predictions.size());
    for (const Prediction& p : predictions) {
        if (positive_class >= p.scores.size()) throw LabelError("positive class out of range");
        scores.push_back(p.scores[positive_class]);
        labels.push_back(p.true_label == positive_class ? 1 : 0);
    }
    return auc(scores, labels);
}

AucMethod parse_auc_method(const std::string& name) {
    if (name == "ovr-macro" || name == "ovr_macro" || name == "macro") return AucMethod::ovr_macro;
    if (name == "ovr-weighted" || name == "ovr_weighted" || name == "weighted") return AucMethod::ovr_weighted;
    throw ConfigError("unknown AUC method '" + name + "' (expected ovr-macro or ovr-weighted)");
}

std::string auc_method_name(AucMethod method) {
    return method == AucMethod::ovr_macro ? "ovr-macro" : "ovr-weighted";
}

double multiclass_auc(std::span<const Prediction> predictions, AucMethod method) {
    require_nonempty(predictions, "multiclass_auc");
    const std::size_t k = class_count(predictions);
    std::vector<std::size_t> support(k, 0);
    for (const Prediction& p : predictions) ++support[p.true_label];
    double total = 0.0, weight = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        if (support[c] == 0 || support[c] == predictions.size()) {
            if (support[c] == predictions.size()) {
                throw UndefinedMetricError("AUC undefined: every sample belongs to class " + std::to_string(c));
            }
            log_warning("one-vs-rest AUC: class " + std::to_string(c) + " absent from truth, skipped");
            continue;
        }
        const double w = method == AucMethod::ovr_macro ? 1.0 : static_cast<double>(support[c]);
        total += w * auc(predictions, c);
        weight += w;
    }
    return total / weight;
}

std::vector<Prediction> binary_collapse(std::span<const Prediction> predictions, std::size_t normal_class) {
    std::vector<Prediction> out;
    out.reserve(predictions.size());
    for (const Prediction& p : predictions) {
        if (normal_class >= p.scores.size()) throw LabelError("normal class out of range");
        const double normal = p.scores[normal_class];
        Prediction q;
        q.sample_id = p.sample_id;
        q.true_label = p.true_label == normal_class ? 0 : 1;
        q.scores = {normal, 1.0 - normal};
        q.collapsed_label = p.predicted_label() == normal_class ? 0 : 1;
        out.push_back(std::move(q));
    }
    return out;
}

MetricsReport evaluate_predictions(std::span<const Prediction> predictions, std::size_t num_classes,
                                   std::size_t normal_class, AucMethod method) {
    require_nonempty(predictions, "evaluate_predictions");
    MetricsReport r;
    r.n_samples = predictions.size();
    r.confusion = confusion_matrix(predictions, num_classes);
    r.accuracy = accuracy(predictions);
    r.recall_macro = recall_macro(predictions);
    r.recall = r.recall_macro;
    r.f1 = f1_macro(predictions);
    r.balanced_accuracy = balanced_accuracy(r.confusion);
    const std::vector<Prediction> collapsed = binary_collapse(predictions, normal_class);
    r.binary_accuracy = accuracy(collapsed);
    r.binary_auc = auc(std::span<const Prediction>(collapsed), 1);
    if (num_classes == 2) {
        const std::size_t positive = normal_class == 0 ? 1 : 0;
        r.recall_positive = recall_of_class(predictions, positive);
        r.auc = auc(predictions, positive);
    } else {
        r.recall_positive = recall_of_class(collapsed, 1);
        r.auc = multiclass_auc(predictions, method);
    }
    return r;
}

std::string report_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["accuracy"] = r.accuracy;
    j["recall"] = r.recall;
    j["recall_positive"] = r.recall_positive;
    j["recall_macro"] = r.recall_macro;
    j["auc"] = r.auc;
    j["f1"] = r.f1;
    j["balanced_accuracy"] = r.balanced_accuracy;
    j["binary_accuracy"] = r.binary_accuracy;
    j["binary_auc"] = r.binary_auc;
    j["n_samples"] = r.n_samples;
    j["confusion"] = r.confusion;
    return j.dump(2);
}

}  // namespace vogcl
