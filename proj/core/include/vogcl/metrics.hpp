#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vogcl {

struct Prediction {
    std::string sample_id;
    std::size_t true_label = 0;
    std::vector<double> scores;  // post-softmax, one per class
    // Set only by binary_collapse, where the label comes from the collapsed
    // multi-class argmax rather than from the collapsed scores.
    std::optional<std::size_t> collapsed_label{};

    // argmax of scores (ties go to the lowest index) unless collapsed.
    std::size_t predicted_label() const;
};

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [truth][predicted]

ConfusionMatrix confusion_matrix(std::span<const Prediction> predictions, std::size_t num_classes);

double accuracy(std::span<const Prediction> predictions);
// Macro average of per-class recall over classes present in the truth.
double recall_macro(std::span<const Prediction> predictions);
double recall_of_class(std::span<const Prediction> predictions, std::size_t positive_class);
// Macro F1 over classes present in the truth.
double f1_macro(std::span<const Prediction> predictions);
// Mean per-class recall from a confusion matrix; classes with no truth
// samples are skipped with a warning.
double balanced_accuracy(const ConfusionMatrix& confusion);
double balanced_accuracy(std::span<const Prediction> predictions);

// Mann-Whitney AUC: P(score of random positive > random negative), ties 1/2.
// Throws UndefinedMetricError when either side is empty.
double auc(std::span<const double> scores, std::span<const int> labels);
double auc(std::span<const Prediction> predictions, std::size_t positive_class);
// Area under the empirical ROC curve by the trapezoidal rule.
double auc_trapezoid(std::span<const double> scores, std::span<const int> labels);

enum class AucMethod { ovr_macro, ovr_weighted };

AucMethod parse_auc_method(const std::string& name);
std::string auc_method_name(AucMethod method);

// One-vs-rest AUC over classes that have both positives and negatives.
double multiclass_auc(std::span<const Prediction> predictions, AucMethod method = AucMethod::ovr_macro);

// Truth and predicted labels: normal -> 0, everything else -> 1. Collapsed
// scores are {score(normal), 1 - score(normal)}, so binary AUC ranks by
// 1 - score(normal).
std::vector<Prediction> binary_collapse(std::span<const Prediction> predictions, std::size_t normal_class);

struct MetricsReport {
    double accuracy = 0.0;
    double recall = 0.0;  // macro, the headline
    double recall_positive = 0.0;
    double recall_macro = 0.0;
    double auc = 0.0;
    double f1 = 0.0;
    double balanced_accuracy = 0.0;
    double binary_accuracy = 0.0;
    double binary_auc = 0.0;
    std::size_t n_samples = 0;
    ConfusionMatrix confusion;
};

// Full report. For two classes the positive class is 1 and AUC is binary;
// otherwise AUC is multiclass per `method`. Binary-collapsed fields use
// `normal_class`.
MetricsReport evaluate_predictions(std::span<const Prediction> predictions, std::size_t num_classes,
                                   std::size_t normal_class, AucMethod method = AucMethod::ovr_macro);

std::string report_to_json(const MetricsReport& report);

}  // namespace vogcl
