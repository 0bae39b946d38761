#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vogcl/checkpoint.hpp"
#include "vogcl/data.hpp"
#include "vogcl/tensor.hpp"

namespace vogcl {

// Which logit the gradient is taken of.
enum class ClassChoice { true_label, predicted };
// standard: sqrt((1/K) sum (T_i - mu)^2) per pixel.
// literal:  sqrt(1/K) * sum (T_i - mu)^2 per pixel.
enum class VogFormula { standard, literal };

ClassChoice parse_class_choice(const std::string& name);
std::string class_choice_name(ClassChoice choice);
VogFormula parse_vog_formula(const std::string& name);
std::string vog_formula_name(VogFormula formula);

struct GradientMap {
    std::string sample_id;
    std::size_t checkpoint_epoch = 0;
    Tensor values;  // H x W, channel-averaged
};

struct VogResult {
    std::string sample_id;
    double vog_score = 0.0;
    std::size_t rank = 0;     // 1 = highest score
    double difficulty = 0.0;  // (N - rank) / N * 100
};

struct VogOptions {
    ClassChoice class_choice = ClassChoice::true_label;
    VogFormula formula = VogFormula::standard;
    bool class_normalize = false;
    std::size_t batch_size = 64;
    std::size_t threads = 1;
};

// maps[s][k] is sample s under checkpoint k. Needs K >= 2 checkpoints
// sharing one arch. With ClassChoice::predicted the class is the argmax of
// the latest-epoch checkpoint, so all K maps differentiate the same logit.
std::vector<std::vector<GradientMap>> compute_gradient_maps(std::span<const ModelCheckpoint> checkpoints,
                                                            const Dataset& dataset, ClassChoice choice);

double compute_vog(std::span<const Tensor> maps, VogFormula formula = VogFormula::standard);
double compute_vog(std::span<const GradientMap> maps, VogFormula formula = VogFormula::standard);

// One score per sample in dataset order, without keeping every map in
// memory. Parallel evaluation (options.threads > 1) gives identical results.
std::vector<double> compute_vog_scores(std::span<const ModelCheckpoint> checkpoints, const Dataset& dataset,
                                       const VogOptions& options);

// z-scores within each class (mean-centred only when a class has zero spread).
std::vector<double> normalize_per_class(std::span<const double> scores, std::span<const std::size_t> labels);

// Ranks in input order: rank 1 = highest score, ties by ascending id.
// Throws DataError naming the sample on a non-finite score.
std::vector<VogResult> rank_samples(std::span<const std::pair<std::string, double>> scores);

// Mean difficulty per class; nullopt for classes with no samples.
std::vector<std::optional<double>> class_level_scores(std::span<const VogResult> results,
                                                      const std::map<std::string, std::size_t>& labels,
                                                      std::size_t num_classes);

// sample_id,vog_score,rank,difficulty
std::string scores_csv(std::span<const VogResult> results);
// Reads (sample_id, vog_score) pairs from a scores file; other columns are
// ignored, so external difficulty files may leave rank/difficulty empty.
std::vector<std::pair<std::string, double>> read_scores_csv(const std::filesystem::path& path);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace vogcl
