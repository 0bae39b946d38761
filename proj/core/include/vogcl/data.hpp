#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vogcl/tensor.hpp"

namespace vogcl {

struct Sample {
    std::string id;
    Tensor image;  // C x H x W, values in [0, 1]
    std::size_t label = 0;
    std::map<std::string, double> meta{};
};

enum class SplitTag { train, test };

struct Dataset {
    std::vector<Sample> samples;
    std::vector<std::string> class_names;
    SplitTag split = SplitTag::train;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    std::size_t num_classes() const noexcept { return class_names.size(); }
    std::vector<std::size_t> class_counts() const;
    std::vector<std::size_t> labels() const;
    // Index of the class with this name; throws DataError if unknown.
    std::size_t class_index(const std::string& name) const;

    // Checks unique ids, labels within class_names, pixel range and a
    // common image shape. Throws DataError.
    void validate() const;
};

// Ordered class name -> count.
using ClassProfile = std::vector<std::pair<std::string, std::size_t>>;

// Per-subtype counts of the reference elbow study: train and test columns.
ClassProfile reference_train_profile();
ClassProfile reference_test_profile();

// Parses a JSON object {class_name: count}, keeping key order. Syntax
// errors are reported as ConfigError with line and column.
ClassProfile parse_profile_json(const std::string& text);

struct SyntheticOptions {
    ClassProfile profile = reference_train_profile();
    double knob_min = 0.0;
    double knob_max = 1.0;
    std::uint64_t seed = 0;
    std::string id_prefix = "train";
    SplitTag split = SplitTag::train;
    std::size_t height = 32;
    std::size_t width = 32;
};

// 1 x H x W images, one geometric motif per class (cycled if more than
// seven classes). A per-sample knob d ~ U[knob_min, knob_max] sets Gaussian
// noise sigma = 0.05 + 0.45 d and floor(4 d) clutter squares. Pixels are
// quantized to 8 bits so the directory format round-trips exactly. The
// knob and distractor count are kept in meta ("knob", "distractors").
Dataset generate_synthetic(const SyntheticOptions& options);

// Class-level difficulty a human grader would assign to each synthetic motif
// (1 = easiest). Stand-in for externally supplied radiologist scores.
double motif_expert_difficulty(std::size_t class_index);

// IDX (big-endian) image / label files, magic 0x00000803 / 0x00000801.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
void save_idx(const Dataset& dataset, const std::filesystem::path& images, const std::filesystem::path& labels);

// Directory layout: root/<id>.pgm (binary P5) + labels.csv (id,label),
// plus optional classes.csv (index,name) and meta.csv (id,<key>...).
Dataset load_directory(const std::filesystem::path& root);
void save_directory(const Dataset& dataset, const std::filesystem::path& root);

// Per-class split with rounding to nearest. Classes with fewer than two
// samples go entirely to train (with a warning).
std::pair<Dataset, Dataset> stratified_split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

// k test sets, each holding one disjoint chunk of the majority class plus
// every non-majority sample.
std::vector<Dataset> balanced_test_subsets(const Dataset& test, std::size_t majority_class, std::size_t k,
                                           std::uint64_t seed);

// Relabels: `normal_class` -> 0 ("normal"), everything else -> 1 ("abnormal").
Dataset collapse_to_binary(const Dataset& dataset, std::size_t normal_class);

// Drops the named classes and renumbers the remaining labels densely.
Dataset exclude_classes(const Dataset& dataset, std::span<const std::string> names);

// Stacks the selected images into [B x C x H x W].
Tensor make_batch(const Dataset& dataset, std::span<const std::size_t> indices);

}  // namespace vogcl
