#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vogcl/data.hpp"
#include "vogcl/metrics.hpp"
#include "vogcl/trainer.hpp"
#include "vogcl/vog.hpp"

namespace vogcl {

enum class DataSource { synthetic, idx, directory };

struct DatasetConfig {
    DataSource source = DataSource::synthetic;
    // synthetic
    ClassProfile profile = reference_train_profile();
    ClassProfile test_profile = reference_test_profile();
    double knob_min = 0.0;
    double knob_max = 1.0;
    // idx / directory; without a test set the train set is split
    std::filesystem::path train_images, train_labels, test_images, test_labels;
    std::filesystem::path train_dir, test_dir;
    std::vector<std::string> class_names;  // idx only; default "0".."K-1"
    double train_fraction = 0.8;
};

struct TaskConfig {
    bool binary = true;
    std::string normal_class = "normal";
    // Classes dropped before training. Unset means none for the binary task
    // and, for the multi-class task, whichever of the three rarest reference
    // subtypes the data contains.
    std::optional<std::vector<std::string>> exclude_classes;
};

struct VogConfig {
    std::vector<std::size_t> checkpoint_epochs{26, 28, 30};
    ClassChoice class_choice = ClassChoice::true_label;
    VogFormula formula = VogFormula::standard;
    bool class_normalize = false;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    TaskConfig task;
    // Carries seed, mode and curriculum horizon. Extra checkpoint epochs start
    // empty; the baseline run adds vog.checkpoint_epochs itself.
    TrainConfig train = [] {
        TrainConfig t;
        t.checkpoint_epochs.clear();
        return t;
    }();
    std::size_t runs = 5;
    std::vector<TrainMode> modes{TrainMode::baseline, TrainMode::external_scores, TrainMode::curriculum,
                                 TrainMode::anti_curriculum};
    VogConfig vog;
    std::optional<std::filesystem::path> external_scores_path;
    std::size_t test_subsets = 4;
    AucMethod auc_method = AucMethod::ovr_macro;
    std::size_t jobs = 1;
    std::filesystem::path output_dir = "vogcl_out";

    // Explicit path, or <output_dir>/external_scores.csv as written by
    // generate-data for synthetic sources.
    std::filesystem::path external_scores_file() const;
    std::filesystem::path train_dir(TrainMode mode) const;
    std::filesystem::path vog_scores_file() const;

    // Throws ConfigError.
    void validate() const;
};

// Parses the JSON config; unknown keys and bad values are ConfigErrors,
// syntax errors carry line and column. Missing keys keep their defaults.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ConfigOverrides {
    std::optional<std::string> mode;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> curriculum_horizon;
    std::optional<std::string> vog_formula;
    std::optional<std::string> class_choice;
    std::optional<std::string> auc_method;
    std::optional<std::string> output_dir;
};

void apply_overrides(ExperimentConfig& config, const ConfigOverrides& overrides);

struct TaskData {
    Dataset train;
    Dataset test;
    // Source classes and each train sample's source label, before the task
    // relabelling.
    std::vector<std::string> raw_class_names;
    std::vector<std::size_t> train_raw_labels;
    std::size_t normal_class = 0;
};

// Loads the configured source and applies the task (binary collapse or
// class exclusion). Synthetic data must have been written by
// cmd_generate_data first.
TaskData load_task_data(const ExperimentConfig& config);

// Per-sample ranks (1 = hardest) aligned with `train`, for curriculum modes.
std::vector<std::size_t> curriculum_ranks(const ExperimentConfig& config, TrainMode mode, const Dataset& train);

// Each command writes its artifacts under config.output_dir and prints a
// short human-readable summary to `out`.
void cmd_generate_data(const ExperimentConfig& config, std::ostream& out);
void cmd_train(const ExperimentConfig& config, std::ostream& out);
void cmd_vog(const ExperimentConfig& config, std::ostream& out);
void cmd_evaluate(const ExperimentConfig& config, std::ostream& out);
void cmd_compare(const ExperimentConfig& config, std::ostream& out);
// With explicit ranks the preview covers those instead of the VoG scores.
void cmd_schedule_preview(const ExperimentConfig& config, const std::vector<std::size_t>& ranks, std::ostream& out);
// Scores default to <output_dir>/vog_scores.csv.
void cmd_histogram(const ExperimentConfig& config, const std::optional<std::filesystem::path>& scores,
                   std::ostream& out);

// Table-1 style per-class counts, train / test / total rows.
std::string class_count_table(const Dataset& train, const Dataset& test, const std::string& normal_class);

// "Baseline", "RS-CL", "VoG-CL", "Anti-VoG-CL".
std::string mode_label(TrainMode mode);
// Metric columns of the comparison table for the task.
std::vector<std::string> compare_metrics(bool binary_task);
double metric_value(const MetricsReport& report, const std::string& metric);

// Evaluates a model on every subset and averages each metric.
struct SubsetEvaluation {
    std::vector<MetricsReport> subsets;
    MetricsReport mean;
};
SubsetEvaluation evaluate_on_subsets(const Model& model, const std::vector<Dataset>& subsets,
                                     std::size_t normal_class, AucMethod method);

}  // namespace vogcl
