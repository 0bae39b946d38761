#include "vogcl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "vogcl/checkpoint.hpp"
#include "vogcl/curriculum.hpp"
#include "vogcl/errors.hpp"
#include "vogcl/io.hpp"
#include "vogcl/log.hpp"
#include "vogcl/rng.hpp"

namespace vogcl {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kRareSubtypes{"dislocation_fracture", "complex_fracture", "coronoid_fracture"};

std::string source_name(DataSource s) {
    switch (s) {
        case DataSource::synthetic: return "synthetic";
        case DataSource::idx: return "idx";
        case DataSource::directory: return "directory";
    }
    return "unknown";
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* a : allowed) known = known || it.key() == a;
        if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

template <typename T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("bad value for '" + key + "': " + j.dump());
    }
}

std::size_t get_count(const json& j, const std::string& key) {
    if (!j.is_number_integer() || j.get<long long>() < 0) {
        throw ConfigError("'" + key + "' must be a non-negative integer, got " + j.dump());
    }
    return j.get<std::size_t>();
}

std::vector<std::size_t> get_counts(const json& j, const std::string& key) {
    if (!j.is_array()) throw ConfigError("'" + key + "' must be an array of integers");
    std::vector<std::size_t> out;
    for (const json& v : j) out.push_back(get_count(v, key));
    return out;
}

std::vector<std::string> get_strings(const json& j, const std::string& key) {
    if (!j.is_array()) throw ConfigError("'" + key + "' must be an array of strings");
    std::vector<std::string> out;
    for (const json& v : j) {
        if (!v.is_string()) throw ConfigError("'" + key + "' must be an array of strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

ClassProfile get_profile(const json& j, const std::string& key) {
    if (!j.is_object()) throw ConfigError("'" + key + "' must be an object {class_name: count}");
    return parse_profile_json(j.dump());
}

// Rethrows the library's parse errors as ConfigError so the CLI maps every
// bad option value to the config exit code.
template <typename F>
auto as_config_error(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

void parse_dataset(const json& j, DatasetConfig& d) {
    check_keys(j, "dataset",
               {"source", "profile", "test_profile", "knob_range", "train_images", "train_labels", "test_images",
                "test_labels", "train_dir", "test_dir", "class_names", "train_fraction"});
    if (j.contains("source")) {
        const std::string s = get_as<std::string>(j["source"], "dataset.source");
        if (s == "synthetic") d.source = DataSource::synthetic;
        else if (s == "idx") d.source = DataSource::idx;
        else if (s == "directory") d.source = DataSource::directory;
        else throw ConfigError("unknown dataset source '" + s + "' (synthetic, idx, directory)");
    }
    if (j.contains("profile")) d.profile = get_profile(j["profile"], "dataset.profile");
    if (j.contains("test_profile")) d.test_profile = get_profile(j["test_profile"], "dataset.test_profile");
    if (j.contains("knob_range")) {
        const auto r = get_as<std::vector<double>>(j["knob_range"], "dataset.knob_range");
        if (r.size() != 2) throw ConfigError("dataset.knob_range must be [min, max]");
        d.knob_min = r[0];
        d.knob_max = r[1];
    }
    auto path = [&](const char* key, fs::path& out) {
        if (j.contains(key)) out = get_as<std::string>(j[key], std::string("dataset.") + key);
    };
    path("train_images", d.train_images);
    path("train_labels", d.train_labels);
    path("test_images", d.test_images);
    path("test_labels", d.test_labels);
    path("train_dir", d.train_dir);
    path("test_dir", d.test_dir);
    if (j.contains("class_names")) d.class_names = get_strings(j["class_names"], "dataset.class_names");
    if (j.contains("train_fraction")) d.train_fraction = get_as<double>(j["train_fraction"], "dataset.train_fraction");
}

void parse_train(const json& j, TrainConfig& t) {
    check_keys(j, "train",
               {"epochs", "batch_size", "learning_rate", "momentum", "checkpoint_epochs", "augmentation",
                "conv_filters", "dense_hidden"});
    if (j.contains("epochs")) t.epochs = get_count(j["epochs"], "train.epochs");
    if (j.contains("batch_size")) t.batch_size = get_count(j["batch_size"], "train.batch_size");
    if (j.contains("learning_rate")) t.learning_rate = get_as<double>(j["learning_rate"], "train.learning_rate");
    if (j.contains("momentum")) t.momentum = get_as<double>(j["momentum"], "train.momentum");
    if (j.contains("checkpoint_epochs")) t.checkpoint_epochs = get_counts(j["checkpoint_epochs"], "train.checkpoint_epochs");
    if (j.contains("augmentation")) t.augmentation = get_as<bool>(j["augmentation"], "train.augmentation");
    if (j.contains("conv_filters")) t.conv_filters = get_counts(j["conv_filters"], "train.conv_filters");
    if (j.contains("dense_hidden")) t.dense_hidden = get_counts(j["dense_hidden"], "train.dense_hidden");
}

void parse_vog(const json& j, VogConfig& v) {
    check_keys(j, "vog", {"checkpoint_epochs", "class_choice", "formula", "class_normalize"});
    if (j.contains("checkpoint_epochs")) v.checkpoint_epochs = get_counts(j["checkpoint_epochs"], "vog.checkpoint_epochs");
    if (j.contains("class_choice")) {
        const auto s = get_as<std::string>(j["class_choice"], "vog.class_choice");
        v.class_choice = as_config_error([&] { return parse_class_choice(s); });
    }
    if (j.contains("formula")) {
        const auto s = get_as<std::string>(j["formula"], "vog.formula");
        v.formula = as_config_error([&] { return parse_vog_formula(s); });
    }
    if (j.contains("class_normalize")) v.class_normalize = get_as<bool>(j["class_normalize"], "vog.class_normalize");
}

void require_exists(const fs::path& p, const std::string& what) {
    if (!p.empty() && !fs::exists(p)) throw ConfigError(what + " does not exist: " + p.string());
}

std::string missing_prerequisite(const fs::path& file, const std::string& producer) {
    return "missing " + file.string() + "; produce it with `" + producer + "`";
}

fs::path synthetic_dir(const ExperimentConfig& c, const char* split) { return c.output_dir / "data" / split; }

Dataset load_synthetic_split(const ExperimentConfig& config, const char* split) {
    const fs::path dir = synthetic_dir(config, split);
    if (!fs::exists(dir / "labels.csv")) {
        throw MissingPrerequisiteError(missing_prerequisite(dir / "labels.csv", "vogcl generate-data"));
    }
    Dataset ds = load_directory(dir);
    ds.split = std::string(split) == "test" ? SplitTag::test : SplitTag::train;
    return ds;
}

std::pair<Dataset, Dataset> load_raw(const ExperimentConfig& config) {
    const DatasetConfig& d = config.dataset;
    Dataset train, test;
    bool have_test = false;
    switch (d.source) {
        case DataSource::synthetic:
            return {load_synthetic_split(config, "train"), load_synthetic_split(config, "test")};
        case DataSource::idx:
            train = load_idx(d.train_images, d.train_labels);
            if (!d.test_images.empty()) {
                test = load_idx(d.test_images, d.test_labels);
                have_test = true;
            }
            if (!d.class_names.empty()) {
                const std::size_t k = std::max(train.num_classes(), have_test ? test.num_classes() : 0);
                if (d.class_names.size() < k) {
                    throw ConfigError("dataset.class_names lists " + std::to_string(d.class_names.size()) +
                                      " names but labels reach class " + std::to_string(k - 1));
                }
                train.class_names = d.class_names;
                if (have_test) test.class_names = d.class_names;
            } else if (have_test && test.num_classes() != train.num_classes()) {
                const std::size_t k = std::max(train.num_classes(), test.num_classes());
                for (Dataset* ds : {&train, &test}) {
                    while (ds->class_names.size() < k) ds->class_names.push_back(std::to_string(ds->class_names.size()));
                }
            }
            break;
        case DataSource::directory:
            train = load_directory(d.train_dir);
            if (!d.test_dir.empty()) {
                test = load_directory(d.test_dir);
                have_test = true;
                if (test.class_names != train.class_names) {
                    throw DataError("train and test directories disagree on class names");
                }
            }
            break;
    }
    if (!have_test) {
        auto [tr, te] = stratified_split(train, d.train_fraction, config.train.seed);
        return {std::move(tr), std::move(te)};
    }
    train.split = SplitTag::train;
    test.split = SplitTag::test;
    return {std::move(train), std::move(test)};
}

std::vector<std::string> task_exclusions(const TaskConfig& task, const Dataset& raw) {
    if (task.exclude_classes) return *task.exclude_classes;
    std::vector<std::string> out;
    if (task.binary) return out;
    for (const std::string& name : kRareSubtypes) {
        if (std::find(raw.class_names.begin(), raw.class_names.end(), name) != raw.class_names.end()) {
            out.push_back(name);
        }
    }
    return out;
}

std::size_t normal_index(const Dataset& ds, const std::string& name) {
    const auto it = std::find(ds.class_names.begin(), ds.class_names.end(), name);
    if (it == ds.class_names.end()) {
        std::string names;
        for (const auto& n : ds.class_names) names += (names.empty() ? "" : ", ") + n;
        throw ConfigError("normal class '" + name + "' is not one of the dataset classes (" + names + ")");
    }
    return static_cast<std::size_t>(it - ds.class_names.begin());
}

Dataset apply_task(const Dataset& raw, const TaskConfig& task, const std::vector<std::string>& excluded) {
    Dataset ds = excluded.empty() ? raw : exclude_classes(raw, excluded);
    if (task.binary) ds = collapse_to_binary(ds, normal_index(ds, task.normal_class));
    return ds;
}

std::map<std::string, double> scores_by_id(const std::vector<std::pair<std::string, double>>& scores,
                                           const fs::path& source) {
    std::map<std::string, double> out;
    for (const auto& [id, s] : scores) {
        if (!out.emplace(id, s).second) throw DataError(source.string() + ": duplicate sample id " + id);
    }
    return out;
}

std::vector<std::size_t> ranks_from_file(const fs::path& file, const Dataset& train) {
    const auto by_id = scores_by_id(read_scores_csv(file), file);
    std::vector<std::pair<std::string, double>> aligned;
    aligned.reserve(train.size());
    for (const Sample& s : train.samples) {
        const auto it = by_id.find(s.id);
        if (it == by_id.end()) throw DataError(file.string() + " has no score for training sample " + s.id);
        aligned.emplace_back(s.id, it->second);
    }
    if (by_id.size() != train.size()) {
        throw DataError(file.string() + " scores " + std::to_string(by_id.size()) + " samples but the training set has " +
                        std::to_string(train.size()));
    }
    std::vector<std::size_t> ranks;
    ranks.reserve(train.size());
    for (const VogResult& r : rank_samples(aligned)) ranks.push_back(r.rank);
    return ranks;
}

MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
    MetricsReport m;
    if (reports.empty()) return m;
    const double n = static_cast<double>(reports.size());
    for (const MetricsReport& r : reports) {
        m.accuracy += r.accuracy;
        m.recall += r.recall;
        m.recall_positive += r.recall_positive;
        m.recall_macro += r.recall_macro;
        m.auc += r.auc;
        m.f1 += r.f1;
        m.balanced_accuracy += r.balanced_accuracy;
        m.binary_accuracy += r.binary_accuracy;
        m.binary_auc += r.binary_auc;
        m.n_samples += r.n_samples;
        if (m.confusion.empty()) {
            m.confusion = r.confusion;
        } else {
            for (std::size_t i = 0; i < m.confusion.size(); ++i) {
                for (std::size_t j = 0; j < m.confusion[i].size(); ++j) m.confusion[i][j] += r.confusion[i][j];
            }
        }
    }
    m.accuracy /= n;
    m.recall /= n;
    m.recall_positive /= n;
    m.recall_macro /= n;
    m.auc /= n;
    m.f1 /= n;
    m.balanced_accuracy /= n;
    m.binary_accuracy /= n;
    m.binary_auc /= n;
    return m;
}

std::pair<double, double> mean_and_std(const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::string timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

std::vector<TrainMode> table_order(const std::vector<TrainMode>& modes) {
    std::vector<TrainMode> out;
    for (TrainMode m : {TrainMode::baseline, TrainMode::external_scores, TrainMode::curriculum,
                        TrainMode::anti_curriculum}) {
        if (std::find(modes.begin(), modes.end(), m) != modes.end()) out.push_back(m);
    }
    return out;
}

TrainResult run_training(const TrainConfig& tc, const Dataset& dataset, const std::vector<std::size_t>& ranks) {
    auto sampler = make_sampler(tc, dataset.size(), ranks);
    return train(tc, dataset, *sampler);
}

}  // namespace

fs::path ExperimentConfig::external_scores_file() const {
    return external_scores_path ? *external_scores_path : output_dir / "external_scores.csv";
}

fs::path ExperimentConfig::train_dir(TrainMode mode) const { return output_dir / ("train_" + mode_name(mode)); }

fs::path ExperimentConfig::vog_scores_file() const { return output_dir / "vog_scores.csv"; }

void ExperimentConfig::validate() const {
    train.validate();
    if (runs == 0) throw ConfigError("runs must be >= 1");
    if (jobs == 0) throw ConfigError("jobs must be >= 1");
    if (test_subsets == 0) throw ConfigError("test_subsets must be >= 1");
    if (modes.empty()) throw ConfigError("modes must name at least one training mode");
    std::set<TrainMode> seen;
    for (TrainMode m : modes) {
        if (!seen.insert(m).second) throw ConfigError("mode " + mode_name(m) + " listed twice in modes");
        TrainConfig t = train;
        t.mode = m;
        t.validate();
    }
    for (std::size_t e : vog.checkpoint_epochs) {
        if (e == 0 || e > train.epochs) {
            throw ConfigError("vog checkpoint epoch " + std::to_string(e) + " outside 1.." + std::to_string(train.epochs));
        }
    }
    if (dataset.knob_min < 0.0 || dataset.knob_max > 1.0 || dataset.knob_min > dataset.knob_max) {
        throw ConfigError("dataset.knob_range must satisfy 0 <= min <= max <= 1");
    }
    if (!(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0)) {
        throw ConfigError("dataset.train_fraction must lie in (0, 1)");
    }
    switch (dataset.source) {
        case DataSource::synthetic: break;
        case DataSource::idx:
            if (dataset.train_images.empty() || dataset.train_labels.empty()) {
                throw ConfigError("idx source needs dataset.train_images and dataset.train_labels");
            }
            if (dataset.test_images.empty() != dataset.test_labels.empty()) {
                throw ConfigError("idx test set needs both dataset.test_images and dataset.test_labels");
            }
            break;
        case DataSource::directory:
            if (dataset.train_dir.empty()) throw ConfigError("directory source needs dataset.train_dir");
            break;
    }
    const bool wants_external = train.mode == TrainMode::external_scores ||
                                std::find(modes.begin(), modes.end(), TrainMode::external_scores) != modes.end();
    if (wants_external && dataset.source != DataSource::synthetic && !external_scores_path) {
        throw ConfigError("mode external_scores needs external_scores_path for a " + source_name(dataset.source) +
                          " dataset");
    }
}

ExperimentConfig parse_experiment_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const auto [line, col] = line_and_column(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ConfigError("config JSON parse error at line " + std::to_string(line) + ", column " +
                          std::to_string(col) + ": " + e.what());
    }
    check_keys(j, "config",
               {"dataset", "task", "train", "seed", "mode", "curriculum_horizon", "runs", "modes", "vog",
                "external_scores_path", "test_subsets", "auc_method", "jobs", "output_dir"});
    ExperimentConfig c;
    if (j.contains("dataset")) parse_dataset(j["dataset"], c.dataset);
    if (j.contains("task")) {
        const json& t = j["task"];
        check_keys(t, "task", {"type", "normal_class", "exclude_classes"});
        if (t.contains("type")) {
            const auto s = get_as<std::string>(t["type"], "task.type");
            if (s != "binary" && s != "multiclass") throw ConfigError("task.type must be binary or multiclass");
            c.task.binary = s == "binary";
        }
        if (t.contains("normal_class")) c.task.normal_class = get_as<std::string>(t["normal_class"], "task.normal_class");
        if (t.contains("exclude_classes")) c.task.exclude_classes = get_strings(t["exclude_classes"], "task.exclude_classes");
    }
    if (j.contains("train")) parse_train(j["train"], c.train);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
        c.train.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("mode")) {
        const auto s = get_as<std::string>(j["mode"], "mode");
        c.train.mode = parse_mode(s);
    }
    if (j.contains("curriculum_horizon")) c.train.curriculum_horizon = get_count(j["curriculum_horizon"], "curriculum_horizon");
    if (j.contains("runs")) c.runs = get_count(j["runs"], "runs");
    if (j.contains("modes")) {
        c.modes.clear();
        for (const std::string& s : get_strings(j["modes"], "modes")) c.modes.push_back(parse_mode(s));
    }
    if (j.contains("vog")) parse_vog(j["vog"], c.vog);
    if (j.contains("external_scores_path")) {
        c.external_scores_path = fs::path(get_as<std::string>(j["external_scores_path"], "external_scores_path"));
    }
    if (j.contains("test_subsets")) c.test_subsets = get_count(j["test_subsets"], "test_subsets");
    if (j.contains("auc_method")) {
        const auto s = get_as<std::string>(j["auc_method"], "auc_method");
        c.auc_method = as_config_error([&] { return parse_auc_method(s); });
    }
    if (j.contains("jobs")) c.jobs = get_count(j["jobs"], "jobs");
    if (j.contains("output_dir")) c.output_dir = get_as<std::string>(j["output_dir"], "output_dir");
    c.validate();

    require_exists(c.dataset.train_images, "dataset.train_images");
    require_exists(c.dataset.train_labels, "dataset.train_labels");
    require_exists(c.dataset.test_images, "dataset.test_images");
    require_exists(c.dataset.test_labels, "dataset.test_labels");
    require_exists(c.dataset.train_dir, "dataset.train_dir");
    require_exists(c.dataset.test_dir, "dataset.test_dir");
    if (c.external_scores_path && c.dataset.source != DataSource::synthetic) {
        require_exists(*c.external_scores_path, "external_scores_path");
    }
    return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file does not exist: " + path.string());
    try {
        return parse_experiment_config(read_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void apply_overrides(ExperimentConfig& config, const ConfigOverrides& o) {
    as_config_error([&] {
        if (o.mode) config.train.mode = parse_mode(*o.mode);
        if (o.seed) config.train.seed = *o.seed;
        if (o.curriculum_horizon) config.train.curriculum_horizon = *o.curriculum_horizon;
        if (o.vog_formula) config.vog.formula = parse_vog_formula(*o.vog_formula);
        if (o.class_choice) config.vog.class_choice = parse_class_choice(*o.class_choice);
        if (o.auc_method) config.auc_method = parse_auc_method(*o.auc_method);
        if (o.output_dir) config.output_dir = *o.output_dir;
        return 0;
    });
    config.validate();
}

TaskData load_task_data(const ExperimentConfig& config) {
    auto [raw_train, raw_test] = load_raw(config);
    if (raw_train.empty()) throw DataError("the training set is empty");
    const std::vector<std::string> excluded = task_exclusions(config.task, raw_train);
    TaskData t;
    t.raw_class_names = raw_train.class_names;
    t.train = apply_task(raw_train, config.task, excluded);
    t.test = apply_task(raw_test, config.task, excluded);
    std::map<std::string, std::size_t> raw_label;
    for (const Sample& s : raw_train.samples) raw_label.emplace(s.id, s.label);
    for (const Sample& s : t.train.samples) t.train_raw_labels.push_back(raw_label.at(s.id));
    t.normal_class = normal_index(t.train, config.task.normal_class);
    t.train.validate();
    t.test.validate();
    return t;
}

std::vector<std::size_t> curriculum_ranks(const ExperimentConfig& config, TrainMode mode, const Dataset& train) {
    switch (mode) {
        case TrainMode::baseline:
            return {};
        case TrainMode::curriculum:
        case TrainMode::anti_curriculum: {
            const fs::path file = config.vog_scores_file();
            if (!fs::exists(file)) throw MissingPrerequisiteError(missing_prerequisite(file, "vogcl vog"));
            return ranks_from_file(file, train);
        }
        case TrainMode::external_scores: {
            const fs::path file = config.external_scores_file();
            if (!fs::exists(file)) {
                const std::string producer = config.dataset.source == DataSource::synthetic
                                                 ? "vogcl generate-data"
                                                 : "an external scores file (sample_id,vog_score)";
                throw MissingPrerequisiteError(missing_prerequisite(file, producer));
            }
            return ranks_from_file(file, train);
        }
    }
    return {};
}

std::string class_count_table(const Dataset& train, const Dataset& test, const std::string& normal_class) {
    std::vector<std::string> names = train.class_names;
    for (const auto& n : test.class_names) {
        if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    }
    auto counts = [&](const Dataset& ds) {
        std::vector<std::size_t> c(names.size(), 0);
        for (const Sample& s : ds.samples) {
            const std::string& n = ds.class_names[s.label];
            c[static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin())]++;
        }
        return c;
    };
    const std::vector<std::size_t> tr = counts(train), te = counts(test);
    std::vector<std::string> header{"type"};
    header.insert(header.end(), names.begin(), names.end());
    header.push_back("abnormal_total");
    header.push_back("total");
    auto row = [&](const std::string& label, const std::vector<std::size_t>& c) {
        std::vector<std::string> cells{label};
        std::size_t abnormal = 0, total = 0;
        for (std::size_t i = 0; i < names.size(); ++i) {
            cells.push_back(std::to_string(c[i]));
            total += c[i];
            if (names[i] != normal_class) abnormal += c[i];
        }
        cells.push_back(std::to_string(abnormal));
        cells.push_back(std::to_string(total));
        return cells;
    };
    std::vector<std::size_t> both(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) both[i] = tr[i] + te[i];
    const std::vector<std::vector<std::string>> rows{header, row("train", tr), row("test", te), row("total", both)};
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    }
    std::ostringstream os;
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i == 0) {
                os << std::left << std::setw(static_cast<int>(width[i])) << r[i];
            } else {
                os << "  " << std::right << std::setw(static_cast<int>(width[i])) << r[i];
            }
        }
        os << '\n';
    }
    return os.str();
}

std::string mode_label(TrainMode mode) {
    switch (mode) {
        case TrainMode::baseline: return "Baseline";
        case TrainMode::external_scores: return "RS-CL";
        case TrainMode::curriculum: return "VoG-CL";
        case TrainMode::anti_curriculum: return "Anti-VoG-CL";
    }
    return "unknown";
}

std::vector<std::string> compare_metrics(bool binary_task) {
    if (binary_task) return {"accuracy", "recall", "auc", "f1"};
    return {"accuracy", "balanced_accuracy", "auc", "binary_accuracy", "binary_auc", "f1"};
}

double metric_value(const MetricsReport& r, const std::string& metric) {
    if (metric == "accuracy") return r.accuracy;
    if (metric == "recall") return r.recall;
    if (metric == "recall_positive") return r.recall_positive;
    if (metric == "recall_macro") return r.recall_macro;
    if (metric == "auc") return r.auc;
    if (metric == "f1") return r.f1;
    if (metric == "balanced_accuracy") return r.balanced_accuracy;
    if (metric == "binary_accuracy") return r.binary_accuracy;
    if (metric == "binary_auc") return r.binary_auc;
    throw ContractError("unknown metric '" + metric + "'");
}

SubsetEvaluation evaluate_on_subsets(const Model& model, const std::vector<Dataset>& subsets,
                                     std::size_t normal_class, AucMethod method) {
    SubsetEvaluation ev;
    constexpr std::size_t kBatch = 128;
    for (const Dataset& subset : subsets) {
        std::vector<Prediction> preds;
        preds.reserve(subset.size());
        for (std::size_t start = 0; start < subset.size(); start += kBatch) {
            std::vector<std::size_t> idx;
            for (std::size_t i = start; i < std::min(subset.size(), start + kBatch); ++i) idx.push_back(i);
            const auto probs = softmax_rows(forward(model, make_batch(subset, idx)));
            for (std::size_t b = 0; b < idx.size(); ++b) {
                const Sample& s = subset.samples[idx[b]];
                preds.push_back({s.id, s.label, probs[b]});
            }
        }
        ev.subsets.push_back(evaluate_predictions(preds, subset.num_classes(), normal_class, method));
    }
    ev.mean = average_reports(ev.subsets);
    return ev;
}

void cmd_generate_data(const ExperimentConfig& config, std::ostream& out) {
    if (config.dataset.source != DataSource::synthetic) {
        throw ConfigError("generate-data needs dataset.source = synthetic, got " + source_name(config.dataset.source));
    }
    SyntheticOptions tr;
    tr.profile = config.dataset.profile;
    tr.knob_min = config.dataset.knob_min;
    tr.knob_max = config.dataset.knob_max;
    tr.seed = config.train.seed;
    SyntheticOptions te = tr;
    te.profile = config.dataset.test_profile;
    te.id_prefix = "test";
    te.split = SplitTag::test;
    const Dataset train = generate_synthetic(tr);
    const Dataset test = generate_synthetic(te);
    save_directory(train, synthetic_dir(config, "train"));
    save_directory(test, synthetic_dir(config, "test"));

    // Class-level grades, inherited by every sample, as a human grader would
    // supply them.
    std::vector<std::pair<std::string, double>> grades;
    for (const Sample& s : train.samples) grades.emplace_back(s.id, motif_expert_difficulty(s.label));
    const fs::path scores = config.output_dir / "external_scores.csv";
    write_file(scores, scores_csv(rank_samples(grades)));

    out << class_count_table(train, test, config.task.normal_class);
    out << "wrote " << synthetic_dir(config, "train").string() << ", " << synthetic_dir(config, "test").string()
        << " and " << scores.string() << '\n';
}

void cmd_train(const ExperimentConfig& config, std::ostream& out) {
    const TaskData data = load_task_data(config);
    TrainConfig tc = config.train;
    if (tc.mode == TrainMode::baseline) {
        // The baseline run doubles as the source of the VoG snapshots.
        std::set<std::size_t> epochs(tc.checkpoint_epochs.begin(), tc.checkpoint_epochs.end());
        epochs.insert(config.vog.checkpoint_epochs.begin(), config.vog.checkpoint_epochs.end());
        tc.checkpoint_epochs.assign(epochs.begin(), epochs.end());
    }
    const std::vector<std::size_t> ranks = curriculum_ranks(config, tc.mode, data.train);
    const TrainResult result = run_training(tc, data.train, ranks);

    const fs::path dir = config.train_dir(tc.mode);
    fs::create_directories(dir);
    for (const ModelCheckpoint& ck : result.checkpoints) save_checkpoint(ck, dir / checkpoint_filename(ck.epoch));
    save_checkpoint(make_checkpoint(result.model, tc.epochs, tc.digest()), dir / "model_final.vogc");
    write_file(dir / "loss_log.csv", loss_log_csv(result.log));
    write_file(dir / "train_config.json", tc.to_json() + "\n");

    double last = 0.0;
    std::size_t n = 0;
    for (const LossRecord& r : result.log) {
        if (r.epoch == tc.epochs) {
            last += r.loss;
            ++n;
        }
    }
    out << "trained " << mode_name(tc.mode) << " for " << tc.epochs << " epochs on " << data.train.size()
        << " samples; final epoch mean loss " << format_double(n ? last / static_cast<double>(n) : 0.0) << '\n';
    out << "wrote " << result.checkpoints.size() << " checkpoints to " << dir.string() << '\n';
}

void cmd_vog(const ExperimentConfig& config, std::ostream& out) {
    if (config.vog.checkpoint_epochs.size() < 2) {
        throw ContractError("VoG needs at least two checkpoints, got " +
                            std::to_string(config.vog.checkpoint_epochs.size()));
    }
    const fs::path dir = config.train_dir(TrainMode::baseline);
    std::vector<ModelCheckpoint> checkpoints;
    for (std::size_t e : config.vog.checkpoint_epochs) {
        const fs::path file = dir / checkpoint_filename(e);
        if (!fs::exists(file)) {
            throw MissingPrerequisiteError(missing_prerequisite(file, "vogcl train --mode baseline"));
        }
        checkpoints.push_back(load_checkpoint(file));
    }
    const TaskData data = load_task_data(config);
    VogOptions opts;
    opts.class_choice = config.vog.class_choice;
    opts.formula = config.vog.formula;
    opts.class_normalize = config.vog.class_normalize;
    opts.threads = config.jobs;
    std::vector<double> scores = compute_vog_scores(checkpoints, data.train, opts);
    if (config.vog.class_normalize) {
        const auto labels = data.train.labels();
        scores = normalize_per_class(scores, labels);
    }
    std::vector<std::pair<std::string, double>> pairs;
    pairs.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) pairs.emplace_back(data.train.samples[i].id, scores[i]);
    const std::vector<VogResult> results = rank_samples(pairs);
    write_file(config.vog_scores_file(), scores_csv(results));

    out << "scored " << results.size() << " samples from " << checkpoints.size() << " checkpoints";
    const bool have_knob = std::all_of(data.train.samples.begin(), data.train.samples.end(),
                                       [](const Sample& s) { return s.meta.count("knob") > 0; });
    if (have_knob && scores.size() > 1) {
        std::vector<double> knob;
        for (const Sample& s : data.train.samples) knob.push_back(s.meta.at("knob"));
        out << "; spearman vs knob " << format_double(spearman(scores, knob));
    }
    out << "\nwrote " << config.vog_scores_file().string() << '\n';
}

void cmd_evaluate(const ExperimentConfig& config, std::ostream& out) {
    const TrainMode mode = config.train.mode;
    const fs::path file = config.train_dir(mode) / "model_final.vogc";
    if (!fs::exists(file)) {
        throw MissingPrerequisiteError(missing_prerequisite(file, "vogcl train --mode " + mode_name(mode)));
    }
    const Model model = load_checkpoint(file).to_model();
    const TaskData data = load_task_data(config);
    const auto subsets = balanced_test_subsets(data.test, data.normal_class, config.test_subsets, config.train.seed);
    const SubsetEvaluation ev = evaluate_on_subsets(model, subsets, data.normal_class, config.auc_method);

    json j;
    j["mode"] = mode_name(mode);
    j["auc_method"] = auc_method_name(config.auc_method);
    j["subsets"] = json::array();
    for (const MetricsReport& r : ev.subsets) j["subsets"].push_back(json::parse(report_to_json(r)));
    j["mean"] = json::parse(report_to_json(ev.mean));
    const fs::path target = config.output_dir / ("metrics_" + mode_name(mode) + ".json");
    write_file(target, j.dump(2) + "\n");

    for (const std::string& m : compare_metrics(config.task.binary)) {
        out << m << ' ' << format_double(metric_value(ev.mean, m)) << '\n';
    }
    out << "wrote " << target.string() << '\n';
}

void cmd_compare(const ExperimentConfig& config, std::ostream& out) {
    const auto started = std::chrono::steady_clock::now();
    const std::string start_stamp = timestamp();
    const TaskData data = load_task_data(config);
    const auto subsets = balanced_test_subsets(data.test, data.normal_class, config.test_subsets, config.train.seed);
    const std::vector<TrainMode> modes = table_order(config.modes);

    // Prerequisites are resolved up front so a missing file fails fast, and
    // only for the modes that need them.
    std::map<TrainMode, std::vector<std::size_t>> ranks;
    for (TrainMode m : modes) ranks[m] = curriculum_ranks(config, m, data.train);

    struct Job {
        TrainMode mode;
        std::size_t run;
        std::uint64_t seed;
        MetricsReport mean;
        double seconds = 0.0;
        std::exception_ptr error;
    };
    std::vector<Job> jobs;
    for (TrainMode m : modes) {
        for (std::size_t r = 0; r < config.runs; ++r) {
            // Every mode sees the same seed in run r, so runs differ only
            // in the sampling order.
            jobs.push_back({m, r, derive_seed(config.train.seed, "run-" + std::to_string(r)), {}, 0.0, nullptr});
        }
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            Job& job = jobs[i];
            try {
                const auto t0 = std::chrono::steady_clock::now();
                TrainConfig tc = config.train;
                tc.mode = job.mode;
                tc.seed = job.seed;
                tc.checkpoint_epochs.clear();
                const TrainResult result = run_training(tc, data.train, ranks.at(job.mode));
                job.mean = evaluate_on_subsets(result.model, subsets, data.normal_class, config.auc_method).mean;
                job.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            } catch (...) {
                job.error = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(config.jobs, jobs.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();
    for (const Job& job : jobs) {
        if (job.error) std::rethrow_exception(job.error);
    }

    const std::vector<std::string> metrics = compare_metrics(config.task.binary);
    std::string runs_csv = "mode,run,seed";
    std::string table = "mode";
    for (const std::string& m : metrics) {
        runs_csv += "," + m;
        table += "," + m + "_mean," + m + "_std";
    }
    runs_csv += "\n";
    table += "\n";
    for (const Job& job : jobs) {
        runs_csv += mode_label(job.mode) + "," + std::to_string(job.run) + "," + std::to_string(job.seed);
        for (const std::string& m : metrics) runs_csv += "," + format_double(metric_value(job.mean, m));
        runs_csv += "\n";
    }
    std::ostringstream shown;
    shown << std::left << std::setw(12) << "mode";
    for (const std::string& m : metrics) shown << std::setw(22) << m;
    shown << '\n';
    for (TrainMode mode : modes) {
        table += mode_label(mode);
        shown << std::left << std::setw(12) << mode_label(mode);
        for (const std::string& m : metrics) {
            std::vector<double> values;
            for (const Job& job : jobs) {
                if (job.mode == mode) values.push_back(metric_value(job.mean, m));
            }
            const auto [mean, sd] = mean_and_std(values);
            table += "," + format_double(mean) + "," + format_double(sd);
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(4) << mean << " +- " << sd;
            shown << std::setw(22) << cell.str();
        }
        table += "\n";
        shown << '\n';
    }
    write_file(config.output_dir / "compare.csv", table);
    write_file(config.output_dir / "compare_runs.csv", runs_csv);

    std::ostringstream log;
    log << "started " << start_stamp << '\n';
    for (const Job& job : jobs) {
        log << mode_name(job.mode) << " run " << job.run << " seed " << job.seed << " took " << std::fixed
            << std::setprecision(2) << job.seconds << " s\n";
    }
    log << "finished " << timestamp() << " after " << std::fixed << std::setprecision(2)
        << std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count() << " s with "
        << threads << " worker(s)\n";
    write_file(config.output_dir / "compare.log", log.str());

    out << shown.str() << "wrote " << (config.output_dir / "compare.csv").string() << '\n';
}

void cmd_schedule_preview(const ExperimentConfig& config, const std::vector<std::size_t>& explicit_ranks,
                          std::ostream& out) {
    std::vector<std::size_t> ranks = explicit_ranks;
    std::vector<std::string> ids;
    TrainMode mode = config.train.mode == TrainMode::baseline ? TrainMode::curriculum : config.train.mode;
    if (ranks.empty()) {
        const TaskData data = load_task_data(config);
        ranks = curriculum_ranks(config, mode, data.train);
        for (const Sample& s : data.train.samples) ids.push_back(s.id);
    } else {
        for (std::size_t i = 0; i < ranks.size(); ++i) ids.push_back(std::to_string(i));
    }
    const CurriculumMode cm =
        mode == TrainMode::anti_curriculum ? CurriculumMode::anti_curriculum : CurriculumMode::curriculum;
    CurriculumSchedule schedule(ranks, config.train.curriculum_horizon, cm);
    std::string csv = "epoch,sample_id,probability\n";
    for (std::size_t e = 1; e <= schedule.horizon() + 1; ++e) {
        const auto& p = schedule.probabilities();
        for (std::size_t i = 0; i < p.size(); ++i) {
            csv += std::to_string(e) + "," + ids[i] + "," + format_double(p[i]) + "\n";
        }
        schedule.advance_epoch();
    }
    const fs::path target = config.output_dir / "schedule_preview.csv";
    write_file(target, csv);
    out << "previewed " << ranks.size() << " samples over " << schedule.horizon() + 1 << " epochs\nwrote "
        << target.string() << '\n';
}

void cmd_histogram(const ExperimentConfig& config, const std::optional<fs::path>& scores_path, std::ostream& out) {
    const fs::path file = scores_path ? *scores_path : config.vog_scores_file();
    if (!fs::exists(file)) throw MissingPrerequisiteError(missing_prerequisite(file, "vogcl vog"));
    const TaskData data = load_task_data(config);
    const auto scores = read_scores_csv(file);

    std::map<std::string, std::size_t> raw_of;
    for (std::size_t i = 0; i < data.train.size(); ++i) raw_of.emplace(data.train.samples[i].id, data.train_raw_labels[i]);
    for (const auto& [id, s] : scores) {
        if (raw_of.find(id) == raw_of.end()) throw DataError(file.string() + " scores unknown sample " + id);
    }
    const std::vector<VogResult> results = rank_samples(scores);
    const std::size_t k = data.raw_class_names.size();
    const auto vog_level = class_level_scores(results, raw_of, k);

    std::vector<std::optional<double>> expert(k);
    const fs::path ext = config.external_scores_file();
    if (fs::exists(ext)) {
        std::vector<double> sum(k, 0.0);
        std::vector<std::size_t> n(k, 0);
        for (const auto& [id, s] : read_scores_csv(ext)) {
            const auto it = raw_of.find(id);
            if (it == raw_of.end()) continue;
            sum[it->second] += s;
            ++n[it->second];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (n[c] > 0) expert[c] = sum[c] / static_cast<double>(n[c]);
        }
    }
    std::vector<std::size_t> count(k, 0);
    for (const auto& [id, s] : scores) ++count[raw_of.at(id)];

    std::string csv = "class,count,vog_difficulty,expert_score\n";
    for (std::size_t c = 0; c < k; ++c) {
        csv += data.raw_class_names[c] + "," + std::to_string(count[c]) + "," +
               (vog_level[c] ? format_double(*vog_level[c]) : "") + "," + (expert[c] ? format_double(*expert[c]) : "") +
               "\n";
        out << std::left << std::setw(24) << data.raw_class_names[c] << std::right << std::setw(6) << count[c];
        if (vog_level[c]) out << std::setw(10) << std::fixed << std::setprecision(2) << *vog_level[c];
        out << '\n';
    }
    const fs::path target = config.output_dir / "class_difficulty.csv";
    write_file(target, csv);
    out << "wrote " << target.string() << '\n';
}

}  // namespace vogcl
