#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vogcl/errors.hpp"
#include "vogcl/experiment.hpp"
#include "vogcl/io.hpp"

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kMissing = 3, kData = 4 };

struct Options {
    std::string config;
    vogcl::ConfigOverrides overrides;
    std::string ranks;
    std::string scores;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "JSON experiment config");
    cmd->add_option("--mode", o.overrides.mode, "baseline | curriculum | anti_curriculum | external_scores");
    cmd->add_option("--seed", o.overrides.seed, "master seed");
    cmd->add_option("--curriculum-horizon", o.overrides.curriculum_horizon, "epochs until sampling is uniform");
    cmd->add_option("--vog-formula", o.overrides.vog_formula, "standard | literal");
    cmd->add_option("--class-choice", o.overrides.class_choice, "true | predicted");
    cmd->add_option("--auc-method", o.overrides.auc_method, "ovr-macro | ovr-weighted");
    cmd->add_option("--output-dir", o.overrides.output_dir, "where artifacts are written");
}

vogcl::ExperimentConfig resolve(const Options& o) {
    vogcl::ExperimentConfig config =
        o.config.empty() ? vogcl::ExperimentConfig{} : vogcl::load_experiment_config(o.config);
    vogcl::apply_overrides(config, o.overrides);
    return config;
}

std::vector<std::size_t> parse_ranks(const std::string& text) {
    std::vector<std::size_t> ranks;
    if (text.empty()) return ranks;
    for (const std::string& field : vogcl::split(text, ',')) {
        try {
            ranks.push_back(vogcl::parse_uint(field, "--ranks"));
        } catch (const vogcl::Error& e) {
            throw vogcl::ConfigError(e.what());
        }
    }
    return ranks;
}

int run(const std::function<void()>& body) {
    try {
        body();
        return kOk;
    } catch (const vogcl::MissingPrerequisiteError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kMissing;
    } catch (const vogcl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const vogcl::ContractError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const vogcl::ArchError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const vogcl::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const vogcl::FormatError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const vogcl::CheckpointError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kOther;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Difficulty-ranked curriculum training with variance-of-gradients scores"};
    app.require_subcommand(1);
    Options o;

    auto* gen = app.add_subcommand("generate-data", "write the synthetic train/test sets and grader scores");
    auto* train = app.add_subcommand("train", "train one mode; the baseline run also keeps the VoG checkpoints");
    auto* vog = app.add_subcommand("vog", "score training samples from the baseline checkpoints");
    auto* eval = app.add_subcommand("evaluate", "evaluate a trained mode on the balanced test subsets");
    auto* compare = app.add_subcommand("compare", "train every mode for several seeds and tabulate mean/std");
    auto* preview = app.add_subcommand("schedule-preview", "dump the per-epoch sampling probabilities");
    auto* hist = app.add_subcommand("histogram", "class-level difficulty from a scores file");
    for (CLI::App* cmd : {gen, train, vog, eval, compare, preview, hist}) add_common(cmd, o);
    preview->add_option("--ranks", o.ranks, "comma-separated ranks to preview instead of the VoG scores");
    hist->add_option("--scores", o.scores, "scores CSV (default <output_dir>/vog_scores.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    return run([&] {
        const vogcl::ExperimentConfig config = resolve(o);
        if (gen->parsed()) vogcl::cmd_generate_data(config, std::cout);
        else if (train->parsed()) vogcl::cmd_train(config, std::cout);
        else if (vog->parsed()) vogcl::cmd_vog(config, std::cout);
        else if (eval->parsed()) vogcl::cmd_evaluate(config, std::cout);
        else if (compare->parsed()) vogcl::cmd_compare(config, std::cout);
        else if (preview->parsed()) vogcl::cmd_schedule_preview(config, parse_ranks(o.ranks), std::cout);
        else if (hist->parsed()) {
            std::optional<std::filesystem::path> scores;
            if (!o.scores.empty()) scores = o.scores;
            vogcl::cmd_histogram(config, scores, std::cout);
        }
    });
}
