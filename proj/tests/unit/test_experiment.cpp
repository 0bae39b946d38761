#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "helpers.hpp"
#include "vogcl/errors.hpp"
#include "vogcl/experiment.hpp"
#include "vogcl/io.hpp"

using namespace vogcl;
namespace fs = std::filesystem;

namespace {

std::string tiny_config_json(const fs::path& out, const std::string& extra = "",
                             const std::string& vog = R"({"checkpoint_epochs": [1, 2, 3]})") {
    return R"({
  "dataset": {
    "source": "synthetic",
    "profile": {"normal": 40, "ulnar_fracture": 12, "radial_fracture": 12},
    "test_profile": {"normal": 8, "ulnar_fracture": 3, "radial_fracture": 3}
  },
  "train": {"epochs": 3, "batch_size": 16, "conv_filters": [4, 8], "dense_hidden": [16]},
  "vog": )" + vog + R"(,
  "seed": 11,
  "curriculum_horizon": 2,
  "runs": 2,
  "test_subsets": 2,
  )" + extra + R"("output_dir": ")" + out.string() + R"("
})";
}

ExperimentConfig tiny_config(const fs::path& out, const std::string& extra = "",
                             const std::string& vog = R"({"checkpoint_epochs": [1, 2, 3]})") {
    return parse_experiment_config(tiny_config_json(out, extra, vog));
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(VOGCL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsFollowTheProtocol) {
    const ExperimentConfig c = parse_experiment_config("{}");
    EXPECT_EQ(c.runs, 5u);
    EXPECT_EQ(c.train.epochs, 30u);
    EXPECT_EQ(c.vog.checkpoint_epochs, (std::vector<std::size_t>{26, 28, 30}));
    EXPECT_EQ(c.train.curriculum_horizon, 10u);
    EXPECT_EQ(c.modes.size(), 4u);
    EXPECT_EQ(c.test_subsets, 4u);
    EXPECT_TRUE(c.task.binary);
    EXPECT_EQ(c.vog.formula, VogFormula::standard);
    EXPECT_EQ(c.vog.class_choice, ClassChoice::true_label);
}

TEST(Config, ParsesFields) {
    testutil::TempDir dir("cfg");
    const ExperimentConfig c = tiny_config(dir.path(), R"("mode": "anti_curriculum", "jobs": 3, "auc_method": "ovr-weighted",
  "task": {"type": "multiclass"},
  )", R"({"checkpoint_epochs": [2, 3], "formula": "literal"})");
    EXPECT_EQ(c.train.seed, 11u);
    EXPECT_EQ(c.train.mode, TrainMode::anti_curriculum);
    EXPECT_EQ(c.train.curriculum_horizon, 2u);
    EXPECT_EQ(c.vog.formula, VogFormula::literal);
    EXPECT_EQ(c.jobs, 3u);
    EXPECT_EQ(c.auc_method, AucMethod::ovr_weighted);
    EXPECT_FALSE(c.task.binary);
    EXPECT_EQ(c.dataset.profile.size(), 3u);
    EXPECT_EQ(c.external_scores_file(), dir.path() / "external_scores.csv");
    EXPECT_EQ(c.train_dir(TrainMode::baseline), dir.path() / "train_baseline");
}

TEST(Config, RejectsBadInput) {
    EXPECT_THROW(parse_experiment_config(R"({"epochs": 3})"), ConfigError);  // belongs under train
    EXPECT_THROW(parse_experiment_config(R"({"runs": 0})"), ConfigError);
    EXPECT_THROW(parse_experiment_config(R"({"mode": "sideways"})"), ConfigError);
    EXPECT_THROW(parse_experiment_config(R"({"curriculum_horizon": 31})"), ConfigError);
    EXPECT_THROW(parse_experiment_config(R"({"vog": {"checkpoint_epochs": [31]}})"), ConfigError);
    EXPECT_THROW(parse_experiment_config(R"({"modes": ["baseline", "baseline"]})"), ConfigError);
    EXPECT_THROW(parse_experiment_config(R"({"dataset": {"source": "idx"}})"), ConfigError);
    EXPECT_THROW(parse_experiment_config(R"({"dataset": {"source": "directory", "train_dir": "/no/such/dir"}})"),
                 ConfigError);
    EXPECT_THROW(parse_experiment_config(R"({"dataset": {"knob_range": [0.5, 0.1]}})"), ConfigError);
    try {
        parse_experiment_config("{\n\"runs\": 2,\n\"seed\": ]\n}");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(Config, OverridesApplyAndValidate) {
    ExperimentConfig c = parse_experiment_config("{}");
    ConfigOverrides o;
    o.mode = "curriculum";
    o.seed = 7;
    o.curriculum_horizon = 4;
    o.vog_formula = "literal";
    o.class_choice = "predicted";
    o.auc_method = "ovr-weighted";
    o.output_dir = "/tmp/elsewhere";
    apply_overrides(c, o);
    EXPECT_EQ(c.train.mode, TrainMode::curriculum);
    EXPECT_EQ(c.train.seed, 7u);
    EXPECT_EQ(c.train.curriculum_horizon, 4u);
    EXPECT_EQ(c.vog.formula, VogFormula::literal);
    EXPECT_EQ(c.vog.class_choice, ClassChoice::predicted);
    EXPECT_EQ(c.output_dir, fs::path("/tmp/elsewhere"));
    ConfigOverrides bad;
    bad.curriculum_horizon = 99;
    EXPECT_THROW(apply_overrides(c, bad), ConfigError);
    ConfigOverrides unknown;
    unknown.class_choice = "whichever";
    EXPECT_THROW(apply_overrides(c, unknown), ConfigError);
}

TEST(Commands, GenerateDataPrintsReferenceTotals) {
    testutil::TempDir dir("gen");
    ExperimentConfig c = parse_experiment_config("{}");
    c.output_dir = dir.path();
    std::ostringstream out;
    cmd_generate_data(c, out);
    const std::string text = out.str();
    EXPECT_NE(text.find("1392"), std::string::npos) << text;
    EXPECT_NE(text.find("473"), std::string::npos);
    EXPECT_NE(text.find("1865"), std::string::npos);
    const TaskData data = load_task_data(c);
    EXPECT_EQ(data.train.size(), 1392u);
    EXPECT_EQ(data.test.size(), 473u);
    EXPECT_EQ(data.train.class_counts(), (std::vector<std::size_t>{800, 592}));
    EXPECT_EQ(read_scores_csv(c.external_scores_file()).size(), 1392u);
}

TEST(Commands, MissingPrerequisitesNameTheProducer) {
    testutil::TempDir dir("prereq");
    const ExperimentConfig c = tiny_config(dir.path());
    std::ostringstream out;
    try {
        cmd_train(c, out);
        FAIL();
    } catch (const MissingPrerequisiteError& e) {
        EXPECT_NE(std::string(e.what()).find("generate-data"), std::string::npos) << e.what();
    }
    cmd_generate_data(c, out);
    try {
        cmd_vog(c, out);
        FAIL();
    } catch (const MissingPrerequisiteError& e) {
        EXPECT_NE(std::string(e.what()).find("train --mode baseline"), std::string::npos) << e.what();
    }
    ExperimentConfig cl = c;
    cl.train.mode = TrainMode::curriculum;
    try {
        cmd_train(cl, out);
        FAIL();
    } catch (const MissingPrerequisiteError& e) {
        EXPECT_NE(std::string(e.what()).find("vog_scores.csv"), std::string::npos) << e.what();
    }
}

TEST(Commands, VogWithOneCheckpointIsContractError) {
    testutil::TempDir dir("vog_k1");
    ExperimentConfig c = tiny_config(dir.path(), "", R"({"checkpoint_epochs": [3]})");
    std::ostringstream out;
    cmd_generate_data(c, out);
    cmd_train(c, out);
    EXPECT_THROW(cmd_vog(c, out), ContractError);
}

TEST(Commands, BaselineOnlyCompareNeverTouchesVog) {
    testutil::TempDir dir("base_only");
    ExperimentConfig c = tiny_config(dir.path(), R"("modes": ["baseline"],)");
    std::ostringstream out;
    cmd_generate_data(c, out);
    cmd_compare(c, out);
    EXPECT_FALSE(fs::exists(c.vog_scores_file()));
    const std::string table = read_file(dir.path() / "compare.csv");
    EXPECT_EQ(table.substr(0, table.find('\n')), "mode,accuracy_mean,accuracy_std,recall_mean,recall_std,auc_mean,auc_std,f1_mean,f1_std");
    EXPECT_NE(table.find("\nBaseline,"), std::string::npos);
}

TEST(Commands, TinyPipelineIsDeterministic) {
    testutil::TempDir a("pipe_a"), b("pipe_b");
    auto run_all = [](const fs::path& out) {
        ExperimentConfig c = tiny_config(out, R"("jobs": 2,)");
        std::ostringstream sink;
        cmd_generate_data(c, sink);
        cmd_train(c, sink);
        cmd_vog(c, sink);
        cmd_evaluate(c, sink);
        cmd_compare(c, sink);
        cmd_histogram(c, std::nullopt, sink);
        return c;
    };
    const ExperimentConfig ca = run_all(a.path());
    run_all(b.path());
    for (const char* f : {"compare.csv", "compare_runs.csv", "vog_scores.csv", "metrics_baseline.json",
                          "class_difficulty.csv", "external_scores.csv", "train_baseline/loss_log.csv",
                          "train_baseline/ckpt_epoch002.vogc", "train_baseline/model_final.vogc"}) {
        EXPECT_EQ(read_file(a.path() / f), read_file(b.path() / f)) << f;
    }
    const std::string table = read_file(a.path() / "compare.csv");
    for (const char* row : {"\nBaseline,", "\nRS-CL,", "\nVoG-CL,", "\nAnti-VoG-CL,"})
        EXPECT_NE(table.find(row), std::string::npos) << row;
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 5);
    const std::string hist = read_file(a.path() / "class_difficulty.csv");
    EXPECT_EQ(hist.substr(0, hist.find('\n')), "class,count,vog_difficulty,expert_score");
    EXPECT_NE(hist.find("\nulnar_fracture,12,"), std::string::npos) << hist;
    // jobs only changes the schedule, not the numbers
    testutil::TempDir serial("pipe_serial");
    ExperimentConfig cs = tiny_config(serial.path(), R"("jobs": 1,)");
    std::ostringstream sink;
    cmd_generate_data(cs, sink);
    cmd_train(cs, sink);
    cmd_vog(cs, sink);
    cmd_compare(cs, sink);
    EXPECT_EQ(read_file(serial.path() / "compare.csv"), table);
    (void)ca;
}

TEST(Commands, SchedulePreviewWorkedValues) {
    testutil::TempDir dir("preview");
    ExperimentConfig c = parse_experiment_config("{}");
    c.output_dir = dir.path();
    c.train.curriculum_horizon = 2;
    std::ostringstream out;
    cmd_schedule_preview(c, {1, 2, 3, 4}, out);
    const CsvTable t = read_csv(dir.path() / "schedule_preview.csv");
    ASSERT_EQ(t.rows.size(), 12u);
    const double z = 3 + std::sqrt(2.0) + std::sqrt(3.0);
    const std::vector<double> expect{0.1, 0.2, 0.3, 0.4, 1 / z, std::sqrt(2.0) / z, std::sqrt(3.0) / z, 2 / z,
                                     0.25, 0.25, 0.25, 0.25};
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(t.rows[i][0], std::to_string(i / 4 + 1));
        EXPECT_NEAR(parse_double(t.rows[i][2], "p"), expect[i], 1e-6) << i;
    }
}

TEST(Commands, ExternalScoresMustCoverTheTrainSet) {
    testutil::TempDir dir("ext_cover");
    ExperimentConfig c = tiny_config(dir.path());
    std::ostringstream out;
    cmd_generate_data(c, out);
    const TaskData data = load_task_data(c);
    write_file(c.external_scores_file(), "sample_id,vog_score,rank,difficulty\n" + data.train.samples[0].id + ",1,,\n");
    EXPECT_THROW(curriculum_ranks(c, TrainMode::external_scores, data.train), DataError);
}

TEST(Commands, ClassCountTableHasTrainTestTotalRows) {
    Dataset tr, te;
    tr.class_names = te.class_names = {"normal", "a"};
    for (int i = 0; i < 3; ++i) tr.samples.push_back({"t" + std::to_string(i), Tensor({1, 8, 8}), i == 0 ? 0u : 1u});
    te.samples.push_back({"x", Tensor({1, 8, 8}), 1});
    const std::string t = class_count_table(tr, te, "normal");
    EXPECT_NE(t.find("abnormal_total"), std::string::npos);
    EXPECT_NE(t.find("total"), std::string::npos);
    EXPECT_NE(t.find("train"), std::string::npos);
    EXPECT_NE(t.find("test"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    testutil::TempDir dir("cli");
    const fs::path cfg = dir.path() / "c.json";
    write_file(cfg, tiny_config_json(dir.path() / "out"));
    const std::string base = "--config " + cfg.string();
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("no-such-command"), 2);
    EXPECT_EQ(run_cli("vog " + base), 3);  // nothing generated yet
    EXPECT_EQ(run_cli("train --mode sideways " + base), 2);
    write_file(dir.path() / "broken.json", "{\n\"runs\": ,\n}");
    EXPECT_EQ(run_cli("train --config " + (dir.path() / "broken.json").string()), 2);
    EXPECT_EQ(run_cli("generate-data " + base), 0);
    // a labels row without its image is a data error
    std::ofstream(dir.path() / "out" / "data" / "train" / "labels.csv", std::ios::app) << "ghost,0\n";
    EXPECT_EQ(run_cli("train " + base), 4);
    EXPECT_EQ(run_cli("schedule-preview --ranks 1,2,3,4 --curriculum-horizon 2 " + base), 0);
    EXPECT_TRUE(fs::exists(dir.path() / "out" / "schedule_preview.csv"));
    EXPECT_EQ(run_cli("schedule-preview --ranks 1,1,3 " + base), 2);
}

TEST(Cli, GenerateDataTwiceGivesIdenticalFiles) {
    testutil::TempDir dir("cli_gen");
    const auto a = dir.path() / "a", b = dir.path() / "b";
    ASSERT_EQ(run_cli("generate-data --seed 7 --output-dir " + a.string()), 0);
    ASSERT_EQ(run_cli("generate-data --seed 7 --output-dir " + b.string()), 0);
    for (const char* f : {"data/train/labels.csv", "data/train/meta.csv", "data/test/labels.csv",
                          "data/train/train_00000.pgm", "external_scores.csv"})
        EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
}
