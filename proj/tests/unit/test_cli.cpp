#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "multitrans/io.hpp"

namespace fs = std::filesystem;
using namespace multitrans;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("multitrans_cli_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string(MULTITRANS_CLI) + " " + args + " >" + (work_dir() / "stdout.txt").string() +
                            " 2>" + (work_dir() / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string stderr_text() { return read_text(work_dir() / "stderr.txt"); }

std::string small_config() {
    RunConfig cfg;
    cfg.generator.train_scenes = 6;
    cfg.generator.test_scenes = 4;
    cfg.training.epochs = 2;
    const auto path = work_dir() / "small.json";
    save_run_config(path, cfg);
    return path.string();
}

}  // namespace

TEST(Cli, OracleStubEvaluatesToOne) {
    save_checkpoint(work_dir() / "oracle.json", Checkpoint::oracle_stub(ModelConfig{}));
    const auto out = work_dir() / "oracle_eval";
    ASSERT_EQ(run("eval --config " + small_config() + " --checkpoint " + (work_dir() / "oracle.json").string() +
                  " --out " + out.string()),
              0)
        << stderr_text();
    const auto report = nlohmann::json::parse(read_text(out / "report.json"));
    EXPECT_EQ(report.at("map").get<double>(), 1.0);
    EXPECT_EQ(read_text(out / "metrics.csv").substr(0, 9), "class,ap\n");
}

TEST(Cli, ZeroEpochsIsUsageError) {
    EXPECT_EQ(run("train --epochs 0 --out " + (work_dir() / "x").string()), 2);
    EXPECT_NE(stderr_text().find("epochs"), std::string::npos);
}

TEST(Cli, BadUsage) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("train --bogus --out x"), 2);
    EXPECT_EQ(run("eval --out x"), 2);
    EXPECT_EQ(run("train --fusion mean --out x"), 2);
    EXPECT_EQ(run("ablate --variants Z-9 --config " + small_config() + " --out x"), 2);
    write_text(work_dir() / "bad.json", R"({"training": {"epochs": 1, "typo": 2}})");
    EXPECT_EQ(run("train --config " + (work_dir() / "bad.json").string() + " --out x"), 2);
    EXPECT_NE(stderr_text().find("typo"), std::string::npos);
}

TEST(Cli, GenerateTrainEvalAttention) {
    const std::string cfg = small_config();
    const auto data = work_dir() / "data";
    const auto run_dir = work_dir() / "run";
    ASSERT_EQ(run("generate --config " + cfg + " --seed 4 --out " + data.string()), 0) << stderr_text();
    EXPECT_TRUE(fs::exists(data / "manifest.json"));
    ASSERT_EQ(run("train --config " + cfg + " --data " + data.string() + " --variant C-3 --out " + run_dir.string()), 0)
        << stderr_text();
    EXPECT_EQ(read_text(run_dir / "loss.csv").substr(0, 19), "epoch,lr,mean_loss\n");
    const Checkpoint ckpt = load_checkpoint(run_dir / "checkpoint.json");
    EXPECT_EQ(ckpt.config.variant, Variant::MultiTrans);
    EXPECT_EQ(ckpt.config.fusion, Fusion::Concat);

    const auto ckpt_path = (run_dir / "checkpoint.json").string();
    ASSERT_EQ(run("eval --data " + data.string() + " --checkpoint " + ckpt_path + " --out " +
                  (work_dir() / "eval").string()),
              0)
        << stderr_text();
    ASSERT_EQ(run("attention --data " + data.string() + " --checkpoint " + ckpt_path + " --clip test-0001 --out " +
                  (work_dir() / "att").string()),
              0)
        << stderr_text();
    const std::string csv = read_text(work_dir() / "att" / "attention.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "clip_id,frame,layer,head,query_sensor,key_sensor,weight,weight_normalized");
    EXPECT_NE(csv.find("\ntest-0001,"), std::string::npos);
    EXPECT_EQ(run("attention --data " + data.string() + " --checkpoint " + ckpt_path + " --clip nope --out " +
                  (work_dir() / "att").string()),
              1);
}

TEST(Cli, BaselineAttentionIsContractError) {
    const std::string cfg = small_config();
    const auto run_dir = work_dir() / "base";
    ASSERT_EQ(run("train --config " + cfg + " --variant baseline --fusion sum --epochs 1 --out " + run_dir.string()), 0)
        << stderr_text();
    EXPECT_EQ(run("attention --config " + cfg + " --checkpoint " + (run_dir / "checkpoint.json").string() + " --out " +
                  (work_dir() / "att2").string()),
              1);
    EXPECT_NE(stderr_text().find("baseline"), std::string::npos);
}

TEST(Cli, AblateWritesTable) {
    const auto out = work_dir() / "ablate";
    ASSERT_EQ(run("ablate --config " + small_config() + " --epochs 1 --variants A-3 C-3 --out " + out.string()), 0)
        << stderr_text();
    const std::string table = read_text(out / "ablation.csv");
    EXPECT_EQ(table.substr(0, table.find('\n')), "variant,map,ap_0,ap_1,ap_2,ap_3");
    EXPECT_NE(table.find("\nA-3,"), std::string::npos);
    EXPECT_NE(table.find("\nC-3,"), std::string::npos);
}
