#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "se3ham/errors.hpp"

using namespace se3ham;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "se3ham");
    std::vector<char *> argv;
    for (auto &a : args) argv.push_back(a.data());
    return cli::cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path tiny_config(const fs::path &dir) {
    const fs::path p = dir / "tiny.json";
    std::ofstream(p) << R"({
  "system": "pendulum", "seed": 4,
  "dataset": {"records": 8, "intervals": 2},
  "model": {"mass_widths": [8], "potential_widths": [8], "input_widths": [8]},
  "train": {"iterations": 3, "batch_size": 4},
  "control": {"horizon": 0.5},
  "eval": {"horizon": 0.2, "held_out_states": 10, "sweep_points": 8}
})";
    return p;
}

} // namespace

TEST(ExitCodes, Mapping) {
    EXPECT_EQ(cli::exit_code(Error(ErrorCode::Config, "")), 2);
    EXPECT_EQ(cli::exit_code(Error(ErrorCode::DimMismatch, "")), 2);
    EXPECT_EQ(cli::exit_code(Error(ErrorCode::Io, "")), 3);
    EXPECT_EQ(cli::exit_code(Error(ErrorCode::Divergence, "")), 4);
    EXPECT_EQ(cli::exit_code(Error(ErrorCode::NonFinite, "")), 4);
    EXPECT_EQ(cli::exit_code(Error(ErrorCode::NotSkew, "")), 1);
}

TEST(Threads, Resolution) {
    EXPECT_EQ(cli::resolve_threads(3), 3);
    ::setenv("SE3HAM_THREADS", "2", 1);
    EXPECT_EQ(cli::resolve_threads(0), 2);
    ::unsetenv("SE3HAM_THREADS");
    EXPECT_EQ(cli::resolve_threads(0), 1);
}

TEST(Cli, EndToEndPendulum) {
    const fs::path d = fs::temp_directory_path() / "se3ham_cli_e2e";
    fs::remove_all(d);
    fs::create_directories(d);
    const std::string cfg = tiny_config(d).string();
    ASSERT_EQ(run({"gen-data", "--config", cfg, "--out", (d / "data.jsonl").string()}), 0);
    ASSERT_EQ(run({"train", "--config", cfg, "--data", (d / "data.jsonl").string(), "--out",
                   (d / "model.json").string()}),
              0);
    EXPECT_TRUE(fs::exists(d / "model.loss.csv"));
    ASSERT_EQ(run({"train", "--config", cfg, "--data", (d / "data.jsonl").string(), "--out",
                   (d / "model2.json").string(), "--resume", (d / "model.json").string(), "--loss",
                   (d / "model.loss.csv").string()}),
              0);
    std::istringstream loss(slurp(d / "model.loss.csv"));
    std::string line;
    int lines = 0;
    while (std::getline(loss, line)) ++lines;
    EXPECT_EQ(lines, 7);

    ASSERT_EQ(run({"eval", "--model", (d / "model2.json").string(), "--config", cfg, "--out", (d / "eval").string()}),
              0);
    for (const char *f : {"functions.csv", "energy.csv", "summary.json"}) EXPECT_TRUE(fs::exists(d / "eval" / f));
    const auto summary = nlohmann::json::parse(slurp(d / "eval" / "summary.json"));
    EXPECT_TRUE(summary.contains("rhs_rel_err"));

    ASSERT_EQ(run({"control", "--config", cfg, "--out", (d / "ctl").string()}), 0);
    ASSERT_EQ(run({"control", "--config", cfg, "--out", (d / "ctl2").string()}), 0);
    EXPECT_EQ(slurp(d / "ctl" / "trace.csv"), slurp(d / "ctl2" / "trace.csv"));
    EXPECT_EQ(slurp(d / "ctl" / "summary.json"), slurp(d / "ctl2" / "summary.json"));
}

TEST(Cli, ErrorExitCodes) {
    const fs::path d = fs::temp_directory_path() / "se3ham_cli_err";
    fs::remove_all(d);
    fs::create_directories(d);
    const std::string cfg = tiny_config(d).string();
    EXPECT_EQ(run({"train", "--config", cfg}), 2);
    EXPECT_EQ(run({"frobnicate"}), 2);
    EXPECT_EQ(run({"gen-data", "--config", (d / "absent.json").string(), "--out", (d / "x").string()}), 3);
    std::ofstream(d / "unknown.json") << R"({"system": "pendulum", "seed": 1, "bogus": 2})";
    EXPECT_EQ(run({"gen-data", "--config", (d / "unknown.json").string(), "--out", (d / "x").string()}), 2);
    EXPECT_EQ(run({"eval", "--model", (d / "absent.json").string(), "--config", cfg, "--out", d.string()}), 3);
    EXPECT_EQ(run({"train", "--config", cfg, "--data", (d / "absent.jsonl").string(), "--out",
                   (d / "m.json").string()}),
              3);
}
