// Copyright 2026 The hetflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "hetflow/bench.hpp"

using namespace hetflow;
namespace fs = std::filesystem;

namespace {

RunConfig small_run(Mode m) {
  RunConfig c;
  c.dataset = "synth:aifb/20";
  c.hidden = 8;
  c.batch_size = 16;
  c.fanout = {4};
  c.mode = m;
  c.epochs = 2;
  c.launch_overhead_us = 0;
  c.fp64 = true;
  c.workers = 2;
  return c;
}

// drops the named columns from every CSV row
std::string strip_columns(const std::string& csv, const std::vector<std::string>& drop) {
  std::istringstream in(csv);
  std::string line;
  std::vector<bool> keep;
  std::ostringstream out;
  bool header = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (header) {
      for (const auto& c : cells) keep.push_back(std::find(drop.begin(), drop.end(), c) == drop.end());
      header = false;
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i < keep.size() && keep[i]) out << cells[i] << ',';
    }
    out << '\n';
  }
  return out.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(HETFLOW_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / ("hetflow_bench_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Bench, CsvIsReproducibleInFp64) {
  for (const auto m : {Mode::Baseline, Mode::Full}) {
    const auto a = format_csv(run(small_run(m)));
    const auto b = format_csv(run(small_run(m)));
    EXPECT_EQ(strip_columns(a, timing_columns()), strip_columns(b, timing_columns()));
    EXPECT_NE(a.find("kernels_semantic_build"), std::string::npos);
  }
}

TEST(Bench, StripKeepsDeterministicColumns) {
  const std::string csv = "a,wall_ms,b\n1,2.5,3\n";
  EXPECT_EQ(strip_columns(csv, timing_columns()), "a,b,\n1,3,\n");
}

TEST(Bench, CompareSelfIsNeutral) {
  const auto j = summary_json(run(small_run(Mode::Full)));
  const auto c = compare(j, j);
  EXPECT_DOUBLE_EQ(c.speedup, 1.0);
  EXPECT_EQ(c.reduction_ratio, 0.0);
  EXPECT_EQ(c.loss_divergence, 0.0);
  EXPECT_FALSE(c.semantic_mismatch);
}

TEST(Bench, CompareBaselineAgainstFull) {
  const auto a = summary_json(run(small_run(Mode::Baseline)));
  const auto b = summary_json(run(small_run(Mode::Full)));
  const auto c = compare(a, b);
  EXPECT_GT(c.reduction_ratio, 0.0);
  EXPECT_LE(c.loss_divergence, 1e-4);
  EXPECT_FALSE(c.semantic_mismatch);
  EXPECT_NE(format_comparison(c).find("semantic_mismatch,false"), std::string::npos);
}

TEST(Bench, CompareFlagsDivergence) {
  const auto a = summary_json(run(small_run(Mode::Full)));
  auto b = a;
  b["epochs"][1]["loss"] = a["epochs"][1]["loss"].get<double>() + 0.01;
  EXPECT_TRUE(compare(a, b, 1e-3).semantic_mismatch);
  EXPECT_FALSE(compare(a, b, 0.1).semantic_mismatch);
  auto other = a;
  other["config"]["seed"] = 99;
  EXPECT_THROW(compare(a, other), ConfigError);
  EXPECT_THROW(compare(a, nlohmann::json::object()), ConfigError);
}

TEST(Bench, ConfigErrorsNameTheField) {
  auto expect_field = [](RunConfig c, const std::string& field) {
    try {
      run(c);
      ADD_FAILURE() << "no error for " << field;
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.field(), field);
    }
  };
  auto c = small_run(Mode::Full);
  c.dataset = "synth:imdb";
  expect_field(c, "dataset");
  c = small_run(Mode::Full);
  c.dataset = "synth:aifb/0";
  expect_field(c, "dataset");
  c = small_run(Mode::Full);
  c.fanout = {2, 2, 2};
  expect_field(c, "fanout");
  c = small_run(Mode::Full);
  c.queue_depth = 0;
  expect_field(c, "queue-depth");
  c = small_run(Mode::Full);
  c.launch_overhead_us = -1;
  expect_field(c, "launch-overhead-us");
  c = small_run(Mode::Full);
  c.dataset = "/no/such/graph.txt";
  expect_field(c, "dataset");
}

TEST(Bench, DatasetSpecs) {
  const auto d = load_dataset("synth:mutag/10");
  EXPECT_EQ(d.graph.num_relations(), 50u);
  EXPECT_EQ(d.graph.num_types(), 5u);
  EXPECT_EQ(d.graph.num_edges(), 14810u);
}

TEST(Bench, WritesOutputs) {
  const auto dir = temp_dir();
  auto c = small_run(Mode::Reorg);
  c.epochs = 1;
  c.out = (dir / "r.csv").string();
  c.trace_out = (dir / "t.jsonl").string();
  const auto r = run(c);
  write_outputs(r);
  EXPECT_TRUE(fs::exists(dir / "r.csv"));
  std::ifstream js(dir / "r.json");
  const auto j = nlohmann::json::parse(js);
  EXPECT_EQ(j["totals"]["kernels"].get<std::size_t>(), r.epochs[0].totals.kernels);
  std::ifstream tr(dir / "t.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(tr, l);) ++lines;
  EXPECT_EQ(lines, r.epochs[0].totals.kernels);
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  const auto dir = temp_dir();
  const auto a = (dir / "a.csv").string();
  const auto b = (dir / "b.csv").string();
  const std::string common = " --dataset synth:aifb/20 --hidden 8 --batch-size 16 --fanout 4 --epochs 1 "
                             "--launch-overhead-us 0 --fp64";
  EXPECT_EQ(cli("run" + common + " --mode baseline --out " + a), kExitOk);
  EXPECT_EQ(cli("run" + common + " --mode full --out " + b), kExitOk);
  EXPECT_EQ(cli("compare " + (dir / "a.json").string() + " " + (dir / "b.json").string()), kExitOk);

  EXPECT_EQ(cli("run --dataset synth:nope"), kExitConfig);
  EXPECT_EQ(cli("run --mode warp"), kExitConfig);
  EXPECT_EQ(cli("run --no-such-flag"), kExitConfig);

  const auto c = (dir / "c.csv").string();
  EXPECT_EQ(cli("run" + common + " --mode full --lr 2.0 --out " + c), kExitOk);
  EXPECT_EQ(cli("compare " + (dir / "a.json").string() + " " + (dir / "c.json").string()), kExitMismatch);

  EXPECT_EQ(cli("run" + common + " --out " + (dir / "missing" / "x.csv").string()), kExitRuntime);
  fs::remove_all(dir);
}
