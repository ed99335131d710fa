#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "msim/config.hpp"

using namespace msim;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& body) {
  fs::path dir = fs::temp_directory_path() / "msim_config_tests";
  fs::create_directories(dir);
  fs::path p = dir / name;
  std::ofstream(p, std::ios::trunc) << body;
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("config");

TEST_CASE("defaults and the resolved echo are a fixed point") {
  RunConfig rc = load_run_config("");
  CHECK(rc.train.steps == 20000);
  CHECK(rc.train.batch == 16);
  CHECK(rc.train.lambdas.vdm == 10.0);
  CHECK(rc.train.lambdas.ssl == 1.0);
  CHECK(rc.train.lambdas.norm == 0.1);
  CHECK(rc.train.lambdas.frame == 1.0);
  CHECK(rc.train.fusion == "softmax");
  CHECK(rc.train.interaction == "hyperplane");
  CHECK(rc.train.history == 4);
  CHECK(rc.world.T == 12);
  CHECK(rc.world.context == 4);
  CHECK(rc.policy.mode == "baseline");

  std::string echoed = resolved_config(rc);
  CHECK(echoed.back() == '\n');
  fs::path p = write_temp("roundtrip.json", echoed);
  RunConfig back = load_run_config(p.string());
  CHECK(resolved_config(back) == echoed);
}

TEST_CASE("file values land on the right fields") {
  fs::path p = write_temp("partial.json", R"({
    "world": {"kind": "toy", "episodes": 12},
    "train": {"steps": 500, "fusion": "mean", "drop": "muscle_emg",
              "lambda_vdm": 2.5},
    "model": {"d": 8, "context_actions": false},
    "diffusion": {"steps": 25},
    "eval": {"drop": "hand_force,body_pose"},
    "policy": {"mode": "with_sim", "sample_steps": 4}
  })");
  RunConfig rc = load_run_config(p.string());
  CHECK(rc.world.kind == "toy");
  CHECK(rc.world.episodes == 12);
  CHECK(rc.world.T == 12);  // untouched default
  CHECK(rc.train.steps == 500);
  CHECK(rc.train.fusion == "mean");
  CHECK(rc.train.lambdas.vdm == 2.5);
  CHECK(rc.train.model.d == 8);
  CHECK(rc.train.model.context_actions == false);
  CHECK(rc.train.diffusion_steps == 25);
  CHECK(rc.eval.drop == "hand_force,body_pose");
  CHECK(rc.policy.mode == "with_sim");
  CHECK(rc.policy.sample_steps == 4);

  CHECK(mask_count(rc.train.train_mask) == 3);
  CHECK_FALSE(rc.train.train_mask[3]);  // muscle_emg dropped

  // The echo keeps the non-default values.
  std::string echoed = resolved_config(rc);
  CHECK(echoed.find("\"fusion\": \"mean\"") != std::string::npos);
  CHECK(echoed.find("\"drop\": \"muscle_emg\"") != std::string::npos);
}

TEST_CASE("overrides parse scalars and win over file values") {
  RunConfig rc = load_run_config("");
  apply_override(rc, "train.steps=750");
  CHECK(rc.train.steps == 750);
  apply_override(rc, "train.lr=0.002");
  CHECK(rc.train.lr == 0.002);
  apply_override(rc, "world.kind=toy");
  CHECK(rc.world.kind == "toy");
  apply_override(rc, "model.context_actions=false");
  CHECK(rc.train.model.context_actions == false);
  apply_override(rc, "train.drop=hand_pose,body_pose");
  CHECK(mask_count(rc.train.train_mask) == 2);
  apply_override(rc, "train.drop=");
  CHECK(mask_count(rc.train.train_mask) == 4);
  // Bare strings that are not valid JSON stay strings.
  apply_override(rc, "train.interaction=none");
  CHECK(rc.train.interaction == "none");
}

TEST_CASE("schema violations name the offending key") {
  RunConfig rc = load_run_config("");
  CHECK_THROWS_WITH_AS(apply_override(rc, "train.bogus=1"),
                       "config: train.bogus (unknown key)",
                       std::invalid_argument);
  CHECK_THROWS_AS(apply_override(rc, "no_equals_sign"),
                  std::invalid_argument);
  CHECK_THROWS_WITH_AS(apply_override(rc, "train.steps=fast"),
                       "config: train.steps (expected integer)",
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(apply_override(rc, "train.seed=-3"),
                       "config: train.seed (expected non-negative integer)",
                       std::invalid_argument);

  fs::path arr = write_temp("arr.json", R"(["not","an","object"])");
  CHECK_THROWS_AS(load_run_config(arr.string()), std::invalid_argument);
  fs::path sect = write_temp("sect.json", R"({"train": 3})");
  CHECK_THROWS_AS(load_run_config(sect.string()), std::invalid_argument);
  fs::path junk = write_temp("junk.json", "{nope");
  CHECK_THROWS_AS(load_run_config(junk.string()), std::invalid_argument);
  CHECK_THROWS_AS(load_run_config("/nonexistent/path.json"),
                  std::runtime_error);
  fs::path unk = write_temp("unk.json", R"({"train": {"warmup": 5}})");
  CHECK_THROWS_WITH_AS(load_run_config(unk.string()),
                       "config: train.warmup (unknown key)",
                       std::invalid_argument);
}

TEST_SUITE_END();
