// Exercises the shared library exactly as an external caller would: through
// gpdrf.h alone, checking status codes, last-error text and result structs.

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "gpdrf/gpdrf.h"

namespace {

struct TempDir {
  std::string path;
  explicit TempDir(const std::string& name) : path("/tmp/gpdrf_capi_" + name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }

  std::string file(const std::string& name, const std::string& content) const {
    const std::string p = path + "/" + name;
    std::ofstream out(p);
    out << content;
    return p;
  }
};

struct ConfigHandle {
  gpdrf_config* ptr = nullptr;
  ~ConfigHandle() { gpdrf_config_free(ptr); }
};

const char kRegressionCsv[] =
    "x1,x2,y\n"
    "0.0,1.0,0.15\n"
    "0.5,0.8,0.22\n"
    "1.0,0.2,0.31\n"
    "1.5,-0.3,0.40\n"
    "2.0,-0.9,0.55\n"
    "2.5,-1.2,0.61\n"
    "3.0,-1.6,0.70\n"
    "3.5,-2.0,0.82\n";

const char kRegressionTestCsv[] =
    "x1,x2,y\n"
    "0.2,0.9,0.18\n"
    "1.2,0.0,0.34\n"
    "2.2,-1.0,0.57\n"
    "3.2,-1.8,0.74\n";

const char kClassificationCsv[] =
    "x1,x2,y\n"
    "-2.0,-1.5,0\n"
    "-1.8,-1.2,0\n"
    "-2.2,-1.8,0\n"
    "-1.5,-1.0,0\n"
    "2.0,1.5,1\n"
    "1.8,1.2,1\n"
    "2.2,1.8,1\n"
    "1.5,1.0,1\n";

// Same fast profile the command tests use, spelled as a config file.
std::string toy_config_text(const std::string& task, const std::string& extra,
                            const std::string& train_path,
                            const std::string& widths,
                            const std::string& out_dir) {
  return "gpdrf_config_version 1\n"
         "task " + task + "\n" + extra +
         "train_data " + train_path + "\n"
         "layer_widths " + widths + "\n"
         "feature_counts 4\n"
         "epochs 2\n"
         "learning_rate 0.001\n"
         "batch 4\n"
         "mc_samples 2\n"
         "eval_draws 4\n"
         "inducing_count 4\n"
         "seed 3\n"
         "out_dir " + out_dir + "\n";
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("version and error strings are always safe to read") {
  const char* v = gpdrf_version();
  REQUIRE(v != nullptr);
  CHECK(std::strchr(v, '.') != nullptr);
  CHECK(gpdrf_last_error() != nullptr);
}

TEST_CASE("null and out-of-range arguments come back as invalid_argument") {
  gpdrf_config* cfg = nullptr;
  CHECK(gpdrf_config_load(nullptr, &cfg) == GPDRF_INVALID_ARGUMENT);
  CHECK(gpdrf_config_load("x.cfg", nullptr) == GPDRF_INVALID_ARGUMENT);
  CHECK(gpdrf_config_default(nullptr) == GPDRF_INVALID_ARGUMENT);
  CHECK(gpdrf_train(nullptr, nullptr) == GPDRF_INVALID_ARGUMENT);
  CHECK(std::strlen(gpdrf_last_error()) > 0);

  ConfigHandle h;
  REQUIRE(gpdrf_config_default(&h.ptr) == GPDRF_OK);
  CHECK(gpdrf_config_set_samples(h.ptr, 0) == GPDRF_INVALID_ARGUMENT);
  CHECK(std::strstr(gpdrf_last_error(), "samples") != nullptr);
  CHECK(gpdrf_config_set_draws(h.ptr, 1) == GPDRF_INVALID_ARGUMENT);
  CHECK(gpdrf_config_set_model(h.ptr, nullptr) == GPDRF_INVALID_ARGUMENT);

  gpdrf_config_free(nullptr);  // must be a no-op, like free()
}

TEST_CASE("config loading distinguishes io, parse and config failures") {
  TempDir dir("config");
  ConfigHandle missing;
  CHECK(gpdrf_config_load((dir.path + "/absent.cfg").c_str(), &missing.ptr) ==
        GPDRF_IO_ERROR);
  CHECK(missing.ptr == nullptr);

  const std::string bad =
      dir.file("bad.cfg", "gpdrf_config_version 1\nwibble 3\n");
  ConfigHandle broken;
  CHECK(gpdrf_config_load(bad.c_str(), &broken.ptr) == GPDRF_PARSE_ERROR);
  CHECK(std::strstr(gpdrf_last_error(), "wibble") != nullptr);

  const std::string good = dir.file(
      "good.cfg", toy_config_text("regression", "",
                                  dir.file("train.csv", kRegressionCsv), "1",
                                  dir.path + "/run"));
  ConfigHandle ok;
  REQUIRE(gpdrf_config_load(good.c_str(), &ok.ptr) == GPDRF_OK);
  REQUIRE(ok.ptr != nullptr);
  CHECK(gpdrf_config_set_model(ok.ptr, "vae") == GPDRF_CONFIG_ERROR);
  CHECK(gpdrf_config_set_model(ok.ptr, "gpdrf") == GPDRF_OK);
  CHECK(gpdrf_config_set_seed(ok.ptr, 11) == GPDRF_OK);
  CHECK(gpdrf_config_set_data(ok.ptr, "other.csv") == GPDRF_OK);
  CHECK(gpdrf_config_set_out_dir(ok.ptr, dir.path.c_str()) == GPDRF_OK);
}

TEST_CASE("train and evaluate round trip through the shared library") {
  TempDir dir("roundtrip");
  const std::string train = dir.file("train.csv", kRegressionCsv);
  const std::string test = dir.file("test.csv", kRegressionTestCsv);
  const std::string cfg_path = dir.file(
      "run.cfg",
      toy_config_text("regression", "", train, "1", dir.path + "/run"));

  ConfigHandle h;
  REQUIRE(gpdrf_config_load(cfg_path.c_str(), &h.ptr) == GPDRF_OK);

  gpdrf_train_result tr;
  REQUIRE(gpdrf_train(h.ptr, &tr) == GPDRF_OK);
  CHECK(std::isfinite(tr.final_elbo));
  CHECK(std::filesystem::exists(tr.checkpoint_path));
  CHECK(std::filesystem::exists(tr.trace_path));
  CHECK(std::filesystem::exists(tr.config_path));

  gpdrf_evaluate_result ev;
  REQUIRE(gpdrf_evaluate(tr.checkpoint_path, test.c_str(), 16, 8, 0,
                         (dir.path + "/eval").c_str(), &ev) == GPDRF_OK);
  CHECK(std::string(ev.metric) == "rmse");
  CHECK(ev.value >= 0.0);
  CHECK(std::filesystem::exists(ev.metrics_path));

  // Same seed must reproduce the score exactly; a different one moves it.
  gpdrf_evaluate_result again;
  REQUIRE(gpdrf_evaluate(tr.checkpoint_path, test.c_str(), 16, 8, 0,
                         (dir.path + "/eval").c_str(), &again) == GPDRF_OK);
  CHECK(again.value == ev.value);
  gpdrf_evaluate_result moved;
  REQUIRE(gpdrf_evaluate(tr.checkpoint_path, test.c_str(), 16, 8, 7,
                         (dir.path + "/eval").c_str(), &moved) == GPDRF_OK);
  CHECK(moved.value != ev.value);

  CHECK(gpdrf_evaluate(tr.checkpoint_path, (dir.path + "/absent.csv").c_str(),
                       16, 8, 0, dir.path.c_str(), &ev) == GPDRF_IO_ERROR);

  // A checkpoint with a mangled version byte must surface as a typed error.
  std::string bytes = read_bytes(tr.checkpoint_path);
  bytes[8] = 9;
  const std::string damaged = dir.file("damaged.ckpt", bytes);
  CHECK(gpdrf_evaluate(damaged.c_str(), test.c_str(), 16, 8, 0,
                       dir.path.c_str(), &ev) == GPDRF_CHECKPOINT_ERROR);
  CHECK(std::strstr(gpdrf_last_error(), "version") != nullptr);
}

TEST_CASE("uncertainty reports classification results and rejects regression") {
  TempDir dir("uncertainty");
  const std::string train = dir.file("train.csv", kClassificationCsv);
  const std::string cls_cfg = dir.file(
      "cls.cfg", toy_config_text("classification", "classes 2\n", train, "2",
                                 dir.path + "/cls"));
  ConfigHandle h;
  REQUIRE(gpdrf_config_load(cls_cfg.c_str(), &h.ptr) == GPDRF_OK);
  gpdrf_train_result tr;
  REQUIRE(gpdrf_train(h.ptr, &tr) == GPDRF_OK);

  gpdrf_uncertainty_result ur;
  REQUIRE(gpdrf_uncertainty(tr.checkpoint_path, train.c_str(), 16, 8, 0,
                            (dir.path + "/unc").c_str(), &ur) == GPDRF_OK);
  CHECK(ur.error_rate >= 0.0);
  CHECK(ur.error_rate <= 1.0);
  CHECK(std::filesystem::exists(ur.report_path));
  // Aggregates are NaN whenever the matching bucket is empty, never negative.
  CHECK((std::isnan(ur.d_correct) || ur.d_correct >= 0.0));
  CHECK((std::isnan(ur.d_misclassified) || ur.d_misclassified >= 0.0));

  const std::string reg_cfg = dir.file(
      "reg.cfg",
      toy_config_text("regression", "",
                      dir.file("reg.csv", kRegressionCsv), "1",
                      dir.path + "/reg"));
  ConfigHandle rh;
  REQUIRE(gpdrf_config_load(reg_cfg.c_str(), &rh.ptr) == GPDRF_OK);
  gpdrf_train_result reg_tr;
  REQUIRE(gpdrf_train(rh.ptr, &reg_tr) == GPDRF_OK);
  CHECK(gpdrf_uncertainty(reg_tr.checkpoint_path, train.c_str(), 16, 8, 0,
                          dir.path.c_str(), &ur) == GPDRF_TASK_MISMATCH);
  CHECK(std::strlen(gpdrf_last_error()) > 0);
}

TEST_CASE("the self-test battery writes into the caller's buffer") {
  ConfigHandle h;
  REQUIRE(gpdrf_config_default(&h.ptr) == GPDRF_OK);

  char text[4096];
  REQUIRE(gpdrf_check(h.ptr, nullptr, text, sizeof text) == GPDRF_OK);
  CHECK(std::strstr(text, "pass random_features") != nullptr);
  CHECK(std::strstr(text, "pass elbo_gradients") != nullptr);
  CHECK(std::strstr(text, "pass kl_terms") != nullptr);

  // A short buffer truncates the report but stays NUL-terminated.
  char tiny[16];
  std::memset(tiny, 'x', sizeof tiny);
  REQUIRE(gpdrf_check(h.ptr, nullptr, tiny, sizeof tiny) == GPDRF_OK);
  CHECK(std::strlen(tiny) < sizeof tiny);

  CHECK(gpdrf_check(h.ptr, nullptr, nullptr, 0) == GPDRF_INVALID_ARGUMENT);
}
