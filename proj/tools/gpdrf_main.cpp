// Command-line frontend. Everything goes through the C API in gpdrf.h so the
// binary exercises the same surface other language bindings would.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "gpdrf/gpdrf.h"

namespace {

struct Options {
  std::string config;
  std::string checkpoint;
  std::string data;
  std::string out_dir = ".";
  std::string model;
  std::uint64_t seed = 0;
  int samples = 100;
  int draws = 100;
};

struct ConfigHandle {
  gpdrf_config* ptr = nullptr;
  ~ConfigHandle() { gpdrf_config_free(ptr); }
};

// Exit code is the status value, so scripts can branch on the failure kind.
int report_failure(gpdrf_status status) {
  std::fprintf(stderr, "error: %s\n", gpdrf_last_error());
  return static_cast<int>(status);
}

// True when the subcommand both knows the flag and saw it on the command
// line; App::count alone throws for flags a subcommand never registered.
bool passed(const CLI::App& sub, const std::string& name) {
  const CLI::Option* o = sub.get_option_no_throw(name);
  return o != nullptr && o->count() > 0;
}

// Flags only override the file when the user actually passed them, otherwise
// the config (or its defaults) wins.
gpdrf_status load_config(const CLI::App& sub, const Options& opt,
                         ConfigHandle& h) {
  gpdrf_status st = opt.config.empty()
                        ? gpdrf_config_default(&h.ptr)
                        : gpdrf_config_load(opt.config.c_str(), &h.ptr);
  if (st != GPDRF_OK) return st;
  if (passed(sub, "--model"))
    st = gpdrf_config_set_model(h.ptr, opt.model.c_str());
  if (st == GPDRF_OK && passed(sub, "--seed"))
    st = gpdrf_config_set_seed(h.ptr, opt.seed);
  if (st == GPDRF_OK && passed(sub, "--samples"))
    st = gpdrf_config_set_samples(h.ptr, opt.samples);
  if (st == GPDRF_OK && passed(sub, "--draws"))
    st = gpdrf_config_set_draws(h.ptr, opt.draws);
  if (st == GPDRF_OK && passed(sub, "--data"))
    st = gpdrf_config_set_data(h.ptr, opt.data.c_str());
  if (st == GPDRF_OK && passed(sub, "--out"))
    st = gpdrf_config_set_out_dir(h.ptr, opt.out_dir.c_str());
  return st;
}

void add_prediction_flags(CLI::App* sub, Options& opt) {
  sub->add_option("--checkpoint", opt.checkpoint, "Trained model file")
      ->required();
  sub->add_option("--data", opt.data, "Data to score")->required();
  sub->add_option("--out", opt.out_dir, "Directory for the report files");
  sub->add_option("--seed", opt.seed, "Seed for the prediction draws");
  sub->add_option("--samples", opt.samples, "Forward samples per point");
  sub->add_option("--draws", opt.draws, "Posterior draws per point");
}

int run_train(const CLI::App& sub, const Options& opt) {
  ConfigHandle h;
  gpdrf_status st = load_config(sub, opt, h);
  if (st != GPDRF_OK) return report_failure(st);
  gpdrf_train_result r;
  st = gpdrf_train(h.ptr, &r);
  if (st != GPDRF_OK) return report_failure(st);
  std::printf("checkpoint %s\n", r.checkpoint_path);
  std::printf("trace %s\n", r.trace_path);
  std::printf("config %s\n", r.config_path);
  if (!std::isnan(r.final_elbo))
    std::printf("final_elbo %.17g\n", r.final_elbo);
  return 0;
}

int run_evaluate(const Options& opt) {
  gpdrf_evaluate_result r;
  const gpdrf_status st =
      gpdrf_evaluate(opt.checkpoint.c_str(), opt.data.c_str(), opt.samples,
                     opt.draws, opt.seed, opt.out_dir.c_str(), &r);
  if (st != GPDRF_OK) return report_failure(st);
  std::printf("%s %.17g\n", r.metric, r.value);
  std::printf("metrics %s\n", r.metrics_path);
  return 0;
}

int run_uncertainty(const Options& opt) {
  gpdrf_uncertainty_result r;
  const gpdrf_status st =
      gpdrf_uncertainty(opt.checkpoint.c_str(), opt.data.c_str(), opt.samples,
                        opt.draws, opt.seed, opt.out_dir.c_str(), &r);
  if (st != GPDRF_OK) return report_failure(st);
  std::printf("report %s\n", r.report_path);
  std::printf("error_rate %.17g\n", r.error_rate);
  if (std::isnan(r.d_correct))
    std::printf("d_correct n/a\n");
  else
    std::printf("d_correct %.17g\n", r.d_correct);
  if (std::isnan(r.d_misclassified))
    std::printf("d_misclassified n/a\n");
  else
    std::printf("d_misclassified %.17g\n", r.d_misclassified);
  return 0;
}

int run_check(const CLI::App& sub, const Options& opt) {
  ConfigHandle h;
  gpdrf_status st = load_config(sub, opt, h);
  if (st != GPDRF_OK) return report_failure(st);
  char text[8192];
  st = gpdrf_check(h.ptr,
                   opt.checkpoint.empty() ? nullptr : opt.checkpoint.c_str(),
                   text, sizeof text);
  if (st != GPDRF_OK && st != GPDRF_CHECK_FAILED) return report_failure(st);
  std::fputs(text, stdout);
  if (st == GPDRF_CHECK_FAILED) return report_failure(st);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Sparse variational GP with deep random-feature layers: train models, "
      "score them and report distributional uncertainty."};
  app.set_version_flag("--version", gpdrf_version());
  app.require_subcommand(1);

  Options opt;

  CLI::App* train = app.add_subcommand(
      "train", "Fit a model and write checkpoint, trace and config");
  train->add_option("--config", opt.config, "Run configuration file")
      ->required();
  train->add_option("--data", opt.data, "Override the training data path");
  train->add_option("--out", opt.out_dir, "Override the output directory");
  train->add_option("--seed", opt.seed, "Override the training seed");
  train->add_option("--samples", opt.samples,
                    "Override the ELBO samples per step");
  train->add_option("--draws", opt.draws,
                    "Override the posterior draws used at prediction");
  train->add_option("--model", opt.model,
                    "Architecture preset: gpdrf, gp or drf");

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Score a checkpoint on a data file");
  add_prediction_flags(evaluate, opt);

  CLI::App* uncertainty = app.add_subcommand(
      "uncertainty",
      "Per-point distributional uncertainty for a classification model");
  add_prediction_flags(uncertainty, opt);

  CLI::App* check = app.add_subcommand(
      "check", "Run the built-in numerical self-tests");
  check->add_option("--config", opt.config,
                    "Config whose sizes and seed the battery should use");
  check->add_option("--checkpoint", opt.checkpoint,
                    "Also restore this checkpoint and validate it");
  check->add_option("--seed", opt.seed, "Seed for the battery's draws");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return run_train(*train, opt);
  if (evaluate->parsed()) return run_evaluate(opt);
  if (uncertainty->parsed()) return run_uncertainty(opt);
  return run_check(*check, opt);
}
