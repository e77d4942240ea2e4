#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpdrf/checkpoint.hpp"
#include "gpdrf/config.hpp"
#include "gpdrf/predict.hpp"

namespace gpdrf::cmd {

// The --model baseline presets, applied over a parsed config. "gp" drops
// the stack so the exact layer feeds the likelihood (its width is forced to
// the likelihood's at build time); "drf" keeps only the stack and reads raw
// features at layer 0; "gpdrf" restores the full architecture. Anything
// else is a ConfigError.
void apply_model_preset(config::RunConfig& cfg, const std::string& model);

struct TrainOutputs {
  std::string checkpoint_path;  // out_dir/model.ckpt
  std::string trace_path;       // out_dir/trace.txt, one "epoch elbo" row each
  std::string config_path;      // out_dir/run.cfg, the effective settings
  double final_elbo;            // last epoch mean; NaN when epochs == 0
};

// Loads the training data, builds the model the config describes, trains
// it, and writes the three artifacts into cfg.out_dir (created if absent).
TrainOutputs cmd_train(const config::RunConfig& cfg);

struct EvaluateOutputs {
  std::string metric;  // error_rate (softmax) or rmse (gaussian)
  double value;
  std::string metrics_path;  // out_dir/metrics.txt
};

// Restores a checkpoint, loads the test file in whatever format the model
// consumes (applying the stored standardizer and label order), and writes
// the metric plus its sampling settings as key-value text.
EvaluateOutputs cmd_evaluate(const std::string& checkpoint_path,
                             const std::string& data_path, int s_draws,
                             int t_draws, std::uint64_t seed,
                             const std::string& out_dir);

struct UncertaintyOutputs {
  predict::UncertaintyReport report;
  std::string report_path;  // out_dir/uncertainty.txt
};

// Classification checkpoints only; the report format is write_report's.
UncertaintyOutputs cmd_uncertainty(const std::string& checkpoint_path,
                                   const std::string& data_path, int s_draws,
                                   int t_draws, std::uint64_t seed,
                                   const std::string& out_dir);

struct CheckLine {
  std::string name;
  bool passed;
  std::string detail;
};

struct CheckReport {
  std::vector<CheckLine> lines;

  bool all_passed() const;
  std::string text() const;  // "pass name: detail" / "FAIL name: detail"
};

// Fast self-test battery: random-feature fidelity at the config's feature
// count, ELBO gradients against central differences on a tiny model, KL
// non-negativity spot checks, and, when a path is given, that the
// checkpoint restores (a damaged file raises instead of failing a line).
CheckReport cmd_check(const config::RunConfig& cfg,
                      const std::string& checkpoint_path = "");

}  // namespace gpdrf::cmd
