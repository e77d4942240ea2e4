#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "gpdrf/config.hpp"
#include "gpdrf/errors.hpp"

using namespace gpdrf;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& content)
      : path("/tmp/gpdrf_test_" + name) {
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

config::RunConfig parse(const std::string& body) {
  return config::parse_text("gpdrf_config_version 1\n" + body, "test");
}

// A tabular gpdrf regression setup that passes validation; mutation tests
// start from here.
config::RunConfig valid_base() {
  config::RunConfig cfg;
  cfg.train_data = "train.csv";
  cfg.layer_widths = {3, 1};
  cfg.feature_counts = {8, 4};
  return cfg;
}

}  // namespace

TEST_CASE("config parser reads every key") {
  const auto cfg = parse(
      "task classification\n"
      "model gp\n"
      "train_data a.txt\n"
      "test_data b.txt\n"
      "data_format sequences\n"
      "label_column target\n"
      "standardize 0\n"
      "classes 4\n"
      "kernel spectrum\n"
      "log_alpha 0.25\n"
      "log_gamma -1.5\n"
      "spectrum_k 3\n"
      "spectrum_m 0\n"
      "spectrum_normalize false\n"
      "log_sigma 0.5\n"
      "gp_output_dim 4\n"
      "layer_widths 6 4\n"
      "feature_counts 16 8\n"
      "noise_var 0.05\n"
      "epochs 12\n"
      "learning_rate 0.01\n"
      "batch 7\n"
      "mc_samples 5\n"
      "eval_draws 9\n"
      "spectra_mode var_fixed\n"
      "seed 42\n"
      "l2_coefficient 0.001\n"
      "inducing_count 17\n"
      "inducing_strategy kernel_medoids\n"
      "fix_latent_noise true\n"
      "out_dir /tmp/run\n");
  CHECK(cfg.task == data::Task::classification);
  CHECK(cfg.arch == model::Arch::gp);
  CHECK(cfg.train_data == "a.txt");
  CHECK(cfg.test_data == "b.txt");
  CHECK(cfg.format == config::DataFormat::sequences);
  CHECK(cfg.label_column == "target");
  CHECK(cfg.standardize == false);
  CHECK(cfg.classes == 4);
  CHECK(cfg.kernel == config::KernelKind::spectrum);
  CHECK(cfg.log_alpha == 0.25);
  CHECK(cfg.log_gamma == -1.5);
  CHECK(cfg.spectrum_k == 3);
  CHECK(cfg.spectrum_m == 0);
  CHECK(cfg.spectrum_normalize == false);
  CHECK(cfg.log_sigma == 0.5);
  CHECK(cfg.gp_output_dim == 4);
  CHECK(cfg.layer_widths == std::vector<Eigen::Index>{6, 4});
  CHECK(cfg.feature_counts == std::vector<Eigen::Index>{16, 8});
  CHECK(cfg.noise_var == 0.05);
  CHECK(cfg.train.epochs == 12);
  CHECK(cfg.train.learning_rate == 0.01);
  CHECK(cfg.train.batch == 7);
  CHECK(cfg.train.mc_samples == 5);
  CHECK(cfg.train.eval_draws == 9);
  CHECK(cfg.train.mode == drf::SpectraMode::var_fixed);
  CHECK(cfg.train.seed == 42);
  CHECK(cfg.train.l2_coefficient == 0.001);
  CHECK(cfg.train.inducing_count == 17);
  CHECK(cfg.train.strategy == infer::InducingStrategy::kernel_medoids);
  CHECK(cfg.train.fix_latent_noise == true);
  CHECK(cfg.out_dir == "/tmp/run");
}

TEST_CASE("config parser leaves absent keys at their defaults") {
  const auto cfg = parse("train_data only.csv\n");
  CHECK(cfg.task == data::Task::regression);
  CHECK(cfg.arch == model::Arch::gpdrf);
  CHECK(cfg.format == config::DataFormat::tabular);
  CHECK(cfg.standardize == true);
  CHECK(cfg.classes == 0);
  CHECK(cfg.kernel == config::KernelKind::ard);
  CHECK(cfg.gp_output_dim == 2);
  CHECK(cfg.layer_widths.empty());
  CHECK(cfg.noise_var == 0.1);
  CHECK(cfg.train.epochs == 1000);
  CHECK(cfg.train.learning_rate == 1e-5);
  CHECK(cfg.train.batch == 1);
  CHECK(cfg.train.mc_samples == 100);
  CHECK(cfg.train.eval_draws == 100);
  CHECK(cfg.train.mode == drf::SpectraMode::var_resampled);
  CHECK(cfg.train.seed == 0);
  CHECK(cfg.train.l2_coefficient == 5e-4);
  CHECK(cfg.train.inducing_count == 200);
  CHECK(cfg.train.strategy == infer::InducingStrategy::random);
  CHECK(cfg.train.fix_latent_noise == false);
  CHECK(cfg.out_dir == ".");
}

TEST_CASE("config parser skips comments and blank lines") {
  const auto cfg = config::parse_text(
      "# produced by hand\n"
      "\n"
      "gpdrf_config_version 1\n"
      "  # indented comment\n"
      "seed 7\n"
      "\t\n"
      "epochs 3\n",
      "test");
  CHECK(cfg.train.seed == 7);
  CHECK(cfg.train.epochs == 3);
}

TEST_CASE("config parser enforces the version header") {
  CHECK_THROWS_WITH_AS(config::parse_text("seed 7\n", "cfg"),
                       doctest::Contains("gpdrf_config_version"), ParseError);
  CHECK_THROWS_WITH_AS(
      config::parse_text("gpdrf_config_version 2\nseed 7\n", "cfg"),
      doctest::Contains("unsupported config version"), ParseError);
  CHECK_THROWS_WITH_AS(config::parse_text("# only comments\n", "cfg"),
                       doctest::Contains("missing"), ParseError);
  CHECK_THROWS_WITH_AS(config::parse_text("", "cfg"),
                       doctest::Contains("missing"), ParseError);
  // Repeating the header counts as a duplicate key.
  CHECK_THROWS_WITH_AS(
      parse("gpdrf_config_version 1\n"),
      doctest::Contains("duplicate key 'gpdrf_config_version'"), ParseError);
}

TEST_CASE("config parser names the offending line") {
  // Line 1 is the header prefixed by the parse() helper.
  CHECK_THROWS_WITH_AS(parse("nonsense 3\n"),
                       doctest::Contains("test:2: unknown key 'nonsense'"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parse("seed 1\nepochs 2\nseed 3\n"),
                       doctest::Contains("test:4: duplicate key 'seed'"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parse("epochs fish\n"), doctest::Contains("'fish'"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parse("epochs 1.5\n"), doctest::Contains("integer"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parse("standardize maybe\n"),
                       doctest::Contains("0/1/true/false"), ParseError);
  CHECK_THROWS_WITH_AS(parse("task clustering\n"),
                       doctest::Contains("regression or classification"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parse("spectra_mode frozen\n"),
                       doctest::Contains("prior_fixed"), ParseError);
  CHECK_THROWS_WITH_AS(parse("seed\n"), doctest::Contains("has no value"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parse("seed -3\n"), doctest::Contains("non-negative"),
                       ParseError);
  CHECK_THROWS_WITH_AS(parse("layer_widths 4 x 2\n"),
                       doctest::Contains("'x'"), ParseError);
}

TEST_CASE("config file loader reports unreadable paths") {
  CHECK_THROWS_AS(config::parse_file("/nonexistent/run.cfg"), IoError);
  TempFile f("run.cfg", "gpdrf_config_version 1\nseed 5\n");
  CHECK(config::parse_file(f.path).train.seed == 5);
  // Errors carry the file path as the origin.
  TempFile bad("bad.cfg", "gpdrf_config_version 1\nwrong 1\n");
  CHECK_THROWS_WITH_AS(config::parse_file(bad.path),
                       doctest::Contains(bad.path.c_str()), ParseError);
}

TEST_CASE("config validation enforces the architecture rules") {
  CHECK_NOTHROW(config::validate(valid_base()));

  auto cfg = valid_base();
  cfg.train_data.clear();
  CHECK_THROWS_WITH_AS(config::validate(cfg),
                       doctest::Contains("train_data"), ConfigError);

  cfg = valid_base();
  cfg.feature_counts = {8};
  CHECK_THROWS_WITH_AS(config::validate(cfg),
                       doctest::Contains("feature counts"), ConfigError);

  cfg = valid_base();
  cfg.layer_widths[1] = 0;
  CHECK_THROWS_AS(config::validate(cfg), ConfigError);

  cfg = valid_base();
  cfg.arch = model::Arch::gp;
  CHECK_THROWS_WITH_AS(config::validate(cfg),
                       doctest::Contains("no stack layers"), ConfigError);

  cfg = valid_base();
  cfg.arch = model::Arch::drf;
  cfg.layer_widths.clear();
  cfg.feature_counts.clear();
  CHECK_THROWS_WITH_AS(config::validate(cfg),
                       doctest::Contains("at least one layer"), ConfigError);

  cfg = valid_base();
  cfg.gp_output_dim = 0;
  CHECK_THROWS_WITH_AS(config::validate(cfg),
                       doctest::Contains("gp_output_dim"), ConfigError);
}

TEST_CASE("config validation checks the width chain and class counts") {
  auto cfg = valid_base();
  cfg.task = data::Task::classification;
  cfg.classes = 1;
  CHECK_THROWS_WITH_AS(config::validate(cfg), doctest::Contains("classes"),
                       ConfigError);

  cfg = valid_base();
  cfg.classes = 3;  // regression must not set it
  CHECK_THROWS_WITH_AS(config::validate(cfg),
                       doctest::Contains("classification setting"),
                       ConfigError);

  // Last layer width must match the likelihood input.
  cfg = valid_base();
  cfg.task = data::Task::classification;
  cfg.classes = 3;
  CHECK_THROWS_WITH_AS(config::validate(cfg),
                       doctest::Contains("likelihood needs 3"), ConfigError);
  cfg.layer_widths = {4, 3};
  CHECK_NOTHROW(config::validate(cfg));

  // With the class count inferred later the chain check is deferred.
  cfg.classes = 0;
  CHECK_NOTHROW(config::validate(cfg));

  // No stack: the GP output feeds the likelihood directly.
  cfg = valid_base();
  cfg.layer_widths.clear();
  cfg.feature_counts.clear();
  cfg.gp_output_dim = 2;
  CHECK_THROWS_WITH_AS(config::validate(cfg),
                       doctest::Contains("likelihood needs 1"), ConfigError);
  cfg.gp_output_dim = 1;
  CHECK_NOTHROW(config::validate(cfg));
}

TEST_CASE("config validation pairs kernels with data formats") {
  // Sequence data wants a spectrum-kernel GP classifier.
  auto cfg = valid_base();
  cfg.format = config::DataFormat::sequences;
  cfg.task = data::Task::classification;
  cfg.kernel = config::KernelKind::spectrum;
  cfg.layer_widths = {4, 2};
  cfg.classes = 2;
  CHECK_NOTHROW(config::validate(cfg));

  auto seq = cfg;
  seq.arch = model::Arch::drf;
  CHECK_THROWS_WITH_AS(config::validate(seq),
                       doctest::Contains("cannot read sequences"),
                       ConfigError);

  seq = cfg;
  seq.kernel = config::KernelKind::ard;
  CHECK_THROWS_WITH_AS(config::validate(seq),
                       doctest::Contains("spectrum kernel"), ConfigError);

  seq = cfg;
  seq.task = data::Task::regression;
  seq.classes = 0;
  seq.layer_widths = {4, 1};
  CHECK_THROWS_WITH_AS(config::validate(seq),
                       doctest::Contains("classification only"), ConfigError);

  // A spectrum kernel on tabular data has nothing to consume.
  auto tab = valid_base();
  tab.kernel = config::KernelKind::spectrum;
  CHECK_THROWS_WITH_AS(config::validate(tab),
                       doctest::Contains("sequence data"), ConfigError);

  CHECK_THROWS_AS([&] {
    auto c = cfg;
    c.spectrum_k = 0;
    config::validate(c);
  }(), ConfigError);
  CHECK_THROWS_AS([&] {
    auto c = cfg;
    c.spectrum_m = -1;
    config::validate(c);
  }(), ConfigError);
}

TEST_CASE("config validation bounds the trainer scalars") {
  auto check_throws = [](auto mutate) {
    auto cfg = valid_base();
    mutate(cfg);
    CHECK_THROWS_AS(config::validate(cfg), ConfigError);
  };
  check_throws([](config::RunConfig& c) { c.noise_var = 0.0; });
  check_throws([](config::RunConfig& c) { c.train.epochs = -1; });
  check_throws([](config::RunConfig& c) { c.train.learning_rate = -1e-3; });
  check_throws([](config::RunConfig& c) { c.train.l2_coefficient = -0.1; });
  check_throws([](config::RunConfig& c) { c.train.batch = 0; });
  check_throws([](config::RunConfig& c) { c.train.mc_samples = 0; });
  check_throws([](config::RunConfig& c) { c.train.eval_draws = 1; });
  check_throws([](config::RunConfig& c) { c.train.inducing_count = 0; });

  auto cfg = valid_base();
  cfg.train.epochs = 0;  // evaluation-only runs are fine
  CHECK_NOTHROW(config::validate(cfg));
}

TEST_CASE("config render round trips through the parser") {
  auto cfg = valid_base();
  cfg.task = data::Task::classification;
  cfg.classes = 3;
  cfg.layer_widths = {5, 3};
  cfg.feature_counts = {32, 16};
  cfg.test_data = "test.csv";
  cfg.label_column = "species";
  cfg.standardize = false;
  cfg.log_alpha = 0.125;
  cfg.log_gamma = -0.75;
  cfg.gp_output_dim = 3;
  cfg.noise_var = 0.2;
  cfg.train.epochs = 250;
  cfg.train.learning_rate = 0.0123;
  cfg.train.batch = 16;
  cfg.train.mc_samples = 7;
  cfg.train.eval_draws = 33;
  cfg.train.mode = drf::SpectraMode::prior_fixed;
  cfg.train.seed = 991;
  cfg.train.l2_coefficient = 1e-3;
  cfg.train.inducing_count = 40;
  cfg.train.strategy = infer::InducingStrategy::kernel_medoids;
  cfg.train.fix_latent_noise = true;
  cfg.out_dir = "/tmp/out";

  const std::string text = config::render(cfg);
  const auto back = config::parse_text(text, "render");
  CHECK(config::render(back) == text);
  CHECK(back.task == cfg.task);
  CHECK(back.classes == cfg.classes);
  CHECK(back.layer_widths == cfg.layer_widths);
  CHECK(back.feature_counts == cfg.feature_counts);
  CHECK(back.label_column == cfg.label_column);
  CHECK(back.train.learning_rate == cfg.train.learning_rate);
  CHECK(back.train.mode == cfg.train.mode);
  CHECK(back.train.strategy == cfg.train.strategy);
  CHECK(back.train.fix_latent_noise == cfg.train.fix_latent_noise);
  CHECK(back.out_dir == cfg.out_dir);

  // Spectrum settings only appear for the spectrum kernel, and survive.
  config::RunConfig seq;
  seq.train_data = "seqs.txt";
  seq.task = data::Task::classification;
  seq.arch = model::Arch::gp;
  seq.format = config::DataFormat::sequences;
  seq.kernel = config::KernelKind::spectrum;
  seq.classes = 2;
  seq.gp_output_dim = 2;
  seq.spectrum_k = 4;
  seq.spectrum_m = 2;
  seq.spectrum_normalize = false;
  seq.log_sigma = 0.3;
  const std::string seq_text = config::render(seq);
  CHECK(seq_text.find("spectrum_k 4") != std::string::npos);
  const auto seq_back = config::parse_text(seq_text, "render");
  CHECK(config::render(seq_back) == seq_text);
  CHECK(seq_back.spectrum_m == 2);
  CHECK(seq_back.spectrum_normalize == false);
  CHECK(seq_back.log_sigma == 0.3);
  CHECK_NOTHROW(config::validate(seq_back));

  // Defaults render to something the validator does not accept blindly:
  // the base render always parses back to the identical config.
  const auto base = valid_base();
  CHECK(config::render(config::parse_text(config::render(base), "r")) ==
        config::render(base));
}
