#include "dropblock/tooling/cli.hpp"

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dropblock/error.hpp"
#include "dropblock/mask.hpp"
#include "dropblock/nn/config.hpp"
#include "dropblock/nn/train.hpp"
#include "dropblock/regularizers.hpp"
#include "dropblock/tooling/gradcheck.hpp"
#include "dropblock/tooling/oracle.hpp"
#include "dropblock/tooling/render.hpp"
#include "dropblock/tooling/robustness.hpp"

namespace dropblock::tooling {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing " + path);
}

struct MapFlags {
  int block_size = 1;
  double keep_prob = 0.9;
  int height = 0;
  int width = 0;
  double gamma_multiplier = 1.0;
  bool shared = false;

  void add(CLI::App* app) {
    app->add_option("--block-size", block_size, "DropBlock block size")->required();
    app->add_option("--keep-prob", keep_prob, "target keep probability")->required();
    app->add_option("--height", height, "feature map height")->required();
    app->add_option("--width", width, "feature map width")->required();
    app->add_option("--gamma-multiplier", gamma_multiplier, "seed-rate multiplier");
  }
  DropBlockConfig config() const {
    return DropBlockConfig{block_size, keep_prob, !shared, gamma_multiplier};
  }
};

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"DropBlock structured-dropout toolkit", "dropblock"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  bool seed_given = false;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { seed = s, seed_given = true; },
        "random seed");
  };

  MapFlags gamma_flags;
  auto* gamma_cmd = app.add_subcommand("gamma", "print the DropBlock seed rate");
  gamma_flags.add(gamma_cmd);
  add_seed(gamma_cmd);

  MapFlags mask_flags;
  int samples = 1, channels = 1, slice_sample = 0, slice_channel = 0;
  std::string mask_format = "ascii", mask_output;
  auto* mask_cmd = app.add_subcommand("mask", "sample and render DropBlock masks");
  mask_flags.add(mask_cmd);
  mask_cmd->add_option("--samples", samples, "batch size");
  mask_cmd->add_option("--channels", channels, "channels per sample");
  mask_cmd->add_flag("--shared", mask_flags.shared, "share one mask across channels");
  mask_cmd->add_option("--format", mask_format, "ascii or pgm");
  mask_cmd->add_option("--sample", slice_sample, "slice to render as pgm");
  mask_cmd->add_option("--channel", slice_channel, "slice to render as pgm");
  mask_cmd->add_option("--output", mask_output, "write the render to this file");
  add_seed(mask_cmd);

  MapFlags rate_flags;
  long trials = 10000;
  std::string rate_format = "json", rate_output;
  auto* rate_cmd = app.add_subcommand("rate", "exact and Monte-Carlo drop-rate audit");
  rate_flags.add(rate_cmd);
  rate_cmd->add_option("--trials", trials, "Monte-Carlo masks");
  rate_cmd->add_flag("--shared", rate_flags.shared, "shared-channel mask mode");
  rate_cmd->add_option("--format", rate_format, "json (full report) or csv (probability map)");
  rate_cmd->add_option("--output", rate_output, "write the report to this file");
  add_seed(rate_cmd);

  double target = 0.9;
  long steps = 0, start = 0;
  std::optional<long> end;
  auto* sched_cmd = app.add_subcommand("schedule", "dump the linear keep_prob schedule as CSV");
  sched_cmd->add_option("--target", target, "final keep_prob")->required();
  sched_cmd->add_option("--steps", steps, "last step to print")->required();
  sched_cmd->add_option("--start", start, "step where the ramp begins");
  sched_cmd->add_option("--end", end, "step where the ramp reaches the target (default: --steps)");
  add_seed(sched_cmd);

  std::string config_path, csv_path, json_path;
  auto* train_cmd = app.add_subcommand("train", "train a network from a config file");
  train_cmd->add_option("--config", config_path, "run config")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--csv", csv_path, "per-epoch CSV (default: stdout)");
  train_cmd->add_option("--json", json_path, "JSON summary");
  add_seed(train_cmd);

  std::string sweep_config, sweep_output;
  std::vector<int> sweep_blocks{1, 5};
  std::vector<double> sweep_kps{1.0, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6};
  auto* sweep_cmd = app.add_subcommand("sweep", "train, then evaluate with inference-time DropBlock");
  sweep_cmd->add_option("--config", sweep_config, "run config")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--block-sizes", sweep_blocks, "inference block sizes")->delimiter(',');
  sweep_cmd->add_option("--keep-probs", sweep_kps, "inference keep_probs")->delimiter(',');
  sweep_cmd->add_option("--output", sweep_output, "curve CSV (default: stdout)");
  add_seed(sweep_cmd);

  auto* grad_cmd = app.add_subcommand("gradcheck", "run the finite-difference gradient suite");
  add_seed(grad_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gamma_cmd->parsed()) {
      const auto& f = gamma_flags;
      out << fmt("%.15g", compute_gamma(f.keep_prob, f.block_size, f.height, f.width,
                                        f.gamma_multiplier))
          << "\n";
    } else if (mask_cmd->parsed()) {
      const RenderFormat format = render_format_from(mask_format);
      RngStream rng(seed, 0);
      const MaskBatch m = sample_mask(rng, mask_flags.config(), samples, channels,
                                      mask_flags.height, mask_flags.width);
      std::string rendered;
      if (format == RenderFormat::Pgm) {
        rendered = render_mask(m.mask, slice_sample, slice_channel, format);
      } else {
        const bool many = samples * channels > 1;
        for (int s = 0; s < samples; ++s) {
          for (int c = 0; c < channels; ++c) {
            if (many) {
              rendered += "sample " + std::to_string(s) + " channel " + std::to_string(c) + "\n";
            }
            rendered += render_mask(m.mask, s, c, format);
            if (many) rendered += "\n";
          }
        }
      }
      if (mask_output.empty()) {
        out << rendered;
      } else {
        write_file(mask_output, rendered);
      }
    } else if (rate_cmd->parsed()) {
      if (rate_format != "json" && rate_format != "csv") {
        throw ParameterError("rate --format must be json or csv");
      }
      RngStream rng(seed, 0);
      const RateReport r = rate_report(rng, rate_flags.config(), rate_flags.height,
                                       rate_flags.width, trials);
      const std::string text = rate_format == "json" ? r.to_json() : r.map_to_csv();
      if (rate_output.empty()) {
        out << text;
      } else {
        write_file(rate_output, text);
      }
    } else if (sched_cmd->parsed()) {
      const LinearSchedule s{start, end.value_or(steps), target};
      s.validate();
      out << "step,keep_prob\n";
      for (long t = 0; t <= steps; ++t) out << t << "," << fmt("%.12g", schedule_at(s, t)) << "\n";
    } else if (train_cmd->parsed()) {
      nn::RunConfig cfg = nn::load_run_config(config_path);
      if (seed_given) cfg.train.seed = seed;
      const auto [train_set, val_set] = nn::load_datasets(cfg.data);
      const nn::TrainReport report = nn::train(cfg.network, train_set, val_set, cfg.train);
      if (csv_path.empty()) {
        out << report.to_csv();
      } else {
        write_file(csv_path, report.to_csv());
      }
      if (!json_path.empty()) write_file(json_path, report.to_json());
    } else if (sweep_cmd->parsed()) {
      nn::RunConfig cfg = nn::load_run_config(sweep_config);
      if (seed_given) cfg.train.seed = seed;
      const auto [train_set, val_set] = nn::load_datasets(cfg.data);
      nn::Network net(cfg.network, cfg.train.seed);
      (void)nn::train(net, train_set, val_set, cfg.train);
      std::vector<SweepGrid> grids;
      for (int bs : sweep_blocks) grids.push_back(SweepGrid{bs, sweep_kps, true});
      const auto curves = robustness_sweep(net, val_set, grids, cfg.train.seed);
      const std::string csv = curves_to_csv(curves);
      if (sweep_output.empty()) {
        out << csv;
      } else {
        write_file(sweep_output, csv);
      }
    } else if (grad_cmd->parsed()) {
      bool ok = true;
      out << "check,max_relative_error,tolerance,status\n";
      for (const auto& r : run_gradcheck_suite(seed)) {
        ok = ok && r.passed();
        out << r.name << "," << fmt("%.3e", r.max_relative_error) << ","
            << fmt("%.0e", r.tolerance) << "," << (r.passed() ? "pass" : "FAIL") << "\n";
      }
      if (!ok) {
        err << "gradcheck: at least one check exceeded its tolerance\n";
        return kExitRuntime;
      }
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const GeometryError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace dropblock::tooling
