#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "scnet/errors.hpp"
#include "scnet/harness.hpp"
#include "scnet/run_config.hpp"

namespace {

struct CommonArgs {
  std::string config;
  scnet::CliOverrides cli;
  std::string seed_str;
  std::string preset;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "run configuration JSON")
      ->required();
  cmd->add_option("--seed", args.seed_str, "override the run seed");
  cmd->add_option("--preset", args.preset, "preset name: toy or paper")
      ->check(CLI::IsMember({"toy", "paper"}));
  cmd->add_option("--out", args.out_dir, "override the output directory");
  cmd->add_flag("--no-sct", args.cli.no_sct,
                "single-trunk encoder instead of the two-branch stage");
  cmd->add_flag("--no-icsp", args.cli.no_icsp,
                "disable semantic guidance and the contrastive term");
}

scnet::RunConfig resolve(CommonArgs& args) {
  if (!args.seed_str.empty()) {
    args.cli.seed = std::stoull(args.seed_str);
  }
  if (!args.preset.empty()) args.cli.preset = args.preset;
  if (!args.out_dir.empty()) args.cli.out_dir = args.out_dir;
  return scnet::load_run_config(args.config, args.cli);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"text-reading VQA trainer"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, grad_args, synth_args, ablate_args;
  std::string eval_checkpoint, eval_data;

  CLI::App* train = app.add_subcommand("train", "teacher-forced training");
  add_common(train, train_args);

  CLI::App* eval_cmd = app.add_subcommand("eval", "free-running evaluation");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("--checkpoint", eval_checkpoint,
                       "parameter file; empty evaluates a fresh init");
  eval_cmd->add_option("--data", eval_data,
                       "dataset to evaluate; defaults to eval_path");

  CLI::App* grad = app.add_subcommand("gradcheck",
                                      "finite-difference gradient check");
  add_common(grad, grad_args);

  CLI::App* synth = app.add_subcommand("synth", "generate a dataset");
  add_common(synth, synth_args);

  CLI::App* ablate = app.add_subcommand(
      "ablate", "train and evaluate the four encoder/guidance combinations");
  add_common(ablate, ablate_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const scnet::RunConfig cfg = resolve(train_args);
      const scnet::TrainResult res = scnet::cmd_train(cfg);
      std::printf("trained %lld iters, final loss %.6f, tf accuracy %.4f\n",
                  res.iters_run, res.final_loss, res.final_tf_accuracy);
    } else if (eval_cmd->parsed()) {
      const scnet::RunConfig cfg = resolve(eval_args);
      const std::string data = eval_data.empty() ? cfg.eval_path : eval_data;
      if (data.empty()) {
        throw scnet::UsageError("eval needs --data or eval_path in the config");
      }
      const scnet::MetricsReport rep = scnet::cmd_eval(cfg, eval_checkpoint, data);
      std::printf("evaluated %lld instances, accuracy %s, anls %s\n",
                  rep.n_instances,
                  rep.accuracy ? std::to_string(*rep.accuracy).c_str() : "null",
                  rep.anls ? std::to_string(*rep.anls).c_str() : "null");
    } else if (grad->parsed()) {
      const scnet::RunConfig cfg = resolve(grad_args);
      const scnet::GradCheckSummary sum = scnet::cmd_gradcheck(cfg);
      std::printf("gradcheck passed: %lld entries, max rel err %.3e, %.1fs\n",
                  sum.report.entries_checked, sum.report.max_rel_err,
                  sum.seconds);
    } else if (synth->parsed()) {
      const scnet::RunConfig cfg = resolve(synth_args);
      scnet::cmd_synth(cfg);
      std::printf("wrote %d train and %d eval instances to %s\n",
                  cfg.synth_instances, cfg.synth_eval_instances,
                  cfg.out_dir.c_str());
    } else if (ablate->parsed()) {
      const scnet::RunConfig cfg = resolve(ablate_args);
      const auto cells = scnet::cmd_ablate(cfg);
      for (const auto& c : cells) {
        std::printf("sct=%d icsp=%d acc=%.4f vocab=%.4f ocr=%.4f\n",
                    c.use_sct ? 1 : 0, c.use_icsp ? 1 : 0,
                    c.metrics.accuracy.value_or(0.0), c.split.vocab_acc,
                    c.split.ocr_acc);
      }
    }
  } catch (const scnet::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const scnet::ToleranceError& e) {
    std::fprintf(stderr, "tolerance error: %s\n", e.what());
    return 2;
  } catch (const scnet::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
