#include "scnet/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "scnet/errors.hpp"
#include "scnet/losses.hpp"
#include "scnet/model.hpp"
#include "scnet/optim.hpp"
#include "scnet/rng.hpp"
#include "scnet/synth.hpp"
#include "scnet/text_norm.hpp"

namespace scnet {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  return out;
}

SynthConfig synth_config_of(const RunConfig& cfg) {
  SynthConfig sc;
  sc.seed = cfg.synth_seed;
  sc.n_instances = cfg.synth_instances;
  sc.n_eval_instances = cfg.synth_eval_instances;
  sc.n_vocab = cfg.synth_vocab;
  sc.ocr_error_rate = cfg.ocr_error_rate;
  sc.bias_strength = cfg.bias_strength;
  sc.feature_noise_sigma = cfg.feature_noise_sigma;
  return sc;
}

std::vector<std::string> all_answers(const std::vector<VqaInstance>& raw) {
  std::vector<std::string> answers;
  for (const auto& inst : raw) {
    answers.insert(answers.end(), inst.answers.begin(), inst.answers.end());
  }
  return answers;
}

struct BatchOutcome {
  Tensor l_bce;
  Tensor l_s;
  Tensor l_final;
  int skipped = 0;
  int clamped = 0;
};

BatchOutcome compute_batch_loss(const PreparedData& data,
                                const std::vector<int>& batch,
                                const ModelConfig& mc, const LossConfig& lc,
                                const Vocabulary& vocab,
                                ParameterStore& params) {
  BceBatch bce;
  std::vector<ContrastiveInputs> contrastive;
  for (const int idx : batch) {
    const PreparedInstance& pi = data.instances[static_cast<std::size_t>(idx)];
    const EncoderRun enc = run_encoder(pi.feats, mc, params);
    const DecodeResult dec =
        decode_answer(enc, pi.feats, vocab, DecodeMode::teacher_forced,
                      &pi.targets, mc, params);
    bce.add(dec.scores, pi.targets.targets, pi.targets.valid);
    if (mc.use_icsp) {
      contrastive.push_back({dec.ans_se, &pi.contrast.candidates,
                             &pi.contrast.y_gt, &pi.contrast.valid});
    }
  }
  BatchOutcome out;
  out.l_bce = bce.mean();
  const ContrastiveResult cr = contrastive_loss(contrastive, lc);
  out.l_s = cr.loss;
  out.skipped = cr.skipped;
  out.clamped = cr.clamped;
  out.l_final = total_loss(out.l_bce, out.l_s, lc);
  return out;
}

std::string derive_source(const std::vector<std::string>& per_step_source) {
  bool any_ocr = false, any_vocab = false;
  for (const auto& s : per_step_source) {
    if (s == "ocr") {
      any_ocr = true;
    } else {
      any_vocab = true;
    }
  }
  if (any_ocr && any_vocab) return "mixed";
  if (any_ocr) return "ocr";
  return "vocab";
}

Vocabulary obtain_vocabulary(const RunConfig& cfg,
                             const std::vector<VqaInstance>& raw,
                             const WordVectorTable& table, bool build_if_missing) {
  if (!cfg.vocab_path.empty()) {
    return load_vocabulary(cfg.vocab_path, table);
  }
  const std::string saved = cfg.out_dir + "/vocab.txt";
  if (fs::exists(saved)) {
    return load_vocabulary(saved, table);
  }
  if (!build_if_missing) {
    throw IoError("no vocabulary available: " + saved +
                  " does not exist and vocab_path is empty");
  }
  return build_vocabulary(all_answers(raw), cfg.model.vocab_size, table);
}

void write_train_report(const std::string& path, const RunConfig& cfg,
                        const TrainResult& res) {
  ordered_json j;
  j["iters_run"] = res.iters_run;
  j["initial_loss"] = res.initial_loss;
  j["final_loss"] = res.final_loss;
  j["final_tf_accuracy"] = res.final_tf_accuracy;
  j["best_tf_accuracy"] = res.best_tf_accuracy;
  j["reachability_rate"] = res.reachability_rate;
  j["skipped_total"] = res.skipped_total;
  j["clamped_total"] = res.clamped_total;
  j["aborted_non_finite"] = res.aborted_non_finite;
  j["abort_iter"] = res.abort_iter;
  j["final_checkpoint"] = res.final_checkpoint;
  j["best_checkpoint"] = res.best_checkpoint;
  j["config_hash"] = cfg.hash();
  auto out = open_for_write(path);
  out << j.dump(2) << "\n";
}

}  // namespace

PreparedData prepare_instances(const std::vector<VqaInstance>& raw,
                               const Vocabulary& vocab,
                               const QuestionVocab& qvocab,
                               const ModelConfig& cfg) {
  PreparedData data;
  long long reachable = 0;
  for (const auto& inst : raw) {
    PreparedInstance pi;
    pi.instance_id = inst.instance_id;
    pi.feats = build_instance_features(inst, qvocab, cfg);
    const std::string gt =
        inst.answers.empty() ? std::string() : inst.answers[0];
    pi.targets = answer_targets(gt, vocab, pi.feats, cfg);
    pi.contrast = contrastive_targets(pi.targets, vocab, pi.feats, cfg);
    for (const auto& ref : inst.answers) {
      pi.references.push_back(normalize_answer(ref));
    }
    if (pi.references.empty()) {
      pi.references.push_back("");
      pi.padded_references = true;
    }
    const std::size_t given = pi.references.size();
    while (pi.references.size() < 10) {
      pi.references.push_back(pi.references[pi.references.size() % given]);
      pi.padded_references = true;
    }
    if (pi.references.size() > 10) pi.references.resize(10);
    if (!pi.targets.unreachable) ++reachable;
    data.instances.push_back(std::move(pi));
  }
  data.reachability_rate =
      data.instances.empty()
          ? 0.0
          : static_cast<double>(reachable) /
                static_cast<double>(data.instances.size());
  return data;
}

double teacher_forced_accuracy(const PreparedData& data,
                               const ModelConfig& cfg, ParameterStore& params,
                               const Vocabulary& vocab) {
  NoGradGuard no_grad;
  const int cols = cfg.max_ocr + vocab.size();
  long long hits = 0, total = 0;
  for (const auto& pi : data.instances) {
    const EncoderRun enc = run_encoder(pi.feats, cfg, params);
    const DecodeResult dec =
        decode_answer(enc, pi.feats, vocab, DecodeMode::teacher_forced,
                      &pi.targets, cfg, params);
    for (int t = 0; t < pi.targets.n_steps; ++t) {
      const int pick = select_answer(
          dec.masked_scores.data() + static_cast<std::size_t>(t) * cols,
          cfg.max_ocr, vocab.size());
      if (pi.targets.targets[static_cast<std::size_t>(t) * cols + pick] == 1.0) {
        ++hits;
      }
      ++total;
    }
  }
  return total == 0 ? 0.0
                    : static_cast<double>(hits) / static_cast<double>(total);
}

TrainResult cmd_train(const RunConfig& cfg) {
  ensure_out_dir(cfg.out_dir);
  save_run_config(cfg.out_dir + "/resolved_config.json", cfg);

  const WordVectorTable table = load_word_vectors(cfg.word_vectors_path);
  if (table.dim != cfg.model.d_ft) {
    throw IoError("word vector dim " + std::to_string(table.dim) +
                  " does not match d_ft " + std::to_string(cfg.model.d_ft));
  }
  const std::vector<VqaInstance> raw = load_dataset(cfg.train_path);
  if (raw.empty()) throw UsageError("training dataset is empty");

  const Vocabulary vocab = obtain_vocabulary(cfg, raw, table, true);
  save_vocabulary(cfg.out_dir + "/vocab.txt", vocab);
  const QuestionVocab qvocab = build_question_vocab(raw);
  save_question_vocab(cfg.out_dir + "/question_vocab.txt", qvocab);

  ModelConfig mc = cfg.model;
  mc.question_vocab = qvocab.size();
  mc.vocab_size = vocab.size();

  ParameterStore params;
  init_model_params(params, mc, cfg.seed);
  AdamOptimizer opt(cfg.optim);
  const LossConfig lc = cfg.loss_config();

  const PreparedData data = prepare_instances(raw, vocab, qvocab, mc);
  const int n = static_cast<int>(data.instances.size());

  TrainResult res;
  res.reachability_rate = data.reachability_rate;
  res.last_checkpoint = "";

  auto log = open_for_write(cfg.out_dir + "/train_log.jsonl");
  SplitMix64 order_rng = SplitMix64(cfg.seed).fork("batch-order");
  double best_acc = -1.0;

  for (long long iter = 0; iter < cfg.optim.max_iters; ++iter) {
    std::vector<int> batch;
    if (cfg.optim.batch_size >= n) {
      batch.resize(static_cast<std::size_t>(n));
      std::iota(batch.begin(), batch.end(), 0);
    } else {
      std::vector<int> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), 0);
      for (int k = 0; k < cfg.optim.batch_size; ++k) {
        const int j =
            k + static_cast<int>(order_rng.uniform_int(0, n - 1 - k));
        std::swap(perm[static_cast<std::size_t>(k)],
                  perm[static_cast<std::size_t>(j)]);
      }
      batch.assign(perm.begin(), perm.begin() + cfg.optim.batch_size);
    }

    const BatchOutcome out =
        compute_batch_loss(data, batch, mc, lc, vocab, params);
    const double lval = out.l_final.item();
    if (iter == 0) res.initial_loss = lval;
    res.final_loss = lval;
    res.iters_run = iter + 1;
    res.skipped_total += out.skipped;
    res.clamped_total += out.clamped;

    if (!std::isfinite(lval)) {
      res.aborted_non_finite = true;
      res.abort_iter = iter;
      write_train_report(cfg.out_dir + "/train_report.json", cfg, res);
      throw ToleranceError(
          "non-finite loss at iteration " + std::to_string(iter) +
          (res.last_checkpoint.empty()
               ? std::string("; no checkpoint saved yet")
               : "; last good checkpoint: " + res.last_checkpoint));
    }

    const double lr = lr_at(iter, cfg.optim);
    params.zero_grads();
    out.l_final.backward();
    opt.step(params, lr);

    if (cfg.log_interval > 0 &&
        (iter % cfg.log_interval == 0 || iter + 1 == cfg.optim.max_iters)) {
      ordered_json rec;
      rec["iter"] = iter;
      rec["l_bce"] = out.l_bce.item();
      rec["l_s"] = out.l_s.item();
      rec["l_final"] = lval;
      rec["skipped_instances"] = out.skipped;
      rec["clamped_instances"] = out.clamped;
      rec["lr"] = lr;
      log << rec.dump() << "\n";
    }

    if (cfg.checkpoint_interval > 0 &&
        (iter + 1) % cfg.checkpoint_interval == 0) {
      res.last_checkpoint = cfg.out_dir + "/checkpoint_last.bin";
      params.save(res.last_checkpoint);
    }

    bool stop = false;
    if (cfg.eval_interval > 0 && ((iter + 1) % cfg.eval_interval == 0 ||
                                  iter + 1 == cfg.optim.max_iters)) {
      const double acc = teacher_forced_accuracy(data, mc, params, vocab);
      res.final_tf_accuracy = acc;
      if (acc > best_acc) {
        best_acc = acc;
        res.best_checkpoint = cfg.out_dir + "/checkpoint_best.bin";
        params.save(res.best_checkpoint);
      }
      ordered_json rec;
      rec["iter"] = iter;
      rec["tf_accuracy"] = acc;
      log << rec.dump() << "\n";
      if (cfg.early_stop_accuracy > 0.0 && acc >= cfg.early_stop_accuracy) {
        const bool loss_ok =
            cfg.early_stop_loss_ratio <= 0.0 ||
            lval < cfg.early_stop_loss_ratio * res.initial_loss;
        if (loss_ok) stop = true;
      }
    }
    if (stop) break;
  }

  res.final_tf_accuracy = teacher_forced_accuracy(data, mc, params, vocab);
  res.best_tf_accuracy = std::max(best_acc, res.final_tf_accuracy);
  res.final_checkpoint = cfg.out_dir + "/checkpoint_final.bin";
  params.save(res.final_checkpoint);
  write_train_report(cfg.out_dir + "/train_report.json", cfg, res);
  return res;
}

MetricsReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
                       const std::string& dataset_path) {
  ensure_out_dir(cfg.out_dir);
  const WordVectorTable table = load_word_vectors(cfg.word_vectors_path);
  const std::vector<VqaInstance> raw = load_dataset(dataset_path);

  Vocabulary vocab;
  QuestionVocab qvocab;
  const std::string qv_path = cfg.out_dir + "/question_vocab.txt";
  if (fs::exists(qv_path)) {
    qvocab = load_question_vocab(qv_path);
  } else {
    qvocab = build_question_vocab(raw);
  }
  vocab = obtain_vocabulary(cfg, raw, table, true);

  ModelConfig mc = cfg.model;
  mc.question_vocab = qvocab.size();
  mc.vocab_size = vocab.size();

  ParameterStore params;
  init_model_params(params, mc, cfg.seed);
  if (!checkpoint.empty()) params.load(checkpoint);

  const PreparedData data = prepare_instances(raw, vocab, qvocab, mc);

  NoGradGuard no_grad;
  std::vector<EvalRecord> records;
  auto pred_out = open_for_write(cfg.out_dir + "/predictions.jsonl");
  const int cols = mc.max_ocr + vocab.size();
  for (const auto& pi : data.instances) {
    const EncoderRun enc = run_encoder(pi.feats, mc, params);
    const DecodeResult dec = decode_answer(
        enc, pi.feats, vocab, DecodeMode::free_running, nullptr, mc, params);

    EvalRecord record;
    record.instance_id = pi.instance_id;
    record.prediction = normalize_answer(dec.answer);
    record.references = pi.references;
    record.source = derive_source(dec.per_step_source);
    record.padded_references = pi.padded_references;
    records.push_back(record);

    ordered_json line;
    line["instance_id"] = pi.instance_id;
    line["answer"] = dec.answer;
    line["per_step_source"] = dec.per_step_source;
    if (cfg.scores_topk > 0) {
      ordered_json steps = ordered_json::array();
      for (int t = 0; t < dec.steps; ++t) {
        std::vector<int> order(static_cast<std::size_t>(cols));
        std::iota(order.begin(), order.end(), 0);
        const double* row =
            dec.masked_scores.data() + static_cast<std::size_t>(t) * cols;
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return row[a] > row[b]; });
        ordered_json top = ordered_json::array();
        for (int k = 0; k < std::min(cfg.scores_topk, cols); ++k) {
          top.push_back({order[static_cast<std::size_t>(k)],
                         row[order[static_cast<std::size_t>(k)]]});
        }
        steps.push_back(std::move(top));
      }
      line["scores_topk"] = std::move(steps);
    }
    pred_out << line.dump() << "\n";
  }

  const MetricsReport report =
      compute_metrics(records, cfg.hash(), cfg.anls_threshold);
  open_for_write(cfg.out_dir + "/metrics.json") << metrics_to_json(report);
  open_for_write(cfg.out_dir + "/metrics.csv")
      << metrics_csv_header() << "\n" << metrics_to_csv_row(report) << "\n";
  return report;
}

GradCheckSummary cmd_gradcheck(const RunConfig& cfg) {
  ensure_out_dir(cfg.out_dir);
  const SynthConfig sc = synth_config_of(cfg);
  ModelConfig mc = cfg.model;

  const WordVectorTable table = build_synth_word_table(sc, mc.d_ft);
  const int count = std::max(1, cfg.gradcheck_instances);
  const std::vector<VqaInstance> raw =
      generate_dataset(sc, mc, table, 0, count);
  const Vocabulary vocab =
      build_vocabulary(all_answers(raw), mc.vocab_size, table);
  const QuestionVocab qvocab = build_question_vocab(raw);
  mc.question_vocab = qvocab.size();
  mc.vocab_size = vocab.size();

  ParameterStore params;
  init_model_params(params, mc, cfg.seed);
  const PreparedData data = prepare_instances(raw, vocab, qvocab, mc);
  const LossConfig lc = cfg.loss_config();

  std::vector<int> all_idx(data.instances.size());
  std::iota(all_idx.begin(), all_idx.end(), 0);
  const auto f = [&](ParameterStore& p) -> Tensor {
    return compute_batch_loss(data, all_idx, mc, lc, vocab, p).l_final;
  };

  GradCheckOptions opts;
  opts.h = 1e-5;
  opts.samples_per_tensor = cfg.gradcheck_samples;
  opts.tolerance = cfg.gradcheck_tolerance;
  opts.seed = cfg.seed ^ 0x5DEECE66Dull;

  const auto t0 = std::chrono::steady_clock::now();
  GradCheckSummary summary;
  summary.report = grad_check(f, params, opts);
  summary.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  summary.n_params = static_cast<long long>(params.size());

  ordered_json j;
  j["pass"] = summary.report.pass;
  j["determinism_ok"] = summary.report.determinism_ok;
  j["max_rel_err"] = summary.report.max_rel_err;
  j["worst_param"] = summary.report.worst.param;
  j["worst_flat_index"] = summary.report.worst.flat_index;
  j["worst_analytic"] = summary.report.worst.analytic;
  j["worst_numeric"] = summary.report.worst.numeric;
  j["entries_checked"] = summary.report.entries_checked;
  j["n_parameter_tensors"] = summary.n_params;
  j["seconds"] = summary.seconds;
  ordered_json per = ordered_json::object();
  for (const auto& [name, err] : summary.report.per_param_max) {
    per[name] = err;
  }
  j["per_param_max"] = std::move(per);
  open_for_write(cfg.out_dir + "/gradcheck_report.json") << j.dump(2) << "\n";

  if (!summary.report.pass) {
    throw ToleranceError(
        "gradient check failed: worst parameter " + summary.report.worst.param +
        " rel err " + std::to_string(summary.report.max_rel_err));
  }
  return summary;
}

void cmd_synth(const RunConfig& cfg) {
  ensure_out_dir(cfg.out_dir);
  const SynthConfig sc = synth_config_of(cfg);
  const ModelConfig& mc = cfg.model;
  const WordVectorTable table = build_synth_word_table(sc, mc.d_ft);

  std::vector<SynthAnnotations> train_notes, eval_notes;
  const std::vector<VqaInstance> train =
      generate_dataset(sc, mc, table, 0, sc.n_instances, &train_notes);
  const std::vector<VqaInstance> eval_set = generate_dataset(
      sc, mc, table, sc.n_instances, sc.n_eval_instances, &eval_notes);

  save_dataset(cfg.out_dir + "/train.jsonl", train);
  save_dataset(cfg.out_dir + "/eval.jsonl", eval_set);
  save_word_vectors(cfg.out_dir + "/word_vectors.txt", table);

  auto notes_out = open_for_write(cfg.out_dir + "/annotations.jsonl");
  const auto dump_notes = [&](const std::vector<VqaInstance>& insts,
                              const std::vector<SynthAnnotations>& notes,
                              const char* split) {
    for (std::size_t i = 0; i < insts.size(); ++i) {
      ordered_json j;
      j["instance_id"] = insts[i].instance_id;
      j["split"] = split;
      j["true_answer"] = notes[i].true_answer;
      j["distractor"] = notes[i].distractor;
      j["answer_ocr_slot"] = notes[i].answer_ocr_slot;
      j["bias_trap"] = notes[i].bias_trap;
      j["ocr_corrupted"] = notes[i].ocr_corrupted;
      notes_out << j.dump() << "\n";
    }
  };
  dump_notes(train, train_notes, "train");
  dump_notes(eval_set, eval_notes, "eval");
}

std::vector<AblateCell> cmd_ablate(const RunConfig& cfg) {
  ensure_out_dir(cfg.out_dir);
  RunConfig base = cfg;
  if (base.train_path.empty()) {
    RunConfig synth_run = cfg;
    synth_run.out_dir = cfg.out_dir + "/data";
    cmd_synth(synth_run);
    base.train_path = synth_run.out_dir + "/train.jsonl";
    base.eval_path = synth_run.out_dir + "/eval.jsonl";
    base.word_vectors_path = synth_run.out_dir + "/word_vectors.txt";
  }
  if (base.eval_path.empty()) {
    throw UsageError("ablation requires an eval dataset");
  }

  const std::pair<bool, bool> combos[] = {
      {false, false}, {true, false}, {false, true}, {true, true}};
  std::vector<AblateCell> cells;
  for (const auto& [use_sct, use_icsp] : combos) {
    RunConfig run = base;
    run.model.use_sct = use_sct;
    run.model.use_icsp = use_icsp;
    run.out_dir = cfg.out_dir + std::string("/") +
                  (use_sct ? "sct" : "base") + (use_icsp ? "_icsp" : "_plain");
    const TrainResult tr = cmd_train(run);
    const MetricsReport rep = cmd_eval(run, tr.final_checkpoint, run.eval_path);

    AblateCell cell;
    cell.use_sct = use_sct;
    cell.use_icsp = use_icsp;
    const auto lengths = input_lengths(run.model);
    cell.enc_len = lengths.first;
    cell.total_len = lengths.second;
    cell.metrics = rep;
    cell.split.vocab_acc = rep.vocab_acc.value_or(0.0);
    cell.split.ocr_acc = rep.ocr_acc.value_or(0.0);
    cell.split.total_acc = cell.split.vocab_acc + cell.split.ocr_acc;
    cells.push_back(std::move(cell));
  }

  ordered_json grid = ordered_json::array();
  for (const auto& cell : cells) {
    ordered_json j;
    j["use_sct"] = cell.use_sct;
    j["use_icsp"] = cell.use_icsp;
    j["enc_len"] = cell.enc_len;
    j["total_len"] = cell.total_len;
    j["accuracy"] = cell.metrics.accuracy.value_or(0.0);
    j["anls"] = cell.metrics.anls.value_or(0.0);
    j["vocab_acc"] = cell.split.vocab_acc;
    j["ocr_acc"] = cell.split.ocr_acc;
    grid.push_back(std::move(j));
  }
  open_for_write(cfg.out_dir + "/ablation.json") << grid.dump(2) << "\n";

  auto tab = open_for_write(cfg.out_dir + "/ablation_table.txt");
  tab << "sct icsp enc_len total_len accuracy anls vocab_acc ocr_acc\n";
  for (const auto& cell : cells) {
    tab << (cell.use_sct ? "on " : "off") << " "
        << (cell.use_icsp ? "on " : "off") << "  " << cell.enc_len << " "
        << cell.total_len << " " << cell.metrics.accuracy.value_or(0.0) << " "
        << cell.metrics.anls.value_or(0.0) << " " << cell.split.vocab_acc
        << " " << cell.split.ocr_acc << "\n";
  }
  return cells;
}

}  // namespace scnet
