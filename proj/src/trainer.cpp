#include "sakd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include "json.hpp"
#include <stdexcept>

#include "sakd/errors.hpp"
#include "sakd/io.hpp"
#include "sakd/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sakd {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::size_t> seeded_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
  return p;
}

double shuffle_fraction(const InterruptionPlan& plan, const RunConfig& cfg) {
  return cfg.shuffle_fraction == ShuffleFraction::eta ? cfg.eta : plan.rate;
}

// Gathers and interrupts one batch. Dropout draws a substream per sample id,
// shuffle one per batch index, so the result is independent of scheduling.
std::vector<SequenceSample> interrupted_batch(std::span<const SequenceSample> all, std::span<const std::size_t> members,
                                              const InterruptionPlan& plan, const RunConfig& cfg, Stream dropout_stream,
                                              Stream shuffle_stream, std::size_t batch_index, bool interrupt) {
  std::vector<SequenceSample> batch;
  batch.reserve(members.size());
  for (std::size_t i : members) batch.push_back(all[i]);
  if (!interrupt) return batch;
  if (plan.mode == InterruptionMode::dropout) {
    for (auto& s : batch) {
      Rng rng = make_rng(cfg.seed, dropout_stream, {plan.epoch, s.id});
      s = apply_dropout(std::move(s), plan.rate, rng);
    }
    return batch;
  }
  Rng rng = make_rng(cfg.seed, shuffle_stream, {plan.epoch, batch_index});
  return apply_shuffle(std::move(batch), shuffle_fraction(plan, cfg), rng).batch;
}

double mean_of(std::span<const SampleState> states, std::span<const std::size_t> idx, double SampleState::*field) {
  if (idx.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i : idx) s += states[i].*field;
  return s / static_cast<double>(idx.size());
}

std::string fmt_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::uint64_t params_hash(const MlpNet& net) {
  const auto p = net.parameters();
  return io::fnv1a(std::string_view(reinterpret_cast<const char*>(p.data()), p.size_bytes()));
}

void prepare_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

std::ofstream open_text(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

void set_worker_count(std::size_t n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(static_cast<int>(n));
#else
  (void)n;
#endif
}

std::size_t worker_count() {
#ifdef _OPENMP
  return static_cast<std::size_t>(omp_get_max_threads());
#else
  return 1;
#endif
}

DifficultyEvaluation evaluate_difficulties(const MlpNet& teacher, const Student& student,
                                           std::span<const SequenceSample> train, std::size_t epoch,
                                           const RunConfig& cfg) {
  DifficultyEvaluation out;
  out.plan = plan_for_epoch(epoch, cfg);
  const std::size_t n = train.size();
  out.kd_loss.assign(n, 0.0);
  out.teacher_features = Matrix(n, teacher.dims().hidden);

  Rng order_rng = make_rng(cfg.seed, Stream::eval_batching, {epoch});
  const std::vector<std::size_t> order = seeded_permutation(n, order_rng);
  const std::size_t bs = cfg.eval_batch_size;
  const auto n_batches = static_cast<std::ptrdiff_t>((n + bs - 1) / bs);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t b = 0; b < n_batches; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    const std::size_t lo = ub * bs;
    const std::span<const std::size_t> members(order.data() + lo, std::min(bs, n - lo));
    const auto batch = interrupted_batch(train, members, out.plan, cfg, Stream::eval_dropout, Stream::eval_shuffle,
                                         ub, true);
    for (std::size_t m = 0; m < members.size(); ++m) {
      const ModelOutput t = forward(teacher, batch[m]);
      const ModelOutput s = forward(student.net, batch[m]);
      out.kd_loss[members[m]] = kd_loss(t, student, s, cfg.kd_mode, cfg.tau);
      std::copy(t.feature.begin(), t.feature.end(), out.teacher_features.row(members[m]).begin());
    }
  }
  return out;
}

SelectionResult selection_round(std::span<SampleState> states, const DifficultyEvaluation& eval, std::size_t epoch,
                                const RunConfig& cfg, const TrainerHooks& hooks) {
  const std::size_t n = states.size();
  if (eval.kd_loss.size() != n || eval.teacher_features.rows() != n) {
    throw std::invalid_argument("selection_round: evaluation does not cover every sample");
  }
  for (std::size_t i = 0; i < n; ++i) fuse_feature(states[i], eval.teacher_features.row(i), cfg.lambda);
  normalize_counts(states);
  std::vector<double> zetas(n);
  for (std::size_t i = 0; i < n; ++i) {
    SampleState& s = states[i];
    s.p_sel = selection_probability(s.omega_norm, cfg.epsilon);
    s.zeta = hooks.frozen_zeta ? std::clamp(*hooks.frozen_zeta, cfg.zeta_min, cfg.zeta_max)
                               : difficulty(s.p_sel, eval.kd_loss[i], cfg.zeta_min, cfg.zeta_max);
    zetas[i] = s.zeta;
  }

  FeatureMatrix fused(n, states.empty() ? 0 : states[0].fused_feature.size());
  for (std::size_t i = 0; i < n; ++i) std::copy(states[i].fused_feature.begin(), states[i].fused_feature.end(), fused.row(i).begin());
  const KernelMatrix kernel = build_kernel(fused, cfg.kernel_jitter, cfg.normalize_kernel);
  SelectionResult sel = greedy_select(kernel, zetas, cfg.gamma, selection_size(cfg.selection_ratio, n));

  const double beta = interruption_rate(epoch, cfg.n_epoch, cfg.theta);
  for (std::size_t i : sel.indices) {
    SampleState& s = states[i];
    s.omega += 1;
    s.alpha = update_strength(s, beta, cfg);
  }
  return sel;
}

LossStats train_epoch(Student& student, const MlpNet& teacher, std::span<const SequenceSample> train,
                      std::span<const std::size_t> selected, std::span<const double> alphas, std::size_t epoch,
                      const RunConfig& cfg, bool interrupt) {
  if (alphas.size() != selected.size()) throw std::invalid_argument("train_epoch: one alpha per selected sample");
  LossStats stats;
  if (selected.empty()) return stats;

  const InterruptionPlan plan = plan_for_epoch(epoch, cfg);
  Rng order_rng = make_rng(cfg.seed, Stream::train_order, {epoch});
  const std::vector<std::size_t> perm = seeded_permutation(selected.size(), order_rng);
  std::vector<std::size_t> order(selected.size());
  std::vector<double> order_alpha(selected.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    order[i] = selected[perm[i]];
    order_alpha[i] = alphas[perm[i]];
  }

  const SgdParams sgd{cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch)), cfg.weight_decay, cfg.momentum};
  const std::size_t bs = cfg.batch_size;
  double ce_sum = 0.0;
  double kd_sum = 0.0;
  std::vector<StudentGrads> per_sample;
  std::vector<SampleLoss> losses;

  for (std::size_t lo = 0, b = 0; lo < order.size(); lo += bs, ++b) {
    const std::size_t count = std::min(bs, order.size() - lo);
    const std::span<const std::size_t> members(order.data() + lo, count);
    const auto batch =
        interrupted_batch(train, members, plan, cfg, Stream::train_dropout, Stream::train_shuffle, b, interrupt);

    per_sample.assign(count, zero_grads(student));
    losses.assign(count, {});
    const double weight = 1.0 / static_cast<double>(count);
    const auto sc = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t m = 0; m < sc; ++m) {
      const auto um = static_cast<std::size_t>(m);
      const ModelOutput t = forward(teacher, batch[um]);
      losses[um] = student_sample_loss(student, t, batch[um], order_alpha[lo + um], cfg.kd_mode, cfg.tau,
                                       &per_sample[um], weight);
    }
    StudentGrads total = zero_grads(student);
    for (std::size_t m = 0; m < count; ++m) {
      if (!std::isfinite(losses[m].ce) || !std::isfinite(losses[m].kd)) {
        throw NumericError("non-finite loss on sample " + std::to_string(batch[m].id) + " at epoch " +
                           std::to_string(epoch));
      }
      ce_sum += losses[m].ce;
      kd_sum += losses[m].kd;
      for (std::size_t i = 0; i < total.net.size(); ++i) total.net[i] += per_sample[m].net[i];
      for (std::size_t i = 0; i < total.projection.size(); ++i) total.projection[i] += per_sample[m].projection[i];
      stats.trained_ids.push_back(batch[m].id);
    }
    if (cfg.kd_mode == KdMode::logit) total.projection.clear();
    sgd_step(student, total, sgd);
  }
  stats.mean_ce = ce_sum / static_cast<double>(order.size());
  stats.mean_kd = kd_sum / static_cast<double>(order.size());
  return stats;
}

bool in_top_k(std::span<const double> logits, std::size_t label, std::size_t k) {
  const double y = logits[label];
  std::size_t rank = 0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    if (logits[c] > y || (logits[c] == y && c < label)) ++rank;
  }
  return rank < k;
}

Accuracy topk_accuracy(std::span<const std::vector<double>> logits, std::span<const std::size_t> labels) {
  if (logits.empty() || logits.size() != labels.size()) throw std::invalid_argument("topk_accuracy: bad input sizes");
  std::size_t hit1 = 0;
  std::size_t hit5 = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const std::size_t k5 = std::min<std::size_t>(5, logits[i].size());
    hit1 += in_top_k(logits[i], labels[i], 1) ? 1 : 0;
    hit5 += in_top_k(logits[i], labels[i], k5) ? 1 : 0;
  }
  const auto n = static_cast<double>(logits.size());
  return {static_cast<double>(hit1) / n, static_cast<double>(hit5) / n};
}

Accuracy evaluate(const MlpNet& net, std::span<const SequenceSample> test) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  std::vector<std::vector<double>> logits(test.size());
  std::vector<std::size_t> labels(test.size());
  const auto n = static_cast<std::ptrdiff_t>(test.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    logits[u] = forward(net, test[u]).logits;
    labels[u] = test[u].label;
  }
  return topk_accuracy(logits, labels);
}

namespace {

MlpNet train_ce(const SyntheticDataset& data, std::size_t hidden, const RunConfig& cfg, Stream init, Stream order) {
  Rng init_rng = make_rng(cfg.seed, init);
  MlpNet net = MlpNet::initialized({data.spec.frame_dim, hidden, data.num_classes()}, init_rng);
  const std::size_t n = data.train.size();
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    Rng rng = make_rng(cfg.seed, order, {epoch});
    const auto perm = seeded_permutation(n, rng);
    const SgdParams sgd{cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch)), cfg.weight_decay, cfg.momentum};
    for (std::size_t lo = 0; lo < n; lo += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - lo);
      std::vector<double> grad(net.parameters().size(), 0.0);
      const double w = 1.0 / static_cast<double>(count);
      for (std::size_t m = 0; m < count; ++m) {
        const SequenceSample& s = data.train[perm[lo + m]];
        const ForwardCache cache = forward_cached(net, s);
        const auto g = backward(net, cache, ce_grad(cache.output.logits, s.label));
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += w * g[i];
      }
      sgd_step(net, grad, sgd);
    }
  }
  return net;
}

}  // namespace

TeacherReport pretrain_teacher(const SyntheticDataset& data, const RunConfig& cfg) {
  TeacherReport report;
  report.net = train_ce(data, cfg.teacher_hidden, cfg, Stream::teacher_init, Stream::teacher_order);
  report.train_top1 = evaluate(report.net, data.train).top1;
  report.test_top1 = evaluate(report.net, data.test).top1;
  if (report.train_top1 < 0.6) {
    throw NumericError("teacher reached only " + fmt_real(100.0 * report.train_top1) +
                       "% train accuracy (< 60%); check the data spec and optimizer settings");
  }
  return report;
}

MlpNet train_from_scratch(const SyntheticDataset& data, std::size_t hidden, const RunConfig& cfg) {
  return train_ce(data, hidden, cfg, Stream::student_init, Stream::train_order);
}

std::string metrics_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["beta"] = r.beta;
  j["mode"] = std::string(to_string(r.mode));
  j["lr"] = r.lr;
  j["selection_round"] = r.selection_round;
  j["selected_ids"] = r.selected_ids;
  j["n_trained"] = r.trained_ids.size();
  j["objective"] = std::isfinite(r.objective) ? nlohmann::ordered_json(r.objective) : nlohmann::ordered_json(nullptr);
  j["degenerate_selection"] = r.degenerate_selection;
  j["mean_zeta"] = r.mean_zeta;
  j["mean_alpha"] = r.mean_alpha;
  j["train_ce"] = r.train_ce;
  j["train_kd"] = r.train_kd;
  j["top1"] = r.top1;
  j["top5"] = r.top5;
  return j.dump();
}

std::string timings_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["difficulty_eval_s"] = r.times.difficulty_eval_s;
  j["selection_s"] = r.times.selection_s;
  j["training_s"] = r.times.training_s;
  j["test_eval_s"] = r.times.test_eval_s;
  return j.dump();
}

void write_selection_rows(std::ostream& out, std::size_t round, const SelectionResult& sel,
                          std::span<const SampleState> states, double gamma) {
  const double offset = gamma == 1.0 ? 0.0 : -(1.0 - gamma) * sel.log_det_normalizer;
  double cumulative = 0.0;
  for (std::size_t r = 0; r < sel.indices.size(); ++r) {
    cumulative += sel.objective_trace[r];
    out << round << ',' << r << ',' << states[sel.indices[r]].id << ',' << fmt_real(sel.objective_trace[r]) << ','
        << fmt_real(cumulative + offset) << '\n';
  }
}

RunResult run(const RunConfig& cfg, const SyntheticDataset& data, const MlpNet& teacher,
              const std::filesystem::path& out_dir, const TrainerHooks& hooks,
              const std::filesystem::path& teacher_checkpoint) {
  cfg.validate();
  if (data.train.empty() || data.test.empty()) throw std::invalid_argument("run: dataset has an empty split");
  if (teacher.dims().input != data.spec.frame_dim || teacher.dims().output != data.num_classes()) {
    throw std::invalid_argument("run: teacher does not match the dataset shape");
  }
  const std::uint64_t teacher_hash = params_hash(teacher);
  const bool writing = !out_dir.empty();

  std::ofstream metrics;
  std::ofstream timings;
  std::ofstream selection_csv;
  std::ofstream states_csv;
  if (writing) {
    prepare_out_dir(out_dir);
    io::write_file(out_dir / "config.resolved", serialize_config(cfg));
    if (!teacher_checkpoint.empty()) {
      io::write_file(out_dir / "teacher.ckpt", io::read_file(teacher_checkpoint));
    } else {
      save_checkpoint(out_dir / "teacher.ckpt", teacher, nullptr, {"teacher", cfg.seed, spec_hash(data.spec, data.seed), 0});
    }
    metrics = open_text(out_dir / "metrics.jsonl");
    timings = open_text(out_dir / "timings.jsonl");
    selection_csv = open_text(out_dir / "selection.csv");
    states_csv = open_text(out_dir / "states.csv");
    selection_csv << kSelectionHeader << '\n';
    states_csv << kStateHeader << '\n';
  }

  RunResult result;
  Rng init_rng = make_rng(cfg.seed, Stream::student_init);
  result.student =
      make_student(data.spec.frame_dim, cfg.student_hidden, data.num_classes(), teacher.dims().hidden, init_rng);
  std::vector<std::uint64_t> ids(data.train.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = data.train[i].id;
  result.states = initial_states(ids, cfg);
  result.selection_size = cfg.method == Method::sakd ? selection_size(cfg.selection_ratio, ids.size()) : ids.size();

  std::vector<std::size_t> current;
  if (cfg.method != Method::sakd) {
    current.resize(ids.size());
    std::iota(current.begin(), current.end(), std::size_t{0});
  }
  const double fixed_alpha = cfg.method == Method::kd ? cfg.kd_alpha : 0.0;

  for (std::size_t n = 0; n < cfg.n_epoch; ++n) {
    EpochRecord rec;
    const InterruptionPlan plan = plan_for_epoch(n, cfg);
    rec.epoch = n;
    rec.beta = plan.rate;
    rec.mode = plan.mode;
    rec.lr = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(n));

    if (cfg.method == Method::sakd && n % cfg.selection_period == 0) {
      auto t0 = Clock::now();
      const DifficultyEvaluation eval = evaluate_difficulties(teacher, result.student, data.train, n, cfg);
      rec.times.difficulty_eval_s = seconds_since(t0);
      t0 = Clock::now();
      const SelectionResult sel = selection_round(result.states, eval, n, cfg, hooks);
      rec.times.selection_s = seconds_since(t0);
      current = sel.indices;
      rec.selection_round = true;
      rec.objective = sel.objective_value;
      rec.degenerate_selection = sel.degenerate_fill;
      for (std::size_t i : sel.indices) rec.selected_ids.push_back(ids[i]);
      if (writing) {
        write_selection_rows(selection_csv, result.selection_rounds, sel, result.states, cfg.gamma);
        write_state_rows(states_csv, result.selection_rounds, result.states);
      }
      ++result.selection_rounds;
      if (const std::string problem = audit_states(result.states, cfg); !problem.empty()) {
        throw NumericError("state audit failed after epoch " + std::to_string(n) + ": " + problem);
      }
    }

    std::vector<double> alphas(current.size(), fixed_alpha);
    if (cfg.method == Method::sakd) {
      for (std::size_t j = 0; j < current.size(); ++j) alphas[j] = result.states[current[j]].alpha;
      rec.mean_zeta = mean_of(result.states, current, &SampleState::zeta);
      rec.mean_alpha = mean_of(result.states, current, &SampleState::alpha);
    } else {
      rec.mean_alpha = fixed_alpha;
    }

    auto t0 = Clock::now();
    const bool interrupt = cfg.method == Method::sakd && !cfg.clean_train;
    LossStats stats = train_epoch(result.student, teacher, data.train, current, alphas, n, cfg, interrupt);
    rec.times.training_s = seconds_since(t0);
    rec.train_ce = stats.mean_ce;
    rec.train_kd = stats.mean_kd;
    rec.trained_ids = std::move(stats.trained_ids);

    t0 = Clock::now();
    const Accuracy acc = evaluate(result.student.net, data.test);
    rec.times.test_eval_s = seconds_since(t0);
    rec.top1 = acc.top1;
    rec.top5 = acc.top5;

    if (writing) {
      metrics << metrics_line(rec) << '\n' << std::flush;
      timings << timings_line(rec) << '\n' << std::flush;
      selection_csv.flush();
      states_csv.flush();
    }
    result.records.push_back(std::move(rec));
  }

  if (params_hash(teacher) != teacher_hash) throw NumericError("teacher parameters changed during the run");
  if (writing) {
    const Projection* proj = cfg.kd_mode == KdMode::feature ? &result.student.projection : nullptr;
    save_checkpoint(out_dir / "student.ckpt", result.student.net, proj,
                    {"student", cfg.seed, spec_hash(data.spec, data.seed), cfg.n_epoch});
  }
  return result;
}

SelectionResult dry_run_selection(const RunConfig& cfg, const SyntheticDataset& data, const MlpNet& teacher,
                                  const Student& student, std::size_t epoch, const std::filesystem::path& out_dir,
                                  std::vector<SampleState>* states_out) {
  std::vector<std::uint64_t> ids(data.train.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = data.train[i].id;
  std::vector<SampleState> states = initial_states(ids, cfg);
  const DifficultyEvaluation eval = evaluate_difficulties(teacher, student, data.train, epoch, cfg);
  SelectionResult sel = selection_round(states, eval, epoch, cfg);
  if (!out_dir.empty()) {
    prepare_out_dir(out_dir);
    io::write_file(out_dir / "config.resolved", serialize_config(cfg));
    std::ofstream sel_csv = open_text(out_dir / "selection.csv");
    sel_csv << kSelectionHeader << '\n';
    write_selection_rows(sel_csv, 0, sel, states, cfg.gamma);
    std::ofstream st_csv = open_text(out_dir / "states.csv");
    st_csv << kStateHeader << '\n';
    write_state_rows(st_csv, 0, states);
  }
  if (states_out) *states_out = std::move(states);
  return sel;
}

}  // namespace sakd
