#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sakd/config.hpp"
#include "sakd/dataset.hpp"
#include "sakd/dpp_select.hpp"
#include "sakd/interruption.hpp"
#include "sakd/linalg.hpp"
#include "sakd/model.hpp"
#include "sakd/scoring.hpp"

namespace sakd {

/// Caps OpenMP worker threads (0 leaves the runtime default). Results never
/// depend on this value.
void set_worker_count(std::size_t n);
std::size_t worker_count();

struct DifficultyEvaluation {
  InterruptionPlan plan;
  std::vector<double> kd_loss;  // index-aligned with the train set
  Matrix teacher_features;      // one row per train sample
};

/// Interrupts every train sample per plan_for_epoch(epoch), forwards it
/// through both frozen nets and records the per-sample KD loss and teacher
/// feature. Batches of cfg.eval_batch_size (for shuffle mode) come from a
/// seeded permutation; each sample or batch draws from its own substream.
DifficultyEvaluation evaluate_difficulties(const MlpNet& teacher, const Student& student,
                                           std::span<const SequenceSample> train, std::size_t epoch,
                                           const RunConfig& cfg);

struct TrainerHooks {
  std::optional<double> frozen_zeta;  // pin every difficulty to this value
};

/// Fuses features, refreshes counts / p_sel / zeta, builds the kernel over
/// fused features and picks ceil(r N) samples; then increments omega and
/// updates alpha for the chosen samples.
SelectionResult selection_round(std::span<SampleState> states, const DifficultyEvaluation& eval, std::size_t epoch,
                                const RunConfig& cfg, const TrainerHooks& hooks = {});

struct LossStats {
  double mean_ce = 0.0;
  double mean_kd = 0.0;
  std::vector<std::uint64_t> trained_ids;  // in visiting order
};

/// One epoch of momentum SGD on `selected` (indices into `train`) with
/// per-sample strengths `alphas` (same order as `selected`).
LossStats train_epoch(Student& student, const MlpNet& teacher, std::span<const SequenceSample> train,
                      std::span<const std::size_t> selected, std::span<const double> alphas, std::size_t epoch,
                      const RunConfig& cfg, bool interrupt);

struct Accuracy {
  double top1 = 0.0;
  double top5 = 0.0;
};

/// True when `label` is among the k largest logits; ties go to the lower class.
bool in_top_k(std::span<const double> logits, std::size_t label, std::size_t k);

Accuracy topk_accuracy(std::span<const std::vector<double>> logits, std::span<const std::size_t> labels);

/// Clean forward passes over `test`; k = 5 is capped at the class count.
Accuracy evaluate(const MlpNet& net, std::span<const SequenceSample> test);

struct TeacherReport {
  MlpNet net;
  double train_top1 = 0.0;
  double test_top1 = 0.0;
};

/// CE training of a teacher (width cfg.teacher_hidden) on clean data for
/// cfg.pretrain_epochs. Throws NumericError below 60% train accuracy.
TeacherReport pretrain_teacher(const SyntheticDataset& data, const RunConfig& cfg);

/// CE-only training of a fresh student on clean full data; used to measure
/// the capacity gap.
MlpNet train_from_scratch(const SyntheticDataset& data, std::size_t hidden, const RunConfig& cfg);

struct PhaseTimes {
  double difficulty_eval_s = 0.0;
  double selection_s = 0.0;
  double training_s = 0.0;
  double test_eval_s = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double beta = 0.0;
  InterruptionMode mode = InterruptionMode::dropout;
  double lr = 0.0;
  bool selection_round = false;
  std::vector<std::uint64_t> selected_ids;  // nonempty on selection rounds only
  std::vector<std::uint64_t> trained_ids;
  double objective = 0.0;
  bool degenerate_selection = false;
  double mean_zeta = 0.0;
  double mean_alpha = 0.0;
  double train_ce = 0.0;
  double train_kd = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  PhaseTimes times;
};

/// One JSON object (no timings, so it is reproducible byte for byte).
std::string metrics_line(const EpochRecord& r);
std::string timings_line(const EpochRecord& r);

struct RunResult {
  std::vector<EpochRecord> records;
  Student student;
  std::vector<SampleState> states;
  std::size_t selection_rounds = 0;
  std::size_t selection_size = 0;
};

/// The full loop. For n in [0, n_epoch): on selection epochs evaluate
/// difficulties and select; train on the current selection; evaluate.
/// `method = kd|ce` trains on all samples with a fixed strength instead.
/// When `out_dir` is nonempty writes config.resolved, metrics.jsonl,
/// timings.jsonl, selection.csv, states.csv, student.ckpt and teacher.ckpt.
RunResult run(const RunConfig& cfg, const SyntheticDataset& data, const MlpNet& teacher,
              const std::filesystem::path& out_dir = {}, const TrainerHooks& hooks = {},
              const std::filesystem::path& teacher_checkpoint = {});

/// Writes selection.csv rows for one round.
void write_selection_rows(std::ostream& out, std::size_t round, const SelectionResult& sel,
                          std::span<const SampleState> states, double gamma);
inline constexpr const char* kSelectionHeader = "round,rank,sample_id,gain,cumulative_objective";

/// One difficulty evaluation + selection round on fresh states, no training.
/// Writes states.csv and selection.csv into `out_dir` when nonempty.
SelectionResult dry_run_selection(const RunConfig& cfg, const SyntheticDataset& data, const MlpNet& teacher,
                                  const Student& student, std::size_t epoch, const std::filesystem::path& out_dir,
                                  std::vector<SampleState>* states_out = nullptr);

}  // namespace sakd
