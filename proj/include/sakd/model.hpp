#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sakd/config.hpp"
#include "sakd/interruption.hpp"
#include "sakd/kd_losses.hpp"
#include "sakd/rng.hpp"

namespace sakd {

/// Named contiguous range inside a flat parameter vector.
struct ParamBlock {
  std::string_view name;
  std::size_t offset;
  std::size_t size;
};

struct NetDims {
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t output = 0;
  bool operator==(const NetDims&) const = default;
};

/// Mean-pool over frames, then input -> ReLU hidden -> logits. The hidden
/// activation is the feature used for distillation and the DPP kernel.
/// Parameters are stored flat as [w1 (hidden x input), b1, w2 (output x hidden), b2].
class MlpNet {
 public:
  MlpNet() = default;
  explicit MlpNet(NetDims dims);

  /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static MlpNet initialized(NetDims dims, Rng& rng);

  const NetDims& dims() const noexcept { return dims_; }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> velocity() noexcept { return velocity_; }
  std::vector<ParamBlock> blocks() const;

  std::span<const double> w1() const { return {params_.data(), dims_.hidden * dims_.input}; }
  std::span<const double> b1() const { return {params_.data() + dims_.hidden * dims_.input, dims_.hidden}; }
  std::span<const double> w2() const { return {params_.data() + b2_offset() - dims_.output * dims_.hidden, dims_.output * dims_.hidden}; }
  std::span<const double> b2() const { return {params_.data() + b2_offset(), dims_.output}; }

 private:
  std::size_t b2_offset() const { return dims_.hidden * dims_.input + dims_.hidden + dims_.output * dims_.hidden; }

  NetDims dims_;
  std::vector<double> params_;
  std::vector<double> velocity_;
};

/// Trainable linear map from the student feature to the teacher feature
/// width, flat as [weight (out x in), bias].
class Projection {
 public:
  Projection() = default;
  Projection(std::size_t in, std::size_t out);
  static Projection initialized(std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_dim() const noexcept { return in_; }
  std::size_t out_dim() const noexcept { return out_; }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> velocity() noexcept { return velocity_; }
  std::vector<ParamBlock> blocks() const;

  std::vector<double> apply(std::span<const double> x) const;

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  std::vector<double> params_;
  std::vector<double> velocity_;
};

struct Student {
  MlpNet net;
  Projection projection;  // used only when kd_mode == feature
};

Student make_student(std::size_t input, std::size_t hidden, std::size_t classes, std::size_t teacher_hidden, Rng& rng);

struct ForwardCache {
  std::vector<double> pooled;
  std::vector<double> pre_activation;
  ModelOutput output;
};

ForwardCache forward_cached(const MlpNet& net, const SequenceSample& sample);
ModelOutput forward(const MlpNet& net, const SequenceSample& sample);

/// Gradient of a loss w.r.t. every parameter of `net` (flat layout), given
/// its gradient at the logits and, optionally, at the hidden feature.
std::vector<double> backward(const MlpNet& net, const ForwardCache& cache, std::span<const double> dlogits,
                             std::span<const double> dfeature = {});

struct StudentGrads {
  std::vector<double> net;
  std::vector<double> projection;
};

StudentGrads zero_grads(const Student& s);

struct SampleLoss {
  double ce = 0.0;
  double kd = 0.0;
};

/// Per-sample composed loss (1 - alpha) ce + alpha kd for the student on an
/// already-interrupted sample, with the teacher output on the same input.
/// When `grads` is given, adds `weight` times the gradient of the composed
/// loss into it (projection included in feature mode).
SampleLoss student_sample_loss(const Student& student, const ModelOutput& teacher_out, const SequenceSample& sample,
                               double alpha, KdMode mode, double tau, StudentGrads* grads = nullptr,
                               double weight = 1.0);

/// Per-sample kd term only, no gradient.
double kd_loss(const ModelOutput& teacher_out, const Student& student, const ModelOutput& student_out, KdMode mode,
               double tau);

struct SgdParams {
  double lr = 0.05;
  double weight_decay = 0.0;
  double momentum = 0.0;
};

/// v <- momentum * v + g; w <- w - lr * v - lr * weight_decay * w.
/// Throws NumericError naming the block on a non-finite gradient.
void sgd_step(std::span<double> params, std::span<double> velocity, std::span<const double> grads,
              std::span<const ParamBlock> blocks, const SgdParams& p);
void sgd_step(MlpNet& net, std::span<const double> grads, const SgdParams& p);
void sgd_step(Student& student, const StudentGrads& grads, const SgdParams& p);

struct CheckpointManifest {
  std::string role;
  std::uint64_t seed = 0;
  std::string spec_hash;
  std::size_t epoch = 0;
};

/// Little-endian: "SAKDCKPT", u32 version, u32 has_projection, u64 input,
/// hidden, output[, u64 proj_in, proj_out], then f64 parameter blocks in
/// declaration order. Writes `<path>.manifest` alongside.
void save_checkpoint(const std::filesystem::path& path, const MlpNet& net, const Projection* projection,
                     const CheckpointManifest& manifest);

struct LoadedCheckpoint {
  MlpNet net;
  std::optional<Projection> projection;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sakd
