#include "sakd/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sakd/errors.hpp"
#include "sakd/io.hpp"

namespace sakd {
namespace {

constexpr char kCheckpointMagic[8] = {'S', 'A', 'K', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void fill_uniform(std::span<double> values, double limit, Rng& rng) {
  for (double& v : values) v = (2.0 * uniform_unit(rng) - 1.0) * limit;
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

MlpNet::MlpNet(NetDims dims) : dims_(dims) {
  if (dims.input == 0 || dims.hidden == 0 || dims.output < 2) {
    throw std::invalid_argument("MlpNet: need input >= 1, hidden >= 1, output >= 2");
  }
  const std::size_t n = dims.hidden * dims.input + dims.hidden + dims.output * dims.hidden + dims.output;
  params_.assign(n, 0.0);
  velocity_.assign(n, 0.0);
}

MlpNet MlpNet::initialized(NetDims dims, Rng& rng) {
  MlpNet net(dims);
  auto p = net.parameters();
  fill_uniform(p.subspan(0, dims.hidden * dims.input), glorot_limit(dims.input, dims.hidden), rng);
  const std::size_t w2_off = dims.hidden * dims.input + dims.hidden;
  fill_uniform(p.subspan(w2_off, dims.output * dims.hidden), glorot_limit(dims.hidden, dims.output), rng);
  return net;
}

std::vector<ParamBlock> MlpNet::blocks() const {
  const std::size_t a = dims_.hidden * dims_.input;
  const std::size_t c = dims_.output * dims_.hidden;
  return {{"w1", 0, a}, {"b1", a, dims_.hidden}, {"w2", a + dims_.hidden, c}, {"b2", a + dims_.hidden + c, dims_.output}};
}

Projection::Projection(std::size_t in, std::size_t out) : in_(in), out_(out) {
  if (in == 0 || out == 0) throw std::invalid_argument("Projection: dimensions must be positive");
  params_.assign(out * in + out, 0.0);
  velocity_.assign(params_.size(), 0.0);
}

Projection Projection::initialized(std::size_t in, std::size_t out, Rng& rng) {
  Projection p(in, out);
  fill_uniform(p.parameters().subspan(0, out * in), glorot_limit(in, out), rng);
  return p;
}

std::vector<ParamBlock> Projection::blocks() const {
  return {{"projection.weight", 0, out_ * in_}, {"projection.bias", out_ * in_, out_}};
}

std::vector<double> Projection::apply(std::span<const double> x) const {
  if (x.size() != in_) throw std::invalid_argument("Projection::apply: dimension mismatch");
  std::vector<double> y(out_);
  const double* w = params_.data();
  for (std::size_t o = 0; o < out_; ++o) {
    double s = params_[out_ * in_ + o];
    for (std::size_t i = 0; i < in_; ++i) s += w[o * in_ + i] * x[i];
    y[o] = s;
  }
  return y;
}

Student make_student(std::size_t input, std::size_t hidden, std::size_t classes, std::size_t teacher_hidden, Rng& rng) {
  Student s;
  s.net = MlpNet::initialized({input, hidden, classes}, rng);
  s.projection = Projection::initialized(hidden, teacher_hidden, rng);
  return s;
}

ForwardCache forward_cached(const MlpNet& net, const SequenceSample& sample) {
  const NetDims& d = net.dims();
  if (sample.frame_dim != d.input) {
    throw std::invalid_argument("forward: sample " + std::to_string(sample.id) + " has frame_dim " +
                                std::to_string(sample.frame_dim) + ", net expects " + std::to_string(d.input));
  }
  if (sample.frames.size() != sample.num_frames * sample.frame_dim || sample.num_frames == 0) {
    throw std::invalid_argument("forward: malformed sample " + std::to_string(sample.id));
  }
  ForwardCache c;
  c.pooled.assign(d.input, 0.0);
  for (std::size_t t = 0; t < sample.num_frames; ++t) {
    const auto f = sample.frame(t);
    for (std::size_t k = 0; k < d.input; ++k) c.pooled[k] += f[k];
  }
  const double inv_t = 1.0 / static_cast<double>(sample.num_frames);
  for (double& x : c.pooled) x *= inv_t;

  const auto w1 = net.w1();
  const auto b1 = net.b1();
  c.pre_activation.resize(d.hidden);
  c.output.feature.resize(d.hidden);
  for (std::size_t h = 0; h < d.hidden; ++h) {
    double s = b1[h];
    for (std::size_t k = 0; k < d.input; ++k) s += w1[h * d.input + k] * c.pooled[k];
    c.pre_activation[h] = s;
    c.output.feature[h] = s > 0.0 ? s : 0.0;
  }
  const auto w2 = net.w2();
  const auto b2 = net.b2();
  c.output.logits.resize(d.output);
  for (std::size_t o = 0; o < d.output; ++o) {
    double s = b2[o];
    for (std::size_t h = 0; h < d.hidden; ++h) s += w2[o * d.hidden + h] * c.output.feature[h];
    c.output.logits[o] = s;
  }
  return c;
}

ModelOutput forward(const MlpNet& net, const SequenceSample& sample) { return forward_cached(net, sample).output; }

std::vector<double> backward(const MlpNet& net, const ForwardCache& cache, std::span<const double> dlogits,
                             std::span<const double> dfeature) {
  const NetDims& d = net.dims();
  if (cache.pooled.size() != d.input || cache.pre_activation.size() != d.hidden) {
    throw std::invalid_argument("backward: forward cache missing or from a different network");
  }
  if (dlogits.size() != d.output || (!dfeature.empty() && dfeature.size() != d.hidden)) {
    throw std::invalid_argument("backward: upstream gradient dimension mismatch");
  }
  std::vector<double> g(net.parameters().size(), 0.0);
  const std::size_t off_b1 = d.hidden * d.input;
  const std::size_t off_w2 = off_b1 + d.hidden;
  const std::size_t off_b2 = off_w2 + d.output * d.hidden;
  const auto w2 = net.w2();
  const auto& feature = cache.output.feature;

  for (std::size_t o = 0; o < d.output; ++o) {
    g[off_b2 + o] = dlogits[o];
    for (std::size_t h = 0; h < d.hidden; ++h) g[off_w2 + o * d.hidden + h] = dlogits[o] * feature[h];
  }
  for (std::size_t h = 0; h < d.hidden; ++h) {
    if (!(cache.pre_activation[h] > 0.0)) continue;
    double df = dfeature.empty() ? 0.0 : dfeature[h];
    for (std::size_t o = 0; o < d.output; ++o) df += w2[o * d.hidden + h] * dlogits[o];
    g[off_b1 + h] = df;
    for (std::size_t k = 0; k < d.input; ++k) g[h * d.input + k] = df * cache.pooled[k];
  }
  return g;
}

StudentGrads zero_grads(const Student& s) {
  return {std::vector<double>(s.net.parameters().size(), 0.0),
          std::vector<double>(s.projection.parameters().size(), 0.0)};
}

double kd_loss(const ModelOutput& teacher_out, const Student& student, const ModelOutput& student_out, KdMode mode,
               double tau) {
  if (mode == KdMode::logit) return kd_logit_per_sample(teacher_out.logits, student_out.logits, tau);
  return kd_feature_per_sample(teacher_out.feature, student.projection.apply(student_out.feature));
}

SampleLoss student_sample_loss(const Student& student, const ModelOutput& teacher_out, const SequenceSample& sample,
                               double alpha, KdMode mode, double tau, StudentGrads* grads, double weight) {
  const ForwardCache cache = forward_cached(student.net, sample);
  const auto& logits = cache.output.logits;
  SampleLoss loss;
  loss.ce = ce_per_sample(logits, sample.label);

  std::vector<double> dlogits;
  std::vector<double> dfeature;
  if (mode == KdMode::logit) {
    loss.kd = kd_logit_per_sample(teacher_out.logits, logits, tau);
    if (grads) {
      dlogits = ce_grad(logits, sample.label);
      const auto gk = kd_logit_grad(teacher_out.logits, logits, tau);
      for (std::size_t o = 0; o < dlogits.size(); ++o) dlogits[o] = (1.0 - alpha) * dlogits[o] + alpha * gk[o];
    }
  } else {
    const Projection& proj = student.projection;
    const auto projected = proj.apply(cache.output.feature);
    loss.kd = kd_feature_per_sample(teacher_out.feature, projected);
    if (grads) {
      dlogits = ce_grad(logits, sample.label);
      for (double& x : dlogits) x *= (1.0 - alpha);
      auto dproj = kd_feature_grad(teacher_out.feature, projected);
      for (double& x : dproj) x *= alpha;
      const std::size_t in = proj.in_dim();
      const std::size_t out = proj.out_dim();
      const auto pw = proj.parameters();
      dfeature.assign(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        grads->projection[out * in + o] += weight * dproj[o];
        for (std::size_t i = 0; i < in; ++i) {
          grads->projection[o * in + i] += weight * dproj[o] * cache.output.feature[i];
          dfeature[i] += pw[o * in + i] * dproj[o];
        }
      }
    }
  }
  if (grads) {
    const auto g = backward(student.net, cache, dlogits, dfeature);
    for (std::size_t i = 0; i < g.size(); ++i) grads->net[i] += weight * g[i];
  }
  return loss;
}

void sgd_step(std::span<double> params, std::span<double> velocity, std::span<const double> grads,
              std::span<const ParamBlock> blocks, const SgdParams& p) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw std::invalid_argument("sgd_step: parameter/gradient size mismatch");
  }
  for (const auto& b : blocks) {
    for (std::size_t i = b.offset; i < b.offset + b.size; ++i) {
      if (!std::isfinite(grads[i])) {
        throw NumericError("non-finite gradient in parameter block '" + std::string(b.name) + "'");
      }
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = p.momentum * velocity[i] + grads[i];
    params[i] -= p.lr * velocity[i] + p.lr * p.weight_decay * params[i];
  }
}

void sgd_step(MlpNet& net, std::span<const double> grads, const SgdParams& p) {
  const auto blocks = net.blocks();
  sgd_step(net.parameters(), net.velocity(), grads, blocks, p);
}

void sgd_step(Student& student, const StudentGrads& grads, const SgdParams& p) {
  sgd_step(student.net, grads.net, p);
  if (!grads.projection.empty()) {
    const auto blocks = student.projection.blocks();
    sgd_step(student.projection.parameters(), student.projection.velocity(), grads.projection, blocks, p);
  }
}

void save_checkpoint(const std::filesystem::path& path, const MlpNet& net, const Projection* projection,
                     const CheckpointManifest& manifest) {
  std::ostringstream out(std::ios::binary);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  io::write_pod<std::uint32_t>(out, kCheckpointVersion);
  io::write_pod<std::uint32_t>(out, projection ? 1u : 0u);
  io::write_pod<std::uint64_t>(out, net.dims().input);
  io::write_pod<std::uint64_t>(out, net.dims().hidden);
  io::write_pod<std::uint64_t>(out, net.dims().output);
  if (projection) {
    io::write_pod<std::uint64_t>(out, projection->in_dim());
    io::write_pod<std::uint64_t>(out, projection->out_dim());
  }
  io::write_doubles(out, net.parameters());
  if (projection) io::write_doubles(out, projection->parameters());
  io::write_file(path, out.str());

  std::ostringstream m;
  m << "role = " << manifest.role << "\n"
    << "seed = " << manifest.seed << "\n"
    << "spec_hash = " << manifest.spec_hash << "\n"
    << "epoch = " << manifest.epoch << "\n";
  io::write_file(path.string() + ".manifest", m.str());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path), std::ios::binary);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::string_view(magic, 8) != std::string_view(kCheckpointMagic, 8)) {
    throw IoError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  const auto version = io::read_pod<std::uint32_t>(in, "checkpoint version");
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto has_projection = io::read_pod<std::uint32_t>(in, "checkpoint flags");
  NetDims dims;
  dims.input = io::read_pod<std::uint64_t>(in, "checkpoint header");
  dims.hidden = io::read_pod<std::uint64_t>(in, "checkpoint header");
  dims.output = io::read_pod<std::uint64_t>(in, "checkpoint header");
  std::size_t proj_in = 0;
  std::size_t proj_out = 0;
  if (has_projection) {
    proj_in = io::read_pod<std::uint64_t>(in, "checkpoint header");
    proj_out = io::read_pod<std::uint64_t>(in, "checkpoint header");
  }
  constexpr std::size_t kMaxDim = std::size_t{1} << 24;
  if (dims.input > kMaxDim || dims.hidden > kMaxDim || dims.output > kMaxDim || proj_in > kMaxDim ||
      proj_out > kMaxDim) {
    throw IoError("checkpoint header has implausible dimensions");
  }
  LoadedCheckpoint out;
  try {
    out.net = MlpNet(dims);
    if (has_projection) out.projection = Projection(proj_in, proj_out);
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("checkpoint header invalid: ") + e.what());
  }
  io::read_doubles(in, out.net.parameters(), "network parameters");
  if (out.projection) io::read_doubles(in, out.projection->parameters(), "projection parameters");
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in checkpoint '" + path.string() + "'");
  return out;
}

}  // namespace sakd
