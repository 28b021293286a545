#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "sakd/errors.hpp"
#include "sakd/io.hpp"
#include "sakd/model.hpp"

using namespace sakd;

namespace {

SequenceSample random_sample(std::size_t t, std::size_t d, std::size_t k, std::mt19937_64& g) {
  std::normal_distribution<double> nd(0.0, 1.0);
  SequenceSample s{g() % 1000, g() % k, t, d, std::vector<double>(t * d)};
  for (double& x : s.frames) x = nd(g);
  return s;
}

void randomize(std::span<double> p, std::mt19937_64& g, double scale) {
  std::normal_distribution<double> nd(0.0, scale);
  for (double& x : p) x = nd(g);
}

// Straight-line forward pass written independently of the library layout.
ModelOutput naive_forward(const MlpNet& net, const SequenceSample& s) {
  const auto& d = net.dims();
  const auto p = net.parameters();
  std::vector<double> pooled(d.input, 0.0);
  for (std::size_t t = 0; t < s.num_frames; ++t)
    for (std::size_t k = 0; k < d.input; ++k) pooled[k] += s.frames[t * d.input + k] / static_cast<double>(s.num_frames);
  ModelOutput o;
  for (std::size_t h = 0; h < d.hidden; ++h) {
    double z = p[d.hidden * d.input + h];
    for (std::size_t k = 0; k < d.input; ++k) z += p[h * d.input + k] * pooled[k];
    o.feature.push_back(std::max(0.0, z));
  }
  const std::size_t w2 = d.hidden * d.input + d.hidden;
  for (std::size_t c = 0; c < d.output; ++c) {
    double z = p[w2 + d.output * d.hidden + c];
    for (std::size_t h = 0; h < d.hidden; ++h) z += p[w2 + c * d.hidden + h] * o.feature[h];
    o.logits.push_back(z);
  }
  return o;
}

double composed(const Student& st, const ModelOutput& t, const SequenceSample& s, double alpha, KdMode mode) {
  const SampleLoss l = student_sample_loss(st, t, s, alpha, mode, 4.0);
  return (1 - alpha) * l.ce + alpha * l.kd;
}

bool near_kink(const MlpNet& net, const SequenceSample& s) {
  for (double z : forward_cached(net, s).pre_activation)
    if (std::fabs(z) < 1e-2) return true;
  return false;
}

}  // namespace

TEST_CASE("zero parameters give zero outputs") {
  const MlpNet net({5, 4, 3});
  std::mt19937_64 g(41);
  const auto out = forward(net, random_sample(6, 5, 3, g));
  for (double x : out.logits) CHECK(x == 0.0);
  for (double x : out.feature) CHECK(x == 0.0);
}

TEST_CASE("forward matches a naive reimplementation") {
  std::mt19937_64 g(42);
  for (int t = 0; t < 50; ++t) {
    MlpNet net({3 + g() % 6, 2 + g() % 9, 2 + g() % 5});
    randomize(net.parameters(), g, 1.0);
    const auto s = random_sample(1 + g() % 8, net.dims().input, net.dims().output, g);
    const auto a = forward(net, s);
    const auto b = naive_forward(net, s);
    for (std::size_t i = 0; i < a.logits.size(); ++i) CHECK(std::fabs(a.logits[i] - b.logits[i]) <= 1e-12);
    for (std::size_t i = 0; i < a.feature.size(); ++i) CHECK(std::fabs(a.feature[i] - b.feature[i]) <= 1e-12);
    CHECK(forward(net, s).logits == a.logits);
  }
}

TEST_CASE("masked frames add zero to the mean pool") {
  MlpNet net({2, 2, 2});
  std::mt19937_64 g(43);
  randomize(net.parameters(), g, 1.0);
  SequenceSample s{0, 0, 4, 2, {1, 2, 0, 0, 3, 4, 0, 0}};
  const auto cache = forward_cached(net, s);
  CHECK(cache.pooled[0] == doctest::Approx(1.0));
  CHECK(cache.pooled[1] == doctest::Approx(1.5));
}

TEST_CASE("init is uniform within the fan limits with zero biases") {
  Rng rng(44);
  const MlpNet net = MlpNet::initialized({20, 64, 10}, rng);
  const double l1 = std::sqrt(6.0 / 84.0), l2 = std::sqrt(6.0 / 74.0);
  for (double w : net.w1()) CHECK(std::fabs(w) <= l1);
  for (double w : net.w2()) CHECK(std::fabs(w) <= l2);
  for (double b : net.b1()) CHECK(b == 0.0);
  for (double b : net.b2()) CHECK(b == 0.0);
  Rng again(44);
  CHECK(MlpNet::initialized({20, 64, 10}, again).parameters()[7] == net.parameters()[7]);
  CHECK_THROWS(MlpNet({0, 3, 2}));
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  std::mt19937_64 g(45);
  MlpNet net({4, 3, 2});
  randomize(net.parameters(), g, 1.0);
  const auto s = random_sample(3, 4, 2, g);
  const std::vector<double> zero(2, 0.0);
  for (double x : backward(net, forward_cached(net, s), zero)) CHECK(x == 0.0);
  CHECK_THROWS(backward(net, ForwardCache{}, zero));
}

TEST_CASE("composed-loss gradients match central differences") {
  std::mt19937_64 g(46);
  const double h = 1e-3;
  int configs = 0;
  for (int attempt = 0; configs < 24 && attempt < 500; ++attempt) {
    const std::size_t d = 3 + g() % 4, hs = 2 + g() % 4, ht = hs + 1 + g() % 3, k = 2 + g() % 4;
    Rng rng(g());
    Student st = make_student(d, hs, k, ht, rng);
    randomize(st.net.parameters(), g, 0.8);
    randomize(st.projection.parameters(), g, 0.8);
    MlpNet teacher({d, ht, k});
    randomize(teacher.parameters(), g, 0.8);
    const auto s = random_sample(4, d, k, g);
    if (near_kink(st.net, s)) continue;
    const ModelOutput tout = forward(teacher, s);
    ++configs;
    for (KdMode mode : {KdMode::logit, KdMode::feature}) {
      for (double alpha : {0.1, 0.5, 0.9}) {
        StudentGrads grads = zero_grads(st);
        student_sample_loss(st, tout, s, alpha, mode, 4.0, &grads, 1.0);
        auto check_block = [&](std::span<double> params, const std::vector<double>& analytic) {
          for (std::size_t i = 0; i < params.size(); ++i) {
            const double keep = params[i];
            params[i] = keep + h;
            const double up = composed(st, tout, s, alpha, mode);
            params[i] = keep - h;
            const double dn = composed(st, tout, s, alpha, mode);
            params[i] = keep;
            const double num = (up - dn) / (2 * h);
            CHECK(std::fabs(num - analytic[i]) <= 1e-4 * std::max(std::fabs(num), std::fabs(analytic[i])) + 1e-8);
          }
        };
        check_block(st.net.parameters(), grads.net);
        if (mode == KdMode::feature) {
          check_block(st.projection.parameters(), grads.projection);
        } else {
          for (double x : grads.projection) CHECK(x == 0.0);
        }
      }
    }
  }
  CHECK(configs >= 20);
}

TEST_CASE("gradient weight scales linearly") {
  std::mt19937_64 g(47);
  Rng rng(1);
  Student st = make_student(4, 3, 3, 5, rng);
  MlpNet teacher({4, 5, 3});
  randomize(teacher.parameters(), g, 1.0);
  const auto s = random_sample(4, 4, 3, g);
  const auto tout = forward(teacher, s);
  StudentGrads a = zero_grads(st), b = zero_grads(st);
  student_sample_loss(st, tout, s, 0.4, KdMode::feature, 4.0, &a, 1.0);
  student_sample_loss(st, tout, s, 0.4, KdMode::feature, 4.0, &b, 0.25);
  for (std::size_t i = 0; i < a.net.size(); ++i) CHECK(b.net[i] == doctest::Approx(0.25 * a.net[i]));
}

TEST_CASE("sgd step arithmetic") {
  MlpNet net({2, 2, 2});
  for (double& p : net.parameters()) p = 1.0;
  const std::vector<double> grad(net.parameters().size(), 0.5);
  sgd_step(net, grad, {0.0, 0.0, 0.9});
  CHECK(net.parameters()[0] == 1.0);

  MlpNet plain({2, 2, 2});
  for (double& p : plain.parameters()) p = 1.0;
  sgd_step(plain, grad, {0.1, 0.0, 0.0});
  CHECK(plain.parameters()[3] == doctest::Approx(0.95));

  MlpNet mom({2, 2, 2});
  for (double& p : mom.parameters()) p = 1.0;
  sgd_step(mom, grad, {0.1, 0.0, 0.9});
  sgd_step(mom, grad, {0.1, 0.0, 0.9});
  // v1 = 0.5, w1 = 0.95; v2 = 0.95, w2 = 0.855
  CHECK(mom.parameters()[0] == doctest::Approx(0.855).epsilon(1e-14));

  MlpNet wd({2, 2, 2});
  for (double& p : wd.parameters()) p = 2.0;
  const std::vector<double> zero(wd.parameters().size(), 0.0);
  sgd_step(wd, zero, {0.1, 0.01, 0.0});
  CHECK(wd.parameters()[0] == doctest::Approx(2.0 - 0.1 * 0.01 * 2.0));
}

TEST_CASE("non-finite gradient names the block") {
  MlpNet net({2, 2, 2});
  std::vector<double> grad(net.parameters().size(), 0.0);
  grad[net.parameters().size() - 1] = std::nan("");
  try {
    sgd_step(net, grad, {0.1, 0.0, 0.0});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("b2") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip with and without projection") {
  const auto dir = std::filesystem::temp_directory_path() / "sakd_test_ckpt";
  std::filesystem::create_directories(dir);
  Rng rng(48);
  const Student st = make_student(5, 3, 4, 7, rng);
  save_checkpoint(dir / "s.ckpt", st.net, &st.projection, {"student", 9, "abc", 3});
  const auto back = load_checkpoint(dir / "s.ckpt");
  CHECK(back.net.dims() == st.net.dims());
  CHECK(std::equal(back.net.parameters().begin(), back.net.parameters().end(), st.net.parameters().begin()));
  REQUIRE(back.projection.has_value());
  CHECK(std::equal(back.projection->parameters().begin(), back.projection->parameters().end(),
                   st.projection.parameters().begin()));
  const std::string manifest = io::read_file(dir / "s.ckpt.manifest");
  CHECK(manifest.find("seed = 9") != std::string::npos);
  CHECK(manifest.find("spec_hash = abc") != std::string::npos);

  save_checkpoint(dir / "t.ckpt", st.net, nullptr, {"teacher", 1, "x", 0});
  CHECK_FALSE(load_checkpoint(dir / "t.ckpt").projection.has_value());
  save_checkpoint(dir / "t2.ckpt", st.net, nullptr, {"teacher", 1, "x", 0});
  CHECK(io::read_file(dir / "t.ckpt") == io::read_file(dir / "t2.ckpt"));

  std::string bytes = io::read_file(dir / "t.ckpt");
  io::write_file(dir / "trunc.ckpt", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), IoError);
  bytes[0] = 'X';
  io::write_file(dir / "bad.ckpt", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
  std::filesystem::remove_all(dir);
}
