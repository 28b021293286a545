#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <sstream>

#include "sakd/config.hpp"
#include "sakd/scoring.hpp"

using namespace sakd;

namespace {

std::vector<SampleState> with_counts(std::initializer_list<std::uint64_t> counts) {
  std::vector<SampleState> s;
  std::uint64_t id = 0;
  for (auto c : counts) {
    SampleState st;
    st.id = id++;
    st.omega = c;
    s.push_back(st);
  }
  return s;
}

}  // namespace

TEST_CASE("initial states") {
  RunConfig cfg;
  cfg.epsilon = 2.0;
  const std::vector<std::uint64_t> ids{7, 3, 9};
  const auto s = initial_states(ids, cfg);
  REQUIRE(s.size() == 3);
  CHECK(s[1].id == 3);
  CHECK(s[0].omega == 0);
  CHECK(s[0].alpha == cfg.alpha_init);
  CHECK(s[0].p_sel == 0.5);
  CHECK(s[0].fused_feature.empty());
  CHECK(audit_states(s, cfg).empty());
}

TEST_CASE("count normalization by the mean, floored at one") {
  auto s = with_counts({0, 4, 8});
  normalize_counts(s);
  CHECK(s[0].omega_norm == 0.0);
  CHECK(s[1].omega_norm == 1.0);
  CHECK(s[2].omega_norm == 2.0);

  auto sparse = with_counts({0, 0, 0, 1});
  normalize_counts(sparse);
  CHECK(sparse[3].omega_norm == 1.0);

  auto none = with_counts({0, 0});
  normalize_counts(none);
  CHECK(none[0].omega_norm == 0.0);
}

TEST_CASE("selection probability") {
  CHECK(selection_probability(0, 1) == 1.0);
  CHECK(selection_probability(1, 1) == 0.5);
  CHECK(selection_probability(3, 1) == 0.25);
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> u(0, 10);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(g), b = u(g), eps = 0.01 + u(g);
    if (a < b) CHECK(selection_probability(a, eps) > selection_probability(b, eps));
  }
}

TEST_CASE("difficulty values and clamps") {
  CHECK(difficulty(0.5, 4.0, 1e-6, 1e6) == 0.5);
  CHECK(difficulty(1.0, 0.0, 1e-6, 1e6) == 1e6);
  CHECK(difficulty(1.0, 10.0, 1e-6, 1e6) == doctest::Approx(0.1));
  CHECK(difficulty(1.0, 10.0, 1e-6, 1e6) < difficulty(1.0, 1.0, 1e-6, 1e6));
  CHECK(difficulty(1.0, 1e12, 1e-6, 1e6) == 1e-6);
  CHECK(difficulty(1.0, 1e-12, 1e-6, 1e6) == 1e6);
}

TEST_CASE("difficulty is monotone in loss and in selection count") {
  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> u(1e-3, 20);
  for (int i = 0; i < 2000; ++i) {
    const double l1 = u(g), l2 = u(g);
    if (l1 < l2) CHECK(difficulty(1.0, l1, 1e-6, 1e6) >= difficulty(1.0, l2, 1e-6, 1e6));
    const double loss = u(g);
    const std::uint64_t w1 = g() % 20, w2 = g() % 20;
    const double z1 = difficulty(selection_probability(static_cast<double>(w1), 1.0), loss, 1e-6, 1e6);
    const double z2 = difficulty(selection_probability(static_cast<double>(w2), 1.0), loss, 1e-6, 1e6);
    if (w1 <= w2) CHECK(z1 <= z2);
  }
}

TEST_CASE("strength recurrence hand values") {
  CHECK(strength_recurrence(0.3, 0.5, 2.0, 0.1) == 0.1 * 0.3 + 0.9 * 0.25);
  CHECK(strength_recurrence(0.3, 0.5, 2.0, 0.1) == doctest::Approx(0.255).epsilon(1e-15));
  CHECK(strength_recurrence(0.3, 0.5, 2.0, 0.0) == 0.25);
  CHECK(strength_recurrence(0.3, 0.5, 2.0, 1.0) == 0.3);

  RunConfig cfg;
  SampleState s;
  s.alpha = 0.3;
  s.zeta = 2.0;
  CHECK(update_strength(s, 0.5, cfg) == strength_recurrence(0.3, 0.5, 2.0, 0.1));
  s.zeta = cfg.zeta_min;
  CHECK(update_strength(s, 0.5, cfg) == cfg.alpha_max);
  s.zeta = 1e6;
  s.alpha = cfg.alpha_min;
  CHECK(update_strength(s, 0.0, cfg) == cfg.alpha_min);
}

TEST_CASE("unclamped recurrence: nonincreasing in zeta, nondecreasing in beta") {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 2000; ++i) {
    const double a = u(g), lam = u(g), b1 = u(g), b2 = u(g), z1 = 0.01 + 5 * u(g), z2 = 0.01 + 5 * u(g);
    if (z1 <= z2) CHECK(strength_recurrence(a, b1, z1, lam) >= strength_recurrence(a, b1, z2, lam));
    if (b1 <= b2) CHECK(strength_recurrence(a, b1, z1, lam) <= strength_recurrence(a, b2, z1, lam));
  }
}

TEST_CASE("clamped strength always inside the clamps") {
  RunConfig cfg;
  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 2000; ++i) {
    SampleState s;
    s.alpha = u(g);
    s.zeta = std::pow(10.0, -6 + 12 * u(g));
    const double a = update_strength(s, u(g), cfg);
    CHECK(a >= cfg.alpha_min);
    CHECK(a <= cfg.alpha_max);
  }
}

TEST_CASE("fused feature EMA") {
  SampleState s;
  const std::vector<double> first{1.0, 0.0};
  fuse_feature(s, first, 0.1);
  CHECK(s.fused_feature == first);
  const std::vector<double> next{0.0, 1.0};
  fuse_feature(s, next, 0.1);
  CHECK(s.fused_feature[0] == doctest::Approx(0.1));
  CHECK(s.fused_feature[1] == doctest::Approx(0.9));
  fuse_feature(s, next, 0.0);
  CHECK(s.fused_feature == next);
  const std::vector<double> wrong{1.0};
  CHECK_THROWS(fuse_feature(s, wrong, 0.1));
}

TEST_CASE("audit catches violations") {
  RunConfig cfg;
  const std::vector<std::uint64_t> ids{0, 1};
  auto s = initial_states(ids, cfg);
  s[1].zeta = 2e6;
  CHECK(audit_states(s, cfg).find("zeta") != std::string::npos);
  s = initial_states(ids, cfg);
  s[0].alpha = 0.999;
  CHECK(audit_states(s, cfg).find("alpha") != std::string::npos);
  s = initial_states(ids, cfg);
  s[0].p_sel = 0.3;
  CHECK_FALSE(audit_states(s, cfg).empty());
}

TEST_CASE("state rows round-trip their values") {
  RunConfig cfg;
  const std::vector<std::uint64_t> ids{5};
  auto s = initial_states(ids, cfg);
  s[0].omega = 3;
  s[0].omega_norm = 1.0 / 3.0;
  s[0].zeta = 0.1;
  std::ostringstream out;
  write_state_rows(out, 2, s);
  std::istringstream in(out.str());
  std::string field;
  std::vector<std::string> f;
  while (std::getline(in, field, ',')) f.push_back(field);
  REQUIRE(f.size() == 7);
  CHECK(f[0] == "2");
  CHECK(f[1] == "5");
  CHECK(f[2] == "3");
  CHECK(std::stod(f[3]) == 1.0 / 3.0);
  CHECK(std::stod(f[5]) == 0.1);
  CHECK(std::string(kStateHeader) == "round,id,omega,omega_norm,p_sel,zeta,alpha");
}
