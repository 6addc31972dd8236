#include <doctest.h>

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "support.hpp"
#include "unravel/statistics.hpp"
#include "unravel/trajectory.hpp"

using namespace unravel;
using testing::vec2;

namespace {

// Replays a fixed list of increment vectors, cycling.
class FixedIncrements final : public IncrementSource {
 public:
  explicit FixedIncrements(std::vector<std::vector<double>> draws) : draws_(std::move(draws)) {}
  int channels() const noexcept override { return static_cast<int>(draws_.front().size()); }
  void draw(double, std::span<double> out) override {
    const auto& d = draws_[next_++ % draws_.size()];
    std::copy(d.begin(), d.end(), out.begin());
  }

 private:
  std::vector<std::vector<double>> draws_;
  std::size_t next_ = 0;
};

// Gauss-Hermite rule for the standard normal (Golub-Welsch).
struct Quadrature {
  std::vector<double> nodes, weights;
};

Quadrature gauss_hermite(int n) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  Quadrature q;
  for (int k = 0; k < n; ++k) {
    q.nodes.push_back(es.eigenvalues()(k));
    q.weights.push_back(es.eigenvectors()(0, k) * es.eigenvectors()(0, k));
  }
  return q;
}

// g_n(psi) = (p_n - P_n) psi, with p_n normalized by <psi, psi>.
CVector g(const CVector& psi, const ProjectorFamily& f, int n) {
  return diffusion_vectors(psi, f)[static_cast<std::size_t>(n)];
}

TrajectoryConfig config(Scheme scheme, double dt, double t_final = 1.0) {
  TrajectoryConfig cfg;
  cfg.scheme = scheme;
  cfg.dt = dt;
  cfg.t_final = t_final;
  cfg.record_stride = 1;
  return cfg;
}

const PureState kPsi0(vec2(std::sqrt(0.3), std::sqrt(0.7)));

}  // namespace

TEST_CASE("ito_drift examples") {
  const auto f = ProjectorFamily::standard_basis({0.0, 1.0});
  CHECK(ito_drift(vec2(1, 0), f).norm() == 0.0);
  const CVector d = ito_drift(vec2(1 / std::sqrt(2.0), 1 / std::sqrt(2.0)), f);
  CHECK(d(0).real() == doctest::Approx(-0.17678).epsilon(1e-4));
  CHECK(std::abs(d(0).imag()) < 1e-15);
  CHECK(d(1).real() == doctest::Approx(-0.17678).epsilon(1e-4));
  CHECK(d(1).imag() == doctest::Approx(-0.70711).epsilon(1e-4));
  CHECK_THROWS_AS(ito_drift(CVector::Zero(2), f), Error);
}

TEST_CASE("diffusion_vectors examples") {
  const auto f = ProjectorFamily::standard_basis({0.0, 1.0});
  for (const auto& v : diffusion_vectors(vec2(1, 0), f)) CHECK(v.norm() == 0.0);
  const auto g = diffusion_vectors(vec2(1 / std::sqrt(2.0), 1 / std::sqrt(2.0)), f);
  CHECK(g[0](0).real() == doctest::Approx(-0.35355).epsilon(1e-4));
  CHECK(g[0](1).real() == doctest::Approx(0.35355).epsilon(1e-4));
  CHECK(g[1](0).real() == doctest::Approx(0.35355).epsilon(1e-4));
  CHECK(g[1](1).real() == doctest::Approx(-0.35355).epsilon(1e-4));
}

TEST_CASE("norm identity and orthogonality of the noise fields") {
  testing::Gen gen(31);
  for (int trial = 0; trial < 30; ++trial) {
    const int m = gen.integer(2, 5);
    const auto f = gen.family(m, gen.integer(1, m));
    const CVector psi = gen.unit_vector(m);
    double sum = psi.dot(ito_drift(psi, f)).real();
    for (const auto& v : diffusion_vectors(psi, f)) {
      CHECK(std::abs(psi.dot(v).real()) < 1e-13);
      sum += 0.5 * v.squaredNorm();
    }
    CHECK(std::abs(sum) < 1e-13);
  }
}

TEST_CASE("Ito drift equals Stratonovich drift plus half the noise-induced correction") {
  testing::Gen gen(32);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = gen.integer(2, 4);
    const auto f = gen.family(m, gen.integer(1, m));
    const CVector psi = gen.unit_vector(m);
    CVector correction = CVector::Zero(m);
    const double h = 1e-6;
    for (int n = 0; n < f.channels(); ++n) {
      const CVector v = g(psi, f, n);
      correction += 0.5 * (g(psi + h * v, f, n) - g(psi - h * v, f, n)) / (2 * h);
    }
    CHECK((ito_drift(psi, f) - stratonovich_drift(psi, f) - correction).norm() < 1e-8);
  }
}

TEST_CASE("collapsed states are fixed points of both schemes") {
  const auto f = ProjectorFamily::standard_basis({0.5, 1.5});
  const std::vector<double> dB{0.03, -0.02};
  for (Scheme s : {Scheme::ItoEulerMaruyama, Scheme::StratonovichHeun}) {
    const CVector out = step(vec2(1, 0), f, dB, config(s, 1e-3));
    CHECK(std::abs(out(1)) < 1e-15);
    CHECK(std::abs(std::abs(out(0)) - 1.0) < 1e-15);
    CHECK(std::abs(std::arg(out(0)) + 0.5e-3) < 1e-9);
  }
}

TEST_CASE("with dB = 0 the occupation drifts at first order") {
  // The zero-noise step is not the conditional mean, so p moves by
  // c p_0 (p_0 - sum p^2) dt with c = 2 (Ito) or 4 (Stratonovich).
  const auto f = ProjectorFamily::standard_basis({0.0, 1.0});
  const std::vector<double> zero{0.0, 0.0};
  const double p0 = 0.3, s = 0.3 * 0.3 + 0.7 * 0.7;
  for (auto [scheme, c] : {std::pair{Scheme::ItoEulerMaruyama, 2.0}, std::pair{Scheme::StratonovichHeun, 4.0}}) {
    const double dt = 1e-5;
    const CVector out = step(kPsi0.amplitudes(), f, zero, config(scheme, dt));
    const double dp = std::norm(out(0)) - p0;
    CHECK(dp / dt == doctest::Approx(c * p0 * (p0 - s)).epsilon(1e-3));
  }
}

TEST_CASE("the mean one-step change of p is second order in dt") {
  testing::Gen gen(33);
  const auto f = gen.family(3, 2);
  const PureState psi(gen.unit_vector(3));
  const double p0 = occupation(psi, f)[0];
  const auto q = gauss_hermite(24);
  for (Scheme scheme : {Scheme::ItoEulerMaruyama, Scheme::StratonovichHeun}) {
    auto mean_dp = [&](double dt) {
      double acc = 0.0;
      for (std::size_t i = 0; i < q.nodes.size(); ++i)
        for (std::size_t j = 0; j < q.nodes.size(); ++j) {
          const std::vector<double> dB{q.nodes[i] * std::sqrt(dt), q.nodes[j] * std::sqrt(dt)};
          const CVector out = step(psi.amplitudes(), f, dB, config(scheme, dt));
          acc += q.weights[i] * q.weights[j] * (occupation(out, f)[0] - p0);
        }
      return acc;
    };
    const double a = mean_dp(4e-3), b = mean_dp(2e-3);
    CHECK(std::abs(a) < 1e-3 * 4e-3);
    CHECK(a / b > 3.5);
    CHECK(a / b < 4.5);
  }
}

TEST_CASE("one Ito step and one Stratonovich step differ by O(dt)") {
  testing::Gen gen(34);
  const auto f = gen.family(3, 3);
  const CVector psi = gen.unit_vector(3);
  const std::vector<double> z{0.7, -1.1, 0.4};
  auto gap = [&](double dt) {
    std::vector<double> dB(3);
    for (int n = 0; n < 3; ++n) dB[n] = z[n] * std::sqrt(dt);
    const CVector a = step(psi, f, dB, config(Scheme::ItoEulerMaruyama, dt));
    const CVector b = step(psi, f, dB, config(Scheme::StratonovichHeun, dt));
    return (a - b).norm();
  };
  const double ratio = gap(2e-4) / gap(1e-4);
  CHECK(ratio > 1.7);
  CHECK(ratio < 2.3);
  CHECK(gap(1e-4) < 10 * 1e-4);
}

TEST_CASE("step guards") {
  const auto f = ProjectorFamily::standard_basis({0.0, 1.0});
  const auto cfg = config(Scheme::ItoEulerMaruyama, 1e-3);
  CHECK_THROWS_AS(step(vec2(1, 0), f, std::vector<double>{0.0}, cfg), Error);
  CHECK_THROWS_AS(step(vec2(1, 0), f, std::vector<double>{NAN, 0.0}, cfg), Error);
  CHECK_THROWS_AS(step(CVector::Zero(2), f, std::vector<double>{0.0, 0.0}, cfg), Error);
}

TEST_CASE("trajectory configuration guards") {
  const auto f = ProjectorFamily::standard_basis({0.0, 1.0});
  auto cfg = config(Scheme::ItoEulerMaruyama, 2e-2);
  CHECK_THROWS_AS(cfg.validate(f), Error);
  cfg = config(Scheme::ItoEulerMaruyama, 1e-3);
  cfg.collapse_epsilon = 0.5;
  CHECK_THROWS_AS(cfg.validate(f), Error);
  cfg = config(Scheme::ItoEulerMaruyama, 1e-3, 0.0105);
  CHECK_THROWS_AS(cfg.validate(f), Error);
  CHECK_THROWS_AS(config(Scheme::ItoEulerMaruyama, 1e-2).validate(ProjectorFamily::standard_basis({0.0, 10.0})),
                  Error);
  CHECK(scheme_from_string(to_string(Scheme::StratonovichHeun)) == Scheme::StratonovichHeun);
  CHECK_THROWS_AS(scheme_from_string("rk4"), Error);
}

TEST_CASE("simulate examples") {
  const auto f = ProjectorFamily::standard_basis({0.0, 1.0});
  SUBCASE("starting collapsed") {
    NoiseSource noise(1, 0, 2);
    const auto path = simulate(PureState(vec2(0, 1)), f, config(Scheme::ItoEulerMaruyama, 1e-3), noise);
    REQUIRE(path.verdict.collapsed());
    CHECK(*path.verdict.outcome == 1);
    CHECK(*path.verdict.time == 0.0);
  }
  SUBCASE("bit-identical reruns") {
    auto cfg = config(Scheme::StratonovichHeun, 1e-3, 2.0);
    cfg.record_stride = 10;
    NoiseSource a(77, 5, 2), b(77, 5, 2);
    const auto x = simulate(kPsi0, f, cfg, a);
    const auto y = simulate(kPsi0, f, cfg, b);
    REQUIRE(x.states.size() == y.states.size());
    CHECK(x.times.size() == 201);
    for (std::size_t i = 0; i < x.states.size(); ++i) CHECK(x.states[i] == y.states[i]);
  }
  SUBCASE("long run decides") {
    auto cfg = config(Scheme::ItoEulerMaruyama, 1e-3, 15.0);
    cfg.record_stride = 100;
    NoiseSource noise(3, 0, 2);
    const auto path = simulate(kPsi0, f, cfg, noise);
    CHECK(path.verdict.collapsed());
    for (std::size_t i = 0; i < path.times.size(); ++i) {
      CHECK(std::abs(path.occupations[i][0] - occupation(path.states[i], f)[0]) < 1e-12);
    }
  }
  SUBCASE("noise width must match") {
    NoiseSource noise(1, 0, 3);
    CHECK_THROWS_AS(simulate(kPsi0, f, config(Scheme::ItoEulerMaruyama, 1e-3), noise), Error);
  }
}

TEST_CASE("simulate_reduced examples") {
  const auto f = ProjectorFamily::standard_basis({0.0, 1.0});
  const auto cfg = config(Scheme::ItoEulerMaruyama, 1e-3, 0.01);
  SUBCASE("vertex is absorbing") {
    NoiseSource noise(1, 0, 2);
    const std::vector<double> p0{1.0, 0.0};
    for (const auto& p : simulate_reduced(p0, f, cfg, noise).occupations) {
      CHECK(p[0] == 1.0);
      CHECK(p[1] == 0.0);
    }
  }
  SUBCASE("single step from the midpoint") {
    FixedIncrements dB({{0.02, -0.01}});
    const std::vector<double> p0{0.5, 0.5};
    const auto path = simulate_reduced(p0, f, config(Scheme::ItoEulerMaruyama, 1e-3, 1e-3), dB);
    REQUIRE(path.occupations.size() == 2);
    CHECK(path.occupations[1][0] == doctest::Approx(0.5 - 0.5 * 0.02 + 0.5 * -0.01));
    CHECK(path.occupations[1][1] == doctest::Approx(0.5 + 0.5 * 0.02 - 0.5 * -0.01));
  }
  SUBCASE("overshoot is clamped and renormalized") {
    FixedIncrements dB({{0.0, -1.0}});
    const std::vector<double> p0{0.1, 0.9};
    const auto path = simulate_reduced(p0, f, config(Scheme::ItoEulerMaruyama, 1e-3, 1e-3), dB);
    CHECK(path.occupations[1][0] == 0.0);
    CHECK(path.occupations[1][1] == 1.0);
  }
  SUBCASE("simplex violations") {
    NoiseSource noise(1, 0, 2);
    for (const std::vector<double>& bad : {std::vector<double>{0.5, 0.6}, std::vector<double>{1.2, -0.2},
                                           std::vector<double>{1.0}}) {
      try {
        simulate_reduced(bad, f, cfg, noise);
        FAIL("accepted");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotASimplexPoint);
      }
    }
  }
}

TEST_CASE("reduced dynamics tracks the full dynamics as dt shrinks") {
  testing::Gen gen(35);
  const auto f = gen.family(3, 3);
  const PureState psi(gen.unit_vector(3));
  const auto p0 = occupation(psi, f);
  auto sup_gap = [&](double dt, int factor, std::uint64_t stream) {
    auto cfg = config(Scheme::StratonovichHeun, dt, 2.0);
    NoiseSource a(123, stream, 3), b(123, stream, 3);
    CoarsenedIncrements ca(a, factor), cb(b, factor);
    const auto full = simulate(psi, f, cfg, ca);
    const auto reduced = simulate_reduced(p0, f, cfg, cb, ReducedScheme::Milstein);
    double sup = 0.0;
    for (std::size_t i = 0; i < full.times.size(); ++i)
      for (int n = 0; n < 3; ++n) sup = std::max(sup, std::abs(full.occupations[i][n] - reduced.occupations[i][n]));
    return sup;
  };
  double coarse = 0.0, fine = 0.0;
  for (std::uint64_t s = 0; s < 16; ++s) {
    coarse += std::log(sup_gap(2e-3, 2, s));
    fine += std::log(sup_gap(1e-3, 1, s));
  }
  CHECK(std::exp((coarse - fine) / 16) > 1.5);
}

TEST_CASE("paths stay on the simplex and vertices absorb") {
  testing::Gen gen(36);
  for (int trial = 0; trial < 6; ++trial) {
    const int m = gen.integer(2, 4);
    const auto f = gen.family(m, gen.integer(2, m));
    auto cfg = config(trial % 2 ? Scheme::StratonovichHeun : Scheme::ItoEulerMaruyama, 1e-3, 8.0);
    cfg.record_stride = 10;
    NoiseSource noise(99, static_cast<std::uint64_t>(trial), f.channels());
    const auto path = simulate(PureState(gen.unit_vector(m)), f, cfg, noise);
    std::vector<bool> absorbed(static_cast<std::size_t>(f.channels()), false);
    for (const auto& p : path.occupations) {
      double sum = 0.0;
      for (int n = 0; n < f.channels(); ++n) {
        CHECK(p[n] >= -1e-12);
        CHECK(p[n] <= 1.0 + 1e-12);
        sum += p[n];
        if (absorbed[n]) CHECK(1.0 - p[n] <= 1e-6);
        if (1.0 - p[n] <= 1e-8) absorbed[n] = true;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("Ito and Stratonovich endpoint laws agree (two-sample KS)") {
  const auto f = ProjectorFamily::standard_basis({0.0, 1.0});
  auto endpoints = [&](Scheme scheme, std::uint64_t seed) {
    auto cfg = config(scheme, 1e-3, 2.0);
    cfg.record_stride = 2000;
    std::vector<double> out;
    for (std::uint64_t s = 0; s < 5000; ++s) {
      NoiseSource noise(seed, s, 2);
      out.push_back(simulate(kPsi0, f, cfg, noise).occupations.back()[0]);
    }
    return out;
  };
  const auto ks = ks_two_sample(endpoints(Scheme::ItoEulerMaruyama, 1001), endpoints(Scheme::StratonovichHeun, 2002));
  CHECK(ks.p_value > 0.01);
}

TEST_CASE("CSV and binary output") {
  const auto f = ProjectorFamily::standard_basis({0.0, 1.0});
  auto cfg = config(Scheme::ItoEulerMaruyama, 1e-3, 0.5);
  cfg.record_stride = 100;
  NoiseSource noise(8, 0, 2);
  const auto path = simulate(kPsi0, f, cfg, noise);

  std::ostringstream csv;
  write_trajectory_csv(csv, path);
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == "t,p_0,p_1,norm,verdict,verdict_time");
  int rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  CHECK(rows == 6);

  std::stringstream bin;
  write_trajectory_binary(bin, path);
  const auto back = read_trajectory_binary(bin);
  REQUIRE(back.states.size() == path.states.size());
  for (std::size_t i = 0; i < back.states.size(); ++i) {
    CHECK(back.times[i] == path.times[i]);
    CHECK(back.states[i] == path.states[i]);
  }
  std::istringstream junk("not a dump");
  CHECK_THROWS_AS(read_trajectory_binary(junk), Error);
}
