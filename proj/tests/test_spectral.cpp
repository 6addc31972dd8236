#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "unravel/spectral.hpp"

using namespace unravel;
using testing::mat2;
using testing::vec2;

namespace {

CMatrix diag(std::initializer_list<double> d) {
  CMatrix m = CMatrix::Zero(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.size()));
  Eigen::Index i = 0;
  for (double x : d) m(i, i) = x, ++i;
  return m;
}

// <psi, P psi> written out entry by entry.
double quadratic_form(const CVector& psi, const CMatrix& p) {
  Complex acc = 0.0;
  for (Eigen::Index i = 0; i < psi.size(); ++i)
    for (Eigen::Index j = 0; j < psi.size(); ++j) acc += std::conj(psi(i)) * p(i, j) * psi(j);
  return acc.real();
}

const Violation* find(const FamilyError& e, ErrorCode code) {
  for (const auto& v : e.violations())
    if (v.code == code) return &v;
  return nullptr;
}

}  // namespace

TEST_CASE("identity on C^2 is a one-projector family") {
  const auto f = ProjectorFamily::validate({CMatrix::Identity(2, 2)}, {0.0}, 1.0);
  CHECK(f.channels() == 1);
  CHECK(f.dim() == 2);
  CHECK(f.rank(0) == 2);
}

TEST_CASE("standard basis projectors give eps = Omega nu") {
  const auto f = ProjectorFamily::validate({diag({1, 0}), diag({0, 1})}, {0.0, 1.0}, 1.0);
  CHECK(f.energy(0) == doctest::Approx(0.0));
  CHECK(f.energy(1) == doctest::Approx(1.0));
  const auto g = ProjectorFamily::validate({diag({1, 0}), diag({0, 1})}, {0.5, 2.0}, 3.0);
  CHECK(g.energy(0) == doctest::Approx(1.5));
  CHECK(g.energy(1) == doctest::Approx(6.0));
  CHECK((g.hamiltonian() - diag({1.5, 6.0})).norm() < 1e-14);
}

TEST_CASE("overlapping projectors report NotOrthogonal(0,1) and NotComplete") {
  try {
    ProjectorFamily::validate({diag({1, 0}), diag({1, 0})}, {0.0, 1.0}, 1.0);
    FAIL("accepted an invalid family");
  } catch (const FamilyError& e) {
    const Violation* orth = find(e, ErrorCode::NotOrthogonal);
    REQUIRE(orth != nullptr);
    CHECK(orth->first == 0);
    CHECK(orth->second == 1);
    CHECK(orth->residual == doctest::Approx(1.0));
    const Violation* comp = find(e, ErrorCode::NotComplete);
    REQUIRE(comp != nullptr);
    CHECK(comp->residual == doctest::Approx(1.0));
    CHECK(e.code() == ErrorCode::NotOrthogonal);
  }
}

TEST_CASE("each structural defect is named") {
  SUBCASE("not idempotent") {
    try {
      ProjectorFamily::validate({diag({2, 0}), diag({0, 1})}, {0.0, 1.0}, 1.0);
      FAIL("accepted");
    } catch (const FamilyError& e) {
      const Violation* v = find(e, ErrorCode::NotIdempotent);
      REQUIRE(v != nullptr);
      CHECK(v->first == 0);
      CHECK(v->residual == doctest::Approx(2.0));
    }
  }
  SUBCASE("not Hermitian") {
    const CMatrix p = mat2(1, 1, 0, 0);  // idempotent, not Hermitian
    try {
      ProjectorFamily::validate({p, CMatrix::Identity(2, 2) - p}, {0.0, 1.0}, 1.0);
      FAIL("accepted");
    } catch (const FamilyError& e) {
      CHECK(e.has(ErrorCode::NotHermitian));
      CHECK_FALSE(e.has(ErrorCode::NotIdempotent));
    }
  }
  SUBCASE("duplicate eigenvalue") {
    try {
      ProjectorFamily::validate({diag({1, 0}), diag({0, 1})}, {0.5, 0.5}, 1.0);
      FAIL("accepted");
    } catch (const FamilyError& e) {
      const Violation* v = find(e, ErrorCode::DuplicateEigenvalue);
      REQUIRE(v != nullptr);
      CHECK(v->first == 0);
      CHECK(v->second == 1);
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(ProjectorFamily::validate({diag({1, 0}), diag({0, 1, 0})}, {0.0, 1.0}, 1.0), Error);
  }
  SUBCASE("tolerance is respected, input not repaired") {
    CMatrix p0 = diag({1, 0});
    p0(0, 0) += 1e-7;
    CHECK_THROWS_AS(ProjectorFamily::validate({p0, diag({0, 1})}, {0.0, 1.0}, 1.0), FamilyError);
    const auto loose = ProjectorFamily::validate({p0, diag({0, 1})}, {0.0, 1.0}, 1.0, 1e-6);
    CHECK(loose.projector(0)(0, 0).real() == 1.0 + 1e-7);
  }
}

TEST_CASE("from_observable groups degenerate eigenvalues") {
  const auto f = ProjectorFamily::from_observable(diag({5.0, 2.0, 2.0 + 1e-10}), 1.0);
  REQUIRE(f.channels() == 2);
  CHECK(f.rank(0) == 2);
  CHECK(f.rank(1) == 1);
  CHECK(f.eigenvalues()[0] == doctest::Approx(2.0));
  CHECK(f.eigenvalues()[1] == doctest::Approx(5.0));
  CHECK((f.projector(0) - diag({0, 1, 1})).norm() < 1e-12);
}

TEST_CASE("frame columns span the projector ranges in order") {
  testing::Gen gen(11);
  const auto f = gen.family(5, 3);
  const CMatrix& v = f.frame();
  CHECK((v.adjoint() * v - CMatrix::Identity(5, 5)).norm() < 1e-12);
  for (int j = 0; j < 5; ++j) {
    const int n = f.frame_labels()[static_cast<std::size_t>(j)];
    CHECK((f.projector(n) * v.col(j) - v.col(j)).norm() < 1e-10);
  }
}

TEST_CASE("occupation examples") {
  const auto f = ProjectorFamily::standard_basis({0.0, 1.0});
  const auto e0 = occupation(PureState(vec2(1, 0)), f);
  CHECK(e0[0] == 1.0);
  CHECK(e0[1] == 0.0);
  const auto p = occupation(PureState(vec2(std::sqrt(0.3), std::sqrt(0.7))), f);
  CHECK(p[0] == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.7).epsilon(1e-14));
  CHECK_THROWS_AS(occupation(CVector::Zero(2), f), Error);
  try {
    occupation(CVector::Zero(2), f);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroState);
  }
}

TEST_CASE("occupation on a rotated C^3 family matches the quadratic form") {
  testing::Gen gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = gen.family(3, gen.integer(2, 3));
    const PureState psi(gen.unit_vector(3));
    const auto p = occupation(psi, f);
    for (int n = 0; n < f.channels(); ++n) {
      CHECK(p[static_cast<std::size_t>(n)] ==
            doctest::Approx(quadratic_form(psi.amplitudes(), f.projector(n))).epsilon(1e-12));
    }
  }
}

TEST_CASE("pair_occupation examples") {
  const auto f = ProjectorFamily::standard_basis({0.0, 1.0});
  const PureState psi(vec2(std::sqrt(0.3), std::sqrt(0.7)));
  CHECK(pair_occupation(psi, f, 0, 0) == doctest::Approx(0.3));
  CHECK(std::abs(pair_occupation(psi, f, 0, 1)) < 1e-15);
  testing::Gen gen(5);
  const PureState r(gen.unit_vector(2));
  CHECK(pair_occupation(r, f, 1, 1) == doctest::Approx(occupation(r, f)[1]));
  CHECK_THROWS_AS(pair_occupation(r, f, 0, 2), Error);
}

TEST_CASE("dephase examples") {
  const auto f = ProjectorFamily::standard_basis({0.0, 1.0});
  const DensityMatrix rho(mat2(0.5, 0.5, 0.5, 0.5));
  CHECK((dephase(rho, f).entries() - mat2(0.5, 0, 0, 0.5)).norm() < 1e-15);

  const DensityMatrix block(mat2(0.25, 0, 0, 0.75));
  CHECK((dephase(block, f).entries() - block.entries()).norm() == 0.0);

  testing::Gen gen(17);
  const CMatrix r3 = gen.density(3);
  const auto g = ProjectorFamily::validate({diag({1, 1, 0}), diag({0, 0, 1})}, {0.0, 1.0}, 1.0);
  const CMatrix out = dephase(DensityMatrix(r3), g).entries();
  CHECK((out.topLeftCorner(2, 2) - r3.topLeftCorner(2, 2)).norm() < 1e-15);
  CHECK(out(2, 2) == r3(2, 2));
  CHECK(out.block(0, 2, 2, 1).norm() == 0.0);
  CHECK(out.block(2, 0, 1, 2).norm() == 0.0);

  const auto three = ProjectorFamily::standard_basis({0.0, 1.0, 2.0});
  CHECK_THROWS_AS(dephase(rho, three), Error);
}

TEST_CASE("luders_residual examples") {
  const auto f = ProjectorFamily::standard_basis({0.0, 1.0});
  const auto a = luders_residual(PureState(vec2(0, 1)), f);
  CHECK(a.index == 1);
  CHECK(a.residual == 0.0);
  const auto b = luders_residual(PureState(vec2(std::sqrt(0.3), std::sqrt(0.7))), f);
  CHECK(b.index == 1);
  CHECK(b.residual == doctest::Approx(std::sqrt(0.3)));
  CHECK(b.residual == doctest::Approx(0.5477).epsilon(1e-4));
  const auto c = luders_residual(PureState(vec2(1 / std::sqrt(2.0), 1 / std::sqrt(2.0))), f);
  CHECK(c.index == 0);
  CHECK(c.residual == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("argmax ties go to the smallest index") {
  const std::vector<double> v{0.25, 0.375, 0.375 + 1e-14, 0.25};
  CHECK(argmax_smallest(v) == 1);
  const std::vector<double> w{0.1, 0.2, 0.2 + 1e-9};
  CHECK(argmax_smallest(w) == 2);
}

TEST_CASE("state and density matrix validation") {
  CHECK_THROWS_AS(PureState(vec2(1, 1)), Error);
  CHECK(PureState::normalized(vec2(3, 4)).amplitudes()(0).real() == doctest::Approx(0.6));
  CHECK_THROWS_AS(PureState::normalized(CVector::Zero(3)), Error);
  CHECK_THROWS_AS(DensityMatrix(mat2(0.5, 0.1, 0.2, 0.5)), Error);          // not Hermitian
  CHECK_THROWS_AS(DensityMatrix(mat2(0.6, 0.0, 0.0, 0.6)), Error);          // trace
  CHECK_THROWS_AS(DensityMatrix(mat2(1.5, 0.0, 0.0, -0.5)), Error);         // negative
  CHECK_NOTHROW(DensityMatrix(mat2(0.5, Complex(0, 0.5), Complex(0, -0.5), 0.5)));
}
