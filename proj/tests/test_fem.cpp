#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pfto/fem.hpp"
#include "pfto/mesh.hpp"

using namespace pfto;

namespace {

// exact integral of a barycentric monomial: int_T L0^a L1^b L2^c
// = 2|T| a! b! c! / (a+b+c+2)!
double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }
double bary_monomial_integral(double area, int a, int b, int c) {
  return 2.0 * area * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2);
}

double max_abs(const SparseMatrix& A) {
  double v = 0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) v = std::max(v, std::abs(it.value()));
  return v;
}

}  // namespace

TEST_CASE("quadrature: weights sum to one and integrate monomials exactly") {
  Mesh m = generate_rectangle_mesh(1.3, 0.7, 2, 2);
  for (int deg : {1, 2, 4, 6}) {
    const QuadratureRule& quad = QuadratureRule::triangle(deg);
    double wsum = 0;
    for (double w : quad.weights) wsum += w;
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-14));

    const double area = m.triangle_area(0);
    for (int a = 0; a + 0 <= deg; ++a)
      for (int b = 0; a + b <= deg; ++b) {
        const int c = deg - a - b;
        double val = 0;
        for (int q = 0; q < quad.size(); ++q) {
          const auto& L = quad.points[q];
          val += quad.weights[q] * area * std::pow(L[0], a) * std::pow(L[1], b) *
                 std::pow(L[2], c);
        }
        const double exact = bary_monomial_integral(area, a, b, c);
        CHECK(std::abs(val - exact) < 1e-13 * std::max(1.0, std::abs(exact)));
      }
  }
  CHECK_THROWS(QuadratureRule::triangle(9));
}

TEST_CASE("spaces: dof counts") {
  Mesh m = generate_rectangle_mesh(1, 1, 3, 2);
  CHECK(ScalarSpace::p1(m).n_dofs == m.n_vertices());
  CHECK(VectorSpace::p2(m).n_dofs() == 2 * (m.n_vertices() + m.n_edges()));
}

TEST_CASE("P2 interpolation reproduces quadratics exactly") {
  Mesh m = generate_rectangle_mesh(1.1, 0.9, 3, 3);
  auto f = [](const Vec2& x) {
    return Vec2(1.0 + 2 * x.x() - x.y() + 0.5 * x.x() * x.x() - 1.5 * x.x() * x.y(),
                -2.0 + x.y() * x.y() + 0.25 * x.x() * x.y());
  };
  Eigen::VectorXd u = interpolate_p2_vector(m, f);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  for (int trial = 0; trial < 50; ++trial) {
    const int t = static_cast<int>(rng() % m.n_triangles());
    double l0 = unif(rng), l1 = unif(rng) * (1 - l0);
    std::array<double, 3> L{l0, l1, 1 - l0 - l1};
    const auto& tri = m.triangles[t];
    const Vec2 x = L[0] * m.vertices[tri[0]] + L[1] * m.vertices[tri[1]] +
                   L[2] * m.vertices[tri[2]];
    const Vec2 v = eval_p2_vector(m, u, t, L);
    CHECK((v - f(x)).norm() < 1e-12);
  }
}

TEST_CASE("mass matrix: partition of unity gives the area") {
  Mesh m = generate_rectangle_mesh(1.7, 0.4, 7, 3);
  SparseMatrix M = assemble_scalar(ScalarKind::mass, ScalarSpace::p1(m));
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(m.n_vertices());
  CHECK(ones.dot(M * ones) == doctest::Approx(0.68).epsilon(1e-13));

  // SPD symmetry to 1e-12 relative
  SparseMatrix D = SparseMatrix(M.transpose()) - M;
  CHECK(max_abs(D) < 1e-12 * max_abs(M));
}

TEST_CASE("stiffness matrix annihilates affine fields on interior rows") {
  Mesh m = generate_rectangle_mesh(1, 1, 4, 4);
  SparseMatrix K = assemble_scalar(ScalarKind::stiffness, ScalarSpace::p1(m));
  Eigen::VectorXd aff(m.n_vertices());
  for (int i = 0; i < m.n_vertices(); ++i)
    aff[i] = 3.0 - 2.0 * m.vertices[i].x() + m.vertices[i].y();
  Eigen::VectorXd r = K * aff;

  std::vector<char> on_boundary(m.n_vertices(), 0);
  for (const auto& e : m.edges)
    if (e.boundary_tag >= 0) on_boundary[e.verts[0]] = on_boundary[e.verts[1]] = 1;
  for (int i = 0; i < m.n_vertices(); ++i)
    if (!on_boundary[i]) CHECK(std::abs(r[i]) < 1e-10);

  // constants in the kernel: row sums vanish
  CHECK((K * Eigen::VectorXd::Ones(m.n_vertices())).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("weighted mass with w == 2 equals twice the mass matrix") {
  Mesh m = generate_rectangle_mesh(1, 1, 3, 3);
  ScalarSpace s = ScalarSpace::p1(m);
  Eigen::VectorXd w = 2.0 * Eigen::VectorXd::Ones(m.n_vertices());
  SparseMatrix M = assemble_scalar(ScalarKind::mass, s);
  SparseMatrix W = assemble_scalar(ScalarKind::weighted_mass, s, &w);
  SparseMatrix D = W - SparseMatrix(2.0 * M);
  CHECK(max_abs(D) < 1e-13);

  Eigen::VectorXd short_w = Eigen::VectorXd::Ones(3);
  CHECK_THROWS(assemble_scalar(ScalarKind::weighted_mass, s, &short_w));
}

TEST_CASE("assembly is deterministic") {
  Mesh m = generate_rectangle_mesh(1, 1, 5, 5);
  Eigen::VectorXd alpha = Eigen::VectorXd::Constant(m.n_vertices(), 0.7);
  SaddleOperator a = assemble_oseen(m, 0.01, alpha, {}, OseenForm::picard);
  SaddleOperator b = assemble_oseen(m, 0.01, alpha, {}, OseenForm::picard);
  SparseMatrix A = a.matrix(), B = b.matrix();
  REQUIRE(A.nonZeros() == B.nonZeros());
  for (int k = 0; k < A.nonZeros(); ++k) CHECK(A.valuePtr()[k] == B.valuePtr()[k]);
}

TEST_CASE("Stokes operator is symmetric") {
  Mesh m = generate_rectangle_mesh(1, 1, 4, 4);
  SaddleOperator op = assemble_oseen(m, 0.5, {}, {}, OseenForm::picard);
  SparseMatrix A = op.matrix();
  SparseMatrix D = SparseMatrix(A.transpose()) - A;
  CHECK(max_abs(D) < 1e-12 * max_abs(A));
}

TEST_CASE("divergence block annihilates constant velocities") {
  Mesh m = generate_rectangle_mesh(2, 1, 4, 3);
  SaddleOperator op = assemble_oseen(m, 1.0, {}, {}, OseenForm::picard);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(op.size());
  for (int n = 0; n < op.n_u / 2; ++n) {
    x[2 * n] = 3.0;
    x[2 * n + 1] = -2.0;
  }
  Eigen::VectorXd r = op.matrix() * x;
  CHECK(r.segment(op.n_u, op.n_p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adjoint form is the exact transpose of the newton form") {
  Mesh m = generate_rectangle_mesh(1, 1, 3, 3);
  Eigen::VectorXd alpha = Eigen::VectorXd::Constant(m.n_vertices(), 2.0);
  Eigen::VectorXd field = interpolate_p2_vector(
      m, [](const Vec2& x) { return Vec2(std::sin(x.x()), x.y() * x.x()); });
  SaddleOperator nf = assemble_oseen(m, 0.1, alpha, field, OseenForm::newton);
  SaddleOperator af = assemble_oseen(m, 0.1, alpha, field, OseenForm::adjoint);
  SparseMatrix N = nf.matrix(), A = af.matrix();
  SparseMatrix D = SparseMatrix(N.transpose()) - A;
  CHECK(max_abs(D) == 0.0);

  // duality check v^T (N w) = w^T (N^T v) on random vectors
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd v(N.rows()), w(N.rows());
  for (int i = 0; i < N.rows(); ++i) {
    v[i] = gauss(rng);
    w[i] = gauss(rng);
  }
  CHECK(v.dot(N * w) == doctest::Approx(w.dot(A * v)).epsilon(1e-12));
}

TEST_CASE("dirichlet elimination: exact trace and idempotence") {
  Mesh m = generate_rectangle_mesh(1, 1, 3, 3);
  Eigen::VectorXd alpha = Eigen::VectorXd::Constant(m.n_vertices(), 1.0);
  SaddleOperator op = assemble_oseen(m, 1.0, alpha, {}, OseenForm::picard);

  // g = (1,0) on every boundary node
  std::vector<std::pair<int, double>> bc;
  const int nv = m.n_vertices();
  for (int eid = 0; eid < m.n_edges(); ++eid) {
    const auto& e = m.edges[eid];
    if (e.boundary_tag < 0) continue;
    for (int node : {e.verts[0], e.verts[1], nv + eid}) {
      bc.emplace_back(2 * node, 1.0);
      bc.emplace_back(2 * node + 1, 0.0);
    }
  }
  std::sort(bc.begin(), bc.end());
  bc.erase(std::unique(bc.begin(), bc.end()), bc.end());

  apply_dirichlet(op, bc);
  SparseMatrix A1 = op.matrix();
  Eigen::VectorXd r1 = op.rhs;
  apply_dirichlet(op, bc);  // idempotent
  SparseMatrix A2 = op.matrix();
  CHECK(max_abs(SparseMatrix(A2 - A1)) == 0.0);
  CHECK((op.rhs - r1).cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd x = sparse_solve(A1, op.rhs);
  for (const auto& [dof, g] : bc) CHECK(x[dof] == g);  // bit-exact
}

TEST_CASE("sparse solve: identity, hand 2x2, random SPD residual bound") {
  {
    SparseMatrix I(4, 4);
    I.setIdentity();
    Eigen::VectorXd b(4);
    b << 1, 2, 3, 4;
    CHECK((sparse_solve(I, b) - b).cwiseAbs().maxCoeff() < 1e-14);
  }
  {
    SparseMatrix A(2, 2);
    std::vector<Triplet> t{{0, 0, 2.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, 2.0}};
    A.setFromTriplets(t.begin(), t.end());
    Eigen::VectorXd b(2);
    b << 1, 1;
    Eigen::VectorXd x = sparse_solve(A, b);
    CHECK(x[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  }
  {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd R(50, 50);
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j) R(i, j) = gauss(rng);
    Eigen::MatrixXd S = R.transpose() * R + 50.0 * Eigen::MatrixXd::Identity(50, 50);
    SparseMatrix A = S.sparseView();
    Eigen::VectorXd b(50);
    for (int i = 0; i < 50; ++i) b[i] = gauss(rng);
    Eigen::VectorXd x = sparse_solve(A, b);  // residual contract checked inside
    CHECK((A * x - b).cwiseAbs().maxCoeff() < 1e-10 * (S.cwiseAbs().rowwise().sum().maxCoeff() *
                                                           x.cwiseAbs().maxCoeff() +
                                                       b.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("sparse solve: singular matrix reports the offending dof") {
  SparseMatrix A(3, 3);
  std::vector<Triplet> t{{0, 0, 1.0}, {1, 1, 1.0}};  // dof 2 empty
  A.setFromTriplets(t.begin(), t.end());
  Eigen::VectorXd b = Eigen::VectorXd::Ones(3);
  try {
    sparse_solve(A, b);
    CHECK(false);
  } catch (const SolverError& err) {
    CHECK(err.dof_index == 2);
  }
}
