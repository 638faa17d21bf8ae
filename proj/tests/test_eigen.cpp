#include <doctest.h>

#include <sstream>

#include "eigenloc/eigenbasis.hpp"
#include "eigenloc/error.hpp"
#include "eigenloc/random.hpp"
#include "oracles.hpp"

using namespace eigenloc;

namespace {

RowMatrix random_rows(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  RowMatrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform();
  return m;
}

oracle::Matrix to_nested(const RowMatrix& m) {
  oracle::Matrix out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

}  // namespace

TEST_SUITE("eigen") {
  TEST_CASE("mean centring") {
    RowMatrix same(2, 48);
    same.setConstant(0.3);
    CHECK(mean_center(same).deviations.cwiseAbs().maxCoeff() == 0.0);

    RowMatrix pm = random_rows(1, 48, 4);
    RowMatrix two(2, 48);
    two.row(0) = pm.row(0);
    two.row(1) = -pm.row(0);
    const auto c = mean_center(two);
    CHECK(c.mean.cwiseAbs().maxCoeff() == 0.0);
    CHECK(c.deviations == two);

    const auto five = mean_center(random_rows(5, 48, 5));
    CHECK(five.deviations.colwise().sum().cwiseAbs().maxCoeff() < 1e-9);
    CHECK_THROWS_AS(mean_center(random_rows(1, 48, 6)), Error);
  }

  TEST_CASE("covariance") {
    RowMatrix zero = RowMatrix::Zero(3, 48);
    CHECK(covariance(zero).cwiseAbs().maxCoeff() == 0.0);

    RowMatrix e(2, 48);
    e.setZero();
    e(0, 0) = 1.0;
    e(1, 0) = -1.0;
    Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(48, 48);
    expect(0, 0) = 1.0;
    CHECK(covariance(e) == expect);

    const RowMatrix a = mean_center(random_rows(6, 48, 7)).deviations;
    const Eigen::MatrixXd c = covariance(a);
    const auto naive = oracle::triple_loop_covariance(to_nested(a));
    double asym = 0.0, diff = 0.0;
    for (int i = 0; i < 48; ++i)
      for (int j = 0; j < 48; ++j) {
        asym = std::max(asym, std::abs(c(i, j) - c(j, i)));
        diff = std::max(diff, std::abs(c(i, j) - naive[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
      }
    CHECK(asym <= 1e-12);
    CHECK(diff <= 1e-12);
  }

  TEST_CASE("covariance does not depend on thread count or block layout") {
    const RowMatrix a = mean_center(random_rows(3000, 48, 8)).deviations;
    const auto naive = oracle::triple_loop_covariance(to_nested(a));
    const Eigen::MatrixXd c = covariance(a);
    for (int i = 0; i < 48; ++i)
      for (int j = 0; j < 48; ++j) CHECK(std::abs(c(i, j) - naive[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) < 1e-12);
  }

  TEST_CASE("eigendecomposition of simple spectra") {
    const auto id = eigendecompose(Eigen::MatrixXd::Identity(48, 48));
    CHECK((id.values.array() - 1.0).abs().maxCoeff() < 1e-12);

    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(48, 48);
    d(0, 0) = 4.0;
    d(1, 1) = 1.0;
    const auto b = eigendecompose(d);
    CHECK(b.values(0) == doctest::Approx(4.0));
    CHECK(b.values(1) == doctest::Approx(1.0));
    CHECK(b.vectors(0, 0) == doctest::Approx(1.0));
    CHECK(b.vectors.col(0).tail(47).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(b.explained_ratio(0) == doctest::Approx(0.8));

    const auto t = select_components(b, 1);
    CHECK(t.cumulative_ratio == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(select_components(b, 48).cumulative_ratio == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(select_components(b, 0), Error);
    CHECK_THROWS_AS(select_components(b, 49), Error);
  }

  TEST_CASE("contract errors") {
    Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(4, 4);
    asym(0, 1) = 1.0;
    CHECK_THROWS_AS(eigendecompose(asym), Error);
    Eigen::MatrixXd neg = -Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(eigendecompose(neg), Error);
    CHECK_THROWS_AS(eigendecompose(Eigen::MatrixXd::Zero(3, 4)), Error);
  }

  TEST_CASE("random PSD: trace identity, orthonormality, sign rule and Jacobi oracle") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const RowMatrix a = random_rows(6, 6, seed);
      const Eigen::MatrixXd c = a.transpose() * a;
      const auto b = eigendecompose(c);
      CHECK(std::abs(b.values.sum() - c.trace()) <= 1e-8 * c.trace());
      const Eigen::MatrixXd g = b.vectors.transpose() * b.vectors;
      CHECK((g - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() <= 1e-8);
      for (int j = 0; j + 1 < 6; ++j) CHECK(b.values(j) >= b.values(j + 1));
      for (int j = 0; j < 6; ++j) {
        Eigen::Index at = 0;
        b.vectors.col(j).cwiseAbs().maxCoeff(&at);
        CHECK(b.vectors(at, j) > 0.0);
      }
      const auto ref = oracle::jacobi_eigenvalues(to_nested(c));
      for (int j = 0; j < 6; ++j) CHECK(std::abs(b.values(j) - ref[static_cast<std::size_t>(j)]) <= 1e-7);
      // C v = λ v
      CHECK((c * b.vectors - b.vectors * b.values.asDiagonal()).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  TEST_CASE("projection and reconstruction") {
    const RowMatrix x = random_rows(200, 48, 21);
    const Eigenbasis b = fit_eigenbasis(x);
    Eigen::VectorXd psi = b.mean;
    CHECK(project(psi, b, 48).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((reconstruct(Eigen::VectorXd::Zero(8), b) - psi).cwiseAbs().maxCoeff() == 0.0);

    const Eigen::VectorXd shifted = psi + 2.0 * b.vectors.col(0);
    const Eigen::VectorXd c = project(shifted, b, 48);
    CHECK(c(0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(c.tail(47).cwiseAbs().maxCoeff() < 1e-12);

    const RowMatrix coef = project_rows(x, b, 48);
    CHECK((reconstruct_rows(coef, b) - x).cwiseAbs().maxCoeff() <= 1e-8);

    // Truncation error is non-increasing in k for every row.
    Eigen::VectorXd prev = Eigen::VectorXd::Constant(x.rows(), std::numeric_limits<double>::infinity());
    for (int k = 1; k <= 48; ++k) {
      const RowMatrix r = reconstruct_rows(project_rows(x, b, k), b);
      const Eigen::VectorXd err = (x - r).rowwise().squaredNorm();
      CHECK((err.array() <= prev.array() + 1e-12).all());
      prev = err;
    }
  }

  TEST_CASE("feature spaces") {
    const RowMatrix x = random_rows(50, 48, 9);
    const Eigenbasis b = fit_eigenbasis(x);
    CHECK(clustering_input(x, b, 8, FeatureSpace::raw_nhp) == x);
    CHECK(clustering_input(x, b, 8, FeatureSpace::coefficients).cols() == 8);
    const RowMatrix rec = clustering_input(x, b, 8, FeatureSpace::reconstructed);
    CHECK(rec.cols() == 48);
    const RowMatrix coef = clustering_input(x, b, 8, FeatureSpace::coefficients);
    CHECK((centroid_curves(coef, b, FeatureSpace::coefficients) - rec).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(parse_feature_space(to_string(FeatureSpace::raw_nhp)) == FeatureSpace::raw_nhp);
    CHECK_THROWS_AS(parse_feature_space("bogus"), Error);
  }

  TEST_CASE("zero-variance input") {
    RowMatrix x(3, 48);
    x.setConstant(0.25);
    const Eigenbasis b = fit_eigenbasis(x);
    CHECK(b.values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.explained_ratio.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("json round trip is exact and deterministic") {
    const Eigenbasis b = fit_eigenbasis(random_rows(100, 48, 10));
    const std::string s = eigenbasis_json(b);
    const Eigenbasis back = eigenbasis_from_json(s);
    CHECK(back.mean == b.mean);
    CHECK(back.values == b.values);
    CHECK(back.vectors == b.vectors);
    CHECK(eigenbasis_json(back) == s);
    CHECK(eigenbasis_json(fit_eigenbasis(random_rows(100, 48, 10))) == s);

    std::ostringstream out;
    write_eigenlocations_csv(out, b, 8);
    std::istringstream in(out.str());
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 1 + 8 * 48);
    CHECK(out.str().rfind("component,hour_index,loading\n", 0) == 0);
  }
}
