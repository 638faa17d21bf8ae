#include "eigenloc/eigenbasis.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "eigenloc/error.hpp"
#include "eigenloc/parallel.hpp"
#include "eigenloc/text.hpp"

namespace eigenloc {
namespace {

constexpr const char* kSchema = "eigenloc.eigenbasis";
constexpr int kSchemaVersion = 1;

void check_k(const Eigenbasis& basis, int k, const char* who) {
  if (k < 1 || k > basis.components())
    fail(ErrorKind::config, std::string(who) + ": k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(basis.components()) + "]");
}

}  // namespace

Centered mean_center(const RowMatrix& rows) {
  if (rows.rows() < 2) fail(ErrorKind::insufficient_data, "mean_center: need at least two rows");
  const long n = rows.rows();
  const long d = rows.cols();
  // Ordered block sums keep the mean independent of the thread count.
  std::vector<Eigen::VectorXd> partial(block_count(static_cast<std::size_t>(n)), Eigen::VectorXd::Zero(d));
  parallel_blocks(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) partial[b] += rows.row(static_cast<long>(i)).transpose();
  });
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  for (const auto& p : partial) sum += p;

  Centered out;
  out.mean = sum / static_cast<double>(n);
  out.deviations = rows.rowwise() - out.mean.transpose();
  return out;
}

Eigen::MatrixXd covariance(const RowMatrix& deviations) {
  const long n = deviations.rows();
  const long d = deviations.cols();
  if (n == 0) fail(ErrorKind::insufficient_data, "covariance: no rows");
  std::vector<Eigen::MatrixXd> partial(block_count(static_cast<std::size_t>(n)));
  parallel_blocks(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t begin, std::size_t end) {
    const auto block = deviations.middleRows(static_cast<long>(begin), static_cast<long>(end - begin));
    partial[b] = block.transpose() * block;
  });
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
  for (const auto& p : partial) c += p;
  c /= static_cast<double>(n);
  // Exact symmetry for the downstream solver.
  c = (0.5 * (c + c.transpose())).eval();
  return c;
}

Eigenbasis eigendecompose(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) fail(ErrorKind::contract, "eigendecompose: matrix not square");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    fail(ErrorKind::contract, "eigendecompose: matrix not symmetric");

  const long d = cov.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) fail(ErrorKind::contract, "eigendecompose: solver did not converge");

  // The solver returns ascending eigenvalues; reverse to descending.
  Eigenbasis basis;
  basis.mean = Eigen::VectorXd::Zero(d);
  basis.values.resize(d);
  basis.vectors.resize(d, d);
  const double scale = std::max(1.0, solver.eigenvalues().cwiseAbs().maxCoeff());
  for (long j = 0; j < d; ++j) {
    double lambda = solver.eigenvalues()(d - 1 - j);
    if (lambda < 0.0) {
      if (lambda < -1e-9 * scale) fail(ErrorKind::contract, "eigendecompose: matrix not positive semidefinite");
      lambda = 0.0;
    }
    basis.values(j) = lambda;
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - j);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    basis.vectors.col(j) = v;
  }
  const double total = basis.values.sum();
  basis.explained_ratio = total > 0.0 ? Eigen::VectorXd(basis.values / total) : Eigen::VectorXd::Zero(d);
  return basis;
}

Eigenbasis fit_eigenbasis(const RowMatrix& rows) {
  const Centered centered = mean_center(rows);
  Eigenbasis basis = eigendecompose(covariance(centered.deviations));
  basis.mean = centered.mean;
  return basis;
}

Truncated select_components(const Eigenbasis& basis, int k) {
  check_k(basis, k, "select_components");
  Truncated out;
  out.basis.mean = basis.mean;
  out.basis.values = basis.values.head(k);
  out.basis.vectors = basis.vectors.leftCols(k);
  out.basis.explained_ratio = basis.explained_ratio.head(k);
  out.cumulative_ratio = out.basis.explained_ratio.sum();
  return out;
}

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigenbasis& basis, int k) {
  check_k(basis, k, "project");
  return basis.vectors.leftCols(k).transpose() * (x - basis.mean);
}

Eigen::VectorXd reconstruct(const Eigen::VectorXd& coefficients, const Eigenbasis& basis) {
  const long k = coefficients.size();
  if (k > basis.components()) fail(ErrorKind::contract, "reconstruct: more coefficients than components");
  return basis.mean + basis.vectors.leftCols(k) * coefficients;
}

RowMatrix project_rows(const RowMatrix& rows, const Eigenbasis& basis, int k) {
  check_k(basis, k, "project_rows");
  RowMatrix out(rows.rows(), k);
  const Eigen::MatrixXd vk = basis.vectors.leftCols(k);
  parallel_for(static_cast<std::size_t>(rows.rows()), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const long r = static_cast<long>(i);
      out.row(r) = (rows.row(r) - basis.mean.transpose()) * vk;
    }
  });
  return out;
}

RowMatrix reconstruct_rows(const RowMatrix& coefficients, const Eigenbasis& basis) {
  const long k = coefficients.cols();
  if (k > basis.components()) fail(ErrorKind::contract, "reconstruct_rows: more coefficients than components");
  RowMatrix out(coefficients.rows(), basis.dim());
  const Eigen::MatrixXd vt = basis.vectors.leftCols(k).transpose();
  parallel_for(static_cast<std::size_t>(coefficients.rows()), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const long r = static_cast<long>(i);
      out.row(r) = basis.mean.transpose() + coefficients.row(r) * vt;
    }
  });
  return out;
}

const char* to_string(FeatureSpace space) {
  switch (space) {
    case FeatureSpace::reconstructed: return "reconstructed";
    case FeatureSpace::raw_nhp: return "raw_nhp";
    case FeatureSpace::coefficients: return "coefficients";
  }
  return "reconstructed";
}

FeatureSpace parse_feature_space(std::string_view s) {
  if (s == "reconstructed") return FeatureSpace::reconstructed;
  if (s == "raw_nhp") return FeatureSpace::raw_nhp;
  if (s == "coefficients") return FeatureSpace::coefficients;
  fail(ErrorKind::config, "unknown feature space '" + std::string(s) + "'");
}

RowMatrix clustering_input(const RowMatrix& nhp, const Eigenbasis& basis, int k, FeatureSpace space) {
  switch (space) {
    case FeatureSpace::raw_nhp: return nhp;
    case FeatureSpace::coefficients: return project_rows(nhp, basis, k);
    case FeatureSpace::reconstructed: return reconstruct_rows(project_rows(nhp, basis, k), basis);
  }
  return nhp;
}

RowMatrix centroid_curves(const RowMatrix& centroids, const Eigenbasis& basis, FeatureSpace space) {
  if (space == FeatureSpace::coefficients) return reconstruct_rows(centroids, basis);
  return centroids;
}

std::string eigenbasis_json(const Eigenbasis& basis) {
  nlohmann::ordered_json j;
  j["schema"] = kSchema;
  j["schema_version"] = kSchemaVersion;
  j["dim"] = basis.dim();
  j["mean"] = std::vector<double>(basis.mean.data(), basis.mean.data() + basis.mean.size());
  j["eigenvalues"] = std::vector<double>(basis.values.data(), basis.values.data() + basis.values.size());
  auto rows = nlohmann::ordered_json::array();
  for (long c = 0; c < basis.vectors.cols(); ++c) {
    std::vector<double> v(static_cast<std::size_t>(basis.vectors.rows()));
    for (long r = 0; r < basis.vectors.rows(); ++r) v[static_cast<std::size_t>(r)] = basis.vectors(r, c);
    rows.push_back(v);
  }
  j["eigenvectors"] = rows;
  j["explained_ratio"] =
      std::vector<double>(basis.explained_ratio.data(), basis.explained_ratio.data() + basis.explained_ratio.size());
  return j.dump(1);
}

Eigenbasis eigenbasis_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::input, "eigenbasis: invalid JSON");
  if (j.value("schema", "") != kSchema || j.value("schema_version", 0) != kSchemaVersion)
    fail(ErrorKind::schema, "eigenbasis: incompatible artifact schema");
  try {
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto values = j.at("eigenvalues").get<std::vector<double>>();
    const auto vecs = j.at("eigenvectors").get<std::vector<std::vector<double>>>();
    const auto ratio = j.at("explained_ratio").get<std::vector<double>>();
    const long d = static_cast<long>(mean.size());
    const long k = static_cast<long>(values.size());
    if (static_cast<long>(vecs.size()) != k || static_cast<long>(ratio.size()) != k)
      fail(ErrorKind::input, "eigenbasis: inconsistent sizes");
    Eigenbasis b;
    b.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
    b.values = Eigen::Map<const Eigen::VectorXd>(values.data(), k);
    b.explained_ratio = Eigen::Map<const Eigen::VectorXd>(ratio.data(), k);
    b.vectors.resize(d, k);
    for (long c = 0; c < k; ++c) {
      if (static_cast<long>(vecs[static_cast<std::size_t>(c)].size()) != d)
        fail(ErrorKind::input, "eigenbasis: inconsistent sizes");
      for (long r = 0; r < d; ++r) b.vectors(r, c) = vecs[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)];
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::input, std::string("eigenbasis: ") + e.what());
  }
}

void write_eigenlocations_csv(std::ostream& out, const Eigenbasis& basis, int k) {
  check_k(basis, k, "write_eigenlocations_csv");
  out << "component,hour_index,loading\n";
  for (int c = 0; c < k; ++c)
    for (int h = 0; h < basis.dim(); ++h) out << c << ',' << h << ',' << fixed9(basis.vectors(h, c)) << '\n';
}

}  // namespace eigenloc
