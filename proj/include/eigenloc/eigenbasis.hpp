#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>

#include "eigenloc/features.hpp"

namespace eigenloc {

inline constexpr int kDefaultEigenK = 8;

struct Centered {
  Eigen::VectorXd mean;   // column means
  RowMatrix deviations;   // rows minus mean
};

// Column means and deviations. Requires at least two rows.
Centered mean_center(const RowMatrix& rows);

// Sample covariance over rows: AᵀA / U.
Eigen::MatrixXd covariance(const RowMatrix& deviations);

// Eigenlocations of a presence covariance. Columns of `vectors` are the
// eigenvectors, ordered by descending eigenvalue; each is signed so that its
// largest-magnitude entry is positive.
struct Eigenbasis {
  Eigen::VectorXd mean;
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  Eigen::VectorXd explained_ratio;

  int dim() const { return static_cast<int>(mean.size()); }
  int components() const { return static_cast<int>(values.size()); }
};

// Symmetric eigendecomposition. Non-symmetric input (beyond 1e-9) or a clearly
// negative eigenvalue is a contract violation; tiny negative values are clamped.
// The returned basis has a zero mean; fit_eigenbasis fills it in.
Eigenbasis eigendecompose(const Eigen::MatrixXd& cov);

// mean_center + covariance + eigendecompose.
Eigenbasis fit_eigenbasis(const RowMatrix& rows);

struct Truncated {
  Eigenbasis basis;
  double cumulative_ratio = 0.0;
};

// Top-k components. 1 <= k <= number of components.
Truncated select_components(const Eigenbasis& basis, int k);

// Coefficients (x - mean)·v_j for the first k eigenvectors.
Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigenbasis& basis, int k);

// mean + Σ c_j v_j over the given coefficients.
Eigen::VectorXd reconstruct(const Eigen::VectorXd& coefficients, const Eigenbasis& basis);

// Row-wise versions over a matrix.
RowMatrix project_rows(const RowMatrix& rows, const Eigenbasis& basis, int k);
RowMatrix reconstruct_rows(const RowMatrix& coefficients, const Eigenbasis& basis);

enum class FeatureSpace { reconstructed, raw_nhp, coefficients };

const char* to_string(FeatureSpace space);
FeatureSpace parse_feature_space(std::string_view s);

// Vectors handed to the clustering stage.
RowMatrix clustering_input(const RowMatrix& nhp, const Eigenbasis& basis, int k, FeatureSpace space);

// Maps clustering centroids back to 48-hour presence curves.
RowMatrix centroid_curves(const RowMatrix& centroids, const Eigenbasis& basis, FeatureSpace space);

// JSON with mean, eigenvalues, eigenvectors (row-major, one row per component)
// and explained ratios.
std::string eigenbasis_json(const Eigenbasis& basis);
Eigenbasis eigenbasis_from_json(std::string_view text);

// component,hour_index,loading
void write_eigenlocations_csv(std::ostream& out, const Eigenbasis& basis, int k);

}  // namespace eigenloc
