#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "eigenloc/features.hpp"

namespace eigenloc {

struct KMeansOptions {
  int k = 4;
  std::uint64_t seed = 0;
  int max_iter = 300;
  double tol = 1e-6;
  // Independent k-means++ restarts; the lowest objective wins.
  int n_init = 10;
};

struct HardClustering {
  int k = 0;
  RowMatrix centroids;
  std::vector<int> assignment;
  double objective = 0.0;
  int iterations = 0;
  // Objective after every assignment step of the winning run.
  std::vector<double> objective_trace;

  std::vector<std::size_t> sizes() const;
};

// Lloyd iterations from k-means++ seeding. Empty clusters are reseeded at the
// point farthest from its centroid.
HardClustering kmeans(const RowMatrix& points, const KMeansOptions& options);

// Single Lloyd run from the given initial centroids.
HardClustering lloyd(const RowMatrix& points, RowMatrix centroids, int max_iter, double tol);

// k-means++ seeding. Fails as infeasible when fewer than k distinct points exist.
RowMatrix kmeanspp_seed(const RowMatrix& points, int k, std::uint64_t seed);

struct FcmOptions {
  int k = 4;
  double m = 2.0;
  std::uint64_t seed = 0;
  int max_iter = 300;
  double tol = 1e-5;
  // Independent k-means++ seedings; the lowest J_m wins.
  int n_init = 10;
};

struct FuzzyClustering {
  int k = 0;
  double m = 2.0;
  RowMatrix centroids;
  RowMatrix membership;  // rows = points, columns = clusters
  double objective = 0.0;
  int iterations = 0;
  std::vector<double> objective_trace;
  // Largest deviation of a membership row sum from 1 seen during the run.
  double max_row_sum_error = 0.0;

  std::vector<int> argmax() const;
};

FuzzyClustering fcm(const RowMatrix& points, const FcmOptions& options);

// Alternating optimisation from the given centroids.
FuzzyClustering fcm_from(const RowMatrix& points, RowMatrix centroids, double m, int max_iter, double tol);

// Membership of every point given fixed centroids. A point coincident with a
// centroid gets membership 1 there.
RowMatrix fcm_memberships(const RowMatrix& points, const RowMatrix& centroids, double m);

double fcm_objective(const RowMatrix& points, const RowMatrix& centroids, const RowMatrix& membership, double m);

// Davies-Bouldin index with mean Euclidean within-cluster scatter.
double davies_bouldin(const RowMatrix& points, std::span<const int> assignment, const RowMatrix& centroids);
double davies_bouldin(const RowMatrix& points, const HardClustering& clustering);

struct DbBootstrapResult {
  int k_min = 2;
  int k_max = 8;
  std::map<int, std::vector<double>> scores;  // k -> one score per replicate

  struct Summary {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
  };
  Summary summary(int k) const;
};

struct BootstrapOptions {
  int k_min = 2;
  int k_max = 8;
  int replicates = 50;
  std::uint64_t seed = 0;
  int max_iter = 300;
  double tol = 1e-6;
  int n_init = 10;
};

DbBootstrapResult bootstrap_db(const RowMatrix& points, const BootstrapOptions& options);

// Same, with explicit resample index lists (one per replicate).
DbBootstrapResult bootstrap_db_with(const RowMatrix& points, const std::vector<std::vector<std::size_t>>& resamples,
                                    const BootstrapOptions& options);

// k with the smallest median score; ties resolve to the smaller k.
int select_k(const DbBootstrapResult& result);

// Linear-interpolation quantile (q in [0, 1]) of unsorted values.
double quantile(std::vector<double> values, double q);

void write_db_bootstrap_csv(std::ostream& out, const DbBootstrapResult& result);

}  // namespace eigenloc
