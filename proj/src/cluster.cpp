#include "eigenloc/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "eigenloc/error.hpp"
#include "eigenloc/parallel.hpp"
#include "eigenloc/random.hpp"
#include "eigenloc/text.hpp"

namespace eigenloc {
namespace {

using Index = Eigen::Index;

double sq_dist(const RowMatrix& a, Index i, const RowMatrix& b, Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

// Sum of per-item values, combined block by block in a fixed order.
double ordered_sum(std::span<const double> values) {
  std::vector<double> partial(block_count(values.size()), 0.0);
  parallel_blocks(values.size(), [&](std::size_t b, std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += values[i];
    partial[b] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

void check_points(const RowMatrix& points, int k, const char* who) {
  if (k < 1) fail(ErrorKind::config, std::string(who) + ": k must be at least 1");
  if (points.cols() < 1) fail(ErrorKind::contract, std::string(who) + ": points need at least one dimension");
  if (points.rows() < k)
    fail(ErrorKind::infeasible, std::string(who) + ": " + std::to_string(points.rows()) + " points for k=" +
                                    std::to_string(k));
}

struct Assignment {
  std::vector<int> label;
  std::vector<double> dist2;
};

Assignment assign_nearest(const RowMatrix& points, const RowMatrix& centroids) {
  const auto n = static_cast<std::size_t>(points.rows());
  Assignment a{std::vector<int>(n), std::vector<double>(n)};
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (Index c = 0; c < centroids.rows(); ++c) {
        const double d = sq_dist(points, static_cast<Index>(i), centroids, c);
        if (d < best) {
          best = d;
          arg = static_cast<int>(c);
        }
      }
      a.label[i] = arg;
      a.dist2[i] = best;
    }
  });
  return a;
}

// Moves the farthest points into empty clusters. Returns false when no point
// can be moved (all remaining points coincide with their centroids).
bool repair_empty(const RowMatrix& points, RowMatrix& centroids, Assignment& a) {
  const auto k = static_cast<std::size_t>(centroids.rows());
  std::vector<std::size_t> sizes(k, 0);
  for (int l : a.label) ++sizes[static_cast<std::size_t>(l)];
  for (std::size_t j = 0; j < k; ++j) {
    if (sizes[j] > 0) continue;
    double far = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < a.label.size(); ++i) {
      if (sizes[static_cast<std::size_t>(a.label[i])] > 1 && a.dist2[i] > far) {
        far = a.dist2[i];
        arg = i;
      }
    }
    if (far <= 0.0) return false;
    --sizes[static_cast<std::size_t>(a.label[arg])];
    ++sizes[j];
    a.label[arg] = static_cast<int>(j);
    a.dist2[arg] = 0.0;
    centroids.row(static_cast<Index>(j)) = points.row(static_cast<Index>(arg));
  }
  return true;
}

RowMatrix cluster_means(const RowMatrix& points, const std::vector<int>& label, const RowMatrix& previous) {
  const Index k = previous.rows();
  const Index d = points.cols();
  const auto n = static_cast<std::size_t>(points.rows());
  const std::size_t blocks = block_count(n);
  std::vector<RowMatrix> sums(blocks, RowMatrix::Zero(k, d));
  std::vector<std::vector<std::size_t>> counts(blocks, std::vector<std::size_t>(static_cast<std::size_t>(k), 0));
  parallel_blocks(n, [&](std::size_t b, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      sums[b].row(label[i]) += points.row(static_cast<Index>(i));
      ++counts[b][static_cast<std::size_t>(label[i])];
    }
  });
  RowMatrix total = RowMatrix::Zero(k, d);
  std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
  for (std::size_t b = 0; b < blocks; ++b) {
    total += sums[b];
    for (Index c = 0; c < k; ++c) count[static_cast<std::size_t>(c)] += counts[b][static_cast<std::size_t>(c)];
  }
  RowMatrix out = previous;
  for (Index c = 0; c < k; ++c)
    if (count[static_cast<std::size_t>(c)] > 0) out.row(c) = total.row(c) / static_cast<double>(count[static_cast<std::size_t>(c)]);
  return out;
}


// Single-point transfers (Hartigan): move a point when the exact change in the
// objective is negative. Leaves a Lloyd fixed point that no one-point move improves.
bool transfer_pass(const RowMatrix& points, std::vector<int>& label, RowMatrix& centroids, std::vector<std::size_t>& sizes) {
  bool moved = false;
  const Index k = centroids.rows();
  for (Index i = 0; i < points.rows(); ++i) {
    const int a = label[static_cast<std::size_t>(i)];
    const double na = static_cast<double>(sizes[static_cast<std::size_t>(a)]);
    if (na < 2.0) continue;
    const double remove = na / (na - 1.0) * sq_dist(points, i, centroids, a);
    double best = remove;
    int to = a;
    for (Index c = 0; c < k; ++c) {
      if (c == a) continue;
      const double nc = static_cast<double>(sizes[static_cast<std::size_t>(c)]);
      const double add = nc / (nc + 1.0) * sq_dist(points, i, centroids, c);
      if (add < best) {
        best = add;
        to = static_cast<int>(c);
      }
    }
    if (to == a || !(best < remove * (1.0 - 1e-12))) continue;
    const double nt = static_cast<double>(sizes[static_cast<std::size_t>(to)]);
    centroids.row(a) = (centroids.row(a) * na - points.row(i)) / (na - 1.0);
    centroids.row(to) = (centroids.row(to) * nt + points.row(i)) / (nt + 1.0);
    --sizes[static_cast<std::size_t>(a)];
    ++sizes[static_cast<std::size_t>(to)];
    label[static_cast<std::size_t>(i)] = to;
    moved = true;
  }
  return moved;
}

// Transfer passes, then Lloyd again from the exact means. Repeats until stable.
HardClustering refine(const RowMatrix& points, HardClustering c, int max_iter, double tol) {
  for (int round = 0; round < max_iter; ++round) {
    RowMatrix centroids = cluster_means(points, c.assignment, c.centroids);
    std::vector<std::size_t> sizes = c.sizes();
    bool any = false;
    for (int pass = 0; pass < max_iter && transfer_pass(points, c.assignment, centroids, sizes); ++pass) any = true;
    if (!any) break;
    HardClustering next = lloyd(points, cluster_means(points, c.assignment, centroids), max_iter, tol);
    if (!(next.objective < c.objective)) break;
    next.objective_trace.insert(next.objective_trace.begin(), c.objective_trace.begin(), c.objective_trace.end());
    next.iterations += c.iterations;
    c = std::move(next);
  }
  return c;
}

}  // namespace

std::vector<std::size_t> HardClustering::sizes() const {
  std::vector<std::size_t> out(static_cast<std::size_t>(k), 0);
  for (int a : assignment) ++out[static_cast<std::size_t>(a)];
  return out;
}

RowMatrix kmeanspp_seed(const RowMatrix& points, int k, std::uint64_t seed) {
  check_points(points, k, "kmeans++");
  const auto n = static_cast<std::size_t>(points.rows());
  Rng rng(seed);
  RowMatrix centroids(k, points.cols());
  std::size_t first = rng.index(n);
  centroids.row(0) = points.row(static_cast<Index>(first));

  std::vector<double> d2(n);
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) d2[i] = sq_dist(points, static_cast<Index>(i), centroids, 0);
  });
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (!(total > 0.0))
      fail(ErrorKind::infeasible, "kmeans++: fewer than " + std::to_string(k) + " distinct points");
    const double target = rng.uniform() * total;
    double cum = 0.0;
    std::size_t pick = n;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      last_positive = i;
      cum += d2[i];
      if (cum > target) {
        pick = i;
        break;
      }
    }
    if (pick == n) pick = last_positive;
    centroids.row(c) = points.row(static_cast<Index>(pick));
    parallel_for(n, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i)
        d2[i] = std::min(d2[i], sq_dist(points, static_cast<Index>(i), centroids, c));
    });
  }
  return centroids;
}

HardClustering lloyd(const RowMatrix& points, RowMatrix centroids, int max_iter, double tol) {
  const int k = static_cast<int>(centroids.rows());
  check_points(points, k, "kmeans");
  if (max_iter < 1) fail(ErrorKind::config, "kmeans: max_iter must be positive");

  HardClustering out;
  out.k = k;
  Assignment a = assign_nearest(points, centroids);
  for (int iter = 1;; ++iter) {
    if (!repair_empty(points, centroids, a))
      fail(ErrorKind::infeasible, "kmeans: cannot fill an empty cluster (too few distinct points)");
    out.objective_trace.push_back(ordered_sum(a.dist2));
    if (iter > max_iter) break;

    RowMatrix next = cluster_means(points, a.label, centroids);
    const double shift = (next - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(next);
    out.iterations = iter;
    a = assign_nearest(points, centroids);
    if (shift < tol) {
      if (!repair_empty(points, centroids, a))
        fail(ErrorKind::infeasible, "kmeans: cannot fill an empty cluster (too few distinct points)");
      out.objective_trace.push_back(ordered_sum(a.dist2));
      break;
    }
  }
  out.centroids = std::move(centroids);
  out.assignment = std::move(a.label);
  out.objective = out.objective_trace.back();
  return out;
}

HardClustering kmeans(const RowMatrix& points, const KMeansOptions& options) {
  check_points(points, options.k, "kmeans");
  if (options.n_init < 1) fail(ErrorKind::config, "kmeans: n_init must be positive");
  HardClustering best;
  bool have = false;
  for (int run = 0; run < options.n_init; ++run) {
    const std::uint64_t seed = options.n_init == 1 ? options.seed : derive_seed(options.seed, {static_cast<std::uint64_t>(run)});
    HardClustering c = refine(points, lloyd(points, kmeanspp_seed(points, options.k, seed), options.max_iter, options.tol),
                              options.max_iter, options.tol);
    if (!have || c.objective < best.objective) {
      best = std::move(c);
      have = true;
    }
  }
  return best;
}

std::vector<int> FuzzyClustering::argmax() const {
  std::vector<int> out(static_cast<std::size_t>(membership.rows()));
  for (Index i = 0; i < membership.rows(); ++i) {
    Index arg = 0;
    membership.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

RowMatrix fcm_memberships(const RowMatrix& points, const RowMatrix& centroids, double m) {
  if (!(m > 1.0)) fail(ErrorKind::config, "fcm: fuzzifier m must exceed 1");
  const Index k = centroids.rows();
  const double expo = 1.0 / (m - 1.0);
  RowMatrix u(points.rows(), k);
  parallel_for(static_cast<std::size_t>(points.rows()), [&](std::size_t b, std::size_t e) {
    std::vector<double> d2(static_cast<std::size_t>(k));
    for (std::size_t ii = b; ii < e; ++ii) {
      const auto i = static_cast<Index>(ii);
      Index coincident = -1;
      double dmin = std::numeric_limits<double>::infinity();
      for (Index c = 0; c < k; ++c) {
        d2[static_cast<std::size_t>(c)] = sq_dist(points, i, centroids, c);
        if (d2[static_cast<std::size_t>(c)] == 0.0 && coincident < 0) coincident = c;
        dmin = std::min(dmin, d2[static_cast<std::size_t>(c)]);
      }
      if (coincident >= 0) {
        u.row(i).setZero();
        u(i, coincident) = 1.0;
        continue;
      }
      // u_c = 1 / Σ_t (d_c / d_t)^(2/(m-1)), evaluated relative to the nearest
      // centroid so every weight lies in (0, 1].
      double sum = 0.0;
      for (Index c = 0; c < k; ++c) {
        const double ratio = dmin / d2[static_cast<std::size_t>(c)];
        const double w = expo == 1.0 ? ratio : std::pow(ratio, expo);
        u(i, c) = w;
        sum += w;
      }
      u.row(i) /= sum;
    }
  });
  return u;
}

double fcm_objective(const RowMatrix& points, const RowMatrix& centroids, const RowMatrix& membership, double m) {
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<double> per_point(n);
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t ii = b; ii < e; ++ii) {
      const auto i = static_cast<Index>(ii);
      double s = 0.0;
      for (Index c = 0; c < centroids.rows(); ++c) s += std::pow(membership(i, c), m) * sq_dist(points, i, centroids, c);
      per_point[ii] = s;
    }
  });
  return ordered_sum(per_point);
}

namespace {

RowMatrix fcm_centroids(const RowMatrix& points, const RowMatrix& u, double m, const RowMatrix& previous) {
  const Index k = u.cols();
  const Index d = points.cols();
  const auto n = static_cast<std::size_t>(points.rows());
  const std::size_t blocks = block_count(n);
  std::vector<RowMatrix> num(blocks, RowMatrix::Zero(k, d));
  std::vector<Eigen::VectorXd> den(blocks, Eigen::VectorXd::Zero(k));
  parallel_blocks(n, [&](std::size_t b, std::size_t begin, std::size_t end) {
    for (std::size_t ii = begin; ii < end; ++ii) {
      const auto i = static_cast<Index>(ii);
      for (Index c = 0; c < k; ++c) {
        const double w = m == 2.0 ? u(i, c) * u(i, c) : std::pow(u(i, c), m);
        num[b].row(c) += w * points.row(i);
        den[b](c) += w;
      }
    }
  });
  RowMatrix total = RowMatrix::Zero(k, d);
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(k);
  for (std::size_t b = 0; b < blocks; ++b) {
    total += num[b];
    weight += den[b];
  }
  RowMatrix out = previous;
  for (Index c = 0; c < k; ++c)
    if (weight(c) > 0.0) out.row(c) = total.row(c) / weight(c);
  return out;
}

double max_row_sum_error(const RowMatrix& u) {
  return (u.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

}  // namespace

FuzzyClustering fcm_from(const RowMatrix& points, RowMatrix centroids, double m, int max_iter, double tol) {
  const int k = static_cast<int>(centroids.rows());
  check_points(points, k, "fcm");
  if (!(m > 1.0)) fail(ErrorKind::config, "fcm: fuzzifier m must exceed 1");
  if (max_iter < 1) fail(ErrorKind::config, "fcm: max_iter must be positive");

  FuzzyClustering out;
  out.k = k;
  out.m = m;
  RowMatrix u = fcm_memberships(points, centroids, m);
  out.max_row_sum_error = max_row_sum_error(u);
  out.objective_trace.push_back(fcm_objective(points, centroids, u, m));
  for (int iter = 1; iter <= max_iter; ++iter) {
    centroids = fcm_centroids(points, u, m, centroids);
    RowMatrix next = fcm_memberships(points, centroids, m);
    out.max_row_sum_error = std::max(out.max_row_sum_error, max_row_sum_error(next));
    out.objective_trace.push_back(fcm_objective(points, centroids, next, m));
    const double delta = (next - u).cwiseAbs().maxCoeff();
    u = std::move(next);
    out.iterations = iter;
    if (delta < tol) break;
  }
  out.centroids = std::move(centroids);
  out.membership = std::move(u);
  out.objective = out.objective_trace.back();
  return out;
}

FuzzyClustering fcm(const RowMatrix& points, const FcmOptions& options) {
  check_points(points, options.k, "fcm");
  if (options.n_init < 1) fail(ErrorKind::config, "fcm: n_init must be positive");
  FuzzyClustering best;
  for (int run = 0; run < options.n_init; ++run) {
    const std::uint64_t seed = options.n_init == 1 ? options.seed : derive_seed(options.seed, {static_cast<std::uint64_t>(run)});
    FuzzyClustering c = fcm_from(points, kmeanspp_seed(points, options.k, seed), options.m, options.max_iter, options.tol);
    if (run == 0 || c.objective < best.objective) best = std::move(c);
  }
  return best;
}

double davies_bouldin(const RowMatrix& points, std::span<const int> assignment, const RowMatrix& centroids) {
  const Index k = centroids.rows();
  if (k < 2) fail(ErrorKind::contract, "davies_bouldin: need at least two clusters");
  if (assignment.size() != static_cast<std::size_t>(points.rows()))
    fail(ErrorKind::contract, "davies_bouldin: assignment size mismatch");
  std::vector<double> scatter(static_cast<std::size_t>(k), 0.0);
  std::vector<std::size_t> size(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const int c = assignment[i];
    if (c < 0 || c >= k) fail(ErrorKind::contract, "davies_bouldin: label out of range");
    scatter[static_cast<std::size_t>(c)] += std::sqrt(sq_dist(points, static_cast<Index>(i), centroids, c));
    ++size[static_cast<std::size_t>(c)];
  }
  for (Index c = 0; c < k; ++c) {
    if (size[static_cast<std::size_t>(c)] == 0) fail(ErrorKind::degenerate, "davies_bouldin: empty cluster");
    scatter[static_cast<std::size_t>(c)] /= static_cast<double>(size[static_cast<std::size_t>(c)]);
  }
  double total = 0.0;
  for (Index i = 0; i < k; ++i) {
    double worst = 0.0;
    for (Index j = 0; j < k; ++j) {
      if (i == j) continue;
      const double sep = std::sqrt(sq_dist(centroids, i, centroids, j));
      if (sep == 0.0) fail(ErrorKind::degenerate, "davies_bouldin: coincident centroids");
      worst = std::max(worst, (scatter[static_cast<std::size_t>(i)] + scatter[static_cast<std::size_t>(j)]) / sep);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

double davies_bouldin(const RowMatrix& points, const HardClustering& clustering) {
  return davies_bouldin(points, clustering.assignment, clustering.centroids);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) fail(ErrorKind::contract, "quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

DbBootstrapResult::Summary DbBootstrapResult::summary(int k) const {
  const auto it = scores.find(k);
  if (it == scores.end() || it->second.empty()) fail(ErrorKind::contract, "bootstrap summary: no scores for k");
  return {quantile(it->second, 0.25), quantile(it->second, 0.5), quantile(it->second, 0.75)};
}

DbBootstrapResult bootstrap_db_with(const RowMatrix& points, const std::vector<std::vector<std::size_t>>& resamples,
                                    const BootstrapOptions& options) {
  if (options.k_min < 2 || options.k_max < options.k_min)
    fail(ErrorKind::config, "bootstrap_db: need 2 <= k_min <= k_max");
  if (points.rows() < options.k_max)
    fail(ErrorKind::infeasible, "bootstrap_db: fewer points than k_max");

  const std::size_t reps = resamples.size();
  const int nk = options.k_max - options.k_min + 1;
  std::vector<std::vector<double>> grid(reps, std::vector<double>(static_cast<std::size_t>(nk)));
  parallel_for(reps, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const auto& idx = resamples[r];
      RowMatrix sample(static_cast<Index>(idx.size()), points.cols());
      for (std::size_t i = 0; i < idx.size(); ++i) sample.row(static_cast<Index>(i)) = points.row(static_cast<Index>(idx[i]));
      for (int k = options.k_min; k <= options.k_max; ++k) {
        KMeansOptions ko;
        ko.k = k;
        ko.seed = derive_seed(options.seed, {r, static_cast<std::uint64_t>(k)});
        ko.max_iter = options.max_iter;
        ko.tol = options.tol;
        ko.n_init = options.n_init;
        const HardClustering hc = kmeans(sample, ko);
        grid[r][static_cast<std::size_t>(k - options.k_min)] = davies_bouldin(sample, hc);
      }
    }
  });

  DbBootstrapResult out;
  out.k_min = options.k_min;
  out.k_max = options.k_max;
  for (int k = options.k_min; k <= options.k_max; ++k) {
    auto& v = out.scores[k];
    for (std::size_t r = 0; r < reps; ++r) v.push_back(grid[r][static_cast<std::size_t>(k - options.k_min)]);
  }
  return out;
}

DbBootstrapResult bootstrap_db(const RowMatrix& points, const BootstrapOptions& options) {
  if (options.replicates < 1) fail(ErrorKind::config, "bootstrap_db: replicates must be positive");
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<std::vector<std::size_t>> resamples(static_cast<std::size_t>(options.replicates));
  for (std::size_t r = 0; r < resamples.size(); ++r) {
    Rng rng(derive_seed(options.seed, {r}));
    resamples[r].resize(n);
    for (auto& i : resamples[r]) i = rng.index(n);
  }
  return bootstrap_db_with(points, resamples, options);
}

int select_k(const DbBootstrapResult& result) {
  int best_k = -1;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [k, scores] : result.scores) {
    if (scores.empty()) continue;
    const double med = quantile(scores, 0.5);
    if (med < best) {
      best = med;
      best_k = k;
    }
  }
  if (best_k < 0) fail(ErrorKind::contract, "select_k: empty bootstrap result");
  return best_k;
}

void write_db_bootstrap_csv(std::ostream& out, const DbBootstrapResult& result) {
  out << "k,replicate,score\n";
  for (const auto& [k, scores] : result.scores)
    for (std::size_t r = 0; r < scores.size(); ++r) out << k << ',' << r << ',' << fixed9(scores[r]) << '\n';
}

}  // namespace eigenloc
