#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eigenloc/geo.hpp"
#include "eigenloc/trace.hpp"

namespace eigenloc {

// Row-major dense matrix; one row per observation.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using HourCounts = std::array<std::uint64_t, kWeekHours>;
using HourVector = std::array<double, kWeekHours>;

struct LocationKey {
  std::string user_id;
  int location_id = 0;

  friend auto operator<=>(const LocationKey&, const LocationKey&) = default;
};

struct PresenceCounts {
  LocationKey key;
  HourCounts counts{};
};

struct PresenceVector {
  LocationKey key;
  HourVector nhp{};
};

// Histogram of records per location over the 48 week-hour slots. `record_location`
// is aligned with `records`; entries of -1 are ignored. Output follows `locations`.
std::vector<PresenceCounts> count_presences(std::span<const TraceRecord> records,
                                            std::span<const int> record_location,
                                            std::span<const UserLocation> locations);

// Normalised hourly presence for one user's complete location set: each count is
// divided by the user's total count in that slot (0 when the user has none).
std::vector<PresenceVector> normalize(std::span<const PresenceCounts> user_counts);

// Applies normalize to every user of a corpus-wide count list sorted by user.
std::vector<PresenceVector> normalize_all(std::span<const PresenceCounts> counts);

class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(RowMatrix values, std::vector<LocationKey> keys);

  const RowMatrix& values() const { return values_; }
  const std::vector<LocationKey>& keys() const { return keys_; }
  std::size_t rows() const { return keys_.size(); }

  const LocationKey& key(std::size_t row) const { return keys_.at(row); }
  // Row of (user, location), or -1 when absent.
  long row_of(const std::string& user_id, int location_id) const;

 private:
  RowMatrix values_;
  std::vector<LocationKey> keys_;
  std::map<LocationKey, std::size_t> index_;
};

// Stacks the vectors in (user_id, location_id) order. Empty input is an error.
FeatureMatrix assemble_matrix(std::vector<PresenceVector> vectors);

// user_id,location_id,h0,...,h47 with 9-decimal values.
void write_features_csv(std::ostream& out, const FeatureMatrix& matrix);
FeatureMatrix read_features_csv(std::istream& in);

void write_counts_csv(std::ostream& out, std::span<const PresenceCounts> counts);
std::vector<PresenceCounts> read_counts_csv(std::istream& in);

std::string week_hour_header();

}  // namespace eigenloc
