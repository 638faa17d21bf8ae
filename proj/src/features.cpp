#include "eigenloc/features.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "eigenloc/error.hpp"
#include "eigenloc/parallel.hpp"
#include "eigenloc/text.hpp"

namespace eigenloc {

std::string week_hour_header() {
  std::string h = "user_id,location_id";
  for (int i = 0; i < kWeekHours; ++i) h += ",h" + std::to_string(i);
  return h;
}

std::vector<PresenceCounts> count_presences(std::span<const TraceRecord> records,
                                            std::span<const int> record_location,
                                            std::span<const UserLocation> locations) {
  if (records.size() != record_location.size())
    fail(ErrorKind::contract, "count_presences: record/location mapping size mismatch");

  std::map<LocationKey, std::size_t> slot;
  std::vector<PresenceCounts> out(locations.size());
  for (std::size_t i = 0; i < locations.size(); ++i) {
    out[i].key = {locations[i].user_id, locations[i].location_id};
    slot.emplace(out[i].key, i);
  }
  // Records are grouped by user, so cache the last lookup.
  LocationKey probe;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (record_location[i] < 0) continue;
    probe.user_id = records[i].user_id;
    probe.location_id = record_location[i];
    const auto it = slot.find(probe);
    if (it == slot.end()) fail(ErrorKind::contract, "count_presences: record mapped to unknown location");
    ++out[it->second].counts[static_cast<std::size_t>(records[i].week_hour())];
  }
  return out;
}

std::vector<PresenceVector> normalize(std::span<const PresenceCounts> user_counts) {
  HourCounts totals{};
  for (const auto& c : user_counts)
    for (int h = 0; h < kWeekHours; ++h) totals[h] += c.counts[h];

  std::vector<PresenceVector> out;
  out.reserve(user_counts.size());
  for (const auto& c : user_counts) {
    PresenceVector v;
    v.key = c.key;
    for (int h = 0; h < kWeekHours; ++h)
      v.nhp[h] = totals[h] == 0 ? 0.0 : static_cast<double>(c.counts[h]) / static_cast<double>(totals[h]);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<PresenceVector> normalize_all(std::span<const PresenceCounts> counts) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t b = 0, i = 1; i <= counts.size(); ++i) {
    if (i == counts.size() || counts[i].key.user_id != counts[b].key.user_id) {
      ranges.emplace_back(b, i);
      b = i;
    }
  }
  std::vector<PresenceVector> out(counts.size());
  parallel_for(ranges.size(), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      auto [b, e] = ranges[r];
      auto vecs = normalize(counts.subspan(b, e - b));
      std::move(vecs.begin(), vecs.end(), out.begin() + static_cast<long>(b));
    }
  });
  return out;
}

FeatureMatrix::FeatureMatrix(RowMatrix values, std::vector<LocationKey> keys)
    : values_(std::move(values)), keys_(std::move(keys)) {
  if (static_cast<std::size_t>(values_.rows()) != keys_.size())
    fail(ErrorKind::contract, "FeatureMatrix: row count does not match key count");
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    if (!index_.emplace(keys_[i], i).second)
      fail(ErrorKind::contract, "FeatureMatrix: duplicate row key " + keys_[i].user_id + "/" +
                                    std::to_string(keys_[i].location_id));
  }
}

long FeatureMatrix::row_of(const std::string& user_id, int location_id) const {
  const auto it = index_.find(LocationKey{user_id, location_id});
  return it == index_.end() ? -1 : static_cast<long>(it->second);
}

FeatureMatrix assemble_matrix(std::vector<PresenceVector> vectors) {
  if (vectors.empty()) fail(ErrorKind::empty_corpus, "assemble_matrix: no user locations");
  std::sort(vectors.begin(), vectors.end(),
            [](const PresenceVector& a, const PresenceVector& b) { return a.key < b.key; });
  RowMatrix values(static_cast<long>(vectors.size()), kWeekHours);
  std::vector<LocationKey> keys;
  keys.reserve(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (int h = 0; h < kWeekHours; ++h) values(static_cast<long>(i), h) = vectors[i].nhp[h];
    keys.push_back(std::move(vectors[i].key));
  }
  return FeatureMatrix(std::move(values), std::move(keys));
}

void write_features_csv(std::ostream& out, const FeatureMatrix& matrix) {
  out << week_hour_header() << '\n';
  const auto& v = matrix.values();
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    out << matrix.key(i).user_id << ',' << matrix.key(i).location_id;
    for (long h = 0; h < v.cols(); ++h) out << ',' << fixed9(v(static_cast<long>(i), h));
    out << '\n';
  }
}

FeatureMatrix read_features_csv(std::istream& in) {
  std::string line;
  if (!read_line(in, line) || line != week_hour_header()) fail(ErrorKind::schema, "features: unexpected header");
  std::vector<PresenceVector> rows;
  while (read_line(in, line)) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 2 + kWeekHours) fail(ErrorKind::input, "features: malformed row");
    PresenceVector v;
    v.key.user_id = std::string(f[0]);
    const auto loc = parse_int(f[1]);
    if (!loc) fail(ErrorKind::input, "features: bad location id");
    v.key.location_id = static_cast<int>(*loc);
    for (int h = 0; h < kWeekHours; ++h) {
      const auto x = parse_double(f[2 + h]);
      if (!x) fail(ErrorKind::input, "features: bad value");
      v.nhp[h] = *x;
    }
    rows.push_back(std::move(v));
  }
  return assemble_matrix(std::move(rows));
}

void write_counts_csv(std::ostream& out, std::span<const PresenceCounts> counts) {
  out << week_hour_header() << '\n';
  for (const auto& c : counts) {
    out << c.key.user_id << ',' << c.key.location_id;
    for (auto n : c.counts) out << ',' << n;
    out << '\n';
  }
}

std::vector<PresenceCounts> read_counts_csv(std::istream& in) {
  std::string line;
  if (!read_line(in, line) || line != week_hour_header()) fail(ErrorKind::schema, "counts: unexpected header");
  std::vector<PresenceCounts> out;
  while (read_line(in, line)) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 2 + kWeekHours) fail(ErrorKind::input, "counts: malformed row");
    PresenceCounts c;
    c.key.user_id = std::string(f[0]);
    const auto loc = parse_int(f[1]);
    if (!loc) fail(ErrorKind::input, "counts: bad location id");
    c.key.location_id = static_cast<int>(*loc);
    for (int h = 0; h < kWeekHours; ++h) {
      const auto n = parse_int(f[2 + h]);
      if (!n || *n < 0) fail(ErrorKind::input, "counts: bad count");
      c.counts[h] = static_cast<std::uint64_t>(*n);
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace eigenloc
