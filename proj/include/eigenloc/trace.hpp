#pragma once

#include <absl/time/time.h>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace eigenloc {

// Number of week-hour slots: 24 weekday hours followed by 24 weekend hours.
inline constexpr int kWeekHours = 48;

struct GeoPoint {
  double lat_deg = 0.0;
  double lon_deg = 0.0;

  bool valid() const;
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

enum class EventType { call, sms, data };

const char* to_string(EventType type);
std::optional<EventType> parse_event_type(std::string_view s);

// Named IANA zone. Loading an unknown name is a configuration error.
class TimeZone {
 public:
  static TimeZone load(const std::string& name);

  const std::string& name() const { return name_; }
  const absl::TimeZone& zone() const { return zone_; }

  // UTC offset in seconds in effect at the given instant.
  int offset_at(std::int64_t epoch_s) const;

 private:
  TimeZone(std::string name, absl::TimeZone zone) : name_(std::move(name)), zone_(zone) {}

  std::string name_;
  absl::TimeZone zone_;
};

// One communication event. The instant is stored as UTC epoch seconds together
// with the local UTC offset in the corpus time zone at that instant.
struct TraceRecord {
  std::string user_id;
  std::int64_t epoch_s = 0;
  std::int32_t utc_offset_s = 0;
  std::string tower_id;
  EventType event_type = EventType::call;

  std::int64_t local_seconds() const { return epoch_s + utc_offset_s; }
  // Days since 1970-01-01 in the local civil calendar.
  std::int64_t local_day() const;
  // Monday = 0 ... Sunday = 6.
  int local_weekday() const;
  int local_hour() const;
  int week_hour() const;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

// Week-hour slot for a local civil weekday (Monday = 0) and hour.
constexpr int week_hour_slot(int weekday, int hour) {
  return weekday < 5 ? hour : 24 + hour;
}

// Slot in [0, 47]: the local hour on Monday-Friday, 24 + local hour on weekends.
int week_hour_index(absl::Time instant, const TimeZone& tz);

std::string format_timestamp(const TraceRecord& record);

class TowerRegistry {
 public:
  // Inserts or replaces. Returns true when an existing entry was replaced.
  bool insert(const std::string& tower_id, GeoPoint point);

  const GeoPoint* find(std::string_view tower_id) const;
  bool contains(std::string_view tower_id) const { return find(tower_id) != nullptr; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const std::map<std::string, GeoPoint, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, GeoPoint, std::less<>> entries_;
};

struct TowerRegistryReport {
  std::size_t total_rows = 0;
  std::size_t bad_coordinate = 0;
  std::size_t malformed_line = 0;
  std::size_t duplicates = 0;
};

struct ParsedRegistry {
  TowerRegistry registry;
  TowerRegistryReport report;
};

// CSV with header `tower_id,lat,lon`. Duplicate ids are last-wins and counted;
// rows with out-of-range coordinates are dropped.
ParsedRegistry parse_tower_registry(std::istream& source);

struct ValidationReport {
  std::size_t total_records = 0;
  std::size_t bad_timestamp = 0;
  std::size_t unknown_tower = 0;
  std::size_t malformed_line = 0;
  std::size_t distinct_users = 0;
  std::optional<std::int64_t> span_start_epoch;
  std::optional<std::int64_t> span_end_epoch;

  std::size_t dropped() const { return bad_timestamp + unknown_tower + malformed_line; }
  std::size_t kept() const { return total_records - dropped(); }
};

struct TraceCorpus {
  // Sorted by (user_id, epoch_s, tower_id, event_type).
  std::vector<TraceRecord> records;
  ValidationReport report;
};

// CSV with header `user_id,timestamp,tower_id,event_type`. Timestamps are ISO-8601
// (an explicit offset is honoured, otherwise local to `tz`) or integer epoch
// seconds (UTC). Malformed rows are tallied and skipped.
TraceCorpus parse_trace(std::istream& source, const TowerRegistry& registry, const TimeZone& tz);

// Parses one timestamp field. Returns nullopt when it is not a valid instant.
std::optional<absl::Time> parse_timestamp(std::string_view text, const TimeZone& tz);

void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& records);
void write_tower_csv(std::ostream& out, const TowerRegistry& registry);

// JSON document with keys total_records, dropped, reasons, distinct_users,
// span_start, span_end.
std::string validation_report_json(const ValidationReport& report, const TimeZone& tz);

}  // namespace eigenloc
