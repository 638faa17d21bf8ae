#include "eigenloc/trace.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>

#include <json.hpp>

#include "eigenloc/error.hpp"
#include "eigenloc/text.hpp"

namespace eigenloc {
namespace {

constexpr std::int64_t kSecondsPerDay = 86400;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

void require_header(std::istream& in, std::string_view expected, const char* what) {
  std::string line;
  if (!read_line(in, line)) fail(ErrorKind::input, std::string(what) + ": missing header");
  // Tolerate a UTF-8 byte order mark.
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (trim(line) != expected) {
    fail(ErrorKind::input, std::string(what) + ": expected header '" + std::string(expected) +
                               "', got '" + line + "'");
  }
}

std::string format_instant(std::int64_t epoch_s, const absl::TimeZone& zone) {
  return absl::FormatTime("%Y-%m-%dT%H:%M:%S%Ez", absl::FromUnixSeconds(epoch_s), zone);
}

}  // namespace

bool GeoPoint::valid() const {
  return lat_deg >= -90.0 && lat_deg <= 90.0 && lon_deg >= -180.0 && lon_deg <= 180.0;
}

const char* to_string(EventType type) {
  switch (type) {
    case EventType::call: return "call";
    case EventType::sms: return "sms";
    case EventType::data: return "data";
  }
  return "call";
}

std::optional<EventType> parse_event_type(std::string_view s) {
  s = trim(s);
  if (s == "call") return EventType::call;
  if (s == "sms") return EventType::sms;
  if (s == "data") return EventType::data;
  return std::nullopt;
}

TimeZone TimeZone::load(const std::string& name) {
  absl::TimeZone zone;
  if (name.empty() || !absl::LoadTimeZone(name, &zone)) {
    fail(ErrorKind::config, "unknown time zone '" + name + "'");
  }
  return TimeZone(name, zone);
}

int TimeZone::offset_at(std::int64_t epoch_s) const {
  return zone_.At(absl::FromUnixSeconds(epoch_s)).offset;
}

std::int64_t TraceRecord::local_day() const { return floor_div(local_seconds(), kSecondsPerDay); }

int TraceRecord::local_weekday() const {
  // 1970-01-01 was a Thursday (weekday 3 with Monday = 0).
  return static_cast<int>(((local_day() + 3) % 7 + 7) % 7);
}

int TraceRecord::local_hour() const {
  const std::int64_t sec_of_day = local_seconds() - local_day() * kSecondsPerDay;
  return static_cast<int>(sec_of_day / 3600);
}

int TraceRecord::week_hour() const { return week_hour_slot(local_weekday(), local_hour()); }

int week_hour_index(absl::Time instant, const TimeZone& tz) {
  const absl::CivilSecond local = tz.zone().At(instant).cs;
  int weekday = 0;
  switch (absl::GetWeekday(local)) {
    case absl::Weekday::monday: weekday = 0; break;
    case absl::Weekday::tuesday: weekday = 1; break;
    case absl::Weekday::wednesday: weekday = 2; break;
    case absl::Weekday::thursday: weekday = 3; break;
    case absl::Weekday::friday: weekday = 4; break;
    case absl::Weekday::saturday: weekday = 5; break;
    case absl::Weekday::sunday: weekday = 6; break;
  }
  return week_hour_slot(weekday, local.hour());
}

std::string format_timestamp(const TraceRecord& record) {
  return format_instant(record.epoch_s, absl::FixedTimeZone(record.utc_offset_s));
}

bool TowerRegistry::insert(const std::string& tower_id, GeoPoint point) {
  auto [it, inserted] = entries_.insert_or_assign(tower_id, point);
  return !inserted;
}

const GeoPoint* TowerRegistry::find(std::string_view tower_id) const {
  const auto it = entries_.find(tower_id);
  return it == entries_.end() ? nullptr : &it->second;
}

ParsedRegistry parse_tower_registry(std::istream& source) {
  if (!source) fail(ErrorKind::input, "tower registry: unreadable source");
  require_header(source, "tower_id,lat,lon", "tower registry");

  ParsedRegistry out;
  std::string line;
  while (read_line(source, line)) {
    if (trim(line).empty()) continue;
    ++out.report.total_rows;
    const auto fields = split_fields(line);
    if (fields.size() != 3 || trim(fields[0]).empty()) {
      ++out.report.malformed_line;
      continue;
    }
    const auto lat = parse_double(fields[1]);
    const auto lon = parse_double(fields[2]);
    if (!lat || !lon) {
      ++out.report.malformed_line;
      continue;
    }
    const GeoPoint point{*lat, *lon};
    if (!point.valid()) {
      ++out.report.bad_coordinate;
      continue;
    }
    if (out.registry.insert(std::string(trim(fields[0])), point)) ++out.report.duplicates;
  }
  if (source.bad()) fail(ErrorKind::input, "tower registry: read error");
  if (out.registry.empty()) fail(ErrorKind::empty_corpus, "tower registry: no valid towers");
  return out;
}

std::optional<absl::Time> parse_timestamp(std::string_view text, const TimeZone& tz) {
  text = trim(text);
  if (text.empty()) return std::nullopt;

  if (const auto epoch = parse_int(text)) return absl::FromUnixSeconds(*epoch);

  std::string iso(text);
  if (iso.size() > 10 && iso[10] == ' ') iso[10] = 'T';
  absl::Time t;
  std::string err;
  if (absl::ParseTime("%Y-%m-%d%ET%H:%M:%E*S%Ez", iso, tz.zone(), &t, &err)) return t;
  if (absl::ParseTime("%Y-%m-%d%ET%H:%M:%E*S", iso, tz.zone(), &t, &err)) return t;
  return std::nullopt;
}

TraceCorpus parse_trace(std::istream& source, const TowerRegistry& registry, const TimeZone& tz) {
  if (!source) fail(ErrorKind::input, "trace: unreadable source");
  require_header(source, "user_id,timestamp,tower_id,event_type", "trace");

  TraceCorpus corpus;
  ValidationReport& report = corpus.report;
  std::string line;
  while (read_line(source, line)) {
    if (trim(line).empty()) continue;
    ++report.total_records;
    const auto fields = split_fields(line);
    if (fields.size() != 4) {
      ++report.malformed_line;
      continue;
    }
    const auto user = trim(fields[0]);
    const auto tower = trim(fields[2]);
    const auto type = parse_event_type(fields[3]);
    if (user.empty() || tower.empty() || !type) {
      ++report.malformed_line;
      continue;
    }
    const auto instant = parse_timestamp(fields[1], tz);
    if (!instant) {
      ++report.bad_timestamp;
      continue;
    }
    if (!registry.contains(tower)) {
      ++report.unknown_tower;
      continue;
    }
    TraceRecord rec;
    rec.user_id = std::string(user);
    rec.epoch_s = absl::ToUnixSeconds(*instant);
    rec.utc_offset_s = tz.offset_at(rec.epoch_s);
    rec.tower_id = std::string(tower);
    rec.event_type = *type;
    corpus.records.push_back(std::move(rec));
  }
  if (source.bad()) fail(ErrorKind::input, "trace: read error");
  if (corpus.records.empty()) fail(ErrorKind::empty_corpus, "trace: no valid records");

  auto& recs = corpus.records;
  std::sort(recs.begin(), recs.end(), [](const TraceRecord& a, const TraceRecord& b) {
    return std::tie(a.user_id, a.epoch_s, a.tower_id, a.event_type) <
           std::tie(b.user_id, b.epoch_s, b.tower_id, b.event_type);
  });

  std::size_t users = 0;
  std::int64_t first = recs.front().epoch_s;
  std::int64_t last = recs.front().epoch_s;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (i == 0 || recs[i].user_id != recs[i - 1].user_id) ++users;
    first = std::min(first, recs[i].epoch_s);
    last = std::max(last, recs[i].epoch_s);
  }
  report.distinct_users = users;
  report.span_start_epoch = first;
  report.span_end_epoch = last;
  return corpus;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& records) {
  out << "user_id,timestamp,tower_id,event_type\n";
  for (const auto& r : records) {
    out << r.user_id << ',' << format_timestamp(r) << ',' << r.tower_id << ',' << to_string(r.event_type)
        << '\n';
  }
}

void write_tower_csv(std::ostream& out, const TowerRegistry& registry) {
  out << "tower_id,lat,lon\n";
  for (const auto& [id, p] : registry.entries()) {
    out << id << ',' << fixed9(p.lat_deg) << ',' << fixed9(p.lon_deg) << '\n';
  }
}

std::string validation_report_json(const ValidationReport& report, const TimeZone& tz) {
  nlohmann::ordered_json j;
  j["total_records"] = report.total_records;
  j["dropped"] = report.dropped();
  j["reasons"] = {{"bad_timestamp", report.bad_timestamp},
                  {"unknown_tower", report.unknown_tower},
                  {"malformed_line", report.malformed_line}};
  j["distinct_users"] = report.distinct_users;
  j["span_start"] = report.span_start_epoch ? nlohmann::ordered_json(format_instant(*report.span_start_epoch, tz.zone()))
                                            : nlohmann::ordered_json(nullptr);
  j["span_end"] = report.span_end_epoch ? nlohmann::ordered_json(format_instant(*report.span_end_epoch, tz.zone()))
                                        : nlohmann::ordered_json(nullptr);
  return j.dump(2);
}

}  // namespace eigenloc
