#include "eigenloc/artifacts.hpp"

#include <sstream>

#include "eigenloc/error.hpp"

namespace eigenloc {

ArtifactWriter::ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) fail(ErrorKind::config, "cannot create output directory " + dir_.string() + ": " + ec.message());
}

std::ofstream& ArtifactWriter::open(const std::string& name) {
  auto stream = std::make_unique<std::ofstream>(dir_ / (name + ".partial"), std::ios::binary | std::ios::trunc);
  if (!*stream) fail(ErrorKind::config, "cannot write " + (dir_ / name).string());
  files_.emplace_back(name, std::move(stream));
  return *files_.back().second;
}

void ArtifactWriter::write_text(const std::string& name, std::string_view text) {
  auto& out = open(name);
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

void ArtifactWriter::commit() {
  for (auto& [name, stream] : files_) {
    stream->close();
    if (stream->fail()) fail(ErrorKind::input, "failed writing " + (dir_ / name).string());
    std::filesystem::rename(dir_ / (name + ".partial"), dir_ / name);
  }
  files_.clear();
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::input, "cannot read " + path.string());
  return in;
}

std::string read_text(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_artifact_json(const std::filesystem::path& path, std::string_view schema) {
  auto j = nlohmann::json::parse(read_text(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorKind::input, path.string() + ": invalid JSON");
  if (j.value("schema", "") != schema || j.value("schema_version", 0) != kArtifactSchemaVersion) {
    fail(ErrorKind::schema, path.string() + ": expected " + std::string(schema) + " v" +
                                std::to_string(kArtifactSchemaVersion) + ", found " + j.value("schema", "?") + " v" +
                                std::to_string(j.value("schema_version", 0)));
  }
  return j;
}

nlohmann::ordered_json artifact_header(std::string_view schema) {
  nlohmann::ordered_json j;
  j["schema"] = schema;
  j["schema_version"] = kArtifactSchemaVersion;
  return j;
}

nlohmann::ordered_json matrix_to_json(const RowMatrix& m) {
  auto rows = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    rows.push_back(std::vector<double>(m.row(r).data(), m.row(r).data() + m.cols()));
  return rows;
}

RowMatrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto cols = rows.empty() ? 0 : rows.front().size();
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) fail(ErrorKind::input, "ragged matrix in artifact");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

}  // namespace eigenloc
