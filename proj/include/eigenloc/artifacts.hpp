#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "eigenloc/features.hpp"

namespace eigenloc {

inline constexpr int kArtifactSchemaVersion = 1;

// Stage outputs are written as `<name>.partial` and renamed on commit, so a
// failed stage leaves only partial files behind.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir);
  ArtifactWriter(const ArtifactWriter&) = delete;
  ArtifactWriter& operator=(const ArtifactWriter&) = delete;

  std::ofstream& open(const std::string& name);
  void write_text(const std::string& name, std::string_view text);
  void commit();

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::unique_ptr<std::ofstream>>> files_;
};

std::ifstream open_input(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

// Reads a JSON artifact and checks its schema tag and version.
nlohmann::json read_artifact_json(const std::filesystem::path& path, std::string_view schema);
nlohmann::ordered_json artifact_header(std::string_view schema);

nlohmann::ordered_json matrix_to_json(const RowMatrix& m);
RowMatrix matrix_from_json(const nlohmann::json& j);

}  // namespace eigenloc
