#pragma once

#include "rmgms/common.hpp"
#include "rmgms/separation.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace rmgms {

using Json = nlohmann::json;

// Named dense arrays in one binary file: magic, JSON header length, JSON
// header (names, shapes, offsets), then little-endian doubles column-major.
struct ArtifactBundle {
  std::map<std::string, Mat> arrays;
  Json meta = Json::object();
};

void write_bundle(const std::string& path, const ArtifactBundle& b);
ArtifactBundle read_bundle(const std::string& path);

// Structured text file for a sparse tensor representation.
void write_representation(const std::string& path, const SparseTensorRep& rep);
SparseTensorRep read_representation(const std::string& path);

// Plain CSV with a header row; numbers printed with 17 significant digits.
class CsvTable {
 public:
  CsvTable() = default;
  explicit CsvTable(std::vector<std::string> columns) : cols_(std::move(columns)) {}
  void add(const std::vector<std::string>& row);
  const std::vector<std::string>& columns() const { return cols_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  void write(const std::string& path) const;
  static CsvTable read(const std::string& path);

 private:
  std::vector<std::string> cols_;
  std::vector<std::vector<std::string>> rows_;
};

std::string fmt(double x);
std::string fmt(int x);

inline constexpr int kManifestVersion = 1;

// Results manifest: config hash, per-stage timings, error tables, artifacts.
struct Manifest {
  int version = kManifestVersion;
  std::string experiment;
  std::string config_hash;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string failure;
  std::map<std::string, double> timings;          // seconds
  std::map<std::string, Json> tables;             // name -> {columns, rows}
  std::map<std::string, std::string> artifacts;   // name -> path relative to the manifest
  Json to_json() const;
  static Manifest from_json(const Json& j);
};

Json table_json(const CsvTable& t);
CsvTable table_from_json(const Json& j);

// Writes manifest.json under dir; throws if a referenced artifact is missing.
std::string write_manifest(const std::string& dir, const Manifest& m);
// Reads and validates; artifacts are checked for existence, and bundles by loading.
Manifest read_manifest(const std::string& path);

// Merged tables of several manifests: rows of equally named tables are
// concatenated when their columns agree (duplicates kept once).
Manifest merge_manifests(const std::vector<Manifest>& ms);

std::uint64_t fnv1a(const std::string& s);
std::string hex64(std::uint64_t x);

}  // namespace rmgms
