#include "rmgms/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace rmgms {

namespace {

constexpr char kMagic[8] = {'R', 'M', 'G', 'M', 'S', 'A', 'R', '1'};

static_assert(std::endian::native == std::endian::little, "bundle format assumes a little-endian host");

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
  return o + "\"";
}

}  // namespace

void write_bundle(const std::string& path, const ArtifactBundle& b) {
  Json header;
  header["meta"] = b.meta;
  Json arrays = Json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : b.arrays) {
    arrays.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size());
  }
  header["arrays"] = arrays;
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write bundle '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = h.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& [name, m] : b.arrays)
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!out) throw FormatError("write failed for bundle '" + path + "'");
}

ArtifactBundle read_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open bundle '" + path + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("'" + path + "' is not a bundle");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 30)) throw FormatError("bundle '" + path + "': bad header length");
  std::string h(len, '\0');
  in.read(h.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("bundle '" + path + "': truncated header");
  Json header;
  try {
    header = Json::parse(h);
  } catch (const Json::exception& e) {
    throw FormatError("bundle '" + path + "': " + e.what());
  }
  ArtifactBundle b;
  b.meta = header.value("meta", Json::object());
  const auto start = in.tellg();
  for (const auto& a : header.at("arrays")) {
    const auto rows = a.at("rows").get<Eigen::Index>(), cols = a.at("cols").get<Eigen::Index>();
    Mat m(rows, cols);
    in.seekg(start + static_cast<std::streamoff>(a.at("offset").get<std::uint64_t>() * sizeof(double)));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw FormatError("bundle '" + path + "': truncated array " + a.at("name").get<std::string>());
    b.arrays[a.at("name").get<std::string>()] = std::move(m);
  }
  return b;
}

void write_representation(const std::string& path, const SparseTensorRep& rep) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write representation '" + path + "'");
  out << std::setprecision(17);
  out << "rmgms-sparse-tensor 1\n";
  out << "family " << to_string(rep.basis.family()) << "\n";
  out << "dimension " << rep.basis.dim() << "\n";
  out << "degree " << rep.basis.degree() << "\n";
  out << "residual " << rep.residual << "\n";
  out << "modes " << rep.modes.rows() << ' ' << rep.modes.cols() << "\n";
  for (Eigen::Index i = 0; i < rep.modes.rows(); ++i) {
    for (Eigen::Index j = 0; j < rep.modes.cols(); ++j) out << (j ? " " : "") << rep.modes(i, j);
    out << "\n";
  }
  out << "terms " << rep.terms.size() << "\n";
  for (const auto& t : rep.terms) out << t.poly << ' ' << t.mode << ' ' << t.c << "\n";
  if (!out) throw FormatError("write failed for representation '" + path + "'");
}

SparseTensorRep read_representation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open representation '" + path + "'");
  auto expect = [&](const std::string& key) {
    std::string k;
    if (!(in >> k) || k != key) throw FormatError("representation '" + path + "': expected '" + key + "'");
  };
  expect("rmgms-sparse-tensor");
  int version = 0;
  in >> version;
  if (version != 1) throw FormatError("representation '" + path + "': unsupported version");
  std::string fam;
  int p = 0, deg = 0;
  SparseTensorRep rep;
  expect("family");
  in >> fam;
  expect("dimension");
  in >> p;
  expect("degree");
  in >> deg;
  expect("residual");
  in >> rep.residual;
  rep.basis = PolynomialBasis(poly_family_from_string(fam), p, deg);
  Eigen::Index r = 0, c = 0;
  expect("modes");
  in >> r >> c;
  if (!in || r < 0 || c < 0) throw FormatError("representation '" + path + "': bad mode shape");
  rep.modes.resize(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) in >> rep.modes(i, j);
  std::size_t n = 0;
  expect("terms");
  in >> n;
  for (std::size_t k = 0; k < n; ++k) {
    TensorTerm t;
    in >> t.poly >> t.mode >> t.c;
    if (t.poly < 0 || t.poly >= rep.basis.size() || t.mode < 0 || t.mode >= c)
      throw FormatError("representation '" + path + "': term index out of range");
    rep.terms.push_back(t);
  }
  if (!in) throw FormatError("representation '" + path + "': truncated");
  return rep;
}

void CsvTable::add(const std::vector<std::string>& row) {
  if (row.size() != cols_.size()) throw ConfigError("CSV row width does not match the header");
  rows_.push_back(row);
}

void CsvTable::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write CSV '" + path + "'");
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << csv_escape(r[i]);
    out << '\n';
  };
  line(cols_);
  for (const auto& r : rows_) line(r);
}

CsvTable CsvTable::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open CSV '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("CSV '" + path + "' is empty");
  CsvTable t(split_csv_line(line));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto r = split_csv_line(line);
    if (r.size() != t.cols_.size()) throw FormatError("CSV '" + path + "': ragged row");
    t.rows_.push_back(std::move(r));
  }
  return t;
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

std::string fmt(int x) { return std::to_string(x); }

Json table_json(const CsvTable& t) { return {{"columns", t.columns()}, {"rows", t.rows()}}; }

CsvTable table_from_json(const Json& j) {
  CsvTable t(j.at("columns").get<std::vector<std::string>>());
  for (const auto& r : j.at("rows")) t.add(r.get<std::vector<std::string>>());
  return t;
}

Json Manifest::to_json() const {
  Json j;
  j["version"] = version;
  j["experiment"] = experiment;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["ok"] = ok;
  if (!ok) j["failure"] = failure;
  j["timings"] = timings;
  j["tables"] = tables;
  j["artifacts"] = artifacts;
  return j;
}

Manifest Manifest::from_json(const Json& j) {
  for (const char* key : {"version", "experiment", "config_hash", "seed", "ok", "timings", "tables", "artifacts"})
    if (!j.contains(key)) throw FormatError(std::string("manifest lacks '") + key + "'");
  Manifest m;
  m.version = j.at("version").get<int>();
  if (m.version != kManifestVersion)
    throw FormatError("manifest version " + std::to_string(m.version) + " is not " +
                      std::to_string(kManifestVersion));
  m.experiment = j.at("experiment").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.ok = j.at("ok").get<bool>();
  m.failure = j.value("failure", "");
  m.timings = j.at("timings").get<std::map<std::string, double>>();
  for (const auto& [k, v] : j.at("timings").items())
    if (v.get<double>() < 0.0) throw FormatError("manifest timing '" + k + "' is negative");
  for (const auto& [k, v] : j.at("tables").items()) {
    table_from_json(v);  // shape check
    m.tables[k] = v;
  }
  m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  return m;
}

std::string write_manifest(const std::string& dir, const Manifest& m) {
  fs::create_directories(dir);
  for (const auto& [name, rel] : m.artifacts)
    if (!fs::exists(fs::path(dir) / rel))
      throw FormatError("manifest artifact '" + name + "' missing: " + (fs::path(dir) / rel).string());
  const std::string path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write manifest '" + path + "'");
  out << m.to_json().dump(2) << '\n';
  return path;
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError("manifest '" + path + "': " + e.what());
  }
  Manifest m = Manifest::from_json(j);
  const fs::path dir = fs::path(path).parent_path();
  for (const auto& [name, rel] : m.artifacts) {
    const fs::path p = dir / rel;
    if (!fs::exists(p)) throw FormatError("manifest artifact '" + name + "' missing: " + p.string());
    if (p.extension() == ".bin") read_bundle(p.string());
    else if (p.extension() == ".rep") read_representation(p.string());
    else if (p.extension() == ".csv") CsvTable::read(p.string());
  }
  return m;
}

Manifest merge_manifests(const std::vector<Manifest>& ms) {
  if (ms.empty()) throw ConfigError("nothing to merge");
  if (ms.size() == 1) return ms[0];
  Manifest out;
  std::set<std::string> names;
  out.ok = true;
  for (const auto& m : ms) {
    if (m.version != kManifestVersion) throw FormatError("manifest version mismatch");
    names.insert(m.experiment);
    out.ok = out.ok && m.ok;
    for (const auto& [k, v] : m.timings) out.timings[m.experiment + "." + k] = v;
    for (const auto& [k, v] : m.artifacts) out.artifacts[m.experiment + "." + k] = v;
    for (const auto& [k, v] : m.tables) {
      auto it = out.tables.find(k);
      if (it == out.tables.end()) {
        out.tables[k] = v;
        continue;
      }
      if (it->second.at("columns") != v.at("columns"))
        throw FormatError("table '" + k + "' has different columns across manifests");
      for (const auto& r : v.at("rows")) {
        bool dup = false;
        for (const auto& e : it->second.at("rows")) dup = dup || e == r;
        if (!dup) it->second["rows"].push_back(r);
      }
    }
  }
  std::string joined;
  for (const auto& n : names) joined += (joined.empty() ? "" : "+") + n;
  out.experiment = joined;
  std::string hashes;
  for (const auto& m : ms) hashes += m.config_hash;
  out.config_hash = hex64(fnv1a(hashes));
  out.seed = ms[0].seed;
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t x) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << x;
  return os.str();
}

}  // namespace rmgms
