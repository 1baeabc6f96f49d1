#pragma once
// Deterministic file output: CSV/JSON writers that round-trip doubles
// exactly, write through a temp file + rename so readers never observe a
// partial file, and record every artifact in a manifest keyed by content
// hash. Manifests carry no timestamps; re-running a deterministic experiment
// must reproduce them byte for byte.

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace varcurv {

// Shortest text that parses back to the same double is overkill here; %.17g
// is always sufficient for an exact round trip.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

// from_chars rather than stod: stod rejects subnormals with out_of_range,
// and the round trip must cover every finite double we can emit.
inline double parse_double(const std::string& text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  const auto result = std::from_chars(first, last, value);
  if (result.ec != std::errc() || result.ptr == first)
    throw std::invalid_argument("parse_double: '" + text + "'");
  return value;
}

inline void ensure_parent_directory(const std::filesystem::path& path) {
  const std::filesystem::path parent = path.parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

// Write-to-temp then rename: the destination either holds the old content or
// the complete new content, never a prefix.
inline void write_text_atomic(const std::filesystem::path& path,
                              std::string_view content) {
  ensure_parent_directory(path);
  std::filesystem::path temp = path;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot open for write: " + temp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out)
      throw std::runtime_error("write failed: " + temp.string());
  }
  std::filesystem::rename(temp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct Csv {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

inline std::string render_csv(const Csv& csv) {
  std::string out;
  for (std::size_t c = 0; c < csv.columns.size(); ++c) {
    if (c) out += ',';
    out += csv.columns[c];
  }
  out += '\n';
  for (const auto& row : csv.rows) {
    if (row.size() != csv.columns.size())
      throw std::invalid_argument("render_csv: row width mismatch");
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += row[c];
    }
    out += '\n';
  }
  return out;
}

inline void write_csv_atomic(const std::filesystem::path& path,
                             const Csv& csv) {
  write_text_atomic(path, render_csv(csv));
}

// Values never contain commas or quotes, so a plain split suffices.
inline Csv parse_csv(const std::string& text) {
  Csv csv;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      csv.columns = std::move(cells);
      first = false;
    } else {
      if (cells.size() != csv.columns.size())
        throw std::runtime_error("parse_csv: ragged row");
      csv.rows.push_back(std::move(cells));
    }
  }
  return csv;
}

inline Csv read_csv(const std::filesystem::path& path) {
  return parse_csv(read_text(path));
}

inline std::size_t csv_column_index(const Csv& csv, const std::string& name) {
  for (std::size_t c = 0; c < csv.columns.size(); ++c)
    if (csv.columns[c] == name) return c;
  throw std::runtime_error("csv: no column '" + name + "'");
}

inline std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t hash = 14695981039346656037ull;
  for (const char ch : bytes) {
    hash ^= static_cast<unsigned char>(ch);
    hash *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, hash);
  return std::string(buf);
}

inline std::string hash_file(const std::filesystem::path& path) {
  return fnv1a64_hex(read_text(path));
}

struct ManifestEntry {
  std::string file;  // path relative to the manifest's directory
  std::uint64_t bytes = 0;
  std::string hash;
  std::string producer;
};

inline void write_manifest_atomic(const std::filesystem::path& path,
                                  std::vector<ManifestEntry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.file < b.file;
            });
  nlohmann::json files = nlohmann::json::array();
  for (const ManifestEntry& e : entries) {
    files.push_back({{"file", e.file},
                     {"bytes", e.bytes},
                     {"hash", e.hash},
                     {"producer", e.producer}});
  }
  nlohmann::json doc;
  doc["files"] = files;
  write_text_atomic(path, doc.dump(2) + "\n");
}

inline std::vector<ManifestEntry> read_manifest(
    const std::filesystem::path& path) {
  const nlohmann::json doc = nlohmann::json::parse(read_text(path));
  std::vector<ManifestEntry> entries;
  for (const auto& item : doc.at("files")) {
    ManifestEntry e;
    e.file = item.at("file").get<std::string>();
    e.bytes = item.at("bytes").get<std::uint64_t>();
    e.hash = item.at("hash").get<std::string>();
    e.producer = item.at("producer").get<std::string>();
    entries.push_back(std::move(e));
  }
  return entries;
}

// Recomputes size and hash of every listed file; returns one message per
// problem, naming the offending file. Empty result means the tree matches.
inline std::vector<std::string> check_manifest(
    const std::filesystem::path& directory,
    const std::vector<ManifestEntry>& entries) {
  std::vector<std::string> problems;
  for (const ManifestEntry& e : entries) {
    const std::filesystem::path path = directory / e.file;
    if (!std::filesystem::exists(path)) {
      problems.push_back("missing file: " + e.file);
      continue;
    }
    const std::string content = read_text(path);
    if (content.size() != e.bytes)
      problems.push_back("size mismatch: " + e.file + " (manifest " +
                         std::to_string(e.bytes) + ", actual " +
                         std::to_string(content.size()) + ")");
    const std::string hash = fnv1a64_hex(content);
    if (hash != e.hash)
      problems.push_back("hash mismatch: " + e.file + " (manifest " + e.hash +
                         ", actual " + hash + ")");
  }
  return problems;
}

// Tracks artifacts as they are written and emits the manifest last, so a
// manifest on disk always describes completely written files.
class ArtifactWriter {
 public:
  ArtifactWriter(std::filesystem::path root, std::string producer)
      : root_(std::move(root)), producer_(std::move(producer)) {}

  const std::filesystem::path& root() const { return root_; }

  void write_text(const std::string& relative, std::string_view content) {
    const std::filesystem::path path = root_ / relative;
    write_text_atomic(path, content);
    entries_.push_back(ManifestEntry{relative, content.size(),
                                     fnv1a64_hex(content), producer_});
  }

  void write_csv(const std::string& relative, const Csv& csv) {
    write_text(relative, render_csv(csv));
  }

  void write_json(const std::string& relative, const nlohmann::json& doc) {
    write_text(relative, doc.dump(2) + "\n");
  }

  void finalize() {
    write_manifest_atomic(root_ / "manifest.json", entries_);
  }

  const std::vector<ManifestEntry>& entries() const { return entries_; }

 private:
  std::filesystem::path root_;
  std::string producer_;
  std::vector<ManifestEntry> entries_;
};

}  // namespace varcurv
