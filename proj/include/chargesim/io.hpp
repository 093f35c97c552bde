#ifndef CHARGESIM_IO_HPP
#define CHARGESIM_IO_HPP

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "chargesim/circuit.hpp"
#include "chargesim/distribution.hpp"

namespace chargesim {

inline constexpr int kCsvSchemaVersion = 1;

inline std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string formatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Buffered CSV emitter: '#'-prefixed provenance comments, one header row,
/// data rows, and a trailing checksummed completeness marker used for sweep
/// resumption.
class CsvWriter {
public:
  void comment(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line))
      body_ += "# " + line + "\n";
  }

  void header(const std::vector<std::string>& cols) { rowStrings(cols); }

  void row(const std::vector<std::string>& cells) { rowStrings(cells); }

  void row(const std::vector<double>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i)
        line += ',';
      line += formatDouble(cells[i]);
    }
    body_ += line + "\n";
  }

  const std::string& content() const { return body_; }

  /// Write body + completeness marker atomically (via rename).
  void writeFile(const std::filesystem::path& path) const {
    std::string full = body_;
    char mark[64];
    std::snprintf(mark, sizeof mark, "# complete fnv64=%016llx\n",
                  static_cast<unsigned long long>(fnv1a64(body_)));
    full += mark;
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary);
      if (!os)
        throw std::runtime_error("CsvWriter: cannot open " + tmp.string());
      os << full;
    }
    std::filesystem::rename(tmp, path);
  }

private:
  void rowStrings(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i)
        line += ',';
      line += cells[i];
    }
    body_ += line + "\n";
  }

  std::string body_;
};

/// True iff the file exists and carries a valid completeness marker.
inline bool isCompleteResult(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    return false;
  std::stringstream ss;
  ss << is.rdbuf();
  std::string all = ss.str();
  const std::string tag = "# complete fnv64=";
  const auto pos = all.rfind(tag);
  if (pos == std::string::npos)
    return false;
  const std::string body = all.substr(0, pos);
  const std::string hex = all.substr(pos + tag.size());
  std::uint64_t stored = 0;
  if (std::sscanf(hex.c_str(), "%llx",
                  reinterpret_cast<unsigned long long*>(&stored)) != 1)
    return false;
  return stored == fnv1a64(body);
}

struct CsvTable {
  std::vector<std::string> comments;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int columnIndex(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name)
        return int(i);
    throw std::runtime_error("CsvTable: missing column " + name);
  }
};

inline CsvTable readCsv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is)
    throw std::runtime_error("readCsv: cannot open " + path.string());
  CsvTable t;
  std::string line;
  bool haveHeader = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    if (line[0] == '#') {
      t.comments.push_back(line);
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ','))
      cells.push_back(cell);
    if (!haveHeader) {
      t.columns = std::move(cells);
      haveHeader = true;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  if (!haveHeader)
    throw std::runtime_error("readCsv: no data in " + path.string());
  return t;
}

// ---------------------------------------------------------------------------
// Optional per-trajectory binary dump: measurement records plus snapshot site
// marginals. Little-endian, versioned header.

inline constexpr std::uint32_t kDumpMagic = 0x43535444; // "CSTD" (LE)
inline constexpr std::uint32_t kDumpVersion = 1;

struct TrajectoryDump {
  CircuitSpec spec;
  std::vector<MeasurementRecord> records;
  std::vector<std::vector<double>> snapshotMarginals; // each of size L
};

namespace detail {
template <class T> void putLE(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little,
                "little-endian host assumed");
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T> T getLE(const std::string& in, std::size_t& off) {
  if (off + sizeof(T) > in.size())
    throw std::runtime_error("TrajectoryDump: truncated file");
  T v;
  std::memcpy(&v, in.data() + off, sizeof v);
  off += sizeof v;
  return v;
}
} // namespace detail

inline void writeDump(const TrajectoryDump& d,
                      const std::filesystem::path& path) {
  std::string out;
  detail::putLE(out, kDumpMagic);
  detail::putLE(out, kDumpVersion);
  detail::putLE(out, std::int32_t(d.spec.L));
  detail::putLE(out, std::int32_t(d.spec.depth));
  detail::putLE(out, std::uint8_t(d.spec.mode == MeasureMode::weak ? 1 : 0));
  detail::putLE(out, d.spec.p);
  detail::putLE(out, d.spec.gamma);
  detail::putLE(out, d.spec.dt);
  detail::putLE(out, std::uint64_t(d.spec.seed));
  detail::putLE(out, std::uint32_t(d.records.size()));
  detail::putLE(out, std::uint32_t(d.snapshotMarginals.size()));
  for (const auto& r : d.records) {
    detail::putLE(out, std::int32_t(r.layer));
    detail::putLE(out, std::int32_t(r.site));
    detail::putLE(out, r.outcome);
  }
  for (const auto& snap : d.snapshotMarginals) {
    if (snap.size() != std::size_t(d.spec.L))
      throw std::invalid_argument("writeDump: snapshot size mismatch");
    for (double v : snap)
      detail::putLE(out, v);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw std::runtime_error("writeDump: cannot open " + path.string());
  os << out;
}

inline TrajectoryDump readDump(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw std::runtime_error("readDump: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string in = ss.str();
  std::size_t off = 0;
  if (detail::getLE<std::uint32_t>(in, off) != kDumpMagic)
    throw std::runtime_error("readDump: bad magic");
  const auto version = detail::getLE<std::uint32_t>(in, off);
  if (version != kDumpVersion)
    throw std::runtime_error("readDump: unsupported version");
  TrajectoryDump d;
  d.spec.L = detail::getLE<std::int32_t>(in, off);
  d.spec.depth = detail::getLE<std::int32_t>(in, off);
  d.spec.mode = detail::getLE<std::uint8_t>(in, off) ? MeasureMode::weak
                                                     : MeasureMode::projective;
  d.spec.p = detail::getLE<double>(in, off);
  d.spec.gamma = detail::getLE<double>(in, off);
  d.spec.dt = detail::getLE<double>(in, off);
  d.spec.seed = detail::getLE<std::uint64_t>(in, off);
  const auto nRec = detail::getLE<std::uint32_t>(in, off);
  const auto nSnap = detail::getLE<std::uint32_t>(in, off);
  d.records.resize(nRec);
  for (auto& r : d.records) {
    r.layer = detail::getLE<std::int32_t>(in, off);
    r.site = detail::getLE<std::int32_t>(in, off);
    r.outcome = detail::getLE<double>(in, off);
  }
  d.snapshotMarginals.assign(nSnap, std::vector<double>(d.spec.L));
  for (auto& snap : d.snapshotMarginals)
    for (double& v : snap)
      v = detail::getLE<double>(in, off);
  return d;
}

} // namespace chargesim

#endif // CHARGESIM_IO_HPP
