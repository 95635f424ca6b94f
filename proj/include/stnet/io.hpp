/**
 * @file io.hpp
 * @brief CSV and manifest plumbing, timestamp parsing and event ingestion.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stnet/network.hpp"

namespace stnet::io {

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<CsvRow> rows;

  /// Column index by name; throws InputError naming `context` if absent.
  std::size_t column(std::string_view name, std::string_view context) const;
};

/// Reads a comma-separated file with a header row. Blank lines are skipped.
CsvTable read_csv(const std::filesystem::path& path);

double parse_double(std::string_view s, std::string_view context, std::size_t line);
std::int64_t parse_int(std::string_view s, std::string_view context, std::size_t line);

/// Shortest decimal text that round-trips the double.
std::string format_double(double v);

/// Days since 1970-01-01 for "YYYY-MM-DD" with an optional "THH:MM[:SS]" or
/// " HH:MM[:SS]" suffix.
std::optional<double> parse_iso_date(std::string_view s);

/// "YYYY Qn" for a day count produced by parse_iso_date.
std::string quarter_label(double days_since_epoch);
std::string iso_date(double days_since_epoch);

enum class TimeFormat { iso, number };

struct TimeBounds {
  double lo = 0.0;
  double hi = 1.0;
};

struct RawEvent {
  Vec2 xy;
  double raw_time = 0.0;
  std::size_t line = 0;
};

/// Reads an `x,y,t` events file.
std::vector<RawEvent> read_events_csv(const std::filesystem::path& path, TimeFormat format);

struct IngestReport {
  std::size_t read = 0;
  std::size_t rejected_cutoff = 0;
  std::size_t rejected_window = 0;
  TimeBounds bounds;
};

/// Projects events onto the network and normalizes times into [0, 1] with
/// the affine map fixed by `bounds` (defaults to the data min/max). Events
/// beyond the cutoff or outside the time window are dropped and counted.
std::vector<Event> ingest_events(const LinearNetwork& net, const std::vector<RawEvent>& raw,
                                 double cutoff_m, std::optional<TimeBounds> bounds,
                                 IngestReport& report);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

/// Ordered key=value document used for run manifests and config echoes.
class Manifest {
 public:
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  void set(const std::string& key, double value) { entries_[key] = format_double(value); }
  void set(const std::string& key, std::uint64_t value) { entries_[key] = std::to_string(value); }

  std::optional<std::string> get(const std::string& key) const;
  std::string require(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Hash over every entry except volatile ones (status, wall time).
  std::uint64_t content_hash() const;

  void write(const std::filesystem::path& path) const;
  static Manifest read(const std::filesystem::path& path);

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace stnet::io
