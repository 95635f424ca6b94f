#include "stnet/io.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

namespace stnet::io {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool is_volatile(const std::string& key) { return key == "status" || key == "wall_time_s"; }

}  // namespace

std::size_t CsvTable::column(std::string_view name, std::string_view context) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw InputError(fmt::format("{}: missing column '{}'", context, name));
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open {}", path.string()));
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (!have_header) {
      table.header = split(t);
      have_header = true;
      continue;
    }
    table.rows.push_back({line_no, split(t)});
  }
  if (!have_header) throw InputError(fmt::format("{}: empty file", path.string()));
  return table;
}

double parse_double(std::string_view s, std::string_view context, std::size_t line) {
  // from_chars for double is unavailable in older libstdc++ builds.
  std::string buf(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(buf.c_str(), &end);
  if (buf.empty() || end != buf.c_str() + buf.size() || errno == ERANGE) {
    throw InputError(fmt::format("{}: line {}: cannot parse number '{}'", context, line, s));
  }
  return v;
}

std::int64_t parse_int(std::string_view s, std::string_view context, std::size_t line) {
  std::int64_t v = 0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw InputError(fmt::format("{}: line {}: cannot parse integer '{}'", context, line, s));
  }
  return v;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

std::optional<double> parse_iso_date(std::string_view s) {
  using namespace std::chrono;
  s = trim(s);
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  if (std::from_chars(s.data(), s.data() + 4, y).ec != std::errc() ||
      std::from_chars(s.data() + 5, s.data() + 7, m).ec != std::errc() ||
      std::from_chars(s.data() + 8, s.data() + 10, d).ec != std::errc()) {
    return std::nullopt;
  }
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) return std::nullopt;
  double days = static_cast<double>(sys_days{ymd}.time_since_epoch().count());

  if (s.size() > 10) {
    if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
    auto rest = s.substr(11);
    unsigned hh = 0;
    unsigned mm = 0;
    double ss = 0.0;
    if (rest.size() < 5 || rest[2] != ':') return std::nullopt;
    if (std::from_chars(rest.data(), rest.data() + 2, hh).ec != std::errc() ||
        std::from_chars(rest.data() + 3, rest.data() + 5, mm).ec != std::errc()) {
      return std::nullopt;
    }
    if (rest.size() > 5) {
      if (rest[5] != ':') return std::nullopt;
      auto sec = rest.substr(6);
      while (!sec.empty() && (sec.back() == 'Z')) sec.remove_suffix(1);
      std::string buf(sec);
      char* end = nullptr;
      ss = std::strtod(buf.c_str(), &end);
      if (buf.empty() || end != buf.c_str() + buf.size()) return std::nullopt;
    }
    if (hh > 23 || mm > 59 || ss < 0.0 || ss >= 61.0) return std::nullopt;
    days += (hh * 3600.0 + mm * 60.0 + ss) / 86400.0;
  }
  return days;
}

std::string iso_date(double days_since_epoch) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{static_cast<int>(std::floor(days_since_epoch))}}};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()));
}

std::string quarter_label(double days_since_epoch) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{static_cast<int>(std::floor(days_since_epoch))}}};
  const unsigned q = (static_cast<unsigned>(ymd.month()) - 1) / 3 + 1;
  return fmt::format("{} Q{}", static_cast<int>(ymd.year()), q);
}

std::vector<RawEvent> read_events_csv(const std::filesystem::path& path, TimeFormat format) {
  const auto table = read_csv(path);
  const std::string ctx = path.string();
  const std::size_t cx = table.column("x", ctx);
  const std::size_t cy = table.column("y", ctx);
  const std::size_t ct = table.column("t", ctx);
  std::vector<RawEvent> out;
  out.reserve(table.rows.size());
  for (const auto& r : table.rows) {
    if (r.fields.size() != table.header.size()) {
      throw InputError(fmt::format("{}: line {} has {} fields, expected {}", ctx, r.line, r.fields.size(),
                                   table.header.size()));
    }
    RawEvent e;
    e.xy = {parse_double(r.fields[cx], ctx, r.line), parse_double(r.fields[cy], ctx, r.line)};
    e.line = r.line;
    if (format == TimeFormat::iso) {
      const auto d = parse_iso_date(r.fields[ct]);
      if (!d) throw InputError(fmt::format("{}: line {}: cannot parse date '{}'", ctx, r.line, r.fields[ct]));
      e.raw_time = *d;
    } else {
      e.raw_time = parse_double(r.fields[ct], ctx, r.line);
    }
    out.push_back(e);
  }
  if (out.empty()) throw InputError(fmt::format("{}: no events", ctx));
  return out;
}

std::vector<Event> ingest_events(const LinearNetwork& net, const std::vector<RawEvent>& raw, double cutoff_m,
                                 std::optional<TimeBounds> bounds, IngestReport& report) {
  report = {};
  report.read = raw.size();
  if (!bounds) {
    TimeBounds b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& e : raw) {
      b.lo = std::min(b.lo, e.raw_time);
      b.hi = std::max(b.hi, e.raw_time);
    }
    if (b.hi == b.lo) b.hi = b.lo + 1.0;
    bounds = b;
  }
  if (!(bounds->hi > bounds->lo)) throw InputError("time window upper bound must exceed lower bound");
  report.bounds = *bounds;

  std::vector<Event> out;
  out.reserve(raw.size());
  const double span = bounds->hi - bounds->lo;
  for (const auto& e : raw) {
    const double t = (e.raw_time - bounds->lo) / span;
    if (t < 0.0 || t > 1.0) {
      ++report.rejected_window;
      continue;
    }
    const auto p = project_event(net, e.xy, cutoff_m);
    if (!p) {
      ++report.rejected_cutoff;
      continue;
    }
    out.push_back({p->point, t, e.raw_time});
  }
  return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a(ss.str());
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::optional<std::string> Manifest::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string Manifest::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw InputError(fmt::format("manifest is missing '{}'", key));
  return *v;
}

std::uint64_t Manifest::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : entries_) {
    if (is_volatile(k) || k == "manifest_hash") continue;
    h = fnv1a(k, h);
    h = fnv1a("=", h);
    h = fnv1a(v, h);
    h = fnv1a("\n", h);
  }
  return h;
}

void Manifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError(fmt::format("cannot write {}", path.string()));
  for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
}

Manifest Manifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open {}", path.string()));
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    m.entries_[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

}  // namespace stnet::io
