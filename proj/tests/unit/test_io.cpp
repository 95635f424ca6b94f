#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "stnet/io.hpp"

using namespace stnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "stnet_test_io";
  fs::create_directories(dir);
  return dir / name;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

}  // namespace

TEST_CASE("csv reading") {
  const auto p = scratch("t.csv");
  write(p, "a, b ,c\n1,2,3\n\n4,5,6\n");
  const auto t = io::read_csv(p);
  CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1].line == 4);
  CHECK(t.column("b", "t") == 1);
  CHECK_THROWS_WITH_AS(t.column("z", "t"), doctest::Contains("'z'"), InputError);
  CHECK_THROWS_AS(io::read_csv(scratch("missing.csv")), InputError);
}

TEST_CASE("number parsing and formatting") {
  CHECK(io::parse_double("2.5", "f", 1) == 2.5);
  CHECK_THROWS_WITH_AS(io::parse_double("2.5x", "f", 9), doctest::Contains("line 9"), InputError);
  CHECK(io::parse_int("-42", "f", 1) == -42);
  CHECK_THROWS_AS(io::parse_int("4.2", "f", 1), InputError);
  for (double v : {0.1, 1.0 / 3.0, 123456.789, 1e-300}) CHECK(std::stod(io::format_double(v)) == v);
}

TEST_CASE("iso dates") {
  CHECK(io::parse_iso_date("1970-01-01") == 0.0);
  CHECK(io::parse_iso_date("2018-05-10") == 17661.0);
  CHECK(io::parse_iso_date("2000-02-29") == 11016.0);
  CHECK(*io::parse_iso_date("2018-05-10T12:00") == doctest::Approx(17661.5));
  CHECK(*io::parse_iso_date("2018-05-10 06:00:00") == doctest::Approx(17661.25));
  CHECK_FALSE(io::parse_iso_date("2018-02-30").has_value());
  CHECK_FALSE(io::parse_iso_date("10/05/2018").has_value());
  CHECK_FALSE(io::parse_iso_date("2018-05-10T25:00").has_value());
  CHECK(io::quarter_label(17661.0) == "2018 Q2");
  CHECK(io::quarter_label(*io::parse_iso_date("2019-12-31")) == "2019 Q4");
  CHECK(io::iso_date(17661.7) == "2018-05-10");
}

TEST_CASE("event files") {
  const auto num = scratch("num.csv");
  write(num, "x,y,t\n1,2,3\n4,5,6\n");
  const auto e = io::read_events_csv(num, io::TimeFormat::number);
  REQUIRE(e.size() == 2);
  CHECK(e[1].raw_time == 6.0);
  CHECK(e[1].line == 3);

  const auto iso = scratch("iso.csv");
  write(iso, "t,x,y\n2018-05-10,1,2\n");
  CHECK(io::read_events_csv(iso, io::TimeFormat::iso)[0].raw_time == 17661.0);
  CHECK_THROWS_AS(io::read_events_csv(iso, io::TimeFormat::number), InputError);

  const auto bad = scratch("bad.csv");
  write(bad, "x,y,t\n1,2\n");
  CHECK_THROWS_WITH_AS(io::read_events_csv(bad, io::TimeFormat::number), doctest::Contains("line 2"), InputError);
  const auto empty = scratch("empty.csv");
  write(empty, "x,y,t\n");
  CHECK_THROWS_AS(io::read_events_csv(empty, io::TimeFormat::number), InputError);
}

TEST_CASE("ingestion projects, normalizes and filters") {
  const auto net = fixture::line(1000.0);
  const std::vector<io::RawEvent> raw{{{100, 5}, 10.0, 2}, {{500, 800}, 15.0, 3}, {{900, -1}, 20.0, 4}, {{0, 0}, 30.0, 5}};
  io::IngestReport rep;
  const auto ev = io::ingest_events(net, raw, 50.0, io::TimeBounds{10.0, 20.0}, rep);
  CHECK(rep.read == 4);
  CHECK(rep.rejected_cutoff == 1);
  CHECK(rep.rejected_window == 1);
  REQUIRE(ev.size() == 2);
  CHECK(ev[0].location.xy.x == doctest::Approx(100.0));
  CHECK(ev[0].location.xy.y == 0.0);
  CHECK(ev[0].t == 0.0);
  CHECK(ev[1].t == 1.0);
  CHECK(ev[1].raw_time == 20.0);

  const auto all = io::ingest_events(net, raw, 1e4, std::nullopt, rep);
  CHECK(all.size() == 4);
  CHECK(rep.bounds.lo == 10.0);
  CHECK(rep.bounds.hi == 30.0);
  CHECK(all[1].t == doctest::Approx(0.25));
  CHECK_THROWS_AS(io::ingest_events(net, raw, 50.0, io::TimeBounds{5.0, 5.0}, rep), InputError);
}

TEST_CASE("hashing") {
  CHECK(io::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(io::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(io::hex64(255) == "00000000000000ff");
  const auto p = scratch("h.txt");
  write(p, "a");
  CHECK(io::hash_file(p) == io::fnv1a("a"));
}

TEST_CASE("manifest round trip") {
  io::Manifest m;
  m.set("command", std::string("fit"));
  m.set("fit.seed", std::uint64_t{7});
  m.set("value", 0.1);
  m.set("status", std::string("running"));
  const auto p = scratch("manifest.txt");
  m.write(p);
  const auto back = io::Manifest::read(p);
  CHECK(back.entries() == m.entries());
  CHECK(back.require("value") == "0.1");
  CHECK_FALSE(back.get("nope").has_value());
  CHECK_THROWS_AS(back.require("nope"), InputError);

  // Status does not enter the content hash; other keys do.
  auto done = m;
  done.set("status", std::string("complete"));
  CHECK(done.content_hash() == m.content_hash());
  done.set("fit.seed", std::uint64_t{8});
  CHECK(done.content_hash() != m.content_hash());
}
