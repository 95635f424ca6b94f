#include "stnet/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "stnet/assess.hpp"
#include "stnet/kernels.hpp"
#include "stnet/sim.hpp"
#include "stnet/sumstats.hpp"

namespace stnet::cli {

namespace fs = std::filesystem;
using io::format_double;

namespace {

constexpr const char* kVersion = "1.0.0";

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw InputError(fmt::format("missing --{}", what));
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw InputError(fmt::format("{} file not found: {}", what, path));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw InputError(fmt::format("write failed for {}", path.string()));
}

std::string opt_double(std::optional<double> v) { return v ? format_double(*v) : "NA"; }

/// Output directory built under `<out>.partial` and renamed into place once
/// complete. The manifest is written when the run starts and again at the end.
class Staging {
 public:
  Staging(const std::string& out, bool overwrite) : final_(out), start_(std::chrono::steady_clock::now()) {
    if (out.empty()) throw InputError("missing --out");
    std::error_code ec;
    if (fs::exists(final_, ec) && !overwrite) {
      throw InputError(fmt::format("output directory already exists: {} (use --overwrite)", out));
    }
    partial_ = final_;
    partial_ += ".partial";
    fs::remove_all(partial_, ec);
    fs::create_directories(partial_);
  }

  io::Manifest& manifest() { return manifest_; }
  fs::path path(const std::string& name) const { return partial_ / name; }

  void begin() {
    manifest_.set("version", std::string(kVersion));
    manifest_.set("status", std::string("running"));
    manifest_.write(partial_ / "manifest.txt");
  }

  void record(const std::string& name) { manifest_.set("file." + name, io::hex64(io::hash_file(path(name)))); }

  std::string commit() {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    manifest_.set("status", std::string("complete"));
    manifest_.set("wall_time_s", secs);
    const std::string hash = io::hex64(manifest_.content_hash());
    manifest_.set("manifest_hash", hash);
    manifest_.write(partial_ / "manifest.txt");
    std::error_code ec;
    fs::remove_all(final_, ec);
    fs::rename(partial_, final_);
    committed_ = true;
    return hash;
  }

  void fail(const std::string& message) {
    if (committed_) return;
    try {
      manifest_.set("status", std::string("failed"));
      manifest_.set("error", message);
      manifest_.write(partial_ / "manifest.txt");
    } catch (...) {
    }
  }

 private:
  fs::path final_;
  fs::path partial_;
  io::Manifest manifest_;
  std::chrono::steady_clock::time_point start_;
  bool committed_ = false;
};

// Options shared by commands that ingest an events file.
struct EventOptions {
  std::string events;
  std::string time_format = "auto";
  std::string t_min;
  std::string t_max;
  double cutoff_m = 500.0;
};

void add_event_options(CLI::App& app, EventOptions& o, bool required) {
  auto* ev = app.add_option("--events", o.events, "Events CSV with columns x,y,t");
  if (required) ev->required();
  app.add_option("--time-format", o.time_format, "Time column format")
      ->check(CLI::IsMember({"auto", "iso", "number"}));
  app.add_option("--t-min", o.t_min, "Start of the study window (date or number); default data minimum");
  app.add_option("--t-max", o.t_max, "End of the study window; default data maximum");
  app.add_option("--cutoff-m", o.cutoff_m, "Maximum projection distance onto the network (m)")
      ->check(CLI::PositiveNumber);
}

double parse_time_value(const std::string& s, io::TimeFormat fmt, const char* flag) {
  if (fmt == io::TimeFormat::iso) {
    const auto d = io::parse_iso_date(s);
    if (!d) throw InputError(fmt::format("{}: cannot parse date '{}'", flag, s));
    return *d;
  }
  return io::parse_double(s, flag, 0);
}

struct Ingested {
  std::vector<Event> events;
  io::IngestReport report;
  io::TimeFormat format = io::TimeFormat::number;
};

Ingested ingest(const LinearNetwork& net, const EventOptions& o, const std::string& path) {
  require_file(path, "events");
  Ingested r;
  std::vector<io::RawEvent> raw;
  if (o.time_format == "iso") {
    r.format = io::TimeFormat::iso;
    raw = io::read_events_csv(path, r.format);
  } else if (o.time_format == "number") {
    raw = io::read_events_csv(path, r.format);
  } else {
    try {
      raw = io::read_events_csv(path, io::TimeFormat::number);
    } catch (const InputError&) {
      r.format = io::TimeFormat::iso;
      raw = io::read_events_csv(path, r.format);
    }
  }
  if (raw.empty()) throw InputError(fmt::format("{}: no events", path));

  std::optional<io::TimeBounds> bounds;
  if (!o.t_min.empty() || !o.t_max.empty()) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& e : raw) {
      lo = std::min(lo, e.raw_time);
      hi = std::max(hi, e.raw_time);
    }
    if (!o.t_min.empty()) lo = parse_time_value(o.t_min, r.format, "--t-min");
    if (!o.t_max.empty()) hi = parse_time_value(o.t_max, r.format, "--t-max");
    bounds = io::TimeBounds{lo, hi};
  }
  r.events = io::ingest_events(net, raw, o.cutoff_m, bounds, r.report);
  if (r.events.empty()) {
    throw InputError(fmt::format("{}: no events left after projection and time filtering", path));
  }
  return r;
}

void record_ingest(io::Manifest& m, const std::string& prefix, const Ingested& in) {
  m.set(prefix + "time_format", std::string(in.format == io::TimeFormat::iso ? "iso" : "number"));
  m.set(prefix + "t_lo", in.report.bounds.lo);
  m.set(prefix + "t_hi", in.report.bounds.hi);
  m.set(prefix + "n_read", static_cast<std::uint64_t>(in.report.read));
  m.set(prefix + "n_events", static_cast<std::uint64_t>(in.events.size()));
  m.set(prefix + "rejected_cutoff", static_cast<std::uint64_t>(in.report.rejected_cutoff));
  m.set(prefix + "rejected_window", static_cast<std::uint64_t>(in.report.rejected_window));
}

LinearNetwork load_network(const std::string& path) {
  require_file(path, "network");
  return read_network_csv(path);
}

/// Every option value, defaults included, in the same key=value form that
/// --config accepts.
void echo_options(const CLI::App& app, io::Manifest& m) {
  std::istringstream in(app.config_to_str(true, false));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (line.empty() || line.front() == '#' || line.front() == '[' || eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      s.erase(0, s.find_first_not_of(' '));
      s.erase(s.find_last_not_of(' ') + 1);
    };
    trim(key);
    trim(value);
    if (key == "out" || key == "overwrite") continue;
    m.set(key, value);
  }
}

void set_fit_config(io::Manifest& m, const FitConfig& c) {
  m.set("fit.max_clusters", static_cast<std::uint64_t>(c.max_clusters));
  m.set("fit.iterations", static_cast<std::uint64_t>(c.iterations));
  m.set("fit.burnin_fraction", c.burnin_fraction);
  m.set("fit.thin", static_cast<std::uint64_t>(c.thin));
  m.set("fit.step_log_ws", c.step_log_ws);
  m.set("fit.step_log_wt", c.step_log_wt);
  m.set("fit.concentration_shape", c.concentration_shape);
  m.set("fit.concentration_rate", c.concentration_rate);
  m.set("fit.ws_min", c.ws_min);
  m.set("fit.ws_max", c.ws_max);
  m.set("fit.wt_max", c.wt_max);
  m.set("fit.init_ws", c.init_ws);
  m.set("fit.init_wt", c.init_wt);
  m.set("fit.seed", c.seed);
  m.set("fit.pixel_rows", static_cast<std::uint64_t>(c.pixel_rows));
  m.set("fit.pixel_cols", static_cast<std::uint64_t>(c.pixel_cols));
  m.set("fit.mc_points", static_cast<std::uint64_t>(c.mc_points));
  m.set("fit.weight_mode", to_string(c.weight_mode));
}

double manifest_double(const io::Manifest& m, const std::string& key) {
  return io::parse_double(m.require(key), "manifest", 0);
}

std::size_t manifest_size(const io::Manifest& m, const std::string& key) {
  const auto v = io::parse_int(m.require(key), "manifest", 0);
  if (v < 0) throw InputError(fmt::format("manifest key '{}' must be non-negative", key));
  return static_cast<std::size_t>(v);
}

FitConfig fit_config_from(const io::Manifest& m) {
  FitConfig c;
  c.max_clusters = manifest_size(m, "fit.max_clusters");
  c.iterations = manifest_size(m, "fit.iterations");
  c.burnin_fraction = manifest_double(m, "fit.burnin_fraction");
  c.thin = manifest_size(m, "fit.thin");
  c.step_log_ws = manifest_double(m, "fit.step_log_ws");
  c.step_log_wt = manifest_double(m, "fit.step_log_wt");
  c.concentration_shape = manifest_double(m, "fit.concentration_shape");
  c.concentration_rate = manifest_double(m, "fit.concentration_rate");
  c.ws_min = manifest_double(m, "fit.ws_min");
  c.ws_max = manifest_double(m, "fit.ws_max");
  c.wt_max = manifest_double(m, "fit.wt_max");
  c.init_ws = manifest_double(m, "fit.init_ws");
  c.init_wt = manifest_double(m, "fit.init_wt");
  c.seed = static_cast<std::uint64_t>(io::parse_int(m.require("fit.seed"), "manifest", 0));
  c.pixel_rows = manifest_size(m, "fit.pixel_rows");
  c.pixel_cols = manifest_size(m, "fit.pixel_cols");
  c.mc_points = manifest_size(m, "fit.mc_points");
  c.weight_mode = weight_mode_from_string(m.require("fit.weight_mode"));
  return c;
}

std::size_t field_index(const io::CsvTable& t, std::string_view name, const fs::path& path) {
  return t.column(name, path.string());
}

io::CsvTable read_nonempty(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw InputError(fmt::format("run file not found: {}", path.string()));
  auto t = io::read_csv(path);
  if (t.rows.empty()) throw InputError(fmt::format("run file is empty: {}", path.string()));
  for (const auto& r : t.rows) {
    if (r.fields.size() != t.header.size()) {
      throw InputError(fmt::format("{}: line {} has {} fields, expected {}", path.string(), r.line, r.fields.size(),
                                   t.header.size()));
    }
  }
  return t;
}

std::size_t to_index(std::string_view s, const fs::path& path, std::size_t line) {
  const auto v = io::parse_int(s, path.string(), line);
  if (v < 0) throw InputError(fmt::format("{}: line {}: negative index", path.string(), line));
  return static_cast<std::size_t>(v);
}

std::size_t segment_of(const LinearNetwork& net, std::string_view s, const fs::path& path, std::size_t line) {
  const auto idx = net.segment_index(io::parse_int(s, path.string(), line));
  if (!idx) throw ConsistencyError(fmt::format("{}: line {}: segment {} is not in the network", path.string(), line, s));
  return *idx;
}

/// False when help was requested (and printed).
bool parse_args(CLI::App& app, const std::vector<std::string>& args, std::ostream& out) {
  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return false;
  }
  return true;
}

// --- fit ---------------------------------------------------------------------

int cmd_fit(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app{"Fit the space-time mixture model by MCMC", "stnet fit"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "key=value configuration file");
  std::string network;
  std::string outdir;
  bool overwrite = false;
  EventOptions ev;
  FitConfig cfg;
  std::string weight_mode = "renormalized";
  std::size_t pixels = 50;
  app.add_option("--network", network, "Network CSV (seg_id,x1,y1,x2,y2)")->required();
  add_event_options(app, ev, true);
  app.add_option("--out", outdir, "Output directory")->required();
  app.add_flag("--overwrite", overwrite, "Replace an existing output directory");
  app.add_option("--seed", cfg.seed, "Master seed");
  app.add_option("--iters", cfg.iterations, "MCMC sweeps")->check(CLI::PositiveNumber);
  app.add_option("--max-clusters", cfg.max_clusters, "Truncation level")->check(CLI::Range(2, 100000));
  app.add_option("--burnin", cfg.burnin_fraction, "Burn-in as a fraction of the sweeps")->check(CLI::Range(0.0, 0.999));
  app.add_option("--thin", cfg.thin, "Keep every k-th sweep after burn-in")->check(CLI::PositiveNumber);
  app.add_option("--threads", cfg.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--weight-mode", weight_mode, "Mixture weights in the likelihood")
      ->check(CLI::IsMember({"renormalized", "raw"}));
  app.add_option("--concentration-shape", cfg.concentration_shape, "Gamma prior shape on b_u")
      ->check(CLI::PositiveNumber);
  app.add_option("--concentration-rate", cfg.concentration_rate, "Gamma prior rate on b_u")
      ->check(CLI::PositiveNumber);
  app.add_option("--step-ws", cfg.step_log_ws, "Random-walk sd for log w_s")->check(CLI::PositiveNumber);
  app.add_option("--step-wt", cfg.step_log_wt, "Random-walk sd for log w_t")->check(CLI::PositiveNumber);
  app.add_option("--ws-min", cfg.ws_min, "Lower bound of the w_s prior (m)");
  app.add_option("--ws-max", cfg.ws_max, "Upper bound of the w_s prior (m)");
  app.add_option("--wt-max", cfg.wt_max, "Upper bound of the w_t prior");
  app.add_option("--init-ws", cfg.init_ws, "Initial w_s (m)");
  app.add_option("--init-wt", cfg.init_wt, "Initial w_t");
  app.add_option("--pixels", pixels, "Pixels per side for candidate centers")->check(CLI::PositiveNumber);
  app.add_option("--mc-points", cfg.mc_points, "Monte Carlo points for the kernel correction")
      ->check(CLI::PositiveNumber);
  if (!parse_args(app, args, out)) return kOk;

  cfg.weight_mode = weight_mode_from_string(weight_mode);
  cfg.pixel_rows = cfg.pixel_cols = pixels;
  cfg.validate();

  const LinearNetwork net = load_network(network);
  const Ingested in = ingest(net, ev, ev.events);

  Staging stage(outdir, overwrite);
  auto& m = stage.manifest();
  m.set("command", std::string("fit"));
  echo_options(app, m);
  m.set("network_hash", io::hex64(io::hash_file(network)));
  m.set("events_hash", io::hex64(io::hash_file(ev.events)));
  record_ingest(m, "", in);
  set_fit_config(m, cfg);
  m.set("chain_seed", chain_seed(cfg));
  m.set("mc_seed", integration_seed(cfg));
  stage.begin();
  try {
    out << fmt::format("fit: {} events ({} beyond cutoff, {} outside window), {} sweeps\n", in.events.size(),
                       in.report.rejected_cutoff, in.report.rejected_window, cfg.iterations);
    const PosteriorRun run = run_mcmc(in.events, net, cfg);
    write_run_files(stage.path(""), net, run, in.events);
    for (const char* f : {"samples.csv", "centers.csv", "memberships.csv", "weights.csv", "events.csv"}) stage.record(f);
    m.set("n_draws", static_cast<std::uint64_t>(run.draws.size()));
    m.set("accept.theta", run.acceptance.theta_rate());
    m.set("accept.centers", run.acceptance.centers_rate());
    m.set("degenerate_memberships", static_cast<std::uint64_t>(run.acceptance.degenerate_memberships));
    const std::string hash = stage.commit();
    out << fmt::format("fit: {} draws written to {} (manifest {})\n", run.draws.size(), outdir, hash);
  } catch (const std::exception& e) {
    stage.fail(e.what());
    throw;
  }
  return kOk;
}

// --- run directory loading shared by downstream commands --------------------

struct LoadedRun {
  LinearNetwork net;
  RunData data;
};

LoadedRun load_run(const std::string& run_dir, const std::string& network) {
  if (run_dir.empty()) throw InputError("missing --run");
  if (!fs::is_directory(run_dir)) throw InputError(fmt::format("run directory not found: {}", run_dir));
  LinearNetwork net = load_network(network);
  RunData data = read_run_dir(run_dir, net, network);
  return {std::move(net), std::move(data)};
}

void record_run(io::Manifest& m, const std::string& run_dir, const RunData& d) {
  m.set("run", run_dir);
  m.set("run_manifest_hash", d.manifest.require("manifest_hash"));
  m.set("network_hash", d.manifest.require("network_hash"));
}

// --- postprocess --------------------------------------------------------------

int cmd_postprocess(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app{"Dahl partition and cluster summary of a fitted run", "stnet postprocess"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "key=value configuration file");
  std::string run_dir;
  std::string network;
  std::string outdir;
  bool overwrite = false;
  app.add_option("--run", run_dir, "Directory written by `stnet fit`")->required();
  app.add_option("--network", network, "Network CSV the run was fitted on")->required();
  app.add_option("--out", outdir, "Output directory")->required();
  app.add_flag("--overwrite", overwrite, "Replace an existing output directory");
  if (!parse_args(app, args, out)) return kOk;

  const LoadedRun lr = load_run(run_dir, network);
  const auto& run = lr.data.run;
  const bool iso = lr.data.manifest.require("time_format") == "iso";
  const double t_lo = manifest_double(lr.data.manifest, "t_lo");
  const double t_hi = manifest_double(lr.data.manifest, "t_hi");
  auto quarter = [&](double t) { return iso ? io::quarter_label(t_lo + t * (t_hi - t_lo)) : std::string("NA"); };

  Staging stage(outdir, overwrite);
  auto& m = stage.manifest();
  m.set("command", std::string("postprocess"));
  echo_options(app, m);
  record_run(m, run_dir, lr.data);
  stage.begin();
  try {
    const DahlResult dahl = dahl_select(run);
    const auto& state = run.draws[dahl.index].state;
    const auto sizes = state.cluster_sizes();

    std::string clusters = "cluster,seg_id,offset,x,y,t,size,quarter\n";
    std::size_t nonempty = 0;
    for (std::size_t j = 0; j < state.cluster_count(); ++j) {
      if (sizes[j] == 0) continue;
      ++nonempty;
      const auto& c = state.centers[j];
      fmt::format_to(std::back_inserter(clusters), "{},{},{},{},{},{},{},{}\n", j,
                     lr.net.segments()[c.location.segment].id, format_double(c.location.offset),
                     format_double(c.location.xy.x), format_double(c.location.xy.y), format_double(c.t), sizes[j],
                     quarter(c.t));
    }
    write_text(stage.path("clusters.csv"), clusters);

    std::string partition = "event_id,cluster,quarter\n";
    for (std::size_t i = 0; i < dahl.partition.size(); ++i) {
      fmt::format_to(std::back_inserter(partition), "{},{},{}\n", i, dahl.partition[i],
                     quarter(lr.data.events[i].t));
    }
    write_text(stage.path("partition.csv"), partition);
    stage.record("clusters.csv");
    stage.record("partition.csv");

    m.set("dahl.draw", static_cast<std::uint64_t>(dahl.index));
    m.set("dahl.iteration", static_cast<std::uint64_t>(run.draws[dahl.index].iteration));
    m.set("dahl.loss", dahl.loss);
    m.set("dahl.clusters", static_cast<std::uint64_t>(nonempty));
    stage.commit();
    out << fmt::format("postprocess: draw at iteration {} selected, {} clusters, loss {}\n",
                       run.draws[dahl.index].iteration, nonempty, format_double(dahl.loss));
  } catch (const std::exception& e) {
    stage.fail(e.what());
    throw;
  }
  return kOk;
}

// --- assess -------------------------------------------------------------------

int cmd_assess(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app{"Compare fitted and observed event proportions on space-time cubes", "stnet assess"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "key=value configuration file");
  std::string run_dir;
  std::string network;
  std::string outdir;
  bool overwrite = false;
  bool average = false;
  GridSpec spec;
  app.add_option("--run", run_dir, "Directory written by `stnet fit`")->required();
  app.add_option("--network", network, "Network CSV the run was fitted on")->required();
  app.add_option("--out", outdir, "Output directory")->required();
  app.add_flag("--overwrite", overwrite, "Replace an existing output directory");
  app.add_flag("--average", average, "Average proportions over all draws instead of the plug-in");
  app.add_option("--sub-x", spec.sub_x, "Subgrid columns")->check(CLI::PositiveNumber);
  app.add_option("--sub-y", spec.sub_y, "Subgrid rows")->check(CLI::PositiveNumber);
  app.add_option("--sub-t", spec.sub_t, "Subgrid time slabs")->check(CLI::PositiveNumber);
  app.add_option("--coarse-x", spec.coarse_x, "Coarse grid columns")->check(CLI::PositiveNumber);
  app.add_option("--coarse-y", spec.coarse_y, "Coarse grid rows")->check(CLI::PositiveNumber);
  app.add_option("--coarse-t", spec.coarse_t, "Coarse grid time slabs")->check(CLI::PositiveNumber);
  if (!parse_args(app, args, out)) return kOk;
  spec.validate();

  const LoadedRun lr = load_run(run_dir, network);
  const auto& run = lr.data.run;

  Staging stage(outdir, overwrite);
  auto& m = stage.manifest();
  m.set("command", std::string("assess"));
  echo_options(app, m);
  record_run(m, run_dir, lr.data);
  stage.begin();
  try {
    const SpatialKernel kernel = SpatialKernel::monte_carlo(lr.net, {run.config.mc_points, run.mc_seed});
    const AssessmentGrid grid(lr.net, spec);
    std::vector<double> theory;
    if (average) {
      theory = theoretical_props_averaged(run, kernel, grid);
    } else {
      const DahlResult dahl = dahl_select(run);
      m.set("dahl.draw", static_cast<std::uint64_t>(dahl.index));
      theory = theoretical_props(plug_in_mixture(run, dahl.index), kernel, grid);
    }
    const auto observed = observed_props(lr.data.events, grid);
    const CellTable table = make_cell_table(grid, theory, observed);
    const ScatterSummary s = assess_scatter(table);

    std::string csv = "cell_ix,cell_iy,cell_it,p_theory,p_obs\n";
    for (const auto& r : table.rows) {
      fmt::format_to(std::back_inserter(csv), "{},{},{},{},{}\n", r.ix, r.iy, r.it, format_double(r.p_theory),
                     format_double(r.p_obs));
    }
    write_text(stage.path("assess.csv"), csv);
    stage.record("assess.csv");

    double st = 0.0;
    double so = 0.0;
    for (double v : theory) st += v;
    for (double v : observed) so += v;
    m.set("summary.correlation", opt_double(s.correlation));
    m.set("summary.rmse", s.rmse);
    m.set("summary.cells", static_cast<std::uint64_t>(s.cells));
    m.set("summary.sum_theory", st);
    m.set("summary.sum_observed", so);
    stage.commit();
    out << fmt::format("assess: {} cells, correlation {}, rmse {}\n", s.cells, opt_double(s.correlation),
                       format_double(s.rmse));
  } catch (const std::exception& e) {
    stage.fail(e.what());
    throw;
  }
  return kOk;
}

// --- kfun -------------------------------------------------------------------

std::vector<double> linear_grid(double max, std::size_t steps) {
  std::vector<double> g(steps);
  for (std::size_t k = 0; k < steps; ++k) g[k] = max * static_cast<double>(k + 1) / static_cast<double>(steps);
  return g;
}

double default_r_max(const LinearNetwork& net) {
  const Window w = grid_window(net);
  return 0.25 * std::min(w.width(), w.height());
}

int cmd_kfun(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app{"Space-time K-function with Poisson envelopes", "stnet kfun"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "key=value configuration file");
  std::string network;
  std::string outdir;
  bool overwrite = false;
  EventOptions ev;
  std::uint64_t seed = 1;
  std::size_t envelopes = 99;
  double r_max = 0.0;
  std::size_t r_steps = 20;
  double t_max = 0.25;
  std::size_t t_steps = 10;
  std::string intensity = "kernel";
  std::size_t mc_points = 1000;
  std::size_t threads = 1;
  app.add_option("--network", network, "Network CSV")->required();
  add_event_options(app, ev, true);
  app.add_option("--out", outdir, "Output directory")->required();
  app.add_flag("--overwrite", overwrite, "Replace an existing output directory");
  app.add_option("--seed", seed, "Seed for the null simulations");
  app.add_option("--mmax-envelopes", envelopes, "Number of Poisson simulations (49 or 99 are usual)")
      ->check(CLI::PositiveNumber);
  app.add_option("--r-max", r_max, "Largest network distance (m); 0 picks a quarter of the shorter window side")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--r-steps", r_steps, "Distance grid size")->check(CLI::PositiveNumber);
  app.add_option("--lag-max", t_max, "Largest time lag (normalized)")->check(CLI::PositiveNumber);
  app.add_option("--lag-steps", t_steps, "Time-lag grid size")->check(CLI::PositiveNumber);
  app.add_option("--intensity", intensity, "First-order intensity estimate")
      ->check(CLI::IsMember({"kernel", "homogeneous"}));
  app.add_option("--mc-points", mc_points, "Monte Carlo points for the kernel correction")
      ->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  if (!parse_args(app, args, out)) return kOk;

  const LinearNetwork net = load_network(network);
  const Ingested in = ingest(net, ev, ev.events);
  if (r_max == 0.0) r_max = default_r_max(net);

  Staging stage(outdir, overwrite);
  auto& m = stage.manifest();
  m.set("command", std::string("kfun"));
  echo_options(app, m);
  m.set("network_hash", io::hex64(io::hash_file(network)));
  m.set("events_hash", io::hex64(io::hash_file(ev.events)));
  record_ingest(m, "", in);
  m.set("r_max_used", r_max);
  stage.begin();
  try {
    const SpatialKernel kernel = SpatialKernel::monte_carlo(net, {mc_points, derive_seed(seed, 1)});
    EnvelopeConfig cfg;
    cfg.simulations = envelopes;
    cfg.r_grid = linear_grid(r_max, r_steps);
    cfg.t_grid = linear_grid(t_max, t_steps);
    cfg.intensity = intensity == "kernel" ? IntensityMode::kernel : IntensityMode::homogeneous;
    cfg.kernel = &kernel;
    cfg.threads = threads;
    Rng rng(derive_seed(seed, 0));
    const EnvelopeResult res = envelope_pvalue(net, in.events, cfg, rng);

    std::string kcsv = "r,t,K\n";
    std::string ecsv = "r,t,K_lo,K_hi,K_obs\n";
    for (std::size_t ir = 0; ir < cfg.r_grid.size(); ++ir) {
      for (std::size_t it = 0; it < cfg.t_grid.size(); ++it) {
        const std::size_t k = ir * cfg.t_grid.size() + it;
        const std::string r = format_double(cfg.r_grid[ir]);
        const std::string t = format_double(cfg.t_grid[it]);
        const std::string obs = format_double(res.observed.values[k]);
        fmt::format_to(std::back_inserter(kcsv), "{},{},{}\n", r, t, obs);
        fmt::format_to(std::back_inserter(ecsv), "{},{},{},{},{}\n", r, t, format_double(res.lower[k]),
                       format_double(res.upper[k]), obs);
      }
    }
    write_text(stage.path("kfun.csv"), kcsv);
    write_text(stage.path("envelopes.csv"), ecsv);
    stage.record("kfun.csv");
    stage.record("envelopes.csv");
    m.set("summary.t_observed", res.t_observed);
    m.set("summary.p_value", res.p_value);
    m.set("summary.excluded_nodes", static_cast<std::uint64_t>(res.excluded_nodes));
    stage.commit();
    out << fmt::format("kfun: T = {}, p = {} ({} simulations, {} nodes excluded)\n", format_double(res.t_observed),
                       format_double(res.p_value), envelopes, res.excluded_nodes);
  } catch (const std::exception& e) {
    stage.fail(e.what());
    throw;
  }
  return kOk;
}

// --- pcf --------------------------------------------------------------------

int cmd_pcf(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app{"Multitype pair correlation between two event patterns", "stnet pcf"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "key=value configuration file");
  std::string network;
  std::string outdir;
  std::string events2;
  bool overwrite = false;
  EventOptions ev;
  double r_max = 0.0;
  std::size_t r_steps = 50;
  double bandwidth = 0.0;
  std::string intensity = "kernel";
  std::size_t mc_points = 1000;
  std::uint64_t seed = 1;
  app.add_option("--network", network, "Network CSV")->required();
  add_event_options(app, ev, true);
  app.add_option("--events2", events2, "Second events CSV")->required();
  app.add_option("--out", outdir, "Output directory")->required();
  app.add_flag("--overwrite", overwrite, "Replace an existing output directory");
  app.add_option("--r-max", r_max, "Largest network distance (m); 0 picks a quarter of the shorter window side")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--r-steps", r_steps, "Distance grid size")->check(CLI::PositiveNumber);
  app.add_option("--bandwidth", bandwidth, "Smoothing bandwidth in r (m); 0 applies Scott's rule to the pair distances")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--intensity", intensity, "First-order intensity estimate")
      ->check(CLI::IsMember({"kernel", "homogeneous"}));
  app.add_option("--mc-points", mc_points, "Monte Carlo points for the kernel correction")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Seed for the kernel correction points");
  if (!parse_args(app, args, out)) return kOk;

  const LinearNetwork net = load_network(network);
  const Ingested a = ingest(net, ev, ev.events);
  const Ingested b = ingest(net, ev, events2);
  if (r_max == 0.0) r_max = default_r_max(net);

  std::vector<NetPoint> p1;
  std::vector<NetPoint> p2;
  for (const auto& e : a.events) p1.push_back(e.location);
  for (const auto& e : b.events) p2.push_back(e.location);
  if (bandwidth == 0.0) bandwidth = pcf_bandwidth(net, p1, p2, r_max);

  Staging stage(outdir, overwrite);
  auto& m = stage.manifest();
  m.set("command", std::string("pcf"));
  echo_options(app, m);
  m.set("network_hash", io::hex64(io::hash_file(network)));
  m.set("events_hash", io::hex64(io::hash_file(ev.events)));
  m.set("events2_hash", io::hex64(io::hash_file(events2)));
  record_ingest(m, "first.", a);
  record_ingest(m, "second.", b);
  m.set("r_max_used", r_max);
  m.set("bandwidth_used", bandwidth);
  stage.begin();
  try {
    std::vector<double> l1;
    std::vector<double> l2;
    if (intensity == "kernel") {
      const SpatialKernel kernel = SpatialKernel::monte_carlo(net, {mc_points, derive_seed(seed, 1)});
      std::vector<Vec2> xy1;
      std::vector<Vec2> xy2;
      for (const auto& p : p1) xy1.push_back(p.xy);
      for (const auto& p : p2) xy2.push_back(p.xy);
      l1 = kernel_spatial_intensity(p1, kernel, scott_bandwidth(xy1));
      l2 = kernel_spatial_intensity(p2, kernel, scott_bandwidth(xy2));
    } else {
      l1.assign(p1.size(), static_cast<double>(p1.size()) / net.total_length());
      l2.assign(p2.size(), static_cast<double>(p2.size()) / net.total_length());
    }
    const auto r_grid = linear_grid(r_max, r_steps);
    const auto g = multitype_pcf(net, p1, l1, p2, l2, r_grid, bandwidth);
    std::string csv = "r,g\n";
    for (std::size_t k = 0; k < r_grid.size(); ++k) {
      fmt::format_to(std::back_inserter(csv), "{},{}\n", format_double(r_grid[k]), format_double(g[k]));
    }
    write_text(stage.path("pcf.csv"), csv);
    stage.record("pcf.csv");
    stage.commit();
    out << fmt::format("pcf: {} x {} points, bandwidth {} m\n", p1.size(), p2.size(), format_double(bandwidth));
  } catch (const std::exception& e) {
    stage.fail(e.what());
    throw;
  }
  return kOk;
}

// --- simulate ---------------------------------------------------------------

std::string network_csv(const std::vector<SegmentRecord>& rows) {
  std::string s = "seg_id,x1,y1,x2,y2\n";
  for (const auto& r : rows) {
    fmt::format_to(std::back_inserter(s), "{},{},{},{},{}\n", r.id, format_double(r.from.x), format_double(r.from.y),
                   format_double(r.to.x), format_double(r.to.y));
  }
  return s;
}

int cmd_simulate(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app{"Simulate Poisson or clustered fixtures on a network", "stnet simulate"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "key=value configuration file");
  std::string network;
  std::string outdir;
  bool overwrite = false;
  std::size_t grid_blocks = 0;
  double spacing = 100.0;
  std::string model = "mixture";
  std::size_t n = 500;
  std::size_t clusters = 3;
  double ws = 150.0;
  double wt = 0.1;
  double min_sep = 0.0;
  bool untruncated = false;
  std::uint64_t seed = 1;
  app.add_option("--network", network, "Network CSV; omit together with --grid to generate one");
  app.add_option("--grid", grid_blocks, "Generate a square grid network with this many blocks per side");
  app.add_option("--spacing", spacing, "Street length of the generated grid (m)")->check(CLI::PositiveNumber);
  app.add_option("--out", outdir, "Output directory")->required();
  app.add_flag("--overwrite", overwrite, "Replace an existing output directory");
  app.add_option("--model", model, "Point process")->check(CLI::IsMember({"poisson", "mixture"}));
  app.add_option("--n", n, "Number of events")->check(CLI::PositiveNumber);
  app.add_option("--clusters", clusters, "Mixture components")->check(CLI::PositiveNumber);
  app.add_option("--ws", ws, "Spatial bandwidth of the mixture (m)")->check(CLI::PositiveNumber);
  app.add_option("--wt", wt, "Temporal bandwidth of the mixture")->check(CLI::PositiveNumber);
  app.add_option("--min-separation", min_sep, "Minimum planar distance between centers (m); 0 means 3 * ws")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--untruncated", untruncated, "Keep Gaussian times outside [0, 1]");
  app.add_option("--seed", seed, "Seed");
  if (!parse_args(app, args, out)) return kOk;

  if (network.empty() == (grid_blocks == 0)) throw InputError("give exactly one of --network and --grid");
  std::vector<SegmentRecord> generated;
  std::optional<LinearNetwork> net;
  if (grid_blocks > 0) {
    generated = grid_network(grid_blocks, spacing);
    net = LinearNetwork::from_segments(generated);
  } else {
    net = load_network(network);
  }
  if (min_sep == 0.0) min_sep = 3.0 * ws;

  Staging stage(outdir, overwrite);
  auto& m = stage.manifest();
  m.set("command", std::string("simulate"));
  echo_options(app, m);
  if (!network.empty()) m.set("network_hash", io::hex64(io::hash_file(network)));
  stage.begin();
  try {
    if (!generated.empty()) {
      write_text(stage.path("network.csv"), network_csv(generated));
      stage.record("network.csv");
      m.set("network_hash", io::hex64(io::hash_file(stage.path("network.csv"))));
    }
    Rng rng(derive_seed(seed, 0));
    std::vector<Event> events;
    std::string truth;
    if (model == "poisson") {
      events = sim_poisson(*net, n, rng);
    } else {
      MixtureParams params;
      params.w_s = ws;
      params.w_t = wt;
      params.truncate_time = !untruncated;
      std::uniform_real_distribution<double> mid(0.2, 0.8);
      const UniformSampler draw(*net);
      for (std::size_t tries = 0; params.centers.size() < clusters; ++tries) {
        if (tries >= 10000) {
          throw InputError(fmt::format("cannot place {} centers {} m apart on this network", clusters, min_sep));
        }
        const NetPoint c = draw(rng);
        const bool clear = std::all_of(params.centers.begin(), params.centers.end(),
                                       [&](const NetPoint& o) { return euclidean(o.xy, c.xy) >= min_sep; });
        if (clear) params.centers.push_back(c);
      }
      for (std::size_t j = 0; j < clusters; ++j) {
        params.center_times.push_back(mid(rng));
        params.weights.push_back(1.0);
      }
      const SyntheticTruth st = sim_mixture(*net, params, n, rng);
      events = st.events;
      truth = "event_id,cluster,t\n";
      for (std::size_t i = 0; i < st.events.size(); ++i) {
        fmt::format_to(std::back_inserter(truth), "{},{},{}\n", i, st.membership[i], format_double(st.events[i].t));
      }
      std::string centers = "cluster,seg_id,offset,x,y,t,weight,outside_mass\n";
      for (std::size_t j = 0; j < clusters; ++j) {
        const auto& c = params.centers[j];
        fmt::format_to(std::back_inserter(centers), "{},{},{},{},{},{},{},{}\n", j, net->segments()[c.segment].id,
                       format_double(c.offset), format_double(c.xy.x), format_double(c.xy.y),
                       format_double(params.center_times[j]), format_double(1.0 / static_cast<double>(clusters)),
                       format_double(st.outside_mass[j]));
      }
      write_text(stage.path("truth.csv"), truth);
      write_text(stage.path("truth_centers.csv"), centers);
      stage.record("truth.csv");
      stage.record("truth_centers.csv");
    }
    std::string ecsv = "x,y,t\n";
    for (const auto& e : events) {
      fmt::format_to(std::back_inserter(ecsv), "{},{},{}\n", format_double(e.location.xy.x),
                     format_double(e.location.xy.y), format_double(e.t));
    }
    write_text(stage.path("events.csv"), ecsv);
    stage.record("events.csv");
    m.set("n_events", static_cast<std::uint64_t>(events.size()));
    stage.commit();
    out << fmt::format("simulate: {} {} events written to {}\n", events.size(), model, outdir);
  } catch (const std::exception& e) {
    stage.fail(e.what());
    throw;
  }
  return kOk;
}

// --- amenity ------------------------------------------------------------------

int cmd_amenity(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app{"Amenity mix around the centers of the summary partition", "stnet amenity"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "key=value configuration file");
  std::string run_dir;
  std::string network;
  std::string amenities;
  std::string outdir;
  bool overwrite = false;
  double radius = 0.0;
  app.add_option("--run", run_dir, "Directory written by `stnet fit`")->required();
  app.add_option("--network", network, "Network CSV the run was fitted on")->required();
  app.add_option("--amenities", amenities, "Amenity CSV with columns x,y,category")->required();
  app.add_option("--out", outdir, "Output directory")->required();
  app.add_flag("--overwrite", overwrite, "Replace an existing output directory");
  app.add_option("--radius", radius, "Search radius (m); 0 uses twice the posterior mean w_s")
      ->check(CLI::NonNegativeNumber);
  if (!parse_args(app, args, out)) return kOk;

  require_file(amenities, "amenities");
  const LoadedRun lr = load_run(run_dir, network);
  const auto& run = lr.data.run;
  const auto items = read_amenities_csv(amenities);
  if (radius == 0.0) {
    double ws = 0.0;
    for (const auto& d : run.draws) ws += d.state.w_s;
    radius = 2.0 * ws / static_cast<double>(run.draws.size());
  }

  Staging stage(outdir, overwrite);
  auto& m = stage.manifest();
  m.set("command", std::string("amenity"));
  echo_options(app, m);
  record_run(m, run_dir, lr.data);
  m.set("amenities_hash", io::hex64(io::hash_file(amenities)));
  m.set("radius_used", radius);
  stage.begin();
  try {
    const DahlResult dahl = dahl_select(run);
    const auto& state = run.draws[dahl.index].state;
    const auto sizes = state.cluster_sizes();
    std::vector<std::size_t> ids;
    std::vector<Vec2> centers;
    for (std::size_t j = 0; j < state.cluster_count(); ++j) {
      if (sizes[j] == 0) continue;
      ids.push_back(j);
      centers.push_back(state.centers[j].location.xy);
    }
    const auto mixes = amenity_mix(centers, items, radius);
    std::string csv = "cluster,category,proportion\n";
    std::string counts = "cluster,category,count\n";
    for (const auto& mix : mixes) {
      for (std::size_t k = 0; k < kAmenityCategories; ++k) {
        const auto cat = to_string(static_cast<AmenityCategory>(k));
        const std::string p = mix.proportions ? format_double((*mix.proportions)[k]) : std::string("NA");
        fmt::format_to(std::back_inserter(csv), "{},{},{}\n", ids[mix.cluster], cat, p);
        fmt::format_to(std::back_inserter(counts), "{},{},{}\n", ids[mix.cluster], cat, mix.counts[k]);
      }
    }
    write_text(stage.path("amenity.csv"), csv);
    write_text(stage.path("amenity_counts.csv"), counts);
    stage.record("amenity.csv");
    stage.record("amenity_counts.csv");
    stage.commit();
    out << fmt::format("amenity: {} clusters, radius {} m\n", centers.size(), format_double(radius));
  } catch (const std::exception& e) {
    stage.fail(e.what());
    throw;
  }
  return kOk;
}

const char* kUsage =
    "usage: stnet <command> [options]\n"
    "commands:\n"
    "  fit          fit the mixture model by MCMC\n"
    "  postprocess  Dahl partition and cluster centers of a fit\n"
    "  assess       fitted vs observed proportions on space-time cubes\n"
    "  kfun         K-function with Poisson envelopes\n"
    "  pcf          multitype pair correlation\n"
    "  simulate     Poisson or clustered fixtures\n"
    "  amenity      amenity mix around cluster centers\n"
    "run `stnet <command> --help` for options\n";

}  // namespace

void write_run_files(const fs::path& dir, const LinearNetwork& net, const PosteriorRun& run,
                     const std::vector<Event>& events) {
  std::string samples = "iter,w_s,w_t,b_u,n_nonempty\n";
  std::string centers = "iter,cluster,seg_id,offset,x,y,t\n";
  std::string members = "iter,event_id,cluster\n";
  std::string weights = "iter,cluster,U,q\n";
  auto sink = [](std::string& s) { return std::back_inserter(s); };
  for (const auto& d : run.draws) {
    const auto& s = d.state;
    fmt::format_to(sink(samples), "{},{},{},{},{}\n", d.iteration, format_double(s.w_s), format_double(s.w_t),
                   format_double(s.b_u), s.nonempty_count());
    for (std::size_t j = 0; j < s.cluster_count(); ++j) {
      const auto& c = s.centers[j];
      fmt::format_to(sink(centers), "{},{},{},{},{},{},{}\n", d.iteration, j, net.segments()[c.location.segment].id,
                     format_double(c.location.offset), format_double(c.location.xy.x),
                     format_double(c.location.xy.y), format_double(c.t));
      fmt::format_to(sink(weights), "{},{},{},{}\n", d.iteration, j, format_double(s.sticks[j]),
                     format_double(s.weights[j]));
    }
    for (std::size_t i = 0; i < s.membership.size(); ++i) {
      fmt::format_to(sink(members), "{},{},{}\n", d.iteration, i, s.membership[i]);
    }
  }
  std::string ev = "event_id,seg_id,offset,x,y,t,raw_time\n";
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    fmt::format_to(sink(ev), "{},{},{},{},{},{},{}\n", i, net.segments()[e.location.segment].id,
                   format_double(e.location.offset), format_double(e.location.xy.x), format_double(e.location.xy.y),
                   format_double(e.t), format_double(e.raw_time));
  }
  write_text(dir / "samples.csv", samples);
  write_text(dir / "centers.csv", centers);
  write_text(dir / "memberships.csv", members);
  write_text(dir / "weights.csv", weights);
  write_text(dir / "events.csv", ev);
}

RunData read_run_dir(const fs::path& dir, const LinearNetwork& net, const fs::path& network_path) {
  RunData d;
  const fs::path mpath = dir / "manifest.txt";
  if (!fs::is_regular_file(mpath)) throw InputError(fmt::format("run manifest not found: {}", mpath.string()));
  d.manifest = io::Manifest::read(mpath);
  if (d.manifest.get("command") != std::optional<std::string>("fit")) {
    throw ConsistencyError(fmt::format("{} is not a fit run", dir.string()));
  }
  if (d.manifest.get("status") != std::optional<std::string>("complete")) {
    throw ConsistencyError(fmt::format("run {} did not complete", dir.string()));
  }
  const std::string expected = d.manifest.require("network_hash");
  const std::string actual = io::hex64(io::hash_file(network_path));
  if (expected != actual) {
    throw ConsistencyError(fmt::format("run {} was fitted on a different network (manifest {}, {} is {})",
                                       dir.string(), expected, network_path.string(), actual));
  }
  if (io::hex64(d.manifest.content_hash()) != d.manifest.require("manifest_hash")) {
    throw ConsistencyError(fmt::format("manifest of {} has been modified", dir.string()));
  }
  d.run.config = fit_config_from(d.manifest);
  d.run.mc_seed = static_cast<std::uint64_t>(std::stoull(d.manifest.require("mc_seed")));

  {
    const fs::path p = dir / "events.csv";
    const auto t = read_nonempty(p);
    const auto cs = field_index(t, "seg_id", p);
    const auto co = field_index(t, "offset", p);
    const auto cx = field_index(t, "x", p);
    const auto cy = field_index(t, "y", p);
    const auto ct = field_index(t, "t", p);
    const auto cr = field_index(t, "raw_time", p);
    for (const auto& r : t.rows) {
      Event e;
      e.location.segment = segment_of(net, r.fields[cs], p, r.line);
      e.location.offset = io::parse_double(r.fields[co], p.string(), r.line);
      e.location.xy = {io::parse_double(r.fields[cx], p.string(), r.line),
                       io::parse_double(r.fields[cy], p.string(), r.line)};
      e.t = io::parse_double(r.fields[ct], p.string(), r.line);
      e.raw_time = io::parse_double(r.fields[cr], p.string(), r.line);
      d.events.push_back(e);
    }
  }
  const std::size_t n = d.events.size();
  const std::size_t m = d.run.config.max_clusters;

  std::map<std::size_t, std::size_t> slot;  // iteration -> draw index
  {
    const fs::path p = dir / "samples.csv";
    const auto t = read_nonempty(p);
    const auto ci = field_index(t, "iter", p);
    const auto cs = field_index(t, "w_s", p);
    const auto ct = field_index(t, "w_t", p);
    const auto cb = field_index(t, "b_u", p);
    for (const auto& r : t.rows) {
      Draw dr;
      dr.iteration = to_index(r.fields[ci], p, r.line);
      dr.state.w_s = io::parse_double(r.fields[cs], p.string(), r.line);
      dr.state.w_t = io::parse_double(r.fields[ct], p.string(), r.line);
      dr.state.b_u = io::parse_double(r.fields[cb], p.string(), r.line);
      dr.state.sticks.assign(m, 0.0);
      dr.state.weights.assign(m, 0.0);
      dr.state.centers.assign(m, {});
      dr.state.membership.assign(n, m);
      if (!slot.emplace(dr.iteration, d.run.draws.size()).second) {
        throw InputError(fmt::format("{}: line {}: duplicate iteration", p.string(), r.line));
      }
      d.run.draws.push_back(std::move(dr));
    }
  }
  auto draw_at = [&](std::string_view s, const fs::path& p, std::size_t line) -> ChainState& {
    const auto it = slot.find(to_index(s, p, line));
    if (it == slot.end()) throw InputError(fmt::format("{}: line {}: iteration not in samples.csv", p.string(), line));
    return d.run.draws[it->second].state;
  };
  auto cluster_at = [&](std::string_view s, const fs::path& p, std::size_t line) {
    const std::size_t j = to_index(s, p, line);
    if (j >= m) throw InputError(fmt::format("{}: line {}: cluster {} exceeds max_clusters", p.string(), line, j));
    return j;
  };
  {
    const fs::path p = dir / "centers.csv";
    const auto t = read_nonempty(p);
    const auto ci = field_index(t, "iter", p);
    const auto cc = field_index(t, "cluster", p);
    const auto cs = field_index(t, "seg_id", p);
    const auto co = field_index(t, "offset", p);
    const auto cx = field_index(t, "x", p);
    const auto cy = field_index(t, "y", p);
    const auto ct = field_index(t, "t", p);
    for (const auto& r : t.rows) {
      auto& c = draw_at(r.fields[ci], p, r.line).centers[cluster_at(r.fields[cc], p, r.line)];
      c.location.segment = segment_of(net, r.fields[cs], p, r.line);
      c.location.offset = io::parse_double(r.fields[co], p.string(), r.line);
      c.location.xy = {io::parse_double(r.fields[cx], p.string(), r.line),
                       io::parse_double(r.fields[cy], p.string(), r.line)};
      c.t = io::parse_double(r.fields[ct], p.string(), r.line);
    }
  }
  {
    const fs::path p = dir / "weights.csv";
    const auto t = read_nonempty(p);
    const auto ci = field_index(t, "iter", p);
    const auto cc = field_index(t, "cluster", p);
    const auto cu = field_index(t, "U", p);
    const auto cq = field_index(t, "q", p);
    for (const auto& r : t.rows) {
      auto& s = draw_at(r.fields[ci], p, r.line);
      const std::size_t j = cluster_at(r.fields[cc], p, r.line);
      s.sticks[j] = io::parse_double(r.fields[cu], p.string(), r.line);
      s.weights[j] = io::parse_double(r.fields[cq], p.string(), r.line);
    }
  }
  {
    const fs::path p = dir / "memberships.csv";
    const auto t = read_nonempty(p);
    const auto ci = field_index(t, "iter", p);
    const auto ce = field_index(t, "event_id", p);
    const auto cc = field_index(t, "cluster", p);
    for (const auto& r : t.rows) {
      auto& s = draw_at(r.fields[ci], p, r.line);
      const std::size_t i = to_index(r.fields[ce], p, r.line);
      if (i >= n) throw InputError(fmt::format("{}: line {}: event {} not in events.csv", p.string(), r.line, i));
      s.membership[i] = cluster_at(r.fields[cc], p, r.line);
    }
  }
  for (const auto& dr : d.run.draws) {
    if (std::find(dr.state.membership.begin(), dr.state.membership.end(), m) != dr.state.membership.end()) {
      throw InputError(fmt::format("{}: iteration {} lacks memberships for some events",
                                   (dir / "memberships.csv").string(), dr.iteration));
    }
  }
  return d;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    (args.empty() ? err : out) << kUsage;
    return args.empty() ? kInputError : kOk;
  }
  if (args[0] == "--version") {
    out << "stnet " << kVersion << '\n';
    return kOk;
  }
  const std::string cmd = args[0];
  const std::vector<std::string> rest(args.begin() + 1, args.end());
  try {
    if (cmd == "fit") return cmd_fit(rest, out);
    if (cmd == "postprocess") return cmd_postprocess(rest, out);
    if (cmd == "assess") return cmd_assess(rest, out);
    if (cmd == "kfun") return cmd_kfun(rest, out);
    if (cmd == "pcf") return cmd_pcf(rest, out);
    if (cmd == "simulate") return cmd_simulate(rest, out);
    if (cmd == "amenity") return cmd_amenity(rest, out);
    err << "stnet: unknown command '" << cmd << "'\n" << kUsage;
    return kInputError;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return kOk;
    err << "stnet " << cmd << ": " << e.what() << '\n';
    return kInputError;
  } catch (const InputError& e) {
    err << "stnet " << cmd << ": " << e.what() << '\n';
    return kInputError;
  } catch (const ConsistencyError& e) {
    err << "stnet " << cmd << ": " << e.what() << '\n';
    return kConsistencyError;
  } catch (const NumericalError& e) {
    err << "stnet " << cmd << ": " << e.what() << '\n';
    return kNumericalError;
  } catch (const fs::filesystem_error& e) {
    err << "stnet " << cmd << ": " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "stnet " << cmd << ": internal error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace stnet::cli
