/**
 * @file cli.hpp
 * @brief Batch sub-commands and the on-disk run format they share.
 *
 * A fit writes one directory holding a manifest plus samples, centers,
 * memberships, weights and the ingested events. Downstream commands read
 * that directory back and refuse to pair it with a different network.
 */

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stnet/io.hpp"
#include "stnet/model.hpp"
#include "stnet/network.hpp"

namespace stnet::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kConsistencyError = 3, kNumericalError = 4 };

/// Dispatches `args` (without the program name); first element is the
/// sub-command. Diagnostics go to `err`, progress lines to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Run directory contents after loading.
struct RunData {
  io::Manifest manifest;
  PosteriorRun run;
  std::vector<Event> events;
};

/// Writes samples.csv, centers.csv, memberships.csv, weights.csv and
/// events.csv for a finished run into `dir`.
void write_run_files(const std::filesystem::path& dir, const LinearNetwork& net, const PosteriorRun& run,
                     const std::vector<Event>& events);

/// Reads a completed run directory. Throws ConsistencyError when the
/// manifest does not match `network_path`, InputError on missing or empty
/// files.
RunData read_run_dir(const std::filesystem::path& dir, const LinearNetwork& net,
                     const std::filesystem::path& network_path);

}  // namespace stnet::cli
