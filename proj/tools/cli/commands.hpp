#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "config.hpp"

namespace part::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_failure = 1,
  exit_usage = 2,
  exit_missing_checkpoint = 3,
  exit_io = 4,
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model settings with the part count taken from parts.N.
ModelConfig resolved_model(const RunConfig& cfg);

/// Generated or loaded according to cfg.
Split load_split(const RunConfig& cfg);

int run_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_discover(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_cam(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_equiv(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Dispatches cfg.command, mapping failures to exit codes and messages on err.
int run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Full command line entry point (argv[0] included).
int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace part::cli
