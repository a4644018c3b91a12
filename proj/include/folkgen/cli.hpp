#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace folkgen::cli {

enum ExitCode { ok = 0, usage_error = 1, data_error = 2, numeric_error = 3 };

/// Bad or missing input data (exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AbcSource {
  std::string name;
  std::string text;
};

/// A single file, or every *.abc file of a directory in name order.
std::vector<AbcSource> load_abc_sources(const std::filesystem::path& path);

/// Subcommands: parse, stats, train, eval, generate, continue, serve.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace folkgen::cli
