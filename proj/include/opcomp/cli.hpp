#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "opcomp/analysis.hpp"

namespace opcomp::cli {

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitAssertion = 2, kExitUsage = 64 };

/// One resolved key with where its value came from.
struct Setting {
  std::string value;
  std::string source = "default";         // default | file | flag
  std::optional<std::string> file_value;  // kept when a flag overrides the file
};

struct ExperimentConfig {
  std::string subcommand;
  std::map<std::string, Setting> settings;

  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
  Index integer(const std::string& key) const;
  std::uint64_t seed(const std::string& key) const;
  bool flag(const std::string& key) const;
  /// "a..b" or "a,b,c": log2 exponents, returned as patch counts 2^e.
  std::vector<Index> levels(const std::string& key) const;

  /// FNV-1a over the resolved keys that affect results (not outdir or threads).
  std::string hash() const;
  /// Resolved config as INI; overridden file values are kept as comments.
  void write_ini(std::ostream& out) const;
};

/// Subcommands in a fixed order.
const std::vector<std::string>& subcommands();
/// Keys and default values of a subcommand; "auto" defaults depend on other keys.
const std::map<std::string, std::string>& default_settings(const std::string& subcommand);

/// Sections -> key -> value; keys before the first section land in "".
using IniData = std::map<std::string, std::map<std::string, std::string>>;
IniData parse_ini(std::istream& in);

/// Defaults, then the file's top-level keys and its [subcommand] section, then
/// flags. Unknown keys or sections anywhere in the file are an error.
ExperimentConfig load_config(const std::string& subcommand, const std::optional<std::filesystem::path>& path,
                             const std::map<std::string, std::string>& flags);

std::string fnv1a_hex(std::string_view text);
std::vector<Index> parse_levels(std::string_view text);
/// Comma list of "global", "log2:c", "linear:c".
std::vector<LocalizationChoice> parse_schedules(std::string_view text);

/// Entry point; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace opcomp::cli
