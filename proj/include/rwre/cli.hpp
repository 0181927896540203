#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace rwre::cli {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kSchemaVersion = 1;

enum ExitCode { kOk = 0, kValidation = 1, kInconclusive = 2 };

std::uint64_t fnv1a64(std::string_view bytes);

/// 16 hex digits of FNV-1a over the compact dump of the resolved config (keys sorted).
std::string config_hash(const nlohmann::json& config);

/// UTC ISO-8601; SOURCE_DATE_EPOCH wins over the clock when set.
std::string timestamp();

struct ReportEnvelope {
  std::string command;
  nlohmann::json config = nlohmann::json::object();   // hashed: everything that can change a number
  nlohmann::json runtime = nlohmann::json::object();  // threads and output paths, not hashed
  std::uint64_t seed = 0;
  nlohmann::json payload = nlohmann::json::object();
  std::string verdict;
  std::vector<std::string> warnings;
  std::string created;

  nlohmann::json to_json() const;
};

/// Full command line: global flags, a command group and a subcommand.
/// Writes reports under --out-dir and a one-line summary to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rwre::cli
