#pragma once

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <string>

namespace test_support {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

/// Runs a shell command line in `cwd`.
inline RunResult run_command(const std::string& command, const std::filesystem::path& cwd) {
  const std::string line = "cd " + shell_quote(cwd.string()) + " && " + command + " 2>&1";
  RunResult r;
  FILE* p = ::popen(line.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
  const int status = ::pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

/// The CLI run with network calls refused and logged to `net_log`.
inline std::string guarded_cli(const std::filesystem::path& net_log) {
  return "NETGUARD_LOG=" + shell_quote(net_log.string()) + " LD_PRELOAD=" + shell_quote(STREETSTAGE_NETGUARD) +
         " " + shell_quote(STREETSTAGE_CLI);
}

}  // namespace test_support
