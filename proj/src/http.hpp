#pragma once

// Every translation unit that touches httplib includes it through here so the
// TLS configuration is identical across the library.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <string>

#include "streetstage/error.hpp"

namespace streetstage::detail {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/', may carry a query
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "not an absolute URL: " + url);
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw Error(ErrorCode::InvalidArgument, "unsupported scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

/// Joins a base (possibly with its own path prefix) and an absolute path.
inline SplitUrl join_url(const std::string& base, const std::string& path) {
  auto s = split_url(base);
  std::string prefix = s.path == "/" ? "" : s.path;
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {s.origin, prefix + path};
}

inline httplib::Client make_client(const std::string& origin, int timeout_s) {
  httplib::Client cli(origin);
  cli.set_connection_timeout(timeout_s, 0);
  cli.set_read_timeout(timeout_s, 0);
  cli.set_write_timeout(timeout_s, 0);
  cli.set_follow_location(true);
  return cli;
}

}  // namespace streetstage::detail
