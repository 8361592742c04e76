#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "http_client.hpp"

#include <httplib.h>

#include "deskrec/error.hpp"

namespace deskrec::detail {

HttpResponse http_post_json(const std::string& base_url, const std::string& path,
                            const std::string& body,
                            const std::vector<std::pair<std::string, std::string>>& headers,
                            std::chrono::seconds timeout) {
  // Split "scheme://host[:port]/prefix" into the client origin and the path prefix.
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(Errc::InvalidConfig, "base URL needs a scheme: " + base_url);
  }
  const auto path_start = base_url.find('/', scheme_end + 3);
  const std::string origin = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers hdrs;
  for (const auto& [k, v] : headers) hdrs.emplace(k, v);

  auto result = client.Post(prefix + path, hdrs, body, "application/json");
  if (!result) {
    throw TransientError("POST " + origin + prefix + path + " failed: " +
                         httplib::to_string(result.error()));
  }
  return {result->status, result->body};
}

}  // namespace deskrec::detail
