#include "domainbench/http.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>

namespace domainbench::http {

json request(const std::string& base_url, const std::string& path, const json& body, const RetryOptions& options) {
  httplib::Client client(base_url);
  client.set_connection_timeout(options.timeout_s, 0);
  client.set_read_timeout(options.timeout_s, 0);
  const std::string payload = body.is_null() ? std::string() : body.dump();
  std::string last_error = "no attempt made";
  int last_status = 0;
  for (int attempt = 0; attempt < std::max(1, options.max_attempts); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(options.backoff_ms << (attempt - 1)));
    auto res = body.is_null() ? client.Get(path) : client.Post(path, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      std::string msg = path + ": HTTP " + std::to_string(res->status);
      try {
        msg += ": " + json::parse(res->body).value("error", "");
      } catch (const json::exception&) {
      }
      if (res->status >= 400 && res->status < 500) throw ServiceError(msg, res->status);
      last_error = msg;
      last_status = res->status;
      continue;
    }
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw ServiceError(path + ": malformed reply: " + e.what(), res->status);
    }
  }
  throw ServiceError(base_url + path + " unreachable: " + last_error, last_status);
}

}  // namespace domainbench::http
