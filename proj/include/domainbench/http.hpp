#pragma once

#include <string>

#include "domainbench/errors.hpp"
#include "domainbench/util.hpp"

namespace domainbench::http {

struct RetryOptions {
  int max_attempts = 3;
  int backoff_ms = 100;
  int timeout_s = 60;
};

/// Transport failure after retries, or a non-200 reply. `status` is 0 when no
/// reply was received.
class ServiceError : public Error {
 public:
  ServiceError(const std::string& what, int status) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

/// JSON request against `base_url + path`. A null body issues GET, anything
/// else POST. Connection failures and 5xx replies are retried with
/// exponential backoff; 4xx replies fail at once.
json request(const std::string& base_url, const std::string& path, const json& body, const RetryOptions& options);

}  // namespace domainbench::http
