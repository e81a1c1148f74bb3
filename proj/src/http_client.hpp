#pragma once

// Internal helpers shared by the HTTP-backed provider and embedder.

#include <memory>
#include <string>

#include "httplib.h"

namespace pace::detail {

struct BaseUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash, may be empty
};

BaseUrl split_base_url(const std::string& url);

std::unique_ptr<httplib::Client> make_client(const BaseUrl& base, const std::string& api_key, int timeout_seconds);

// Raises the provider error matching an HTTP failure. Never returns.
[[noreturn]] void raise_for_status(int status, const std::string& body);

}  // namespace pace::detail
