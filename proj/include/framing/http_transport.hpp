#pragma once

// The only header that pulls in cpp-httplib.
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include <chrono>
#include <string>

#include "framing/remote_provider.hpp"

namespace framing {

// Blocking HTTP(S) POSTs against "scheme://host[:port][/prefix]". A fresh
// client per request keeps the transport free of shared mutable state.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(const std::string& endpoint_url, double timeout_seconds = 60.0)
      : timeout_(std::chrono::duration<double>(timeout_seconds)) {
    const auto scheme_end = endpoint_url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint URL lacks a scheme: " + endpoint_url);
    const auto path_start = endpoint_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      origin_ = endpoint_url;
    } else {
      origin_ = endpoint_url.substr(0, path_start);
      prefix_ = endpoint_url.substr(path_start);
      while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
  }

  HttpResponse post(const std::string& path, const std::string& body,
                    const std::map<std::string, std::string>& headers) override {
    httplib::Client client(origin_);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout_).count();
    client.set_connection_timeout(micros / 1000000, micros % 1000000);
    client.set_read_timeout(micros / 1000000, micros % 1000000);
    client.set_write_timeout(micros / 1000000, micros % 1000000);

    httplib::Headers hdrs;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
      if (k == "Content-Type") {
        content_type = v;
      } else {
        hdrs.emplace(k, v);
      }
    }
    auto result = client.Post(prefix_ + path, hdrs, body, content_type);
    if (!result) throw TransportError("POST " + prefix_ + path + ": " + httplib::to_string(result.error()));
    return {result->status, result->body};
  }

 private:
  std::chrono::duration<double> timeout_;
  std::string origin_;
  std::string prefix_;
};

inline std::unique_ptr<RemoteProvider> make_remote_provider(const ProviderConfig& config) {
  return std::make_unique<RemoteProvider>(config,
                                          std::make_unique<HttpTransport>(config.endpoint_url, config.timeout_seconds));
}

}  // namespace framing
