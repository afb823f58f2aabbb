#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "seedfill/corrector.hpp"

namespace seedfill {

struct EndpointConfig {
  std::string host = "127.0.0.1";
  int port = 8000;
  std::chrono::milliseconds timeout{30000};
  int max_attempts = 3;
  std::chrono::milliseconds base_backoff{1000};
  int max_in_flight = 4;
};

// Parses "http://host:port" (path ignored).
EndpointConfig parse_endpoint(const std::string& url);

// Wire format, version 1. See docs/corrector_protocol.md.
std::string encode_correct_request(const CorrectorRequest& request);
CorrectorRequest decode_correct_request(const std::string& body);
std::string encode_correct_response(const CorrectorResponse& response);
// Throws MalformedResponse (tagged with view_id) on any decoding problem.
CorrectorResponse decode_correct_response(const std::string& body, int view_id);

// HTTP client for POST /v1/correct. Retries transport failures and non-2xx
// statuses with exponential backoff; malformed bodies fail immediately.
class RemoteCorrector final : public Corrector {
 public:
  explicit RemoteCorrector(EndpointConfig config);
  ~RemoteCorrector() override;

  CorrectorResponse correct(const CorrectorRequest& request) const override;
  std::string name() const override;
  // GET /v1/health returned 2xx.
  bool healthy() const;
  const EndpointConfig& config() const { return config_; }

 private:
  struct Pool;
  EndpointConfig config_;
  std::unique_ptr<Pool> pool_;
};

}  // namespace seedfill
