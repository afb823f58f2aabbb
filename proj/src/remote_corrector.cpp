#include "seedfill/remote_corrector.hpp"

#include <httplib.h>

#include <json.hpp>
#include <regex>
#include <semaphore>
#include <thread>

#include "seedfill/errors.hpp"
#include "seedfill/image_io.hpp"

namespace seedfill {

using nlohmann::json;

namespace {
constexpr int kProtocolVersion = 1;
constexpr int kWireBitDepth = 16;
}  // namespace

EndpointConfig parse_endpoint(const std::string& url) {
  static const std::regex re(R"(^(?:http://)?([^:/]+)(?::(\d+))?(?:/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw InvalidArgument("cannot parse corrector endpoint '" + url + "'");
  EndpointConfig cfg;
  cfg.host = m[1];
  if (m[2].matched) cfg.port = std::stoi(m[2]);
  return cfg;
}

std::string encode_correct_request(const CorrectorRequest& request) {
  json j;
  j["version"] = kProtocolVersion;
  j["image_png_b64"] = base64_encode(encode_png_rgb(request.image, kWireBitDepth));
  j["mask_png_b64"] = base64_encode(encode_png_mask(request.mask));
  const DepthMap depth = request.depth.empty() ? DepthMap(request.image.width, request.image.height, 1) : request.depth;
  j["depth_npyish_b64"] = base64_encode(encode_depth_blob(depth));
  j["prompt"] = request.prompt;
  j["noise_level"] = request.noise_level;
  j["rng_seed"] = request.rng_seed;
  j["view_id"] = request.view_id;
  j["frame"] = request.frame;
  return j.dump();
}

CorrectorRequest decode_correct_request(const std::string& body) {
  const json j = json::parse(body);
  CorrectorRequest r;
  r.image = decode_png_rgb(base64_decode(j.at("image_png_b64").get<std::string>()));
  r.mask = decode_png_mask(base64_decode(j.at("mask_png_b64").get<std::string>()));
  r.depth = decode_depth_blob(base64_decode(j.at("depth_npyish_b64").get<std::string>()));
  r.prompt = j.at("prompt").get<std::string>();
  r.noise_level = j.at("noise_level").get<double>();
  r.rng_seed = j.at("rng_seed").get<uint64_t>();
  r.view_id = j.at("view_id").get<int>();
  r.frame = j.at("frame").get<int>();
  return r;
}

std::string encode_correct_response(const CorrectorResponse& response) {
  json j;
  j["version"] = kProtocolVersion;
  j["image_png_b64"] = base64_encode(encode_png_rgb(response.image, kWireBitDepth));
  if (response.object_mask) j["object_mask_png_b64"] = base64_encode(encode_png_mask(*response.object_mask));
  return j.dump();
}

CorrectorResponse decode_correct_response(const std::string& body, int view_id) {
  try {
    const json j = json::parse(body);
    CorrectorResponse r;
    r.image = decode_png_rgb(base64_decode(j.at("image_png_b64").get<std::string>()));
    if (j.contains("object_mask_png_b64") && !j["object_mask_png_b64"].is_null())
      r.object_mask = decode_png_mask(base64_decode(j["object_mask_png_b64"].get<std::string>()));
    return r;
  } catch (const std::exception& e) {
    throw MalformedResponse(view_id, std::string("malformed corrector response: ") + e.what());
  }
}

struct RemoteCorrector::Pool {
  explicit Pool(int limit) : slots(limit) {}
  std::counting_semaphore<1024> slots;
};

RemoteCorrector::RemoteCorrector(EndpointConfig config)
    : config_(std::move(config)), pool_(std::make_unique<Pool>(std::clamp(config_.max_in_flight, 1, 1024))) {
  if (config_.max_attempts < 1) throw InvalidArgument("remote corrector needs at least one attempt");
}

RemoteCorrector::~RemoteCorrector() = default;

std::string RemoteCorrector::name() const {
  return "remote:http://" + config_.host + ":" + std::to_string(config_.port);
}

namespace {
httplib::Client make_client(const EndpointConfig& cfg) {
  httplib::Client cli(cfg.host, cfg.port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  return cli;
}
}  // namespace

bool RemoteCorrector::healthy() const {
  auto cli = make_client(config_);
  auto res = cli.Get("/v1/health");
  return res && res->status >= 200 && res->status < 300;
}

CorrectorResponse RemoteCorrector::correct(const CorrectorRequest& request) const {
  request.validate();
  if (request.noise_level == 0.0) return {request.image, std::nullopt};

  const std::string body = encode_correct_request(request);
  pool_->slots.acquire();
  struct Release {
    Pool* p;
    ~Release() { p->slots.release(); }
  } release{pool_.get()};

  enum class Failure { None, Timeout, Transport, Status };
  Failure last = Failure::None;
  int last_status = 0;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(config_.base_backoff * (1 << (attempt - 2)));
    auto cli = make_client(config_);
    auto res = cli.Post("/v1/correct", body, "application/json");
    if (!res) {
      const auto err = res.error();
      last = (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) ? Failure::Timeout
                                                                                        : Failure::Transport;
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last = Failure::Status;
      last_status = res->status;
      continue;
    }
    return enforce_contract(request, decode_correct_response(res->body, request.view_id));
  }
  switch (last) {
    case Failure::Timeout:
      throw CorrectorTimeout(request.view_id, "corrector request timed out", config_.max_attempts);
    case Failure::Status:
      throw CorrectorHttpError(request.view_id, last_status, config_.max_attempts);
    default:
      throw CorrectorUnavailable(request.view_id, "corrector endpoint unreachable at " + name(),
                                 config_.max_attempts);
  }
}

}  // namespace seedfill
