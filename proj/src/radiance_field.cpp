#include "seedfill/radiance_field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "seedfill/errors.hpp"

namespace seedfill {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw InvalidArgument("softplus_inverse: argument must be positive");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double y) {
  if (!(y > 0.0 && y < 1.0)) throw InvalidArgument("logit: argument must lie in (0,1)");
  return std::log(y / (1.0 - y));
}

RadianceField::RadianceField(GridShape shape, Aabb bounds, Eigen::Vector3d background,
                             double density_raw, double color_raw)
    : shape_(shape), bounds_(bounds), background_(background) {
  if (shape.nx < 2 || shape.ny < 2 || shape.nz < 2 || shape.nt < 1)
    throw InvalidArgument("grid needs >= 2 nodes per spatial axis and >= 1 time node");
  if (!((bounds.hi - bounds.lo).array() > 0.0).all())
    throw InvalidArgument("field bounds must have positive extent");
  params_.resize(shape.nodes() * kChannels);
  for (size_t n = 0; n < shape.nodes(); ++n) {
    params_[n * kChannels] = density_raw;
    for (int c = 1; c < kChannels; ++c) params_[n * kChannels + c] = color_raw;
  }
}

Eigen::Vector3d RadianceField::node_position(int ix, int iy, int iz) const {
  const Eigen::Vector3d extent = bounds_.hi - bounds_.lo;
  return bounds_.lo + Eigen::Vector3d(extent.x() * ix / (shape_.nx - 1), extent.y() * iy / (shape_.ny - 1),
                                      extent.z() * iz / (shape_.nz - 1));
}

namespace {

struct AxisCell {
  int i0;
  double frac;
};

AxisCell locate(double u, int n) {
  // u in [0, n-1]
  int i0 = static_cast<int>(std::floor(u));
  i0 = std::clamp(i0, 0, n - 2);
  return {i0, u - i0};
}

}  // namespace

bool make_stencil(const RadianceField& field, const Eigen::Vector3d& p, std::optional<double> time,
                  Stencil& out) {
  const Aabb& b = field.bounds();
  if (!b.contains(p)) return false;
  const GridShape& s = field.shape();
  const Eigen::Vector3d extent = b.hi - b.lo;
  const AxisCell cx = locate((p.x() - b.lo.x()) / extent.x() * (s.nx - 1), s.nx);
  const AxisCell cy = locate((p.y() - b.lo.y()) / extent.y() * (s.ny - 1), s.ny);
  const AxisCell cz = locate((p.z() - b.lo.z()) / extent.z() * (s.nz - 1), s.nz);

  int time_corners = 1;
  AxisCell ct{0, 0.0};
  if (s.nt > 1) {
    const double t = std::clamp(time.value_or(0.0), 0.0, 1.0);
    ct = locate(t * (s.nt - 1), s.nt);
    time_corners = 2;
  }

  int k = 0;
  for (int dt = 0; dt < time_corners; ++dt) {
    const double wt = time_corners == 1 ? 1.0 : (dt ? ct.frac : 1.0 - ct.frac);
    for (int dz = 0; dz < 2; ++dz) {
      const double wz = dz ? cz.frac : 1.0 - cz.frac;
      for (int dy = 0; dy < 2; ++dy) {
        const double wy = dy ? cy.frac : 1.0 - cy.frac;
        for (int dx = 0; dx < 2; ++dx) {
          const double wx = dx ? cx.frac : 1.0 - cx.frac;
          out.node[k] = field.node_index(cx.i0 + dx, cy.i0 + dy, cz.i0 + dz, ct.i0 + dt);
          out.weight[k] = time_corners == 1 ? wx * wy * wz : wx * wy * wz * wt;
          ++k;
        }
      }
    }
  }
  out.count = k;
  return true;
}

namespace {

void interpolate_raw(const RadianceField& field, const Stencil& st, double raw[4]) {
  raw[0] = raw[1] = raw[2] = raw[3] = 0.0;
  const auto& params = field.params();
  for (int k = 0; k < st.count; ++k) {
    const double* node = &params[st.node[k] * RadianceField::kChannels];
    const double w = st.weight[k];
    raw[0] += w * node[0];
    raw[1] += w * node[1];
    raw[2] += w * node[2];
    raw[3] += w * node[3];
  }
}

// Entry/exit distances of the ray through the bounds, clipped to t >= 0.
bool intersect_bounds(const Aabb& b, const Eigen::Vector3d& o, const Eigen::Vector3d& d, double& t0,
                      double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < b.lo[a] || o[a] > b.hi[a]) return false;
      continue;
    }
    double ta = (b.lo[a] - o[a]) / d[a];
    double tb = (b.hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t1 > t0;
}

struct RaySample {
  double t;
  double delta;
  double density;
  double raw_density;
  Eigen::Vector3d color;
  double transmittance;  // before this sample
  double alpha;
  Stencil stencil;
};

void check_direction(const Eigen::Vector3d& d) {
  if (std::abs(d.norm() - 1.0) > 1e-6) throw InvalidArgument("ray direction must be unit length");
}

// Shared forward pass; records samples when `record` is non-null.
RenderOutput trace(const RadianceField& field, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                   std::optional<double> time, const RenderOptions& options, std::vector<RaySample>* record) {
  if (options.samples < 2) throw InvalidArgument("render_ray: samples must be >= 2");
  RenderOutput out;
  double t_near = 0.0, t_far = 0.0;
  if (!intersect_bounds(field.bounds(), origin, dir, t_near, t_far)) {
    out.rgb = field.background();
    return out;
  }
  const int n = options.samples;
  const double delta = (t_far - t_near) / n;
  double transmittance = 1.0;
  double weight_sum = 0.0;
  double depth_acc = 0.0;
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
  if (record) record->resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = t_near + (i + 0.5) * delta;
    const Eigen::Vector3d p = origin + t * dir;
    Stencil st;
    double raw[4] = {0, 0, 0, 0};
    double density = 0.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    if (make_stencil(field, p, time, st)) {
      interpolate_raw(field, st, raw);
      density = softplus(raw[0]);
      color = Eigen::Vector3d(logistic(raw[1]), logistic(raw[2]), logistic(raw[3]));
    } else {
      st.count = 0;
    }
    const double survive = std::exp(-density * delta);
    const double alpha = 1.0 - survive;
    const double w = transmittance * alpha;
    if (record) {
      RaySample& s = (*record)[static_cast<size_t>(i)];
      s.t = t;
      s.delta = delta;
      s.density = density;
      s.raw_density = raw[0];
      s.color = color;
      s.transmittance = transmittance;
      s.alpha = alpha;
      s.stencil = st;
    }
    rgb += w * color;
    depth_acc += w * t;
    weight_sum += w;
    transmittance *= survive;
  }
  out.rgb = rgb + transmittance * field.background();
  out.opacity = 1.0 - transmittance;
  out.weight_total = weight_sum + transmittance;
  if (out.opacity > options.opacity_floor) {
    out.has_depth = true;
    out.depth = depth_acc / out.opacity;
  }
  return out;
}

}  // namespace

FieldSample query_field(const RadianceField& field, const Eigen::Vector3d& p, std::optional<double> time) {
  Stencil st;
  FieldSample out;
  if (!make_stencil(field, p, time, st)) return out;
  double raw[4];
  interpolate_raw(field, st, raw);
  out.density = softplus(raw[0]);
  out.color = Eigen::Vector3d(logistic(raw[1]), logistic(raw[2]), logistic(raw[3]));
  return out;
}

RenderOutput render_ray(const RadianceField& field, const Eigen::Vector3d& origin,
                        const Eigen::Vector3d& direction, std::optional<double> time,
                        const RenderOptions& options) {
  check_direction(direction);
  return trace(field, origin, direction, time, options, nullptr);
}

void backprop_ray(const RadianceField& field, const Eigen::Vector3d& origin,
                  const Eigen::Vector3d& direction, std::optional<double> time,
                  const RenderOptions& options, const RayUpstream& upstream, std::span<double> grad) {
  check_direction(direction);
  if (grad.size() != field.params().size()) throw InvalidArgument("gradient buffer size mismatch");
  std::vector<RaySample> samples;
  const RenderOutput out = trace(field, origin, direction, time, options, &samples);
  if (samples.empty()) return;

  // Depth = A / O with A = sum w_i t_i; fold its derivative into per-sample
  // and opacity terms.
  double g_acc = 0.0;
  double g_opacity = upstream.d_opacity;
  if (out.has_depth) {
    g_acc = upstream.d_depth / out.opacity;
    g_opacity -= upstream.d_depth * out.depth / out.opacity;
  }
  const double t_final = 1.0 - out.opacity;
  const Eigen::Vector3d& g_rgb = upstream.d_rgb;

  // suffix = sum_{j>i} w_j q_j + T_final * q_bg
  double suffix = t_final * g_rgb.dot(field.background());
  for (int i = static_cast<int>(samples.size()) - 1; i >= 0; --i) {
    const RaySample& s = samples[static_cast<size_t>(i)];
    const double w = s.transmittance * s.alpha;
    const double q = g_rgb.dot(s.color) + g_acc * s.t;
    const double t_next = s.transmittance * (1.0 - s.alpha);
    const double d_density = s.delta * (t_next * q - suffix) + g_opacity * s.delta * t_final;
    suffix += w * q;
    if (s.stencil.count == 0) continue;

    double d_raw[4];
    d_raw[0] = d_density * logistic(s.raw_density);  // softplus' = logistic
    for (int c = 0; c < 3; ++c) d_raw[c + 1] = w * g_rgb[c] * s.color[c] * (1.0 - s.color[c]);
    for (int k = 0; k < s.stencil.count; ++k) {
      double* g = &grad[s.stencil.node[k] * RadianceField::kChannels];
      const double wk = s.stencil.weight[k];
      g[0] += wk * d_raw[0];
      g[1] += wk * d_raw[1];
      g[2] += wk * d_raw[2];
      g[3] += wk * d_raw[3];
    }
  }
}

namespace {
void check_rect(const CameraView& camera, const PatchRect& rect) {
  if (rect.width < 1 || rect.height < 1 || rect.x < 0 || rect.y < 0 || rect.x + rect.width > camera.width ||
      rect.y + rect.height > camera.height)
    throw InvalidArgument("patch outside image bounds");
}
}  // namespace

std::vector<RenderOutput> render_patch(const RadianceField& field, const CameraView& camera,
                                       const PatchRect& rect, std::optional<double> time,
                                       const RenderOptions& options) {
  check_rect(camera, rect);
  std::vector<RenderOutput> out;
  out.reserve(static_cast<size_t>(rect.width) * rect.height);
  for (int y = rect.y; y < rect.y + rect.height; ++y) {
    for (int x = rect.x; x < rect.x + rect.width; ++x) {
      const Eigen::Vector2d px(x, y);
      RenderOutput r = trace(field, camera.position, camera.ray_direction(px), time, options, nullptr);
      r.depth *= camera.z_per_range(px);
      out.push_back(r);
    }
  }
  return out;
}

void backprop_patch(const RadianceField& field, const CameraView& camera, const PatchRect& rect,
                    std::optional<double> time, const RenderOptions& options,
                    std::span<const RayUpstream> upstream, std::span<double> grad) {
  check_rect(camera, rect);
  if (upstream.size() != static_cast<size_t>(rect.width) * rect.height)
    throw InvalidArgument("backprop_patch: upstream size mismatch");
  size_t k = 0;
  for (int y = rect.y; y < rect.y + rect.height; ++y) {
    for (int x = rect.x; x < rect.x + rect.width; ++x, ++k) {
      const Eigen::Vector2d px(x, y);
      RayUpstream up = upstream[k];
      if (up.d_rgb.isZero() && up.d_depth == 0.0 && up.d_opacity == 0.0) continue;
      up.d_depth *= camera.z_per_range(px);
      backprop_ray(field, camera.position, camera.ray_direction(px), time, options, up, grad);
    }
  }
}

ViewRender render_view(const RadianceField& field, const CameraView& camera, std::optional<double> time,
                       const RenderOptions& options) {
  const PatchRect full{0, 0, camera.width, camera.height};
  const auto pixels = render_patch(field, camera, full, time, options);
  ViewRender out;
  out.rgb = Image(camera.width, camera.height, 3);
  out.depth = Image(camera.width, camera.height, 1);
  out.opacity = Image(camera.width, camera.height, 1);
  out.has_depth = Mask(camera.width, camera.height);
  size_t k = 0;
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x, ++k) {
      const RenderOutput& r = pixels[k];
      for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = r.rgb[c];
      out.depth.at(x, y) = r.depth;
      out.opacity.at(x, y) = r.opacity;
      out.has_depth.set(x, y, r.has_depth);
    }
  }
  return out;
}

double frame_time(int frame, int frames) {
  if (frames <= 1) return 0.0;
  return static_cast<double>(frame) / (frames - 1);
}

namespace {
constexpr char kMagic[4] = {'S', 'F', 'R', 'F'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::vector<uint8_t>& buf, const T& v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
T get(std::span<const uint8_t> bytes, size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw InvalidArgument("field checkpoint truncated");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}
}  // namespace

std::vector<uint8_t> serialize_field(const RadianceField& field) {
  std::vector<uint8_t> buf(kMagic, kMagic + 4);
  put(buf, kVersion);
  const GridShape& s = field.shape();
  put<int32_t>(buf, s.nx);
  put<int32_t>(buf, s.ny);
  put<int32_t>(buf, s.nz);
  put<int32_t>(buf, s.nt);
  for (int a = 0; a < 3; ++a) put(buf, field.bounds().lo[a]);
  for (int a = 0; a < 3; ++a) put(buf, field.bounds().hi[a]);
  for (int a = 0; a < 3; ++a) put(buf, field.background()[a]);
  put<uint64_t>(buf, field.params().size());
  const auto* p = reinterpret_cast<const uint8_t*>(field.params().data());
  buf.insert(buf.end(), p, p + field.params().size() * sizeof(double));
  return buf;
}

RadianceField deserialize_field(std::span<const uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw InvalidArgument("not a field checkpoint");
  size_t pos = 4;
  const auto version = get<uint32_t>(bytes, pos);
  if (version != kVersion) throw InvalidArgument("unsupported field checkpoint version " + std::to_string(version));
  GridShape s;
  s.nx = get<int32_t>(bytes, pos);
  s.ny = get<int32_t>(bytes, pos);
  s.nz = get<int32_t>(bytes, pos);
  s.nt = get<int32_t>(bytes, pos);
  Aabb b;
  for (int a = 0; a < 3; ++a) b.lo[a] = get<double>(bytes, pos);
  for (int a = 0; a < 3; ++a) b.hi[a] = get<double>(bytes, pos);
  Eigen::Vector3d bg;
  for (int a = 0; a < 3; ++a) bg[a] = get<double>(bytes, pos);
  RadianceField field(s, b, bg);
  const auto count = get<uint64_t>(bytes, pos);
  if (count != field.params().size() || pos + count * sizeof(double) != bytes.size())
    throw InvalidArgument("field checkpoint parameter block does not match its grid shape");
  std::memcpy(field.params().data(), bytes.data() + pos, count * sizeof(double));
  return field;
}

void save_field(const RadianceField& field, const std::string& path) {
  const auto bytes = serialize_field(field);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

RadianceField load_field(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot read " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_field(bytes);
}

}  // namespace seedfill
