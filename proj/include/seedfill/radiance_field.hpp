#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seedfill/image.hpp"
#include "seedfill/scene_core.hpp"

namespace seedfill {

struct GridShape {
  int nx = 2, ny = 2, nz = 2;
  int nt = 1;  // time nodes; 1 for a static field

  size_t nodes() const { return static_cast<size_t>(nx) * ny * nz * nt; }
  bool operator==(const GridShape&) const = default;
};

struct Aabb {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(-1.0);
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(1.0);

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  bool operator==(const Aabb& o) const { return lo == o.lo && hi == o.hi; }
};

double softplus(double x);
double softplus_inverse(double y);
double logistic(double x);
double logit(double y);

// Dense voxel grid holding pre-activation density (softplus) and color
// (logistic) per node. Values are interpolated before activation.
class RadianceField {
 public:
  static constexpr int kChannels = 4;  // raw density, raw r, g, b

  RadianceField() = default;
  RadianceField(GridShape shape, Aabb bounds, Eigen::Vector3d background,
                double density_raw = -8.0, double color_raw = 0.0);

  const GridShape& shape() const { return shape_; }
  const Aabb& bounds() const { return bounds_; }
  const Eigen::Vector3d& background() const { return background_; }
  bool is_dynamic() const { return shape_.nt > 1; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  size_t node_index(int ix, int iy, int iz, int it = 0) const {
    return ((static_cast<size_t>(it) * shape_.nz + iz) * shape_.ny + iy) * shape_.nx + ix;
  }
  double& raw(size_t node, int channel) { return params_[node * kChannels + channel]; }
  double raw(size_t node, int channel) const { return params_[node * kChannels + channel]; }
  Eigen::Vector3d node_position(int ix, int iy, int iz) const;

  bool operator==(const RadianceField&) const = default;

 private:
  GridShape shape_;
  Aabb bounds_;
  Eigen::Vector3d background_ = Eigen::Vector3d::Zero();
  std::vector<double> params_;
};

// Interpolation footprint of one query point: up to 16 (x,y,z,t) corners.
struct Stencil {
  int count = 0;
  std::array<size_t, 16> node{};
  std::array<double, 16> weight{};
};

// Returns false when p lies outside the field bounds.
bool make_stencil(const RadianceField& field, const Eigen::Vector3d& p, std::optional<double> time,
                  Stencil& out);

struct FieldSample {
  double density = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
};

FieldSample query_field(const RadianceField& field, const Eigen::Vector3d& p,
                        std::optional<double> time = std::nullopt);

struct RenderOptions {
  int samples = 64;
  double opacity_floor = 1e-3;
};

struct RenderOutput {
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
  double depth = 0.0;  // 0 when has_depth is false
  double opacity = 0.0;
  bool has_depth = false;
  // Sum of compositing weights plus final transmittance; 1 up to rounding.
  double weight_total = 1.0;
};

// Emission-absorption integration with `samples` midpoint-stratified samples
// between the ray's entry and exit of the field bounds. Depth is distance
// along the ray.
RenderOutput render_ray(const RadianceField& field, const Eigen::Vector3d& origin,
                        const Eigen::Vector3d& direction, std::optional<double> time,
                        const RenderOptions& options = {});

// Upstream derivatives of a scalar loss with respect to one ray's outputs.
struct RayUpstream {
  Eigen::Vector3d d_rgb = Eigen::Vector3d::Zero();
  double d_depth = 0.0;
  double d_opacity = 0.0;
};

// Accumulates d(loss)/d(params) for one ray into `grad` (size of params()).
void backprop_ray(const RadianceField& field, const Eigen::Vector3d& origin,
                  const Eigen::Vector3d& direction, std::optional<double> time,
                  const RenderOptions& options, const RayUpstream& upstream, std::span<double> grad);

struct PatchRect {
  int x = 0;  // top-left column
  int y = 0;  // top-left row
  int width = 1;
  int height = 1;
};

// Per-pixel renders of a rectangle, row-major. Depth is camera-space z.
std::vector<RenderOutput> render_patch(const RadianceField& field, const CameraView& camera,
                                       const PatchRect& rect, std::optional<double> time,
                                       const RenderOptions& options = {});

// Upstream is per patch pixel (row-major) with d_depth taken w.r.t. camera z.
void backprop_patch(const RadianceField& field, const CameraView& camera, const PatchRect& rect,
                    std::optional<double> time, const RenderOptions& options,
                    std::span<const RayUpstream> upstream, std::span<double> grad);

struct ViewRender {
  RgbImage rgb;
  DepthMap depth;
  Image opacity;
  Mask has_depth;
};

ViewRender render_view(const RadianceField& field, const CameraView& camera, std::optional<double> time,
                       const RenderOptions& options = {});

// Normalized time of a frame index for a sequence of `frames` frames.
double frame_time(int frame, int frames);

// Versioned binary checkpoint; load(save(f)) == f bit for bit.
std::vector<uint8_t> serialize_field(const RadianceField& field);
RadianceField deserialize_field(std::span<const uint8_t> bytes);
void save_field(const RadianceField& field, const std::string& path);
RadianceField load_field(const std::string& path);

}  // namespace seedfill
