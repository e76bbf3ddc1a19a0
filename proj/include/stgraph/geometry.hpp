#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stgraph/errors.hpp"

namespace stg {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    Vec3 normalized() const {
        double n = norm();
        return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{};
    }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Unit quaternion, w first. Only used for grasp orientations; the block world
// itself keeps everything axis-aligned.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    bool operator==(const Quat& o) const {
        return w == o.w && x == o.x && y == o.y && z == o.z;
    }
    Quat normalized() const {
        double n = std::sqrt(w * w + x * x + y * y + z * z);
        if (n == 0.0) return Quat{};
        return {w / n, x / n, y / n, z / n};
    }
    Vec3 rotate(const Vec3& v) const {
        // q v q^-1 expanded for unit q
        Vec3 u{x, y, z};
        Vec3 t = 2.0 * u.cross(v);
        return v + w * t + u.cross(t);
    }
};

struct Pose6DoF {
    Vec3 position;
    Quat orientation;
};

// Row-major 3x3, used for camera extrinsics.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Vec3 apply(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Vec3 apply_transposed(const Vec3& v) const {
        return {m[0] * v.x + m[3] * v.y + m[6] * v.z,
                m[1] * v.x + m[4] * v.y + m[7] * v.z,
                m[2] * v.x + m[5] * v.y + m[8] * v.z};
    }
    // Columns are the camera axes expressed in world coordinates.
    static Mat3 from_columns(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
        Mat3 r;
        r.m = {c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z};
        return r;
    }
};

enum class Projection { pinhole, orthographic };

// Intrinsics plus camera-to-world extrinsics. Camera frame: +z forward,
// +x right, +y down in the image. world = rotation * p_cam + translation.
struct CameraModel {
    Projection projection = Projection::pinhole;
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    int width = 0, height = 0;
    Mat3 rotation;     // camera -> world
    Vec3 translation;  // camera origin in world

    Vec3 camera_to_world(const Vec3& p_cam) const {
        return rotation.apply(p_cam) + translation;
    }
    Vec3 world_to_camera(const Vec3& p_world) const {
        return rotation.apply_transposed(p_world - translation);
    }

    // Image coordinates of a world point; .z carries the camera-frame depth.
    Vec3 project(const Vec3& p_world) const {
        Vec3 p = world_to_camera(p_world);
        if (projection == Projection::pinhole) {
            return {fx * p.x / p.z + cx, fy * p.y / p.z + cy, p.z};
        }
        return {fx * p.x + cx, fy * p.y + cy, p.z};
    }

    static CameraModel look_at(const Vec3& eye, const Vec3& target,
                               Projection proj, double fx, double fy,
                               double cx, double cy, int width, int height) {
        Vec3 fwd = (target - eye).normalized();
        Vec3 up{0, 0, 1};
        Vec3 right = fwd.cross(up);
        if (right.norm() < 1e-12) right = fwd.cross(Vec3{0, 1, 0});
        right = right.normalized();
        Vec3 down = fwd.cross(right).normalized();
        CameraModel cam;
        cam.projection = proj;
        cam.fx = fx; cam.fy = fy; cam.cx = cx; cam.cy = cy;
        cam.width = width; cam.height = height;
        cam.rotation = Mat3::from_columns(right, down, fwd);
        cam.translation = eye;
        return cam;
    }
};

// Binary instance mask, row-major, one byte per pixel.
struct Mask {
    int width = 0, height = 0;
    std::vector<std::uint8_t> data;  // 0 or 1

    Mask() = default;
    Mask(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

    bool at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u] != 0; }
    void set(int u, int v, bool on = true) {
        data[static_cast<std::size_t>(v) * width + u] = on ? 1 : 0;
    }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto b : data) n += b != 0;
        return n;
    }
    bool empty_region() const { return count() == 0; }
};

// Per-pixel metric depth with a validity flag (invalid = no surface hit).
struct DepthGrid {
    int width = 0, height = 0;
    std::vector<double> depth;
    std::vector<std::uint8_t> valid;

    DepthGrid() = default;
    DepthGrid(int w, int h)
        : width(w), height(h),
          depth(static_cast<std::size_t>(w) * h, 0.0),
          valid(static_cast<std::size_t>(w) * h, 0) {}

    double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
    bool is_valid(int u, int v) const {
        return valid[static_cast<std::size_t>(v) * width + u] != 0;
    }
    void set(int u, int v, double d) {
        std::size_t i = static_cast<std::size_t>(v) * width + u;
        depth[i] = d;
        valid[i] = 1;
    }
};

enum class Frame { camera, world };

struct PointCloud {
    Frame frame = Frame::world;
    std::vector<Vec3> points;
};

struct AxisStats {
    double mean = 0.0;
    double sigma = 0.0;  // population standard deviation (divide by N)
    double min = 0.0;
    double max = 0.0;
};

// Per-axis distribution summary of a point cloud: the token's shape record.
struct ShapeVector {
    AxisStats x, y, z;
    const AxisStats& axis(int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    AxisStats& axis(int i) { return i == 0 ? x : (i == 1 ? y : z); }
};

// Per-cell coverage scores over an n x n grid laid over a mask.
struct PatchGrid {
    int n = 0;
    std::vector<double> scores;  // row-major, n*n

    double at(int row, int col) const {
        return scores[static_cast<std::size_t>(row) * n + col];
    }
};

struct PatchSelection {
    std::vector<std::pair<int, int>> cells;  // (row, col), row-major order
    bool fallback = false;                   // nothing cleared the threshold
};

// Lifts masked pixels with valid depth into a world-frame point cloud.
// Pixel (u, v) with depth z maps through the intrinsics as
//   x = (u - cx) * z / fx,  y = (v - cy) * z / fy   (pinhole)
//   x = (u - cx) / fx,      y = (v - cy) / fy       (orthographic)
// then through the extrinsics into the world frame.
inline PointCloud back_project(const Mask& mask, const DepthGrid& depth,
                               const CameraModel& cam) {
    if (mask.width != depth.width || mask.height != depth.height) {
        throw DimensionMismatch("back_project: mask " + std::to_string(mask.width) + "x" +
                                std::to_string(mask.height) + " vs depth " +
                                std::to_string(depth.width) + "x" +
                                std::to_string(depth.height));
    }
    PointCloud cloud;
    cloud.frame = Frame::world;
    for (int v = 0; v < mask.height; ++v) {
        for (int u = 0; u < mask.width; ++u) {
            if (!mask.at(u, v) || !depth.is_valid(u, v)) continue;
            double z = depth.at(u, v);
            Vec3 p_cam;
            if (cam.projection == Projection::pinhole) {
                p_cam = {(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z};
            } else {
                p_cam = {(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, z};
            }
            cloud.points.push_back(cam.camera_to_world(p_cam));
        }
    }
    if (cloud.points.empty()) {
        throw EmptyRegion("back_project: no masked pixel has valid depth");
    }
    return cloud;
}

namespace detail {

inline double median_of_sorted(std::vector<double>& vals) {
    std::sort(vals.begin(), vals.end());
    std::size_t n = vals.size();
    if (n % 2 == 1) return vals[n / 2];
    return (vals[n / 2 - 1] + vals[n / 2]) / 2.0;
}

}  // namespace detail

// Component-wise median. Even counts take the midpoint of the two central
// order statistics, so a strict majority of coincident points pins the result
// to their exact coordinates regardless of outliers.
inline Vec3 median_centroid(const PointCloud& cloud) {
    if (cloud.points.empty()) throw EmptyRegion("median_centroid: empty cloud");
    std::vector<double> axis(cloud.points.size());
    Vec3 c;
    for (int a = 0; a < 3; ++a) {
        for (std::size_t i = 0; i < cloud.points.size(); ++i) {
            axis[i] = cloud.points[i][a];
        }
        double m = detail::median_of_sorted(axis);
        if (a == 0) c.x = m; else if (a == 1) c.y = m; else c.z = m;
    }
    return c;
}

// Streaming per-axis stats (Welford), population sigma, exact min/max.
inline ShapeVector shape_vector(const PointCloud& cloud) {
    if (cloud.points.empty()) throw EmptyRegion("shape_vector: empty cloud");
    ShapeVector sv;
    for (int a = 0; a < 3; ++a) {
        double mean = 0.0, m2 = 0.0;
        double lo = cloud.points[0][a], hi = lo;
        std::size_t n = 0;
        for (const Vec3& p : cloud.points) {
            double v = p[a];
            ++n;
            double delta = v - mean;
            mean += delta / static_cast<double>(n);
            m2 += delta * (v - mean);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        AxisStats& st = sv.axis(a);
        st.mean = mean;
        st.sigma = std::sqrt(std::max(0.0, m2 / static_cast<double>(n)));
        st.min = lo;
        st.max = hi;
    }
    return sv;
}

// Coverage of each grid cell by the mask: |mask ∩ cell| / |cell|. Cells are
// floor-sized; the last row/column absorbs the remainder pixels.
inline PatchGrid patch_grid_iou(const Mask& mask, int grid_n) {
    if (grid_n <= 0) throw DimensionMismatch("patch_grid_iou: grid_n must be positive");
    if (mask.width < grid_n || mask.height < grid_n) {
        throw DimensionMismatch("patch_grid_iou: mask " + std::to_string(mask.width) + "x" +
                                std::to_string(mask.height) + " smaller than grid " +
                                std::to_string(grid_n));
    }
    PatchGrid grid;
    grid.n = grid_n;
    grid.scores.assign(static_cast<std::size_t>(grid_n) * grid_n, 0.0);
    int cell_w = mask.width / grid_n;
    int cell_h = mask.height / grid_n;
    for (int r = 0; r < grid_n; ++r) {
        int v0 = r * cell_h;
        int v1 = (r == grid_n - 1) ? mask.height : v0 + cell_h;
        for (int c = 0; c < grid_n; ++c) {
            int u0 = c * cell_w;
            int u1 = (c == grid_n - 1) ? mask.width : u0 + cell_w;
            long hits = 0;
            for (int v = v0; v < v1; ++v) {
                for (int u = u0; u < u1; ++u) {
                    if (mask.at(u, v)) ++hits;
                }
            }
            long area = static_cast<long>(u1 - u0) * (v1 - v0);
            grid.scores[static_cast<std::size_t>(r) * grid_n + c] =
                static_cast<double>(hits) / static_cast<double>(area);
        }
    }
    return grid;
}

// Cells scoring strictly above the threshold, in row-major order. If none
// qualify, falls back to the single best cell (ties broken by lowest
// (row, col)) and flags the fallback.
inline PatchSelection select_patches(const PatchGrid& grid, double threshold) {
    PatchSelection sel;
    for (int r = 0; r < grid.n; ++r) {
        for (int c = 0; c < grid.n; ++c) {
            if (grid.at(r, c) > threshold) sel.cells.emplace_back(r, c);
        }
    }
    if (sel.cells.empty()) {
        int best_r = 0, best_c = 0;
        double best = grid.at(0, 0);
        for (int r = 0; r < grid.n; ++r) {
            for (int c = 0; c < grid.n; ++c) {
                if (grid.at(r, c) > best) {
                    best = grid.at(r, c);
                    best_r = r;
                    best_c = c;
                }
            }
        }
        sel.cells.emplace_back(best_r, best_c);
        sel.fallback = true;
    }
    return sel;
}

}  // namespace stg
