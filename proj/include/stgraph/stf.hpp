#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "stgraph/config.hpp"
#include "stgraph/errors.hpp"
#include "stgraph/geometry.hpp"
#include "stgraph/observation.hpp"
#include "stgraph/util.hpp"

namespace stg {

// Synthetic per-patch descriptors over the rendered frame: mean RGB in [0,1]
// plus the normalized patch center coordinates. Five dimensions, built once
// per frame and shared by every token extracted from it.
struct PatchFeatureGrid {
    int grid_n = 0;
    int source_width = 0, source_height = 0;
    std::vector<std::vector<double>> features;  // row-major, grid_n*grid_n

    const std::vector<double>& at(int row, int col) const {
        return features[static_cast<std::size_t>(row) * grid_n + col];
    }
};

inline PatchFeatureGrid build_patch_feature_grid(const RgbImage& img, int grid_n) {
    if (img.width < grid_n || img.height < grid_n) {
        throw DimensionMismatch("patch feature grid: image smaller than grid");
    }
    PatchFeatureGrid grid;
    grid.grid_n = grid_n;
    grid.source_width = img.width;
    grid.source_height = img.height;
    grid.features.reserve(static_cast<std::size_t>(grid_n) * grid_n);
    int cell_w = img.width / grid_n;
    int cell_h = img.height / grid_n;
    for (int r = 0; r < grid_n; ++r) {
        int v0 = r * cell_h;
        int v1 = (r == grid_n - 1) ? img.height : v0 + cell_h;
        for (int c = 0; c < grid_n; ++c) {
            int u0 = c * cell_w;
            int u1 = (c == grid_n - 1) ? img.width : u0 + cell_w;
            double sum[3] = {0, 0, 0};
            for (int v = v0; v < v1; ++v) {
                for (int u = u0; u < u1; ++u) {
                    const std::uint8_t* p = img.at(u, v);
                    sum[0] += p[0];
                    sum[1] += p[1];
                    sum[2] += p[2];
                }
            }
            double area = static_cast<double>((u1 - u0) * (v1 - v0)) * 255.0;
            grid.features.push_back({sum[0] / area, sum[1] / area, sum[2] / area,
                                     (r + 0.5) / grid_n, (c + 0.5) / grid_n});
        }
    }
    return grid;
}

struct SelectedPatch {
    int row = 0, col = 0;
    std::vector<double> feature;
};

struct VisualEvidence {
    std::vector<SelectedPatch> selected;  // row-major order
    std::vector<double> aggregate;        // componentwise mean of selected
    bool fallback = false;
};

// Patches whose mask coverage strictly exceeds the threshold; none qualifying
// degrades to the single best-covered patch with the fallback flag set.
inline VisualEvidence select_patches(const PatchFeatureGrid& grid, const Mask& mask,
                                     double iou_threshold) {
    if (grid.source_width != mask.width || grid.source_height != mask.height) {
        throw DimensionMismatch("select_patches: grid source dims vs mask dims");
    }
    PatchGrid scores = patch_grid_iou(mask, grid.grid_n);
    PatchSelection sel = select_patches(scores, iou_threshold);
    VisualEvidence ev;
    ev.fallback = sel.fallback;
    std::size_t dim = grid.at(0, 0).size();
    ev.aggregate.assign(dim, 0.0);
    for (auto [r, c] : sel.cells) {
        ev.selected.push_back({r, c, grid.at(r, c)});
        for (std::size_t k = 0; k < dim; ++k) ev.aggregate[k] += grid.at(r, c)[k];
    }
    for (double& v : ev.aggregate) v /= static_cast<double>(ev.selected.size());
    return ev;
}

inline double aggregate_norm(const VisualEvidence& ev) {
    double acc = 0.0;
    for (double v : ev.aggregate) acc += v * v;
    return std::sqrt(acc);
}

// The per-object fused record: visual evidence, 3D centroid, per-axis shape
// statistics, and the observation step. object_id is the graph identity
// (rewritten on association); source_id keeps the provenance mask key.
struct StfToken {
    std::string object_id;
    std::string source_id;
    std::string descriptor;
    VisualEvidence evidence;
    Vec3 centroid;
    ShapeVector shape;
    int t = 0;
};

inline StfToken build_token(const std::string& object_id, const std::string& descriptor,
                            const Mask& mask, const DepthGrid& depth,
                            const CameraModel& cam, const PatchFeatureGrid& grid,
                            int t, const Config& cfg) {
    StfToken tok;
    tok.object_id = object_id;
    tok.source_id = object_id;
    tok.descriptor = descriptor;
    tok.t = t;
    PointCloud cloud = back_project(mask, depth, cam);  // EmptyRegion propagates
    tok.centroid = median_centroid(cloud);
    tok.shape = shape_vector(cloud);
    tok.evidence = select_patches(grid, mask, cfg.iou_threshold);
    return tok;
}

// Degraded-grounding variant: centroid from the 2D mask bounding-box center
// lifted at one fixed depth, shape from pixel extents scaled at that same
// depth. The visual evidence path is untouched; only the geometry is blinded.
inline StfToken build_token_degraded(const std::string& object_id,
                                     const std::string& descriptor, const Mask& mask,
                                     const CameraModel& cam, const PatchFeatureGrid& grid,
                                     int t, const Config& cfg) {
    int u_min = mask.width, u_max = -1, v_min = mask.height, v_max = -1;
    for (int v = 0; v < mask.height; ++v) {
        for (int u = 0; u < mask.width; ++u) {
            if (!mask.at(u, v)) continue;
            u_min = std::min(u_min, u);
            u_max = std::max(u_max, u);
            v_min = std::min(v_min, v);
            v_max = std::max(v_max, v);
        }
    }
    if (u_max < 0) throw EmptyRegion("degraded token: empty mask");

    double naive_z = cam.translation.norm();  // fixed depth prior: camera to origin
    double cu = (u_min + u_max) / 2.0;
    double cv = (v_min + v_max) / 2.0;
    Vec3 p_cam{(cu - cam.cx) * naive_z / cam.fx, (cv - cam.cy) * naive_z / cam.fy, naive_z};
    if (cam.projection == Projection::orthographic) {
        p_cam = {(cu - cam.cx) / cam.fx, (cv - cam.cy) / cam.fy, naive_z};
    }

    StfToken tok;
    tok.object_id = object_id;
    tok.source_id = object_id;
    tok.descriptor = descriptor;
    tok.t = t;
    tok.centroid = cam.camera_to_world(p_cam);
    double ext_x = (u_max - u_min + 1) * naive_z / cam.fx;
    double ext_y = (v_max - v_min + 1) * naive_z / cam.fy;
    double ext[3] = {ext_x, ext_y, ext_y};
    for (int a = 0; a < 3; ++a) {
        AxisStats& st = tok.shape.axis(a);
        st.mean = tok.centroid[a];
        st.sigma = ext[a] / 4.0;
        st.min = st.mean - ext[a] / 2.0;
        st.max = st.mean + ext[a] / 2.0;
    }
    tok.evidence = select_patches(grid, mask, cfg.iou_threshold);
    return tok;
}

// One token per visibly masked object, in mask-key order. Fully occluded
// objects (empty mask) simply produce no token this step.
inline std::vector<StfToken> perceive(const Observation& obs, const Config& cfg) {
    PatchFeatureGrid grid = build_patch_feature_grid(obs.rgb, cfg.grid_n);
    std::vector<StfToken> tokens;
    for (const auto& [id, mask] : obs.masks) {
        if (mask.empty_region()) continue;
        auto it = obs.descriptors.find(id);
        std::string desc = it != obs.descriptors.end() ? it->second : id;
        try {
            if (cfg.disable_stf_geometry) {
                tokens.push_back(
                    build_token_degraded(id, desc, mask, obs.camera, grid, obs.step, cfg));
            } else {
                tokens.push_back(build_token(id, desc, mask, obs.depth, obs.camera, grid,
                                             obs.step, cfg));
            }
        } catch (const EmptyRegion&) {
            // masked pixels without valid depth: treat as not observed
        }
    }
    return tokens;
}

// Line-oriented text rendering, versioned header, fixed decimal precision.
// Grammar (one field per line):
//   stf/1
//   object: <id>
//   descriptor: <text>
//   t: <step>
//   centroid: <x> <y> <z>
//   shape_x: <mean> <sigma> <min> <max>     (same for shape_y, shape_z)
//   evidence: patches=<count> norm=<aggregate norm> fallback=<0|1>
inline std::string serialize_token(const StfToken& tok, int precision) {
    std::string out = "stf/1\n";
    out += "object: " + tok.object_id + "\n";
    out += "descriptor: " + tok.descriptor + "\n";
    out += "t: " + std::to_string(tok.t) + "\n";
    out += "centroid: " + fmt_fixed(tok.centroid.x, precision) + " " +
           fmt_fixed(tok.centroid.y, precision) + " " +
           fmt_fixed(tok.centroid.z, precision) + "\n";
    const char* names[3] = {"shape_x", "shape_y", "shape_z"};
    for (int a = 0; a < 3; ++a) {
        const AxisStats& st = tok.shape.axis(a);
        out += std::string(names[a]) + ": " + fmt_fixed(st.mean, precision) + " " +
               fmt_fixed(st.sigma, precision) + " " + fmt_fixed(st.min, precision) + " " +
               fmt_fixed(st.max, precision) + "\n";
    }
    out += "evidence: patches=" + std::to_string(tok.evidence.selected.size()) +
           " norm=" + fmt_fixed(aggregate_norm(tok.evidence), precision) +
           " fallback=" + (tok.evidence.fallback ? "1" : "0") + "\n";
    return out;
}

// JSON form used by graph snapshots and episode records. Evidence keeps only
// its summary; the geometric fields carry full double precision so replay is
// bit-exact.
inline nlohmann::json token_to_json(const StfToken& tok) {
    nlohmann::json j;
    j["object"] = tok.object_id;
    j["source"] = tok.source_id;
    j["descriptor"] = tok.descriptor;
    j["t"] = tok.t;
    j["centroid"] = {tok.centroid.x, tok.centroid.y, tok.centroid.z};
    const char* names[3] = {"x", "y", "z"};
    for (int a = 0; a < 3; ++a) {
        const AxisStats& st = tok.shape.axis(a);
        j["shape"][names[a]] = {st.mean, st.sigma, st.min, st.max};
    }
    j["evidence"] = {{"patches", tok.evidence.selected.size()},
                     {"aggregate", tok.evidence.aggregate},
                     {"fallback", tok.evidence.fallback}};
    return j;
}

inline StfToken token_from_json(const nlohmann::json& j) {
    StfToken tok;
    tok.object_id = j.at("object").get<std::string>();
    tok.source_id = j.at("source").get<std::string>();
    tok.descriptor = j.at("descriptor").get<std::string>();
    tok.t = j.at("t").get<int>();
    tok.centroid = {j.at("centroid")[0].get<double>(), j.at("centroid")[1].get<double>(),
                    j.at("centroid")[2].get<double>()};
    const char* names[3] = {"x", "y", "z"};
    for (int a = 0; a < 3; ++a) {
        const auto& s = j.at("shape").at(names[a]);
        AxisStats& st = tok.shape.axis(a);
        st.mean = s[0].get<double>();
        st.sigma = s[1].get<double>();
        st.min = s[2].get<double>();
        st.max = s[3].get<double>();
    }
    const auto& ev = j.at("evidence");
    tok.evidence.fallback = ev.at("fallback").get<bool>();
    tok.evidence.aggregate = ev.at("aggregate").get<std::vector<double>>();
    tok.evidence.selected.resize(ev.at("patches").get<std::size_t>());
    return tok;
}

}  // namespace stg
