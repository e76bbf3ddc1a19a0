#pragma once

// Deterministic tabletop world: axis-aligned box objects on a bounded table,
// kinematic pick/place with settle, topple, and knock rules, cup-style covers
// with an open bottom, and an analytic RGB-D + instance-mask renderer. Serves
// as ground truth for the whole pipeline.
//
// Approximations are deliberate: prisms, cylinders, and flags render as their
// bounding boxes, and a "cup" is a box with a hollow interior open at the
// bottom (wall thickness below). Placement teleports objects; there is no
// contact dynamics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "stgraph/config.hpp"
#include "stgraph/directive.hpp"
#include "stgraph/errors.hpp"
#include "stgraph/geometry.hpp"
#include "stgraph/image.hpp"
#include "stgraph/observation.hpp"
#include "stgraph/util.hpp"

namespace stg {

enum class ObjectKind { block, cup, flag, cylinder, prism };

inline const char* object_kind_name(ObjectKind k) {
    switch (k) {
        case ObjectKind::block: return "block";
        case ObjectKind::cup: return "cup";
        case ObjectKind::flag: return "flag";
        case ObjectKind::cylinder: return "cylinder";
        case ObjectKind::prism: return "prism";
    }
    return "block";
}

inline ObjectKind object_kind_from_name(const std::string& name) {
    if (name == "block") return ObjectKind::block;
    if (name == "cup") return ObjectKind::cup;
    if (name == "flag") return ObjectKind::flag;
    if (name == "cylinder") return ObjectKind::cylinder;
    if (name == "prism") return ObjectKind::prism;
    throw ConfigError("unknown object kind '" + name + "'");
}

// Cup interiors are open at the bottom; walls and ceiling share one
// thickness.
inline constexpr double kCupWall = 0.005;

struct SimObject {
    std::string object_id;
    std::string descriptor;   // color + shape text, e.g. "blue cube"
    ObjectKind kind = ObjectKind::block;
    Vec3 half_extents;
    Pose6DoF pose;            // position is the box center

    double bottom() const { return pose.position.z - half_extents.z; }
    double top() const { return pose.position.z + half_extents.z; }
    double lo(int axis) const { return pose.position[axis] - half_extents[axis]; }
    double hi(int axis) const { return pose.position[axis] + half_extents[axis]; }
    // usable cavity height of a cup, measured up from the rim
    double interior_height() const { return 2.0 * half_extents.z - kCupWall; }
};

// Fixed palette keyed on the descriptor's color word; unknown words get a
// deterministic hash-derived color so every object stays distinguishable.
inline std::array<std::uint8_t, 3> object_color(const std::string& descriptor) {
    std::string word = descriptor.substr(0, descriptor.find(' '));
    static const std::map<std::string, std::array<std::uint8_t, 3>> palette = {
        {"red", {200, 45, 40}},    {"green", {45, 160, 70}},
        {"blue", {50, 90, 200}},   {"yellow", {220, 200, 50}},
        {"purple", {150, 60, 180}}, {"orange", {230, 140, 40}},
        {"brown", {140, 90, 50}},  {"gray", {128, 128, 128}},
        {"white", {235, 235, 235}}, {"black", {45, 45, 45}},
        {"pink", {230, 130, 170}}, {"cyan", {70, 200, 210}},
    };
    auto it = palette.find(word);
    if (it != palette.end()) return it->second;
    std::uint64_t h = fnv1a64(descriptor);
    return {static_cast<std::uint8_t>(64 + (h & 0x7f)),
            static_cast<std::uint8_t>(64 + ((h >> 8) & 0x7f)),
            static_cast<std::uint8_t>(64 + ((h >> 16) & 0x7f))};
}

struct WorldState {
    std::map<std::string, SimObject> objects;
    std::map<std::string, std::string> support;  // id -> supporter id or "table"
    std::optional<std::string> held;             // id in the gripper, hovering
    int step = 0;
    std::uint64_t rng_seed = 0;
};

// ---------------------------------------------------------------------------
// geometry helpers
// ---------------------------------------------------------------------------

namespace detail {

inline double axis_overlap(const SimObject& a, const SimObject& b, int axis) {
    return std::min(a.hi(axis), b.hi(axis)) - std::max(a.lo(axis), b.lo(axis));
}

inline bool footprints_overlap(const SimObject& a, const SimObject& b) {
    return axis_overlap(a, b, 0) > 1e-9 && axis_overlap(a, b, 1) > 1e-9;
}

// True when `inner`'s footprint fits horizontally inside `cup`'s cavity.
inline bool fits_in_cavity(const SimObject& inner, const SimObject& cup) {
    if (cup.kind != ObjectKind::cup) return false;
    for (int axis = 0; axis < 2; ++axis) {
        double cavity_half = cup.half_extents[axis] - kCupWall;
        if (std::abs(inner.pose.position[axis] - cup.pose.position[axis]) +
                inner.half_extents[axis] >
            cavity_half + 1e-9) {
            return false;
        }
    }
    return true;
}

// True when `inner` is entirely inside `cup`'s cavity volume.
inline bool contained_in_cavity(const SimObject& inner, const SimObject& cup) {
    if (!fits_in_cavity(inner, cup)) return false;
    double ceiling = cup.top() - kCupWall;
    return inner.bottom() >= cup.bottom() - 1e-9 && inner.top() <= ceiling + 1e-9;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// settling
// ---------------------------------------------------------------------------

struct RestSurface {
    double bottom_z = 0.0;            // where the object's base ends up
    std::string supporter = "table";  // lex-smallest winner
    bool ceiling_contact = false;     // cup hanging on a contained object's top
    double support_fraction = 1.0;    // base area covered by face supporters
};

namespace detail {

// Where object `id` comes to rest if released at its current xy. Surfaces
// more than 5 mm above the current base are unreachable (objects fall, they
// do not climb); the small allowance absorbs contact snapping.
inline RestSurface rest_surface(const WorldState& w, const std::string& id) {
    const SimObject& obj = w.objects.at(id);
    double reach_limit = obj.bottom() + 0.005;

    // the table is always reachable, so start from it
    RestSurface rest;
    rest.bottom_z = 0.0;
    rest.supporter = "table";

    for (const auto& [oid, other] : w.objects) {
        if (oid == id) continue;
        if (w.held && *w.held == oid) continue;
        if (!footprints_overlap(obj, other)) continue;
        double surface;
        bool ceiling;
        if (obj.kind == ObjectKind::cup && fits_in_cavity(other, obj)) {
            // the cup descends around `other`; its ceiling may catch on top
            surface = other.top() - obj.interior_height();
            ceiling = true;
        } else {
            surface = other.top();
            ceiling = false;
        }
        if (surface > reach_limit + 1e-9) continue;
        if (surface > rest.bottom_z + 1e-9) {
            rest.bottom_z = surface;
            rest.supporter = oid;
            rest.ceiling_contact = ceiling;
        } else if (std::abs(surface - rest.bottom_z) <= 1e-9 && oid < rest.supporter) {
            rest.supporter = oid;
            rest.ceiling_contact = ceiling;
        }
    }

    // fraction of the base resting on same-height face supporters (a beam
    // across two pillars counts both)
    if (rest.supporter != "table" && !rest.ceiling_contact) {
        double area = 0.0;
        for (const auto& [oid, other] : w.objects) {
            if (oid == id) continue;
            if (w.held && *w.held == oid) continue;
            if (other.kind == ObjectKind::cup && fits_in_cavity(obj, other)) continue;
            if (std::abs(other.top() - rest.bottom_z) > 1e-9) continue;
            if (!footprints_overlap(obj, other)) continue;
            area += axis_overlap(obj, other, 0) * axis_overlap(obj, other, 1);
        }
        double base = 4.0 * obj.half_extents.x * obj.half_extents.y;
        rest.support_fraction = base > 0.0 ? std::min(1.0, area / base) : 1.0;
    }
    return rest;
}

}  // namespace detail

// Drops every unsupported object to its rest surface, bottom-up, until the
// world stops changing. Idempotent on a settled world.
inline WorldState settle(WorldState w) {
    for (int iter = 0; iter < 32; ++iter) {
        std::vector<std::string> order;
        for (const auto& [id, obj] : w.objects) {
            if (w.held && *w.held == id) continue;
            order.push_back(id);
        }
        std::sort(order.begin(), order.end(), [&w](const std::string& a,
                                                   const std::string& b) {
            double ba = w.objects.at(a).bottom(), bb = w.objects.at(b).bottom();
            return ba != bb ? ba < bb : a < b;
        });
        bool changed = false;
        for (const std::string& id : order) {
            RestSurface rest = detail::rest_surface(w, id);
            SimObject& obj = w.objects.at(id);
            double new_z = rest.bottom_z + obj.half_extents.z;
            if (std::abs(new_z - obj.pose.position.z) > 1e-12) {
                obj.pose.position.z = new_z;
                changed = true;
            }
            w.support[id] = rest.supporter;
        }
        if (!changed) break;
    }
    return w;
}

// ---------------------------------------------------------------------------
// world validation (test and debug aid)
// ---------------------------------------------------------------------------

// Checks the structural invariants: acyclic support, resting contact (with
// the cup ceiling-contact exception), no solid interpenetration (cavity
// containment is the allowed overlap), and at most one object fully inside
// any cup.
inline std::vector<std::string> validate_world(const WorldState& w) {
    std::vector<std::string> problems;

    for (const auto& [id, sup] : w.support) {
        std::string cur = id;
        std::set<std::string> seen;
        while (true) {
            if (!seen.insert(cur).second) {
                problems.push_back("support cycle through '" + id + "'");
                break;
            }
            auto it = w.support.find(cur);
            if (it == w.support.end() || it->second == "table") break;
            cur = it->second;
        }
    }

    for (const auto& [id, obj] : w.objects) {
        if (obj.half_extents.x <= 0 || obj.half_extents.y <= 0 || obj.half_extents.z <= 0) {
            problems.push_back("'" + id + "' has non-positive extents");
        }
        if (w.held && *w.held == id) continue;
        auto it = w.support.find(id);
        if (it == w.support.end()) {
            problems.push_back("'" + id + "' missing from the support map");
            continue;
        }
        if (it->second == "table") {
            if (std::abs(obj.bottom()) > 1e-6) {
                problems.push_back("'" + id + "' floats above the table");
            }
        } else {
            auto sup = w.objects.find(it->second);
            if (sup == w.objects.end()) {
                problems.push_back("'" + id + "' supported by unknown '" + it->second + "'");
                continue;
            }
            bool face = std::abs(obj.bottom() - sup->second.top()) <= 1e-6;
            bool ceiling = obj.kind == ObjectKind::cup &&
                           std::abs(obj.bottom() + obj.interior_height() -
                                    sup->second.top()) <= 1e-6;
            if (!face && !ceiling) {
                problems.push_back("'" + id + "' does not rest on '" + it->second + "'");
            }
        }
    }

    std::vector<const SimObject*> objs;
    for (const auto& [id, obj] : w.objects) objs.push_back(&obj);
    for (std::size_t i = 0; i < objs.size(); ++i) {
        for (std::size_t j = i + 1; j < objs.size(); ++j) {
            const SimObject& a = *objs[i];
            const SimObject& b = *objs[j];
            bool overlap = true;
            for (int axis = 0; axis < 3 && overlap; ++axis) {
                double lo = std::max(a.lo(axis), b.lo(axis));
                double hi = std::min(a.hi(axis), b.hi(axis));
                if (hi - lo <= 1e-6) overlap = false;
            }
            if (!overlap) continue;
            bool allowed = (a.kind == ObjectKind::cup && detail::fits_in_cavity(b, a) &&
                            b.top() <= a.top() - kCupWall + 1e-9) ||
                           (b.kind == ObjectKind::cup && detail::fits_in_cavity(a, b) &&
                            a.top() <= b.top() - kCupWall + 1e-9);
            if (!allowed) {
                problems.push_back("'" + a.object_id + "' interpenetrates '" +
                                   b.object_id + "'");
            }
        }
    }

    for (const auto& [id, cup] : w.objects) {
        if (cup.kind != ObjectKind::cup) continue;
        int inside = 0;
        for (const auto& [oid, other] : w.objects) {
            if (oid != id && detail::contained_in_cavity(other, cup)) ++inside;
        }
        if (inside > 1) {
            problems.push_back("cup '" + id + "' contains " + std::to_string(inside) +
                               " objects");
        }
    }
    return problems;
}

// ---------------------------------------------------------------------------
// actions
// ---------------------------------------------------------------------------

enum class Outcome { ok, grasp_miss, toppled };

inline const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::ok: return "ok";
        case Outcome::grasp_miss: return "grasp_miss";
        case Outcome::toppled: return "toppled";
    }
    return "ok";
}

struct ApplyResult {
    WorldState world;
    Outcome outcome = Outcome::ok;
    std::string detail;
};

namespace detail {

// Pushes every non-held object that solidly overlaps `subject` out along its
// minimum-penetration horizontal axis, chaining until the world is clear.
inline void knock_pass(WorldState& w, const std::string& subject) {
    for (int iter = 0; iter < 8; ++iter) {
        bool any = false;
        const SimObject& sub = w.objects.at(subject);
        for (auto& [oid, other] : w.objects) {
            if (oid == subject) continue;
            if (w.held && *w.held == oid) continue;
            // penetration depth per axis: how far `other` must move for the
            // faces to touch exactly
            double pen[3];
            bool overlap = true;
            for (int axis = 0; axis < 3 && overlap; ++axis) {
                pen[axis] = sub.half_extents[axis] + other.half_extents[axis] -
                            std::abs(other.pose.position[axis] - sub.pose.position[axis]);
                if (pen[axis] <= 1e-9) overlap = false;
            }
            if (!overlap) continue;
            if (sub.kind == ObjectKind::cup && fits_in_cavity(other, sub)) continue;
            if (other.kind == ObjectKind::cup && fits_in_cavity(sub, other)) continue;
            int axis = pen[0] <= pen[1] ? 0 : 1;
            double delta = other.pose.position[axis] - sub.pose.position[axis];
            double dir = delta > 0.0 ? 1.0 : delta < 0.0 ? -1.0 : 1.0;
            if (axis == 0) {
                other.pose.position.x += dir * pen[0];
            } else {
                other.pose.position.y += dir * pen[1];
            }
            any = true;
        }
        if (!any) break;
    }
}

}  // namespace detail

// Executes one grasp(+release) action. Grasping requires the commanded grasp
// point within grasp_radius of the subject's true top-face center unless the
// subject is already held. Pick lifts the subject into a hover; placing
// teleports it to the release point, shoves bystanders out of solid overlap,
// settles everything, and topples the subject off an insufficient support.
inline ApplyResult apply_action(const WorldState& w, const Pose6DoFAction& action,
                                const std::string& subject_id, const Config& cfg) {
    if (!w.objects.count(subject_id)) {
        throw UnknownObject("apply_action: unknown subject '" + subject_id + "'");
    }
    ApplyResult res;
    res.world = w;
    res.world.step = w.step + 1;

    if (w.held && *w.held != subject_id) {
        res.outcome = Outcome::grasp_miss;
        res.detail = "gripper already holds '" + *w.held + "'";
        return res;
    }
    if (!w.held) {
        const SimObject& sub = w.objects.at(subject_id);
        Vec3 top_center{sub.pose.position.x, sub.pose.position.y, sub.top()};
        double err = (action.grasp.position - top_center).norm();
        if (err > cfg.grasp_radius) {
            res.outcome = Outcome::grasp_miss;
            res.detail = "grasp " + fmt_fixed(err, 4) + " m from the top-face center";
            return res;
        }
    }

    if (!action.release) {
        if (w.held) return res;  // already hovering, nothing to do
        // pick: hover the subject above its pre-grasp pose
        SimObject& sub = res.world.objects.at(subject_id);
        sub.pose.position.z += cfg.hover_lift;
        res.world.held = subject_id;
        res.world.support.erase(subject_id);
        res.world = settle(std::move(res.world));  // dependents lose support
        return res;
    }

    // place
    res.world.held.reset();
    res.world.objects.at(subject_id).pose.position = action.release->position;
    res.world.support.erase(subject_id);
    detail::knock_pass(res.world, subject_id);
    res.world = settle(std::move(res.world));

    RestSurface rest = detail::rest_surface(res.world, subject_id);
    if (rest.supporter != "table" && !rest.ceiling_contact &&
        rest.support_fraction < cfg.stability_fraction) {
        // topple: slide off beside the supporter along the dominant offset axis
        SimObject& sub = res.world.objects.at(subject_id);
        const SimObject& sup = res.world.objects.at(rest.supporter);
        double dx = sub.pose.position.x - sup.pose.position.x;
        double dy = sub.pose.position.y - sup.pose.position.y;
        int axis = std::abs(dx) >= std::abs(dy) ? 0 : 1;
        double d = axis == 0 ? dx : dy;
        double dir = d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 1.0;
        double shift = sup.half_extents[axis] + sub.half_extents[axis] + 0.005;
        if (axis == 0) {
            sub.pose.position.x = sup.pose.position.x + dir * shift;
        } else {
            sub.pose.position.y = sup.pose.position.y + dir * shift;
        }
        detail::knock_pass(res.world, subject_id);
        res.world = settle(std::move(res.world));
        res.outcome = Outcome::toppled;
        res.detail = "support fraction " + fmt_fixed(rest.support_fraction, 2) +
                     " below " + fmt_fixed(cfg.stability_fraction, 2);
        return res;
    }
    return res;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

inline constexpr double kTableHalf = 0.45;

// The fixed desk camera: in front of and above the table, looking slightly
// down at it. The focal length scales with the image width so the field of
// view stays the same at every resolution, and is short enough that an object
// hovering at pick height over a four-block tower is still in frame.
inline CameraModel desk_camera(const Config& cfg) {
    double f = 450.0 * cfg.image_width / 640.0;
    return CameraModel::look_at({0.0, -0.85, 0.55}, {0.0, 0.0, 0.05},
                                Projection::pinhole, f, f,
                                cfg.image_width / 2.0, cfg.image_height / 2.0,
                                cfg.image_width, cfg.image_height);
}

// Analytic ray-cast of the axis-aligned box world. Depth stores the midpoint
// of each ray's chord through the winning box, so back-projected mask pixels
// straddle the object's central plane and their median recovers the true
// centroid up to pixel quantization. The table renders as a bounded plane
// with valid depth and no mask; sky pixels have invalid depth.
inline Observation render(const WorldState& w, const Config& cfg) {
    Observation obs;
    obs.step = w.step;
    obs.camera = desk_camera(cfg);
    obs.rgb = RgbImage(cfg.image_width, cfg.image_height, 168, 194, 218);
    obs.depth = DepthGrid(cfg.image_width, cfg.image_height);

    struct Body {
        const SimObject* obj;
        std::array<std::uint8_t, 3> color;
    };
    std::vector<Body> bodies;
    for (const auto& [id, obj] : w.objects) {
        bodies.push_back({&obj, object_color(obj.descriptor)});
        obs.masks.emplace(id, Mask(cfg.image_width, cfg.image_height));
        obs.descriptors[id] = obj.descriptor;
    }

    const Vec3 eye = obs.camera.translation;
    std::mt19937_64 noise_rng(w.rng_seed ^
                              (static_cast<std::uint64_t>(w.step) * 0x9e3779b97f4a7c15ULL));
    const bool noisy = cfg.depth_noise_sigma > 0.0;

    for (int v = 0; v < cfg.image_height; ++v) {
        for (int u = 0; u < cfg.image_width; ++u) {
            // Direction with camera-frame z = 1, so the ray parameter equals
            // depth. Rays go through integer pixel coordinates, the same
            // lattice back_project lifts, so depth round-trips exactly.
            Vec3 dir = obs.camera.rotation.apply(
                {(u - obs.camera.cx) / obs.camera.fx,
                 (v - obs.camera.cy) / obs.camera.fy, 1.0});

            const Body* hit = nullptr;
            double best_t0 = 0.0, best_t1 = 0.0;
            int best_axis = 2;
            for (const Body& b : bodies) {
                double t0 = 0.0, t1 = 1e30;
                int enter_axis = 2;
                bool miss = false;
                for (int axis = 0; axis < 3 && !miss; ++axis) {
                    double o = eye[axis], d = dir[axis];
                    double lo = b.obj->lo(axis), hi = b.obj->hi(axis);
                    if (std::abs(d) < 1e-12) {
                        if (o < lo || o > hi) miss = true;
                        continue;
                    }
                    double ta = (lo - o) / d, tb = (hi - o) / d;
                    if (ta > tb) std::swap(ta, tb);
                    if (ta > t0) {
                        t0 = ta;
                        enter_axis = axis;
                    }
                    t1 = std::min(t1, tb);
                    if (t0 > t1) miss = true;
                }
                if (miss || t1 <= 1e-9) continue;
                if (!hit || t0 < best_t0) {
                    hit = &b;
                    best_t0 = t0;
                    best_t1 = t1;
                    best_axis = enter_axis;
                }
            }

            // bounded table plane at z = 0
            double t_table = -1.0;
            if (dir.z < -1e-12) {
                double t = -eye.z / dir.z;
                Vec3 p = eye + dir * t;
                if (std::abs(p.x) <= kTableHalf && std::abs(p.y) <= kTableHalf) {
                    t_table = t;
                }
            }

            std::size_t px = (static_cast<std::size_t>(v) * cfg.image_width + u) * 3;
            if (hit && (t_table < 0.0 || best_t0 < t_table)) {
                double depth = (best_t0 + best_t1) / 2.0;
                if (noisy) depth += gaussian(noise_rng) * cfg.depth_noise_sigma;
                obs.depth.depth[static_cast<std::size_t>(v) * cfg.image_width + u] = depth;
                obs.depth.valid[static_cast<std::size_t>(v) * cfg.image_width + u] = 1;
                obs.masks.at(hit->obj->object_id).set(u, v);
                // simple face shading keeps the image legible
                double shade = best_axis == 0 ? 0.75 : best_axis == 1 ? 0.9 : 1.0;
                obs.rgb.pixels[px] = static_cast<std::uint8_t>(hit->color[0] * shade);
                obs.rgb.pixels[px + 1] = static_cast<std::uint8_t>(hit->color[1] * shade);
                obs.rgb.pixels[px + 2] = static_cast<std::uint8_t>(hit->color[2] * shade);
            } else if (t_table >= 0.0) {
                double depth = t_table;
                if (noisy) depth += gaussian(noise_rng) * cfg.depth_noise_sigma;
                obs.depth.depth[static_cast<std::size_t>(v) * cfg.image_width + u] = depth;
                obs.depth.valid[static_cast<std::size_t>(v) * cfg.image_width + u] = 1;
                obs.rgb.pixels[px] = 96;
                obs.rgb.pixels[px + 1] = 78;
                obs.rgb.pixels[px + 2] = 58;
            }
        }
    }

    // drop empty masks so totally occluded objects are genuinely unobserved
    for (auto it = obs.masks.begin(); it != obs.masks.end();) {
        if (it->second.count() == 0) {
            obs.descriptors.erase(it->first);
            it = obs.masks.erase(it);
        } else {
            ++it;
        }
    }
    return obs;
}

// ---------------------------------------------------------------------------
// tasks and success
// ---------------------------------------------------------------------------

enum class TaskCategory { build, disassemble, hide_restore, cover };

inline const char* task_category_name(TaskCategory c) {
    switch (c) {
        case TaskCategory::build: return "build";
        case TaskCategory::disassemble: return "disassemble";
        case TaskCategory::hide_restore: return "hide_restore";
        case TaskCategory::cover: return "cover";
    }
    return "build";
}

inline TaskCategory task_category_from_name(const std::string& name) {
    if (name == "build") return TaskCategory::build;
    if (name == "disassemble") return TaskCategory::disassemble;
    if (name == "hide_restore") return TaskCategory::hide_restore;
    if (name == "cover") return TaskCategory::cover;
    throw ConfigError("unknown task category '" + name + "'");
}

struct TaskSpec {
    std::string name;
    TaskCategory category = TaskCategory::build;
    std::vector<SimObject> objects;  // initial scene, already settled
    GoalSpec goal;
    int horizon = 12;
    // category-specific evaluation hooks
    std::string hidden_descriptor;   // hide_restore: must vanish mid-episode
    std::string covered_descriptor;  // cover: block that must end covered
    std::string cover_descriptor;    // cover: the covering box
};

// Phase evidence accumulated by the episode runner from ground truth;
// success for hide/disassemble tasks requires the intermediate phase, not
// just the final pose.
struct EpisodePhases {
    bool hide_reached = false;
    bool disassembled_reached = false;
};

inline WorldState world_from_task(const TaskSpec& task, std::uint64_t seed) {
    WorldState w;
    w.rng_seed = seed;
    for (const SimObject& obj : task.objects) {
        w.objects[obj.object_id] = obj;
    }
    return settle(std::move(w));
}

namespace detail {

inline const SimObject* find_by_descriptor(const WorldState& w, const std::string& desc) {
    for (const auto& [id, obj] : w.objects) {
        if (obj.descriptor == desc) return &obj;
    }
    return nullptr;
}

}  // namespace detail

// True when any block rests on another block (containers are flat blocks,
// so "no block on a block" is the disassembled condition for cube towers).
inline bool any_block_stacked(const WorldState& w) {
    for (const auto& [id, sup] : w.support) {
        if (sup == "table") continue;
        auto a = w.objects.find(id);
        auto b = w.objects.find(sup);
        if (a == w.objects.end() || b == w.objects.end()) continue;
        if (a->second.kind == ObjectKind::block && b->second.kind == ObjectKind::block) {
            return true;
        }
    }
    return false;
}

inline bool check_success(const WorldState& w, const TaskSpec& task,
                          const EpisodePhases& phases, const Config& cfg) {
    switch (task.category) {
        case TaskCategory::build: {
            for (const GoalEntry& e : task.goal.goal_scene) {
                const SimObject* obj = detail::find_by_descriptor(w, e.descriptor);
                if (!obj) return false;
                if ((obj->pose.position - e.position).norm() > cfg.place_tolerance) {
                    return false;
                }
                auto sup = w.support.find(obj->object_id);
                if (sup == w.support.end()) return false;
                if (e.support == "table") {
                    if (sup->second != "table") return false;
                } else {
                    const SimObject* s = detail::find_by_descriptor(w, e.support);
                    if (!s || sup->second != s->object_id) return false;
                }
            }
            return true;
        }
        case TaskCategory::cover: {
            const SimObject* covered = detail::find_by_descriptor(w, task.covered_descriptor);
            const SimObject* cover = detail::find_by_descriptor(w, task.cover_descriptor);
            if (!covered || !cover) return false;
            for (int axis = 0; axis < 3; ++axis) {
                if (covered->lo(axis) < cover->lo(axis) - 1e-9) return false;
                if (covered->hi(axis) > cover->hi(axis) + 1e-9) return false;
            }
            return true;
        }
        case TaskCategory::hide_restore: {
            if (!phases.hide_reached) return false;
            for (const SimObject& initial : task.objects) {
                auto it = w.objects.find(initial.object_id);
                if (it == w.objects.end()) return false;
                if ((it->second.pose.position - initial.pose.position).norm() >
                    cfg.place_tolerance) {
                    return false;
                }
            }
            return true;
        }
        case TaskCategory::disassemble: {
            if (!phases.disassembled_reached) return false;
            for (const SimObject& initial : task.objects) {
                auto it = w.objects.find(initial.object_id);
                if (it == w.objects.end()) return false;
                if ((it->second.pose.position - initial.pose.position).norm() >
                    cfg.place_tolerance) {
                    return false;
                }
            }
            return true;
        }
    }
    return false;
}

// Advances the phase evidence from the current ground truth and rendered
// observation.
inline void update_phases(EpisodePhases& phases, const WorldState& w,
                          const Observation& obs, const TaskSpec& task) {
    if (task.category == TaskCategory::hide_restore && !task.hidden_descriptor.empty()) {
        const SimObject* hidden = detail::find_by_descriptor(w, task.hidden_descriptor);
        if (hidden) {
            auto it = obs.masks.find(hidden->object_id);
            if (it == obs.masks.end() || it->second.count() == 0) {
                phases.hide_reached = true;
            }
        }
    }
    if (task.category == TaskCategory::disassemble && !any_block_stacked(w)) {
        phases.disassembled_reached = true;
    }
}

// ---------------------------------------------------------------------------
// task/1 JSON
// ---------------------------------------------------------------------------

inline nlohmann::json task_to_json(const TaskSpec& task) {
    nlohmann::json j;
    j["format"] = "task/1";
    j["name"] = task.name;
    j["category"] = task_category_name(task.category);
    j["horizon"] = task.horizon;
    j["objects"] = nlohmann::json::array();
    for (const SimObject& obj : task.objects) {
        j["objects"].push_back(
            {{"id", obj.object_id},
             {"descriptor", obj.descriptor},
             {"kind", object_kind_name(obj.kind)},
             {"half_extents", {obj.half_extents.x, obj.half_extents.y, obj.half_extents.z}},
             {"position",
              {obj.pose.position.x, obj.pose.position.y, obj.pose.position.z}}});
    }
    if (task.goal.kind == GoalKind::instruction) {
        j["goal"] = {{"instruction", task.goal.instruction}};
    } else {
        nlohmann::json scene = nlohmann::json::array();
        for (const GoalEntry& e : task.goal.goal_scene) {
            scene.push_back({{"descriptor", e.descriptor},
                             {"position", {e.position.x, e.position.y, e.position.z}},
                             {"support", e.support}});
        }
        j["goal"] = {{"scene", scene}};
    }
    if (!task.hidden_descriptor.empty()) j["hidden"] = task.hidden_descriptor;
    if (!task.covered_descriptor.empty()) j["covered"] = task.covered_descriptor;
    if (!task.cover_descriptor.empty()) j["cover"] = task.cover_descriptor;
    return j;
}

inline TaskSpec task_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "task/1") {
        throw ConfigError("not a task/1 document");
    }
    TaskSpec task;
    task.name = j.at("name").get<std::string>();
    task.category = task_category_from_name(j.at("category").get<std::string>());
    task.horizon = j.at("horizon").get<int>();
    for (const auto& o : j.at("objects")) {
        SimObject obj;
        obj.object_id = o.at("id").get<std::string>();
        obj.descriptor = o.at("descriptor").get<std::string>();
        obj.kind = object_kind_from_name(o.at("kind").get<std::string>());
        auto he = o.at("half_extents");
        obj.half_extents = {he.at(0).get<double>(), he.at(1).get<double>(),
                            he.at(2).get<double>()};
        auto p = o.at("position");
        obj.pose.position = {p.at(0).get<double>(), p.at(1).get<double>(),
                             p.at(2).get<double>()};
        task.objects.push_back(obj);
    }
    const auto& goal = j.at("goal");
    if (goal.contains("instruction")) {
        task.goal = GoalSpec::from_instruction(goal.at("instruction").get<std::string>());
    } else {
        std::vector<GoalEntry> entries;
        for (const auto& e : goal.at("scene")) {
            GoalEntry entry;
            entry.descriptor = e.at("descriptor").get<std::string>();
            auto p = e.at("position");
            entry.position = {p.at(0).get<double>(), p.at(1).get<double>(),
                              p.at(2).get<double>()};
            entry.support = e.at("support").get<std::string>();
            entries.push_back(entry);
        }
        task.goal = GoalSpec::from_scene(std::move(entries));
    }
    task.hidden_descriptor = j.value("hidden", "");
    task.covered_descriptor = j.value("covered", "");
    task.cover_descriptor = j.value("cover", "");
    return task;
}

// Digest of the full ground-truth state, for determinism checks.
inline std::string world_digest(const WorldState& w) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& [id, obj] : w.objects) {
        h = fnv1a64(id, h);
        const double vals[6] = {obj.pose.position.x, obj.pose.position.y,
                                obj.pose.position.z, obj.half_extents.x,
                                obj.half_extents.y,  obj.half_extents.z};
        h = fnv1a64(vals, sizeof(vals), h);
    }
    for (const auto& [id, sup] : w.support) {
        h = fnv1a64(id, h);
        h = fnv1a64(sup, h);
    }
    h = fnv1a64(w.held ? *w.held : std::string("-"), h);
    const int step = w.step;
    h = fnv1a64(&step, sizeof(step), h);
    return hex64(h);
}

}  // namespace stg
