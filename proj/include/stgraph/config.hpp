#pragma once

#include <cstdint>
#include <string>

namespace stg {

// Every tunable in one place. Defaults are the pinned values used by the
// acceptance suite; the CLI only exposes the handful that are meant to vary.
struct Config {
    // --- token extraction ---
    int grid_n = 16;                   // patch grid is grid_n x grid_n
    double iou_threshold = 0.5;        // patch kept if |mask∩patch|/|patch| > threshold
    int serialize_precision = 4;       // decimals in text serializations

    // --- scene graph ---
    int window_k = 3;                  // sliding token window per node
    double assoc_distance = 0.10;      // m, association gate
    double move_epsilon = 0.01;        // m, displacement below this is jitter
    double occluder_expand = 0.02;     // m, footprint expansion when attributing occlusion
    double near_threshold = 0.10;      // m, "near" relation cutoff
    double dir_epsilon = 0.005;        // m, minimum offset to assert a directional relation
    double support_gap_max = 0.02;     // m, max vertical gap for supporting/supported_by
    int recent_events = 20;            // events rendered into prompts

    // --- planning / execution ---
    double approach_height = 0.02;     // m, grasp point above the top face
    double grasp_radius = 0.03;        // m, grasp succeeds within this of the true handle
    double place_tolerance = 0.02;     // m, position tolerance for goal satisfaction
    int max_replans = 3;               // verification failures tolerated per step
    double hover_lift = 0.30;          // m, held objects hover this far above pre-grasp pose
    double workspace_half_xy = 0.45;   // m, reachable half-width around the table center
    double workspace_max_z = 0.60;     // m, reachable ceiling
    double parking_row_y = -0.28;      // m, row where uncover sets occluders down
    double parking_span_x = 0.33;      // m, parking slots cover [-span, +span]
    double parking_step_x = 0.11;      // m, spacing between parking slots
    double parking_clearance = 0.09;   // m, min xy distance from a slot to any object

    // --- simulator ---
    double stability_fraction = 0.5;   // min supported footprint fraction before toppling
    double box_epsilon = 1e-6;         // slab-test tolerance
    double penetration_epsilon = 1e-6; // m, overlap beyond this counts as interpenetration
    double settle_epsilon = 1e-6;      // m, contact snap tolerance
    double depth_noise_sigma = 0.0;    // m, gaussian depth noise (0 = off)
    std::uint64_t seed = 0;            // jitter + noise seed

    // --- rendering ---
    int image_width = 640;
    int image_height = 480;

    // --- remote planner ---
    int remote_retries = 2;            // after the first attempt
    int remote_timeout_ms = 30000;
    std::string endpoint_url;          // empty = not configured
    std::string api_token;
    std::string model = "planner-1";

    // --- ablations ---
    bool disable_stf_geometry = false; // degrade tokens to 2D bbox + fixed depth
    bool disable_cstg_memory = false;  // rebuild the graph from scratch every step
};

}  // namespace stg
