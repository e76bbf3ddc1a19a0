#pragma once

#include <map>
#include <string>

#include "stgraph/geometry.hpp"
#include "stgraph/image.hpp"
#include "stgraph/util.hpp"

namespace stg {

// One sensor frame: rendered color, metric depth, ground-truth instance masks
// (occlusion-aware, pairwise disjoint), and the camera that produced them.
// Descriptors ride along keyed by the same ids so perception needs no side
// channel to the simulator.
struct Observation {
    int step = 0;
    RgbImage rgb;
    DepthGrid depth;
    std::map<std::string, Mask> masks;
    std::map<std::string, std::string> descriptors;
    CameraModel camera;
};

// Stable digest over the frame's pixel/depth content, recorded per step in
// episode logs so replay can prove it saw the same inputs.
inline std::string observation_digest(const Observation& obs) {
    std::uint64_t h = fnv1a64(obs.rgb.pixels.data(), obs.rgb.pixels.size());
    h = fnv1a64(obs.depth.depth.data(), obs.depth.depth.size() * sizeof(double), h);
    h = fnv1a64(obs.depth.valid.data(), obs.depth.valid.size(), h);
    for (const auto& [id, mask] : obs.masks) {
        h = fnv1a64(id, h);
        h = fnv1a64(mask.data.data(), mask.data.size(), h);
    }
    std::int64_t step = obs.step;
    h = fnv1a64(&step, sizeof(step), h);
    return hex64(h);
}

}  // namespace stg
