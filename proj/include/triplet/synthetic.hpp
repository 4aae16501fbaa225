#pragma once

#include <vector>

#include "triplet/camera.hpp"
#include "triplet/scene.hpp"

namespace triplet {

// Subdivided icosahedron on a sphere, Connected mode, alpha 1.
TripletScene make_icosphere(int subdivisions, double radius);

// Smooth low-frequency per-vertex color pattern (ground-truth texture).
void paint_texture_bands(TripletScene& scene);

// `count` cameras on a sphere of given radius looking at the origin.
std::vector<Camera> ring_cameras(int count, double radius, int width, int height,
                                 double focal_px, double elevation_jitter = 0.35,
                                 std::uint64_t seed = 1234);

}  // namespace triplet
