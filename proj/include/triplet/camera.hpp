#pragma once

#include "triplet/vec.hpp"

namespace triplet {

// Pinhole camera, OpenCV-style axes in camera space: +x right, +y down,
// +z forward. world_from_camera maps camera-space points into the world.
struct Camera {
  int width = 0, height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Mat3 r_wc = Mat3::identity();  // world-from-camera rotation
  Vec3 t_wc{};                   // camera origin in world coordinates
  double near = 0.01, far = 1000.0;

  Vec3 position() const { return t_wc; }
  Mat3 r_cw() const { return r_wc.transposed(); }
  Vec3 t_cw() const { return -(r_cw() * t_wc); }
  Vec3 to_camera(const Vec3& p_world) const { return r_cw() * p_world + t_cw(); }

  // Rescales the image plane; used by the resolution schedule.
  Camera scaled(double s) const;

  // Camera on a sphere around `target`, +z looking at it, world +z mapped up.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width,
                        int height, double focal_px);
};

struct Projection {
  Vec2 screen;
  double depth = 0.0;  // camera-space z
  bool valid = false;
};

Projection project_point(const Camera& cam, const Vec3& p_world);

// Pullback of (d screen, d depth) to a world-position gradient.
Vec3 project_backward(const Camera& cam, const Vec3& p_world, const Vec2& d_screen,
                      double d_depth);

}  // namespace triplet
