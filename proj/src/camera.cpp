#include "triplet/camera.hpp"

#include <cmath>

namespace triplet {

Camera Camera::scaled(double s) const {
  Camera c = *this;
  c.width = std::max(1, static_cast<int>(std::lround(width * s)));
  c.height = std::max(1, static_cast<int>(std::lround(height * s)));
  const double sx = static_cast<double>(c.width) / width;
  const double sy = static_cast<double>(c.height) / height;
  c.fx = fx * sx;
  c.fy = fy * sy;
  c.cx = cx * sx;
  c.cy = cy * sy;
  return c;
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                       double focal_px) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = focal_px;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  const Vec3 fwd = normalize(target - eye);       // camera +z
  const Vec3 right = normalize(cross(fwd, up));   // camera +x
  const Vec3 down = cross(fwd, right);            // camera +y
  for (int i = 0; i < 3; ++i) {
    cam.r_wc.m[i][0] = right[i];
    cam.r_wc.m[i][1] = down[i];
    cam.r_wc.m[i][2] = fwd[i];
  }
  cam.t_wc = eye;
  return cam;
}

Projection project_point(const Camera& cam, const Vec3& p_world) {
  Projection out;
  const Vec3 q = cam.to_camera(p_world);
  out.depth = q.z;
  if (!(q.z >= cam.near && q.z <= cam.far)) return out;
  out.screen = {cam.fx * q.x / q.z + cam.cx, cam.fy * q.y / q.z + cam.cy};
  out.valid = true;
  return out;
}

Vec3 project_backward(const Camera& cam, const Vec3& p_world, const Vec2& d_screen,
                      double d_depth) {
  const Vec3 q = cam.to_camera(p_world);
  const double inv_z = 1.0 / q.z;
  const Vec3 dq{cam.fx * inv_z * d_screen.x, cam.fy * inv_z * d_screen.y,
                -(cam.fx * q.x * d_screen.x + cam.fy * q.y * d_screen.y) * inv_z * inv_z +
                    d_depth};
  return cam.r_cw().transposed() * dq;  // dq/dp = R_cw
}

}  // namespace triplet
