#pragma once

#include <string>
#include <vector>

#include "triplet/camera.hpp"
#include "triplet/image.hpp"

namespace triplet {

enum class Split { Train, Test };

struct DatasetFrame {
  std::string image_path;
  Camera camera;
  Split split = Split::Train;
  Image image;  // linear RGB, alpha composited over the dataset background
};

// Blender-synthetic layout: transforms_train.json / transforms_test.json with
// camera_angle_x and per-frame transform_matrix (OpenGL camera-to-world, which
// gets the y/z axis flip into this renderer's convention).
std::vector<DatasetFrame> load_dataset(const std::string& root,
                                       const Rgb& background = Rgb{1, 1, 1});

// Writes a dataset in the same layout (synthetic ground-truth generation).
void save_dataset(const std::string& root, const std::vector<DatasetFrame>& frames,
                  double camera_angle_x);

}  // namespace triplet
