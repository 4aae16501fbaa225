#include "triplet/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "triplet/errors.hpp"
#include "triplet/image_io.hpp"

namespace triplet {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// OpenGL camera axes (x right, y up, z backward) -> renderer axes
// (x right, y down, z forward): negate the 2nd and 3rd rotation columns.
Mat3 gl_to_cv(const Mat3& r_gl) {
  Mat3 r = r_gl;
  for (int i = 0; i < 3; ++i) {
    r.m[i][1] = -r.m[i][1];
    r.m[i][2] = -r.m[i][2];
  }
  return r;
}

void load_split(const std::string& root, const std::string& name, Split split, const Rgb& bg,
                std::vector<DatasetFrame>& frames) {
  const fs::path json_path = fs::path(root) / ("transforms_" + name + ".json");
  if (!fs::exists(json_path)) {
    if (split == Split::Test) return;  // test split is optional
    throw DatasetError("missing " + json_path.string());
  }
  json doc;
  try {
    std::ifstream in(json_path);
    in >> doc;
  } catch (const std::exception& e) {
    throw DatasetError("malformed json " + json_path.string() + ": " + e.what());
  }
  if (!doc.contains("camera_angle_x") || !doc.contains("frames"))
    throw DatasetError("missing camera_angle_x/frames in " + json_path.string());
  const double angle_x = doc["camera_angle_x"].get<double>();

  for (const auto& fr : doc["frames"]) {
    DatasetFrame frame;
    frame.split = split;
    std::string rel = fr.at("file_path").get<std::string>();
    if (rel.rfind("./", 0) == 0) rel = rel.substr(2);
    fs::path img_path = fs::path(root) / rel;
    if (!fs::exists(img_path)) img_path = fs::path(root) / (rel + ".png");
    if (!fs::exists(img_path)) throw DatasetError("missing image " + img_path.string());
    frame.image_path = img_path.string();
    frame.image = load_png(frame.image_path, bg);

    const auto& tm = fr.at("transform_matrix");
    if (tm.size() != 4) throw DatasetError("bad transform_matrix in " + json_path.string());
    Mat3 r_gl;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r_gl.m[i][j] = tm[i][j].get<double>();
    const Vec3 t{tm[0][3].get<double>(), tm[1][3].get<double>(), tm[2][3].get<double>()};

    Camera& cam = frame.camera;
    cam.width = frame.image.width;
    cam.height = frame.image.height;
    cam.fx = 0.5 * cam.width / std::tan(0.5 * angle_x);
    cam.fy = cam.fx;
    cam.cx = cam.width / 2.0;
    cam.cy = cam.height / 2.0;
    cam.r_wc = gl_to_cv(r_gl);
    cam.t_wc = t;
    cam.near = 0.01;
    cam.far = 1000.0;
    frames.push_back(std::move(frame));
  }
}

}  // namespace

std::vector<DatasetFrame> load_dataset(const std::string& root, const Rgb& background) {
  if (!fs::exists(root)) throw DatasetError("dataset root not found: " + root);
  std::vector<DatasetFrame> frames;
  load_split(root, "train", Split::Train, background, frames);
  load_split(root, "test", Split::Test, background, frames);
  if (frames.empty()) throw DatasetError("no frames in " + root);
  return frames;
}

void save_dataset(const std::string& root, const std::vector<DatasetFrame>& frames,
                  double camera_angle_x) {
  fs::create_directories(fs::path(root) / "train");
  fs::create_directories(fs::path(root) / "test");
  json train, test;
  train["camera_angle_x"] = camera_angle_x;
  test["camera_angle_x"] = camera_angle_x;
  train["frames"] = json::array();
  test["frames"] = json::array();

  int idx = 0;
  for (const DatasetFrame& fr : frames) {
    const bool is_train = fr.split == Split::Train;
    const std::string rel =
        std::string(is_train ? "train" : "test") + "/r_" + std::to_string(idx);
    save_png(fr.image, (fs::path(root) / (rel + ".png")).string());

    json jf;
    jf["file_path"] = "./" + rel;
    json tm = json::array();
    const Mat3 r_gl = gl_to_cv(fr.camera.r_wc);  // involution: same flip back
    for (int i = 0; i < 3; ++i)
      tm.push_back({r_gl.m[i][0], r_gl.m[i][1], r_gl.m[i][2], fr.camera.t_wc[i]});
    tm.push_back({0.0, 0.0, 0.0, 1.0});
    jf["transform_matrix"] = tm;
    (is_train ? train : test)["frames"].push_back(jf);
    ++idx;
  }
  std::ofstream(fs::path(root) / "transforms_train.json") << train.dump(1);
  std::ofstream(fs::path(root) / "transforms_test.json") << test.dump(1);
}

}  // namespace triplet
