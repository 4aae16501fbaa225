#include "triplet/mesh_io.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "triplet/errors.hpp"

namespace triplet {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void export_obj(const TripletScene& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  const VertexNormals vn = vertex_normals(mesh);
  out << "# triplet mesh export\n";
  for (const Vec3& v : mesh.vertices)
    out << "v " << fmt_double(v.x) << ' ' << fmt_double(v.y) << ' ' << fmt_double(v.z) << '\n';
  for (const Vec3& n : vn.normals)
    out << "vn " << fmt_double(n.x) << ' ' << fmt_double(n.y) << ' ' << fmt_double(n.z) << '\n';
  for (const Face& f : mesh.faces)
    out << "f " << f[0] + 1 << "//" << f[0] + 1 << ' ' << f[1] + 1 << "//" << f[1] + 1 << ' '
        << f[2] + 1 << "//" << f[2] + 1 << '\n';
  if (!out) throw IoError("short write to " + path);

  std::ofstream side(props_sidecar_path(path));
  if (!side) throw IoError("cannot write " + props_sidecar_path(path));
  side << "index\ttex_r\ttex_g\ttex_b\tkd_r\tkd_g\tkd_b\tks_r\tks_g\tks_b\t"
          "shininess\troughness\tmetallic\tao\tf0_base\talpha\n";
  for (size_t i = 0; i < mesh.props.size(); ++i) {
    const VertexProps& p = mesh.props[i];
    const Material& m = p.material;
    side << i;
    for (double v : {p.texture_rgb.r, p.texture_rgb.g, p.texture_rgb.b, m.kd.r, m.kd.g, m.kd.b,
                     m.ks.r, m.ks.g, m.ks.b, m.shininess, m.roughness, m.metallic, m.ao,
                     m.f0_base, p.alpha})
      side << '\t' << fmt_double(v);
    side << '\n';
  }
}

TripletScene import_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  TripletScene mesh;
  mesh.connectivity_mode = ConnectivityMode::Connected;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      ss >> v.x >> v.y >> v.z;
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      Face f;
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        ss >> tok;
        f[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      mesh.faces.push_back(f);
    }
  }
  mesh.props.assign(mesh.vertices.size(), VertexProps{});

  std::ifstream side(props_sidecar_path(path));
  if (side) {
    std::getline(side, line);  // header
    while (std::getline(side, line)) {
      std::istringstream ss(line);
      size_t idx;
      ss >> idx;
      if (idx >= mesh.props.size()) continue;
      VertexProps& p = mesh.props[idx];
      Material& m = p.material;
      ss >> p.texture_rgb.r >> p.texture_rgb.g >> p.texture_rgb.b >> m.kd.r >> m.kd.g >> m.kd.b >>
          m.ks.r >> m.ks.g >> m.ks.b >> m.shininess >> m.roughness >> m.metallic >> m.ao >>
          m.f0_base >> p.alpha;
    }
  }
  mesh.rebuild_edges();
  return mesh;
}

template <typename T>
void write_raw(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void export_ply(const TripletScene& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << mesh.vertex_count() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "property float red\nproperty float green\nproperty float blue\n";
  out << "property float roughness\nproperty float metallic\nproperty float ao\n";
  out << "element face " << mesh.face_count() << "\n";
  out << "property list uchar int vertex_indices\n";
  out << "end_header\n";
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    const VertexProps& p = mesh.props[i];
    write_raw(out, v.x);
    write_raw(out, v.y);
    write_raw(out, v.z);
    write_raw(out, static_cast<float>(p.texture_rgb.r));
    write_raw(out, static_cast<float>(p.texture_rgb.g));
    write_raw(out, static_cast<float>(p.texture_rgb.b));
    write_raw(out, static_cast<float>(p.material.roughness));
    write_raw(out, static_cast<float>(p.material.metallic));
    write_raw(out, static_cast<float>(p.material.ao));
  }
  for (const Face& f : mesh.faces) {
    write_raw<unsigned char>(out, 3);
    write_raw<std::int32_t>(out, f[0]);
    write_raw<std::int32_t>(out, f[1]);
    write_raw<std::int32_t>(out, f[2]);
  }
  if (!out) throw IoError("short write to " + path);
}

TripletScene import_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  int n_vertex = -1, n_face = -1;
  while (std::getline(in, line)) {
    if (line.rfind("element vertex", 0) == 0) n_vertex = std::stoi(line.substr(15));
    else if (line.rfind("element face", 0) == 0) n_face = std::stoi(line.substr(13));
    else if (line == "end_header") break;
  }
  if (n_vertex < 0 || n_face < 0) throw IoError("malformed ply header in " + path);

  TripletScene mesh;
  mesh.connectivity_mode = ConnectivityMode::Connected;
  mesh.vertices.resize(n_vertex);
  mesh.props.resize(n_vertex);
  for (int i = 0; i < n_vertex; ++i) {
    mesh.vertices[i].x = read_raw<double>(in);
    mesh.vertices[i].y = read_raw<double>(in);
    mesh.vertices[i].z = read_raw<double>(in);
    mesh.props[i].texture_rgb.r = read_raw<float>(in);
    mesh.props[i].texture_rgb.g = read_raw<float>(in);
    mesh.props[i].texture_rgb.b = read_raw<float>(in);
    mesh.props[i].material.roughness = read_raw<float>(in);
    mesh.props[i].material.metallic = read_raw<float>(in);
    mesh.props[i].material.ao = read_raw<float>(in);
    mesh.props[i].alpha = 1.0;
  }
  mesh.faces.resize(n_face);
  for (int i = 0; i < n_face; ++i) {
    const unsigned char n = read_raw<unsigned char>(in);
    if (n != 3) throw IoError("non-triangle face in " + path);
    mesh.faces[i][0] = read_raw<std::int32_t>(in);
    mesh.faces[i][1] = read_raw<std::int32_t>(in);
    mesh.faces[i][2] = read_raw<std::int32_t>(in);
  }
  if (!in) throw IoError("truncated ply " + path);
  mesh.rebuild_edges();
  return mesh;
}

}  // namespace

std::string props_sidecar_path(const std::string& obj_path) { return obj_path + ".props.tsv"; }

void export_mesh(const TripletScene& mesh, MeshFormat format, const std::string& path) {
  if (format == MeshFormat::OBJ) export_obj(mesh, path);
  else export_ply(mesh, path);
}

TripletScene import_mesh(MeshFormat format, const std::string& path) {
  return format == MeshFormat::OBJ ? import_obj(path) : import_ply(path);
}

}  // namespace triplet
