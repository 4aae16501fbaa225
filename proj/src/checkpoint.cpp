#include "triplet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "triplet/errors.hpp"

namespace triplet {

namespace {

constexpr char kMagic[8] = {'T', 'R', 'P', 'L', 'T', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::ofstream out;
  explicit Writer(const std::string& path) : out(path, std::ios::binary) {
    if (!out) throw IoError("cannot write " + path);
  }
  template <typename T>
  void raw(const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void u64(std::uint64_t v) { raw(v); }
  void i64(std::int64_t v) { raw(v); }
  void u8(std::uint8_t v) { raw(v); }
  void f64(double v) { raw(v); }
  void str(const std::string& s) {
    u64(s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
};

struct Reader {
  std::ifstream in;
  explicit Reader(const std::string& path) : in(path, std::ios::binary) {
    if (!in) throw IoError("cannot open " + path);
  }
  template <typename T>
  T raw() {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("truncated checkpoint");
    return v;
  }
  std::uint64_t u64() { return raw<std::uint64_t>(); }
  std::int64_t i64() { return raw<std::int64_t>(); }
  std::uint8_t u8() { return raw<std::uint8_t>(); }
  double f64() { return raw<double>(); }
  std::string str() {
    const std::uint64_t n = u64();
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw IoError("truncated checkpoint");
    return s;
  }
  std::vector<double> doubles() {
    const std::uint64_t n = u64();
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint");
    return v;
  }
};

void write_sh(Writer& w, const ShCoeffs& c) {
  w.u64(static_cast<std::uint64_t>(c.band_limit));
  w.doubles(c.coeffs);
}

ShCoeffs read_sh(Reader& r) {
  ShCoeffs c;
  c.band_limit = static_cast<int>(r.u64());
  c.coeffs = r.doubles();
  return c;
}

void write_props(Writer& w, const VertexProps& p) {
  const Material& m = p.material;
  for (double v : {p.texture_rgb.r, p.texture_rgb.g, p.texture_rgb.b, p.alpha, m.kd.r, m.kd.g,
                   m.kd.b, m.ks.r, m.ks.g, m.ks.b, m.shininess, m.roughness, m.metallic, m.ao,
                   m.f0_base})
    w.f64(v);
}

VertexProps read_props(Reader& r) {
  VertexProps p;
  Material& m = p.material;
  p.texture_rgb = {r.f64(), r.f64(), r.f64()};
  p.alpha = r.f64();
  m.kd = {r.f64(), r.f64(), r.f64()};
  m.ks = {r.f64(), r.f64(), r.f64()};
  m.shininess = r.f64();
  m.roughness = r.f64();
  m.metallic = r.f64();
  m.ao = r.f64();
  m.f0_base = r.f64();
  return p;
}

}  // namespace

std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  Writer w(path);
  w.out.write(kMagic, 8);
  w.raw(kVersion);
  w.u64(ckpt.config_hash);
  w.u8(static_cast<std::uint8_t>(ckpt.phase));
  w.i64(ckpt.iteration);
  w.u8(static_cast<std::uint8_t>(ckpt.model));
  w.u64(ckpt.rng_state);

  const TripletScene& s = ckpt.scene;
  w.u8(s.connectivity_mode == ConnectivityMode::Connected ? 1 : 0);
  w.u64(s.vertices.size());
  for (const Vec3& v : s.vertices) {
    w.f64(v.x);
    w.f64(v.y);
    w.f64(v.z);
  }
  for (const VertexProps& p : s.props) write_props(w, p);
  w.u64(s.faces.size());
  for (const Face& f : s.faces)
    for (int k = 0; k < 3; ++k) w.raw<std::int32_t>(f[k]);

  w.u64(ckpt.lights.size());
  for (const Light& l : ckpt.lights) {
    if (const auto* pl = std::get_if<PointLight>(&l)) {
      w.u8(0);
      w.f64(pl->position.x);
      w.f64(pl->position.y);
      w.f64(pl->position.z);
      w.f64(pl->intensity);
      w.f64(pl->color.r);
      w.f64(pl->color.g);
      w.f64(pl->color.b);
      w.u8(pl->inverse_square ? 1 : 0);
    } else if (const auto* dl = std::get_if<DirectionalLight>(&l)) {
      w.u8(1);
      w.f64(dl->direction.x);
      w.f64(dl->direction.y);
      w.f64(dl->direction.z);
      w.f64(dl->intensity);
      w.f64(dl->color.r);
      w.f64(dl->color.g);
      w.f64(dl->color.b);
    } else if (const auto* vl = std::get_if<VertexShLight>(&l)) {
      w.u8(2);
      w.u64(static_cast<std::uint64_t>(vl->band_limit));
      w.u64(vl->per_vertex.size());
      for (const ShCoeffs& c : vl->per_vertex) write_sh(w, c);
    } else if (const auto* el = std::get_if<EnvironmentShLight>(&l)) {
      w.u8(3);
      write_sh(w, el->coeffs);
    }
  }

  w.u64(ckpt.groups.size());
  for (size_t i = 0; i < ckpt.groups.size(); ++i) {
    const ParamGroup& g = ckpt.groups[i];
    w.str(g.name);
    w.u8(static_cast<std::uint8_t>(g.reparam));
    w.f64(g.learning_rate);
    w.f64(g.clip_norm);
    w.doubles(g.values);
    const AdamState& st = ckpt.states[i];
    w.doubles(st.m);
    w.doubles(st.v);
    w.i64(st.t);
    w.f64(st.beta1);
    w.f64(st.beta2);
    w.f64(st.eps);
  }
  if (!w.out) throw IoError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.in.read(magic, 8);
  if (!r.in || std::memcmp(magic, kMagic, 8) != 0)
    throw VersionError("not a checkpoint: " + path);
  const auto version = r.raw<std::uint32_t>();
  if (version != kVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.config_hash = r.u64();
  ckpt.phase = r.u8();
  ckpt.iteration = r.i64();
  ckpt.model = static_cast<ShadingModel>(r.u8());
  ckpt.rng_state = r.u64();

  TripletScene& s = ckpt.scene;
  s.connectivity_mode = r.u8() ? ConnectivityMode::Connected : ConnectivityMode::Discrete;
  const std::uint64_t nv = r.u64();
  s.vertices.resize(nv);
  for (Vec3& v : s.vertices) {
    v.x = r.f64();
    v.y = r.f64();
    v.z = r.f64();
  }
  s.props.resize(nv);
  for (VertexProps& p : s.props) p = read_props(r);
  const std::uint64_t nf = r.u64();
  s.faces.resize(nf);
  for (Face& f : s.faces)
    for (int k = 0; k < 3; ++k) f[k] = r.raw<std::int32_t>();
  s.rebuild_edges();

  const std::uint64_t nl = r.u64();
  for (std::uint64_t i = 0; i < nl; ++i) {
    const int type = r.u8();
    if (type == 0) {
      PointLight pl;
      pl.position = {r.f64(), r.f64(), r.f64()};
      pl.intensity = r.f64();
      pl.color = {r.f64(), r.f64(), r.f64()};
      pl.inverse_square = r.u8() != 0;
      ckpt.lights.emplace_back(pl);
    } else if (type == 1) {
      DirectionalLight dl;
      dl.direction = {r.f64(), r.f64(), r.f64()};
      dl.intensity = r.f64();
      dl.color = {r.f64(), r.f64(), r.f64()};
      ckpt.lights.emplace_back(dl);
    } else if (type == 2) {
      VertexShLight vl;
      vl.band_limit = static_cast<int>(r.u64());
      const std::uint64_t n = r.u64();
      vl.per_vertex.reserve(n);
      for (std::uint64_t k = 0; k < n; ++k) vl.per_vertex.push_back(read_sh(r));
      ckpt.lights.emplace_back(std::move(vl));
    } else if (type == 3) {
      EnvironmentShLight el;
      el.coeffs = read_sh(r);
      ckpt.lights.emplace_back(std::move(el));
    } else {
      throw VersionError("unknown light tag in checkpoint");
    }
  }

  const std::uint64_t ng = r.u64();
  for (std::uint64_t i = 0; i < ng; ++i) {
    ParamGroup g;
    g.name = r.str();
    g.reparam = static_cast<Reparam>(r.u8());
    g.learning_rate = r.f64();
    g.clip_norm = r.f64();
    g.values = r.doubles();
    AdamState st;
    st.m = r.doubles();
    st.v = r.doubles();
    st.t = r.i64();
    st.beta1 = r.f64();
    st.beta2 = r.f64();
    st.eps = r.f64();
    ckpt.groups.push_back(std::move(g));
    ckpt.states.push_back(std::move(st));
  }
  return ckpt;
}

}  // namespace triplet
