#include "inet/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "json.hpp"

namespace inet::io {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void atomic_write(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::random_device rd;
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(rd() % 1000000);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw std::runtime_error("short write to " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

namespace {

std::string number(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Whitespace-separated tokens per line, '#' comments stripped, blank lines
// dropped.
struct Line {
  std::size_t number;
  std::vector<std::string_view> tokens;
};

std::vector<Line> tokenize(std::string_view text) {
  std::vector<Line> lines;
  std::size_t pos = 0, n = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++n;
    if (auto c = line.find('#'); c != std::string_view::npos) line = line.substr(0, c);
    Line l{n, {}};
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) l.tokens.push_back(line.substr(i, j - i));
      i = j;
    }
    if (!l.tokens.empty()) lines.push_back(std::move(l));
    pos = end + 1;
  }
  return lines;
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw ParseError(source + ":" + std::to_string(line) + ": " + what);
}

double to_double(std::string_view tok, const std::string& source, std::size_t line) {
  double v = 0.0;
  auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
    fail(source, line, "expected a number, got '" + std::string(tok) + "'");
  return v;
}

std::size_t to_index(std::string_view tok, const std::string& source, std::size_t line) {
  std::size_t v = 0;
  auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
    fail(source, line, "expected a nonnegative integer, got '" + std::string(tok) + "'");
  return v;
}

Mesh build_mesh(std::vector<Vec3> vs, std::vector<Face> fs, const std::string& source) {
  try {
    return Mesh(std::move(vs), std::move(fs));
  } catch (const MeshError& e) {
    throw ParseError(source + ": " + e.what());
  }
}

void check_face(const Face& f, std::size_t nv, const std::string& source, std::size_t line) {
  for (auto i : f)
    if (i >= nv)
      fail(source, line, "face index " + std::to_string(i) + " out of range for " + std::to_string(nv) + " vertices");
  if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) fail(source, line, "degenerate face repeats a vertex");
}

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

}  // namespace

Mesh parse_off(std::string_view text, const std::string& source) {
  auto lines = tokenize(text);
  if (lines.empty()) throw ParseError(source + ": empty file");
  std::size_t li = 0;
  auto header = lines[0].tokens;
  if (header[0] != "OFF") fail(source, lines[0].number, "missing OFF header");
  std::vector<std::string_view> counts(header.begin() + 1, header.end());
  std::size_t count_line = lines[0].number;
  ++li;
  if (counts.empty()) {
    if (li >= lines.size()) throw ParseError(source + ": missing vertex/face counts");
    counts = lines[li].tokens;
    count_line = lines[li].number;
    ++li;
  }
  if (counts.size() < 2) fail(source, count_line, "expected vertex and face counts");
  const std::size_t nv = to_index(counts[0], source, count_line), nf = to_index(counts[1], source, count_line);

  std::vector<Vec3> vs;
  vs.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i, ++li) {
    if (li >= lines.size()) throw ParseError(source + ": expected " + std::to_string(nv) + " vertices, file ends");
    const auto& l = lines[li];
    if (l.tokens.size() < 3) fail(source, l.number, "vertex needs three coordinates");
    vs.push_back({to_double(l.tokens[0], source, l.number), to_double(l.tokens[1], source, l.number),
                  to_double(l.tokens[2], source, l.number)});
  }
  std::vector<Face> fs;
  fs.reserve(nf);
  for (std::size_t i = 0; i < nf; ++i, ++li) {
    if (li >= lines.size()) throw ParseError(source + ": expected " + std::to_string(nf) + " faces, file ends");
    const auto& l = lines[li];
    std::size_t k = to_index(l.tokens[0], source, l.number);
    if (k != 3) fail(source, l.number, "only triangular faces are supported (got " + std::to_string(k) + " vertices)");
    if (l.tokens.size() < 4) fail(source, l.number, "face lists fewer than 3 indices");
    Face f{to_index(l.tokens[1], source, l.number), to_index(l.tokens[2], source, l.number),
           to_index(l.tokens[3], source, l.number)};
    check_face(f, nv, source, l.number);
    fs.push_back(f);
  }
  return build_mesh(std::move(vs), std::move(fs), source);
}

std::string format_off(const Mesh& mesh) {
  std::string s = "OFF\n" + std::to_string(mesh.vertex_count()) + " " + std::to_string(mesh.faces().size()) + " " +
                  std::to_string(mesh.edges().size()) + "\n";
  for (const auto& v : mesh.vertices()) s += number(v[0]) + " " + number(v[1]) + " " + number(v[2]) + "\n";
  for (const auto& f : mesh.faces())
    s += "3 " + std::to_string(f[0]) + " " + std::to_string(f[1]) + " " + std::to_string(f[2]) + "\n";
  return s;
}

Mesh read_off(const fs::path& path) { return parse_off(read_file(path), path.string()); }
void write_off(const fs::path& path, const Mesh& mesh) { atomic_write(path, format_off(mesh)); }

Mesh parse_obj(std::string_view text, const std::string& source) {
  std::vector<Vec3> vs;
  std::vector<std::pair<Face, std::size_t>> pending;
  for (const auto& l : tokenize(text)) {
    if (l.tokens[0] == "v") {
      if (l.tokens.size() < 4) fail(source, l.number, "vertex needs three coordinates");
      vs.push_back({to_double(l.tokens[1], source, l.number), to_double(l.tokens[2], source, l.number),
                    to_double(l.tokens[3], source, l.number)});
    } else if (l.tokens[0] == "f") {
      if (l.tokens.size() != 4)
        fail(source, l.number,
             "only triangular faces are supported (got " + std::to_string(l.tokens.size() - 1) + " vertices)");
      Face f{};
      for (int k = 0; k < 3; ++k) {
        auto tok = l.tokens[1 + k];
        tok = tok.substr(0, tok.find('/'));
        std::size_t idx = to_index(tok, source, l.number);
        if (idx == 0) fail(source, l.number, "OBJ indices start at 1");
        f[k] = idx - 1;
      }
      pending.emplace_back(f, l.number);
    }
  }
  std::vector<Face> fs;
  for (const auto& [f, line] : pending) {
    check_face(f, vs.size(), source, line);
    fs.push_back(f);
  }
  return build_mesh(std::move(vs), std::move(fs), source);
}

std::string format_obj(const Mesh& mesh) {
  std::string s;
  for (const auto& v : mesh.vertices()) s += "v " + number(v[0]) + " " + number(v[1]) + " " + number(v[2]) + "\n";
  for (const auto& f : mesh.faces())
    s += "f " + std::to_string(f[0] + 1) + " " + std::to_string(f[1] + 1) + " " + std::to_string(f[2] + 1) + "\n";
  return s;
}

Mesh read_obj(const fs::path& path) { return parse_obj(read_file(path), path.string()); }
void write_obj(const fs::path& path, const Mesh& mesh) { atomic_write(path, format_obj(mesh)); }

Mesh read_mesh(const fs::path& path) {
  auto e = lower_ext(path);
  if (e == ".off") return read_off(path);
  if (e == ".obj") return read_obj(path);
  throw ParseError(path.string() + ": unknown mesh extension '" + e + "' (expected .off or .obj)");
}

void write_mesh(const fs::path& path, const Mesh& mesh) {
  auto e = lower_ext(path);
  if (e == ".off") return write_off(path, mesh);
  if (e == ".obj") return write_obj(path, mesh);
  throw ParseError(path.string() + ": unknown mesh extension '" + e + "' (expected .off or .obj)");
}

Tensor parse_pgm(std::string_view bytes, const std::string& source) {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string_view {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])) && bytes[pos] != '#') ++pos;
    if (start == pos) throw ParseError(source + ": truncated PGM header");
    return bytes.substr(start, pos - start);
  };
  auto header_int = [&](const char* what) {
    auto tok = next_token();
    std::size_t v = 0;
    auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
      throw ParseError(source + ": bad PGM " + what + " '" + std::string(tok) + "'");
    return v;
  };
  auto magic = next_token();
  if (magic != "P2" && magic != "P5") throw ParseError(source + ": bad PGM magic '" + std::string(magic) + "'");
  const std::size_t w = header_int("width"), h = header_int("height"), maxval = header_int("maxval");
  if (w == 0 || h == 0) throw ParseError(source + ": PGM has zero size");
  if (maxval == 0 || maxval > 65535) throw ParseError(source + ": PGM maxval " + std::to_string(maxval) + " unsupported");
  const std::size_t n = w * h;
  std::vector<double> px(n);
  const double m = static_cast<double>(maxval);
  if (magic == "P5") {
    ++pos;  // single whitespace after maxval
    const std::size_t bpp = maxval < 256 ? 1 : 2, need = n * bpp;
    const std::size_t have = pos <= bytes.size() ? bytes.size() - pos : 0;
    if (have < need)
      throw ParseError(source + ": truncated PGM payload, expected " + std::to_string(need) + " bytes, got " +
                       std::to_string(have));
    auto u = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t v = bpp == 1 ? u[i] : (static_cast<std::size_t>(u[2 * i]) << 8) | u[2 * i + 1];
      if (v > maxval) throw ParseError(source + ": pixel " + std::to_string(i) + " exceeds maxval");
      px[i] = static_cast<double>(v) / m;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t v;
      try {
        v = header_int("pixel");
      } catch (const ParseError&) {
        throw ParseError(source + ": truncated PGM payload, expected " + std::to_string(n) + " values, got " +
                         std::to_string(i));
      }
      if (v > maxval) throw ParseError(source + ": pixel " + std::to_string(i) + " exceeds maxval");
      px[i] = static_cast<double>(v) / m;
    }
  }
  return Tensor({h, w, 1}, std::move(px));
}

std::string format_pgm(const Tensor& image, unsigned maxval, bool ascii) {
  if (image.rank() != 3 || image.dim(2) != 1)
    throw DimensionError("write_pgm expects H x W x 1, got " + shape_str(image.shape()));
  if (maxval == 0 || maxval > 65535) throw ConfigError("PGM maxval must lie in [1, 65535]");
  const std::size_t h = image.dim(0), w = image.dim(1);
  std::string s = std::string(ascii ? "P2" : "P5") + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
                  std::to_string(maxval) + "\n";
  auto level = [maxval](double v) {
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned>(std::lround(v * maxval));
  };
  auto d = image.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    unsigned v = level(d[i]);
    if (ascii) {
      s += std::to_string(v);
      s += (i + 1) % w == 0 ? '\n' : ' ';
    } else if (maxval < 256) {
      s += static_cast<char>(v);
    } else {
      s += static_cast<char>(v >> 8);
      s += static_cast<char>(v & 0xff);
    }
  }
  return s;
}

Tensor read_pgm(const fs::path& path) { return parse_pgm(read_file(path), path.string()); }
void write_pgm(const fs::path& path, const Tensor& image, unsigned maxval, bool ascii) {
  atomic_write(path, format_pgm(image, maxval, ascii));
}

namespace {

constexpr char kCheckpointMagic[8] = {'I', 'N', 'E', 'T', 'C', 'K', 'P', 'T'};
constexpr char kHierarchyMagic[8] = {'I', 'N', 'E', 'T', 'H', 'I', 'E', 'R'};
constexpr std::uint32_t kFormatVersion = 1;

struct Writer {
  std::string buf;
  void raw(const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); }
  template <class T>
  void le(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof v);
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof v);
    raw(b, sizeof v);
  }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(v); }
  void str(std::string_view s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
};

struct Reader {
  std::string_view buf;
  std::string source;
  std::size_t pos = 0;
  void need(std::size_t n) {
    if (buf.size() - pos < n)
      throw ParseError(source + ": truncated at byte " + std::to_string(pos) + ", needed " + std::to_string(n) +
                       " more");
  }
  template <class T>
  T le() {
    need(sizeof(T));
    unsigned char b[sizeof(T)];
    std::memcpy(b, buf.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof v);
    return v;
  }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  double f64() { return le<double>(); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  std::string_view str() { return bytes(u64()); }
  void magic(const char (&m)[8], const char* what) {
    if (bytes(8) != std::string_view(m, 8)) throw ParseError(source + ": not " + std::string(what) + " (bad magic)");
    if (auto v = u32(); v != kFormatVersion)
      throw ParseError(source + ": unsupported " + std::string(what) + " version " + std::to_string(v));
  }
};

struct Slot {
  std::string name;
  std::string kind;
  Shape shape;
  std::span<double> values;
};

std::vector<Slot> checkpoint_slots(ModelParams& params) {
  std::vector<Slot> slots;
  for (auto& [name, t] : params.parameters()) {
    Tensor h = t;
    slots.push_back({name, "parameter", t.shape(), h.mutable_data()});
  }
  for (auto& [name, v] : params.buffers()) slots.push_back({name, "buffer", {v->size()}, *v});
  slots.push_back({"output.scale", "buffer", {1}, std::span<double>(&params.normalizer.scale, 1)});
  return slots;
}

struct CheckpointView {
  nlohmann::json manifest;
  std::string_view payload;
};

CheckpointView split_checkpoint(std::string_view bytes, const std::string& source) {
  Reader r{bytes, source};
  r.magic(kCheckpointMagic, "a checkpoint");
  auto text = r.str();
  CheckpointView v;
  try {
    v.manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source + ": bad checkpoint manifest: " + e.what());
  }
  v.payload = bytes.substr(r.pos);
  return v;
}

Metadata metadata_of(const nlohmann::json& manifest) {
  Metadata m;
  for (auto& [k, val] : manifest.at("metadata").items()) m[k] = val.get<std::string>();
  return m;
}

}  // namespace

std::string format_checkpoint(ModelParams& params, const Metadata& metadata) {
  auto slots = checkpoint_slots(params);
  nlohmann::json manifest;
  manifest["metadata"] = metadata;
  manifest["layout"] = "float64 little-endian, row-major; fc2 output reshaped vertex-major";
  std::size_t offset = 0;
  for (const auto& s : slots) {
    manifest["tensors"].push_back({{"name", s.name}, {"kind", s.kind}, {"shape", s.shape}, {"offset", offset}});
    offset += s.values.size();
  }
  Writer w;
  w.raw(kCheckpointMagic, 8);
  w.u32(kFormatVersion);
  w.str(manifest.dump());
  for (const auto& s : slots)
    for (double v : s.values) w.f64(v);
  return std::move(w.buf);
}

void save_checkpoint(const fs::path& path, ModelParams& params, const Metadata& metadata) {
  atomic_write(path, format_checkpoint(params, metadata));
}

Metadata read_checkpoint_metadata(const fs::path& path) {
  return metadata_of(split_checkpoint(read_file(path), path.string()).manifest);
}

Metadata load_checkpoint(const fs::path& path, ModelParams& params) {
  const std::string bytes = read_file(path);
  auto view = split_checkpoint(bytes, path.string());
  auto slots = checkpoint_slots(params);
  const auto& tensors = view.manifest.at("tensors");
  if (tensors.size() != slots.size())
    throw ConfigError(path.string() + ": checkpoint holds " + std::to_string(tensors.size()) +
                      " tensors, the model expects " + std::to_string(slots.size()));
  Reader r{view.payload, path.string()};
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& t = tensors[i];
    auto name = t.at("name").get<std::string>();
    auto shape = t.at("shape").get<Shape>();
    if (name != slots[i].name || shape != slots[i].shape)
      throw ConfigError(path.string() + ": checkpoint tensor " + name + " " + shape_str(shape) +
                        " does not match model tensor " + slots[i].name + " " + shape_str(slots[i].shape));
    r.pos = t.at("offset").get<std::size_t>() * sizeof(double);
    for (auto& v : slots[i].values) v = r.f64();
  }
  return metadata_of(view.manifest);
}

std::string format_hierarchy(const SamplingHierarchy& h) {
  Writer w;
  w.raw(kHierarchyMagic, 8);
  w.u32(kFormatVersion);
  w.u64(h.template_hash);
  w.u64(h.stride);
  w.u64(h.levels.size());
  for (const auto& m : h.levels) {
    w.str(format_off(m));
    w.u64(m.loose_edges().size());
    for (const auto& e : m.loose_edges()) {
      w.u64(e[0]);
      w.u64(e[1]);
    }
  }
  auto put_map = [&w](const CsrMatrix& m) {
    auto t = m.triplets();
    w.u64(m.rows());
    w.u64(m.cols());
    w.u64(t.size());
    for (const auto& e : t) {
      w.u64(e.row);
      w.u64(e.col);
      w.f64(e.value);
    }
  };
  for (std::size_t l = 0; l + 1 < h.levels.size(); ++l) {
    w.u64(h.kept[l].size());
    for (auto k : h.kept[l]) w.u64(k);
    put_map(h.down[l]);
    put_map(h.up[l]);
  }
  return std::move(w.buf);
}

SamplingHierarchy parse_hierarchy(std::string_view bytes, const std::string& source) {
  Reader r{bytes, source};
  r.magic(kHierarchyMagic, "a hierarchy sidecar");
  SamplingHierarchy h;
  h.template_hash = r.u64();
  h.stride = r.u64();
  const std::size_t n = r.u64();
  if (n < 2 || n > 64) throw ParseError(source + ": implausible level count " + std::to_string(n));
  for (std::size_t l = 0; l < n; ++l) {
    Mesh m = parse_off(r.str(), source + " level " + std::to_string(l));
    std::vector<Edge> loose(r.u64());
    for (auto& e : loose) e = {r.u64(), r.u64()};
    try {
      h.levels.push_back(Mesh(m.vertices(), m.faces(), std::move(loose)));
    } catch (const MeshError& e) {
      throw ParseError(source + ": level " + std::to_string(l) + ": " + e.what());
    }
  }
  auto get_map = [&r, &source]() {
    const std::size_t rows = r.u64(), cols = r.u64(), nnz = r.u64();
    if (nnz > (r.buf.size() - r.pos) / 24) throw ParseError(source + ": truncated sparse map");
    std::vector<Triplet> t(nnz);
    for (auto& e : t) {
      e.row = r.u64();
      e.col = r.u64();
      e.value = r.f64();
    }
    try {
      return CsrMatrix::from_triplets(rows, cols, std::move(t));
    } catch (const std::exception& e) {
      throw ParseError(source + ": bad sparse map: " + e.what());
    }
  };
  for (std::size_t l = 0; l + 1 < n; ++l) {
    std::vector<std::size_t> kept(r.u64());
    for (auto& k : kept) k = r.u64();
    h.kept.push_back(std::move(kept));
    h.down.push_back(get_map());
    h.up.push_back(get_map());
  }
  if (h.levels.front().content_hash() != h.template_hash)
    throw ParseError(source + ": template hash does not match the stored template mesh");
  attach_laplacians(h);
  return h;
}

void save_hierarchy(const fs::path& path, const SamplingHierarchy& h) { atomic_write(path, format_hierarchy(h)); }

SamplingHierarchy load_hierarchy(const fs::path& path) { return parse_hierarchy(read_file(path), path.string()); }

}  // namespace inet::io
