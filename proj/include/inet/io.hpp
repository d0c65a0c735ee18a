#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

#include "inet/mesh.hpp"
#include "inet/model.hpp"
#include "inet/sampling.hpp"
#include "inet/tensor.hpp"

namespace inet::io {

namespace fs = std::filesystem;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path);
std::uint64_t fnv1a(std::string_view bytes);
/// Writes to a temporary sibling and renames it over `path`.
void atomic_write(const fs::path& path, std::string_view bytes);

/// `source` names the input in error messages ("<path>:<line>: ...").
Mesh parse_off(std::string_view text, const std::string& source = "<off>");
std::string format_off(const Mesh& mesh);
Mesh read_off(const fs::path& path);
void write_off(const fs::path& path, const Mesh& mesh);

/// Triangles only; v/vt/vn face tokens are accepted and texture/normal
/// indices ignored.
Mesh parse_obj(std::string_view text, const std::string& source = "<obj>");
std::string format_obj(const Mesh& mesh);
Mesh read_obj(const fs::path& path);
void write_obj(const fs::path& path, const Mesh& mesh);

/// Picks the codec from the extension (.off or .obj).
Mesh read_mesh(const fs::path& path);
void write_mesh(const fs::path& path, const Mesh& mesh);

/// P2 or P5, maxval 255 or 65535 -> H x W x 1 in [0, 1].
Tensor parse_pgm(std::string_view bytes, const std::string& source = "<pgm>");
/// Binary P5 unless `ascii`. Values are clamped to [0, 1] and rounded.
std::string format_pgm(const Tensor& image, unsigned maxval = 65535, bool ascii = false);
Tensor read_pgm(const fs::path& path);
void write_pgm(const fs::path& path, const Tensor& image, unsigned maxval = 65535, bool ascii = false);

using Metadata = std::map<std::string, std::string>;

/// "INETCKPT", u32 version, u64 manifest length, JSON manifest, then raw
/// little-endian float64 values. See the README for the manifest fields.
std::string format_checkpoint(ModelParams& params, const Metadata& metadata);
void save_checkpoint(const fs::path& path, ModelParams& params, const Metadata& metadata);
/// Metadata only; cheap compatibility checks before building a model.
Metadata read_checkpoint_metadata(const fs::path& path);
/// Fills an already-created model. Throws ConfigError when any tensor name or
/// shape differs.
Metadata load_checkpoint(const fs::path& path, ModelParams& params);

/// "INETHIER" sidecar: template hash, stride, level meshes as OFF text plus
/// loose edges, and the D / Q maps as triplets. Laplacians are rebuilt.
std::string format_hierarchy(const SamplingHierarchy& h);
SamplingHierarchy parse_hierarchy(std::string_view bytes, const std::string& source = "<hierarchy>");
void save_hierarchy(const fs::path& path, const SamplingHierarchy& h);
SamplingHierarchy load_hierarchy(const fs::path& path);

}  // namespace inet::io
