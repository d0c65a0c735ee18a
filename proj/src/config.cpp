#include "inet/config.hpp"

#include <charconv>
#include <functional>

#include "inet/io.hpp"

namespace inet {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_value(std::string_view key, std::string_view text) {
  T v{};
  auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size() || text.empty())
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  return v;
}

std::string show(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Binding {
  std::string key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T, class Access>
Binding number(std::string key, Access access) {
  return {key,
          [key, access](ExperimentConfig& c, std::string_view v) { access(c) = parse_value<T>(key, v); },
          [access](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return show(static_cast<double>(access(const_cast<ExperimentConfig&>(c))));
            } else {
              return std::to_string(access(const_cast<ExperimentConfig&>(c)));
            }
          }};
}

template <class Access>
Binding flag(std::string key, Access access) {
  return {key,
          [key, access](ExperimentConfig& c, std::string_view v) {
            if (v == "true" || v == "1")
              access(c) = true;
            else if (v == "false" || v == "0")
              access(c) = false;
            else
              throw ConfigError("config key '" + key + "': expected true or false, got '" + std::string(v) + "'");
          },
          [access](const ExperimentConfig& c) {
            return std::string(access(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          }};
}

template <class Access>
Binding path(std::string key, Access access) {
  return {key,
          [key, access](ExperimentConfig& c, std::string_view v) {
            if (v.empty()) throw ConfigError("config key '" + key + "' needs a path");
            access(c) = std::filesystem::path(std::string(v));
          },
          [access](const ExperimentConfig& c) { return access(const_cast<ExperimentConfig&>(c)).string(); }};
}

const std::vector<Binding>& bindings() {
  using C = ExperimentConfig;
  static const std::vector<Binding> table = {
      path("paths.dataset_dir", [](C& c) -> auto& { return c.dataset_dir; }),
      path("paths.output_dir", [](C& c) -> auto& { return c.output_dir; }),

      number<double>("train.lr0", [](C& c) -> auto& { return c.train.lr0; }),
      number<double>("train.decay", [](C& c) -> auto& { return c.train.decay; }),
      number<std::size_t>("train.decay_every", [](C& c) -> auto& { return c.train.decay_every; }),
      number<double>("train.momentum", [](C& c) -> auto& { return c.train.momentum; }),
      number<std::size_t>("train.max_epochs", [](C& c) -> auto& { return c.train.max_epochs; }),
      number<std::uint64_t>("train.seed", [](C& c) -> auto& { return c.train.seed; }),
      {"train.eval_norm",
       [](C& c, std::string_view v) {
         if (v == "running")
           c.train.eval_mode = ops::NormMode::infer;
         else if (v == "batch")
           c.train.eval_mode = ops::NormMode::batch;
         else
           throw ConfigError("config key 'train.eval_norm': expected running or batch, got '" + std::string(v) + "'");
       },
       [](const C& c) { return std::string(c.train.eval_mode == ops::NormMode::batch ? "batch" : "running"); }},

      number<std::size_t>("encoder.growth_rate", [](C& c) -> auto& { return c.model.encoder.growth_rate; }),
      {"encoder.block_lengths",
       [](C& c, std::string_view v) {
         std::array<std::size_t, 4> out{};
         std::size_t n = 0, pos = 0;
         while (pos <= v.size()) {
           auto end = v.find(',', pos);
           if (end == std::string_view::npos) end = v.size();
           if (n == 4) throw ConfigError("config key 'encoder.block_lengths' takes exactly 4 values");
           out[n++] = parse_value<std::size_t>("encoder.block_lengths", trim(v.substr(pos, end - pos)));
           pos = end + 1;
         }
         if (n != 4) throw ConfigError("config key 'encoder.block_lengths' takes exactly 4 values");
         c.model.encoder.block_lengths = out;
       },
       [](const C& c) {
         const auto& b = c.model.encoder.block_lengths;
         return std::to_string(b[0]) + "," + std::to_string(b[1]) + "," + std::to_string(b[2]) + "," +
                std::to_string(b[3]);
       }},
      number<std::size_t>("encoder.initial_channels", [](C& c) -> auto& { return c.model.encoder.initial_channels; }),
      number<double>("encoder.compression", [](C& c) -> auto& { return c.model.encoder.compression; }),
      number<std::size_t>("encoder.input_height", [](C& c) -> auto& { return c.model.encoder.input_height; }),
      number<std::size_t>("encoder.input_width", [](C& c) -> auto& { return c.model.encoder.input_width; }),
      number<std::size_t>("encoder.bottleneck_factor",
                          [](C& c) -> auto& { return c.model.encoder.bottleneck_factor; }),

      number<std::size_t>("decoder.bridge_width", [](C& c) -> auto& { return c.model.bridge_width; }),
      number<std::size_t>("decoder.features", [](C& c) -> auto& { return c.model.features; }),
      number<std::size_t>("decoder.order", [](C& c) -> auto& { return c.model.order; }),

      number<std::size_t>("hierarchy.stride", [](C& c) -> auto& { return c.stride; }),
      number<std::size_t>("hierarchy.levels", [](C& c) -> auto& { return c.levels; }),

      number<int>("synthetic.subdivisions", [](C& c) -> auto& { return c.synthetic.subdivisions; }),
      number<double>("synthetic.radius", [](C& c) -> auto& { return c.synthetic.radius; }),
      number<std::size_t>("synthetic.frames", [](C& c) -> auto& { return c.synthetic.frames; }),
      number<double>("synthetic.scale_x", [](C& c) -> auto& { return c.synthetic.scale_amplitude[0]; }),
      number<double>("synthetic.scale_y", [](C& c) -> auto& { return c.synthetic.scale_amplitude[1]; }),
      number<double>("synthetic.scale_z", [](C& c) -> auto& { return c.synthetic.scale_amplitude[2]; }),
      number<double>("synthetic.bulge", [](C& c) -> auto& { return c.synthetic.bulge_amplitude; }),
      number<double>("synthetic.noise_sigma", [](C& c) -> auto& { return c.synthetic.noise_sigma; }),
      number<double>("synthetic.view_half_height", [](C& c) -> auto& { return c.synthetic.view_half_height; }),
      number<double>("synthetic.depth_range", [](C& c) -> auto& { return c.synthetic.depth_range; }),

      number<std::size_t>("runtime.threads", [](C& c) -> auto& { return c.threads; }),
      flag("output.checkpoints", [](C& c) -> auto& { return c.save_checkpoints; }),
      flag("output.meshes", [](C& c) -> auto& { return c.save_meshes; }),
  };
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  cycle_spec().validate();
  if (stride < 2) throw ConfigError("hierarchy.stride must be at least 2");
  if (levels != 4) throw ConfigError("hierarchy.levels must be 4: the decoder has four up-sampling stages");
  if (synthetic.frames < 3) throw ConfigError("synthetic.frames must be at least 3 for leave-one-out");
  if (model.encoder.compression <= 0.0 || model.encoder.compression > 1.0)
    throw ConfigError("encoder.compression must lie in (0, 1]");
}

ShapeCycleSpec ExperimentConfig::cycle_spec() const {
  ShapeCycleSpec s = synthetic;
  s.image_height = model.encoder.input_height;
  s.image_width = model.encoder.input_width;
  return s;
}

void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value) {
  for (const auto& b : bindings())
    if (b.key == key) return b.set(config, trim(value));
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
  ExperimentConfig c;
  std::size_t pos = 0, line = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line;
    if (auto h = raw.find('#'); h != std::string_view::npos) raw = raw.substr(0, h);
    auto s = trim(raw);
    if (s.empty()) continue;
    auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(line) + ": expected key = value");
    try {
      apply_setting(c, trim(s.substr(0, eq)), s.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& p) { return parse_config(io::read_file(p), p.string()); }

std::string format_config(const ExperimentConfig& config) {
  std::string s;
  for (const auto& b : bindings()) s += b.key + " = " + b.get(config) + "\n";
  return s;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& b : bindings()) keys.push_back(b.key);
  return keys;
}

}  // namespace inet
