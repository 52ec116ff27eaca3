#include "drsl/toyworld.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include "drsl/image_io.hpp"
#include "drsl/rng.hpp"

namespace drsl {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// Appearance of one (class, style) pair: HSV base color plus an oriented
// sinusoidal texture. Foreground hues are spread over the wheel by class,
// styles perturb hue, saturation and value so each class is multi-modal.
struct Appearance {
  double hue, sat, val;
  double freq, angle, phase, amplitude;
};

Appearance appearance(const ToySpec& spec, int cls, int style) {
  const int styles = spec.styles_per_class;
  const double centered = styles > 1 ? (style - 0.5 * (styles - 1)) / (styles - 1) : 0.0;
  Appearance a{};
  a.phase = kTwoPi * style / styles;
  if (cls == 0) {
    a.hue = 0.6;
    a.sat = 0.08;
    a.val = 0.45 + 0.2 * centered;
    a.freq = 0.07;
    a.angle = 0.25 * std::numbers::pi;
    a.amplitude = 0.25;
    return a;
  }
  const int fg = spec.num_classes - 1;
  a.hue = static_cast<double>(cls - 1) / fg + 0.12 / fg * 2.0 * centered;
  static constexpr std::array<double, 3> kSat = {0.9, 0.6, 0.75};
  static constexpr std::array<double, 3> kVal = {0.95, 0.7, 0.55};
  a.sat = kSat[style % 3];
  a.val = kVal[(style + cls) % 3];
  a.freq = 0.12 + 0.08 * ((cls - 1) % 4);
  a.angle = std::numbers::pi * (cls - 1) / fg;
  a.amplitude = 0.35;
  return a;
}

bool covers(const Placement& p, int size, int y, int x) {
  const double px = x + 0.5, py = y + 0.5;
  switch (p.kind) {
    case ShapeKind::kRect:
      return x >= p.x0 && x < p.x1 && y >= p.y0 && y < p.y1;
    case ShapeKind::kDisc: {
      const double dx = px - p.cx, dy = py - p.cy;
      return dx * dx + dy * dy <= p.radius * p.radius;
    }
    case ShapeKind::kBand: {
      const double d = (px - 0.5 * size) * std::cos(p.angle) + (py - 0.5 * size) * std::sin(p.angle);
      return std::abs(d - p.offset) <= p.radius;
    }
  }
  return false;
}

Placement draw_placement(const ToySpec& spec, Rng& rng) {
  const int n = spec.image_size;
  Placement p;
  p.kind = static_cast<ShapeKind>(rng.index(3));
  p.cls = 1 + static_cast<int>(rng.index(spec.num_classes - 1));
  p.style = static_cast<int>(rng.index(spec.styles_per_class));
  switch (p.kind) {
    case ShapeKind::kRect: {
      const int w = std::max(2, static_cast<int>(std::lround(rng.uniform(0.15, 0.45) * n)));
      const int h = std::max(2, static_cast<int>(std::lround(rng.uniform(0.15, 0.45) * n)));
      p.x0 = static_cast<int>(rng.index(n - w + 1));
      p.y0 = static_cast<int>(rng.index(n - h + 1));
      p.x1 = p.x0 + w;
      p.y1 = p.y0 + h;
      break;
    }
    case ShapeKind::kDisc:
      p.radius = rng.uniform(0.08, 0.22) * n;
      p.cx = rng.uniform(0.1, 0.9) * n;
      p.cy = rng.uniform(0.1, 0.9) * n;
      break;
    case ShapeKind::kBand:
      p.angle = 0.25 * std::numbers::pi * static_cast<double>(rng.index(4));
      p.offset = rng.uniform(-0.35, 0.35) * n;
      p.radius = rng.uniform(0.04, 0.1) * n;
      break;
  }
  return p;
}

double texture(const Appearance& a, double freq_scale, int y, int x) {
  const double u = x * std::cos(a.angle) + y * std::sin(a.angle);
  return 0.5 + 0.5 * std::sin(kTwoPi * a.freq * freq_scale * u + a.phase);
}

double quantize(double v) { return std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

void ToySpec::validate() const {
  if (image_size <= 0 || image_size % 4 != 0)
    throw ConfigError("toy image_size must be a positive multiple of 4");
  if (num_classes < 2 || num_classes > 254) throw ConfigError("toy num_classes must be in [2, 254]");
  if (styles_per_class < 1) throw ConfigError("toy styles_per_class must be >= 1");
  if (min_shapes < 0 || max_shapes < min_shapes) throw ConfigError("toy shape range invalid");
  if (shift.hue_delta < 0 || shift.hue_delta > 1) throw ConfigError("hue_delta must be in [0,1]");
  if (std::abs(shift.brightness_delta) > 0.5) throw ConfigError("brightness_delta must be in [-0.5,0.5]");
  if (shift.noise_std < 0) throw ConfigError("noise_std must be >= 0");
  if (shift.texture_freq_scale <= 0) throw ConfigError("texture_freq_scale must be > 0");
}

void to_json(nlohmann::json& j, const ToySpec& s) {
  j = nlohmann::json{{"image_size", s.image_size},
                     {"num_classes", s.num_classes},
                     {"styles_per_class", s.styles_per_class},
                     {"min_shapes", s.min_shapes},
                     {"max_shapes", s.max_shapes},
                     {"hue_delta", s.shift.hue_delta},
                     {"brightness_delta", s.shift.brightness_delta},
                     {"noise_std", s.shift.noise_std},
                     {"texture_freq_scale", s.shift.texture_freq_scale},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, ToySpec& s) {
  ToySpec d;
  s.image_size = j.value("image_size", d.image_size);
  s.num_classes = j.value("num_classes", d.num_classes);
  s.styles_per_class = j.value("styles_per_class", d.styles_per_class);
  s.min_shapes = j.value("min_shapes", d.min_shapes);
  s.max_shapes = j.value("max_shapes", d.max_shapes);
  s.shift.hue_delta = j.value("hue_delta", d.shift.hue_delta);
  s.shift.brightness_delta = j.value("brightness_delta", d.shift.brightness_delta);
  s.shift.noise_std = j.value("noise_std", d.shift.noise_std);
  s.shift.texture_freq_scale = j.value("texture_freq_scale", d.shift.texture_freq_scale);
  s.seed = j.value("seed", d.seed);
}

Scene gen_scene(const ToySpec& spec, Domain domain, int index) {
  spec.validate();
  const int n = spec.image_size;
  const Rng scene_rng = Rng(spec.seed).split(static_cast<std::uint64_t>(index));
  Rng geometry = scene_rng.split(1);

  Scene scene;
  scene.background_style = static_cast<int>(geometry.index(spec.styles_per_class));
  const int count =
      spec.min_shapes + static_cast<int>(geometry.index(spec.max_shapes - spec.min_shapes + 1));
  for (int i = 0; i < count; ++i) scene.placements.push_back(draw_placement(spec, geometry));

  // Which placement (if any) owns each pixel; -1 = background.
  std::vector<int> owner(static_cast<std::size_t>(n) * n, -1);
  for (int k = 0; k < count; ++k)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        if (covers(scene.placements[k], n, y, x)) owner[static_cast<std::size_t>(y) * n + x] = k;

  scene.labels = LabelMap(n, n, 0);
  scene.image = ImageTensor(3, n, n);
  const bool shifted = domain == Domain::kTarget;
  const double freq_scale = shifted ? spec.shift.texture_freq_scale : 1.0;
  Rng noise = scene_rng.split(2 + static_cast<std::uint64_t>(domain));
  const Appearance bg = appearance(spec, 0, scene.background_style);

  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const int k = owner[static_cast<std::size_t>(y) * n + x];
      const int cls = k < 0 ? 0 : scene.placements[k].cls;
      const Appearance a = k < 0 ? bg : appearance(spec, cls, scene.placements[k].style);
      scene.labels(y, x) = static_cast<std::uint8_t>(cls);
      const double shade = 1.0 - a.amplitude + a.amplitude * texture(a, freq_scale, y, x);
      double h = a.hue, s = a.sat, v = a.val * shade;
      if (shifted) {
        h += spec.shift.hue_delta;
        v = std::clamp(v + spec.shift.brightness_delta, 0.0, 1.0);
      }
      Rgb rgb = hsv_to_rgb(h, s, v);
      if (shifted && spec.shift.noise_std > 0) {
        rgb.r += spec.shift.noise_std * noise.normal();
        rgb.g += spec.shift.noise_std * noise.normal();
        rgb.b += spec.shift.noise_std * noise.normal();
      }
      scene.image(0, y, x) = quantize(rgb.r);
      scene.image(1, y, x) = quantize(rgb.g);
      scene.image(2, y, x) = quantize(rgb.b);
    }
  return scene;
}

namespace {

std::string entry_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.png", i);
  return buf;
}

}  // namespace

DatasetManifest gen_dataset(const ToySpec& spec, int n_source, int n_target,
                            const std::filesystem::path& out_dir) {
  spec.validate();
  if (n_source <= 0 || n_target <= 0) throw ConfigError("n_source and n_target must be positive");
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"source/images", "source/labels", "target/images", "eval_only/target_labels"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
  DatasetManifest m;
  m.spec = spec;
  m.root = out_dir;
  for (int i = 0; i < n_source; ++i) {
    const Scene s = gen_scene(spec, Domain::kSource, i);
    const std::string img = "source/images/" + entry_name(i);
    const std::string lab = "source/labels/" + entry_name(i);
    write_png_rgb(out_dir / img, s.image);
    write_png_labels(out_dir / lab, s.labels);
    m.source.push_back(img);
    m.source_labels.push_back(lab);
  }
  for (int i = 0; i < n_target; ++i) {
    const Scene s = gen_scene(spec, Domain::kTarget, n_source + i);
    const std::string img = "target/images/" + entry_name(i);
    const std::string lab = std::string(kEvalOnlyDir) + "/target_labels/" + entry_name(i);
    write_png_rgb(out_dir / img, s.image);
    write_png_labels(out_dir / lab, s.labels);
    m.target.push_back(img);
    m.target_eval_labels.push_back(lab);
  }
  write_manifest(m);
  return m;
}

void write_manifest(const DatasetManifest& m) {
  nlohmann::json j;
  j["spec"] = m.spec;
  j["source"] = m.source;
  j["source_labels"] = m.source_labels;
  j["target"] = m.target;
  j["target_eval_labels"] = m.target_eval_labels;
  std::ofstream out(m.root / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + m.root.string());
  out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::filesystem::path& manifest_or_dir) {
  auto path = manifest_or_dir;
  if (std::filesystem::is_directory(path)) path /= "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.spec = j.at("spec").get<ToySpec>();
  m.source = j.at("source").get<std::vector<std::string>>();
  m.source_labels = j.at("source_labels").get<std::vector<std::string>>();
  m.target = j.at("target").get<std::vector<std::string>>();
  m.target_eval_labels = j.value("target_eval_labels", std::vector<std::string>{});
  m.root = path.parent_path();
  if (m.source.size() != m.source_labels.size())
    throw IoError("manifest source/source_labels length mismatch");
  return m;
}

TrainingData load_training_data(const DatasetManifest& m) {
  TrainingData d;
  d.num_classes = m.spec.num_classes;
  for (std::size_t i = 0; i < m.source.size(); ++i) {
    d.source_images.push_back(read_png_rgb(m.root / m.source[i]));
    d.source_labels.push_back(read_png_labels(m.root / m.source_labels[i]));
    d.source_labels.back().validate(d.num_classes);
  }
  for (const auto& p : m.target) d.target_images.push_back(read_png_rgb(m.root / p));
  return d;
}

std::vector<LabelMap> load_target_eval_labels(const DatasetManifest& m) {
  if (m.target_eval_labels.size() != m.target.size())
    throw IoError("target eval labels missing from manifest");
  std::vector<LabelMap> out;
  for (const auto& p : m.target_eval_labels) out.push_back(read_png_labels(m.root / p));
  return out;
}

ToyBenchmark make_benchmark(const ToySpec& spec, int n_source, int n_target) {
  spec.validate();
  if (n_source <= 0 || n_target <= 0) throw ConfigError("n_source and n_target must be positive");
  ToyBenchmark b;
  b.train.num_classes = spec.num_classes;
  for (int i = 0; i < n_source; ++i) {
    Scene s = gen_scene(spec, Domain::kSource, i);
    b.train.source_images.push_back(std::move(s.image));
    b.train.source_labels.push_back(std::move(s.labels));
  }
  for (int i = 0; i < n_target; ++i) {
    Scene s = gen_scene(spec, Domain::kTarget, n_source + i);
    b.train.target_images.push_back(std::move(s.image));
    b.target_eval_labels.push_back(std::move(s.labels));
  }
  return b;
}

}  // namespace drsl
