#include "brave/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "brave/error.hpp"
#include "brave/io.hpp"
#include "brave/rng.hpp"
#include "brave/threading.hpp"

namespace brave::data {
namespace {

using std::numbers::pi;

constexpr int kFamilies = 10;

enum class Family { kLinear, kCircleCw, kCircleCcw, kOscH, kOscV };

struct ShapeTraj {
  Family family;
  bool square = false;
  double radius = 0.1;     // shape half-extent, unit coords
  double color[3] = {1, 1, 1};
  // linear
  double x0 = 0, y0 = 0, dirx = 1, diry = 0, speed = 0;
  // circle / oscillation
  double cx = 0.5, cy = 0.5, orbit = 0.2, omega = 0, phase = 0, freq = 0;

  void position(double t, double* x, double* y) const {
    switch (family) {
      case Family::kLinear: {
        double px = x0 + dirx * speed * t;
        double py = y0 + diry * speed * t;
        *x = px - std::floor(px);
        *y = py - std::floor(py);
        return;
      }
      case Family::kCircleCw:
      case Family::kCircleCcw: {
        double th = family == Family::kCircleCw ? phase - omega * t : phase + omega * t;
        *x = cx + orbit * std::cos(th);
        *y = cy + orbit * std::sin(th);
        return;
      }
      case Family::kOscH:
        *x = cx + orbit * std::sin(2 * pi * freq * t + phase);
        *y = cy;
        return;
      case Family::kOscV:
        *x = cx;
        *y = cy + orbit * std::sin(2 * pi * freq * t + phase);
        return;
    }
  }
};

Family class_family(int cls) {
  switch (cls % kFamilies) {
    case 6: return Family::kCircleCw;
    case 7: return Family::kCircleCcw;
    case 8: return Family::kOscH;
    case 9: return Family::kOscV;
    default: return Family::kLinear;
  }
}

// All families move at comparable speeds so that classes differ in the
// *direction and kind* of motion rather than in motion energy.
constexpr double kLinearSpeed = 0.11;   // units/s
constexpr double kOrbitPeriod = 4.0;    // s
constexpr double kOscFreq = 0.9;        // Hz
constexpr double kEventSigma = 0.05;    // s, audio pulse width

ShapeTraj sample_shape(int cls, Rng& rng) {
  ShapeTraj s;
  s.family = class_family(cls);
  s.square = rng.bernoulli(0.5);
  s.radius = rng.uniform(0.07, 0.12);
  for (double& c : s.color) c = rng.uniform(0.35, 0.95);
  switch (s.family) {
    case Family::kLinear: {
      double angle = (cls % kFamilies) * pi / 3.0;
      s.dirx = std::cos(angle);
      s.diry = std::sin(angle);
      s.speed = kLinearSpeed * rng.uniform(0.9, 1.1);
      s.x0 = rng.uniform();
      s.y0 = rng.uniform();
      break;
    }
    case Family::kCircleCw:
    case Family::kCircleCcw:
      s.cx = rng.uniform(0.35, 0.65);
      s.cy = rng.uniform(0.35, 0.65);
      s.orbit = rng.uniform(0.12, 0.25);
      s.omega = 2 * pi / kOrbitPeriod;
      s.phase = rng.uniform(0.0, 2 * pi);
      break;
    case Family::kOscH:
    case Family::kOscV:
      s.cx = rng.uniform(0.3, 0.7);
      s.cy = rng.uniform(0.3, 0.7);
      s.orbit = rng.uniform(0.12, 0.25);
      s.freq = kOscFreq;
      s.phase = rng.uniform(0.0, 2 * pi);
      break;
  }
  return s;
}

std::vector<double> shape_event_times(const ShapeTraj& s, double duration) {
  std::vector<double> events;
  switch (s.family) {
    case Family::kLinear: {
      // Path phase crosses an integer (the shape wraps around the frame).
      double s0 = s.x0 * s.dirx + s.y0 * s.diry;
      double first = (1.0 - (s0 - std::floor(s0))) / s.speed;
      for (double t = first; t < duration; t += 1.0 / s.speed) events.push_back(t);
      break;
    }
    case Family::kCircleCw:
    case Family::kCircleCcw: {
      // Orbit angle crosses zero.
      double period = 2 * pi / s.omega;
      double first = s.family == Family::kCircleCw ? s.phase / s.omega
                                                   : (2 * pi - s.phase) / s.omega;
      first = std::fmod(first, period);
      if (first < 0) first += period;
      for (double t = first; t < duration; t += period) events.push_back(t);
      break;
    }
    case Family::kOscH:
    case Family::kOscV: {
      // Turning points: oscillation phase hits pi/2 + k*pi.
      double w = 2 * pi * s.freq;
      double k = std::ceil((w * 0.0 + s.phase - pi / 2) / pi);
      double t = (pi / 2 + k * pi - s.phase) / w;
      while (t < 0) t += pi / w;
      for (; t < duration; t += pi / w) events.push_back(t);
      break;
    }
  }
  return events;
}

// Static low-frequency background texture: bilinearly interpolated value
// noise. A textured but motionless background gives the flow estimator
// structure without introducing motion of its own.
std::vector<double> make_background(int h, int w, Rng& rng) {
  const int g = 8;
  std::vector<double> grid((g + 1) * (g + 1));
  const double base = rng.uniform(0.08, 0.16);
  for (double& v : grid) v = base + rng.uniform(-0.05, 0.05);
  std::vector<double> bg(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    double gy = static_cast<double>(y) / h * g;
    int iy = static_cast<int>(gy);
    double fy = gy - iy;
    for (int x = 0; x < w; ++x) {
      double gx = static_cast<double>(x) / w * g;
      int ix = static_cast<int>(gx);
      double fx = gx - ix;
      double v00 = grid[iy * (g + 1) + ix];
      double v01 = grid[iy * (g + 1) + ix + 1];
      double v10 = grid[(iy + 1) * (g + 1) + ix];
      double v11 = grid[(iy + 1) * (g + 1) + ix + 1];
      bg[static_cast<size_t>(y) * w + x] =
          v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx + v10 * fy * (1 - fx) + v11 * fy * fx;
    }
  }
  return bg;
}

void blend_shape(std::vector<double>& frame, int h, int w, const ShapeTraj& s, double x, double y) {
  const double side = std::min(h, w);
  const double r = s.radius * side;
  // Wrap copies so shapes crossing the frame edge reappear on the other side.
  for (int oy = -1; oy <= 1; ++oy) {
    for (int ox = -1; ox <= 1; ++ox) {
      const double cxp = (x + ox) * w;
      const double cyp = (y + oy) * h;
      const int x_lo = std::max(0, static_cast<int>(std::floor(cxp - r - 1)));
      const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(cxp + r + 1)));
      const int y_lo = std::max(0, static_cast<int>(std::floor(cyp - r - 1)));
      const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(cyp + r + 1)));
      for (int py = y_lo; py <= y_hi; ++py) {
        for (int px = x_lo; px <= x_hi; ++px) {
          const double dx = px + 0.5 - cxp;
          const double dy = py + 0.5 - cyp;
          const double dist = s.square ? std::max(std::fabs(dx), std::fabs(dy))
                                       : std::sqrt(dx * dx + dy * dy);
          // 1-pixel soft edge
          const double cov = std::clamp(r - dist + 0.5, 0.0, 1.0);
          if (cov <= 0) continue;
          double* p = frame.data() + (static_cast<size_t>(py) * w + px) * 3;
          for (int c = 0; c < 3; ++c) p[c] = cov * s.color[c] + (1 - cov) * p[c];
        }
      }
    }
  }
}

std::vector<ShapeTraj> sample_shapes(const GeneratorConfig& config, int cls,
                                     uint64_t instance_seed) {
  Rng rng = stream_rng(instance_seed, "shapes", {static_cast<uint64_t>(cls)});
  int count = 1 + static_cast<int>(rng.uniform_int(3));
  std::vector<ShapeTraj> shapes;
  shapes.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) shapes.push_back(sample_shape(cls, rng));
  (void)config;
  return shapes;
}

}  // namespace

int64_t GeneratorConfig::frame_count() const {
  return static_cast<int64_t>(std::llround(fps * clip_seconds));
}

int64_t GeneratorConfig::audio_samples() const {
  return static_cast<int64_t>(std::llround(audio_rate * clip_seconds));
}

void GeneratorConfig::validate() const {
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (height < 8 || width < 8) throw ConfigError("resolution must be at least 8x8");
  if (samples_per_class < 1) throw ConfigError("samples_per_class must be >= 1");
  const double frames = fps * clip_seconds;
  if (std::fabs(frames - std::llround(frames)) > 1e-9) {
    throw ConfigError("fps*clip_seconds must be an integer frame count, got " +
                      std::to_string(frames));
  }
  const double asamp = audio_rate * clip_seconds;
  if (std::fabs(asamp - std::llround(asamp)) > 1e-9) {
    throw ConfigError("audio_rate*clip_seconds must be an integer sample count");
  }
}

std::string GeneratorConfig::cache_key() const {
  std::ostringstream os;
  os << num_classes << '|' << clip_seconds << '|' << fps << '|' << height << 'x' << width << '|'
     << audio_rate << '|' << samples_per_class << '|' << master_seed << '|' << base_freq;
  return std::to_string(hash_str(0x5eed, os.str()));
}

std::vector<double> motion_event_times(const GeneratorConfig& config, int cls,
                                       uint64_t instance_seed) {
  auto shapes = sample_shapes(config, cls, instance_seed);
  return shape_event_times(shapes.front(), config.clip_seconds);
}

MultimodalSample render_sample(const GeneratorConfig& config, int cls, uint64_t instance_seed) {
  config.validate();
  if (cls < 0 || cls >= config.num_classes) {
    throw ConfigError("class " + std::to_string(cls) + " out of range [0," +
                      std::to_string(config.num_classes) + ")");
  }
  const int h = config.height, w = config.width;
  const int64_t frames = config.frame_count();

  auto shapes = sample_shapes(config, cls, instance_seed);
  Rng bg_rng = stream_rng(instance_seed, "background", {static_cast<uint64_t>(cls)});
  std::vector<double> bg = make_background(h, w, bg_rng);

  MultimodalSample sample;
  sample.label = cls;
  sample.sample_id = instance_seed;
  sample.rgb = Tensor({frames, h, w, 3}, Precision::f32);
  auto rgb = sample.rgb.data<float>();

  std::vector<double> frame(static_cast<size_t>(h) * w * 3);
  for (int64_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) / config.fps;
    for (int i = 0; i < h * w; ++i) {
      frame[i * 3 + 0] = bg[static_cast<size_t>(i)];
      frame[i * 3 + 1] = bg[static_cast<size_t>(i)];
      frame[i * 3 + 2] = bg[static_cast<size_t>(i)];
    }
    for (const ShapeTraj& s : shapes) {
      double x, y;
      s.position(t, &x, &y);
      blend_shape(frame, h, w, s, x, y);
    }
    float* out = rgb.data() + f * h * w * 3;
    for (size_t i = 0; i < frame.size(); ++i) {
      out[i] = static_cast<float>(std::clamp(frame[i], 0.0, 1.0));
    }
  }

  // Audio: class-pitched carrier, amplitude pulses at the primary shape's
  // motion events (aligned by construction).
  const int64_t n = config.audio_samples();
  sample.audio = Tensor({n}, Precision::f32);
  auto audio = sample.audio.data<float>();
  std::vector<double> env(static_cast<size_t>(n), 0.55);
  const std::vector<double> events = shape_event_times(shapes.front(), config.clip_seconds);
  for (double te : events) {
    const int64_t lo = std::max<int64_t>(0, std::llround((te - 4 * kEventSigma) * config.audio_rate));
    const int64_t hi = std::min<int64_t>(n - 1, std::llround((te + 4 * kEventSigma) * config.audio_rate));
    for (int64_t i = lo; i <= hi; ++i) {
      const double t = static_cast<double>(i) / config.audio_rate;
      env[static_cast<size_t>(i)] += 0.35 * std::exp(-(t - te) * (t - te) / (2 * kEventSigma * kEventSigma));
    }
  }
  Rng audio_rng = stream_rng(instance_seed, "audio", {static_cast<uint64_t>(cls)});
  const double carrier_phase = audio_rng.uniform(0.0, 2 * pi);
  const double freq = config.base_freq * std::pow(2.0, cls / 12.0);
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / config.audio_rate;
    const double v = std::min(env[static_cast<size_t>(i)], 0.95) *
                     std::sin(2 * pi * freq * t + carrier_phase);
    audio[i] = static_cast<float>(v);
  }
  return sample;
}

uint64_t sample_seed(const GeneratorConfig& config, const std::string& split, int cls, int index) {
  uint64_t h = hash_str(config.master_seed, split);
  h = hash_u64(h, static_cast<uint64_t>(cls));
  h = hash_u64(h, static_cast<uint64_t>(index));
  return h;
}

Dataset generate_dataset(const GeneratorConfig& config, const std::string& split) {
  config.validate();
  Dataset ds;
  ds.config = config;
  ds.split = split;
  ds.motion_only_pair = config.num_classes >= 8 ? std::pair<int, int>{6, 7}
                                                : std::pair<int, int>{-1, -1};
  const size_t total = static_cast<size_t>(config.num_classes) * config.samples_per_class;
  ds.samples.resize(total);
  parallel_for(static_cast<int64_t>(total), [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const int cls = static_cast<int>(i / config.samples_per_class);
      const int idx = static_cast<int>(i % config.samples_per_class);
      ds.samples[static_cast<size_t>(i)] =
          render_sample(config, cls, sample_seed(config, split, cls, idx));
    }
  });
  return ds;
}

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng = stream_rng(seed, "shuffle");
  rng.shuffle(idx);
  return idx;
}

void export_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["split"] = dataset.split;
  manifest["count"] = dataset.samples.size();
  manifest["motion_only_pair"] = {dataset.motion_only_pair.first, dataset.motion_only_pair.second};
  const GeneratorConfig& c = dataset.config;
  manifest["config"] = {{"num_classes", c.num_classes}, {"clip_seconds", c.clip_seconds},
                        {"fps", c.fps},                 {"height", c.height},
                        {"width", c.width},             {"audio_rate", c.audio_rate},
                        {"samples_per_class", c.samples_per_class}, {"master_seed", c.master_seed},
                        {"base_freq", c.base_freq}};
  std::ofstream mf(dir / "manifest.json");
  if (!mf) throw IoError("cannot write manifest in " + dir.string());
  mf << manifest.dump(2) << "\n";

  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    const MultimodalSample& s = dataset.samples[i];
    io::Record rec;
    rec.tensors["rgb"] = s.rgb;
    rec.tensors["audio"] = s.audio;
    rec.ints["label"] = s.label;
    rec.ints["sample_id"] = static_cast<int64_t>(s.sample_id);
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%06zu.brv", i);
    io::write_record(dir / name, rec);
  }
}

Dataset import_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError("no manifest.json in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(mf, nullptr, true);
  Dataset ds;
  const auto& jc = manifest.at("config");
  ds.config.num_classes = jc.at("num_classes");
  ds.config.clip_seconds = jc.at("clip_seconds");
  ds.config.fps = jc.at("fps");
  ds.config.height = jc.at("height");
  ds.config.width = jc.at("width");
  ds.config.audio_rate = jc.at("audio_rate");
  ds.config.samples_per_class = jc.at("samples_per_class");
  ds.config.master_seed = jc.at("master_seed");
  ds.config.base_freq = jc.at("base_freq");
  ds.split = manifest.at("split");
  ds.motion_only_pair = {manifest.at("motion_only_pair")[0], manifest.at("motion_only_pair")[1]};
  const size_t count = manifest.at("count");
  ds.samples.resize(count);
  for (size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%06zu.brv", i);
    io::Record rec = io::read_record(dir / name);
    MultimodalSample& s = ds.samples[i];
    s.rgb = std::move(rec.tensors.at("rgb"));
    s.audio = std::move(rec.tensors.at("audio"));
    s.label = static_cast<int>(rec.ints.at("label"));
    s.sample_id = static_cast<uint64_t>(rec.ints.at("sample_id"));
  }
  return ds;
}

}  // namespace brave::data
