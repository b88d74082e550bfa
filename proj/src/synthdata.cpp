#include "symdec/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "symdec/image.hpp"
#include "symdec/rng.hpp"
#include "symdec/sapg.hpp"

namespace symdec::synth {
namespace {

constexpr double kPi = std::numbers::pi;

// Annotation coordinates live on a dyadic lattice so that quarter-turn transforms, which only
// negate, swap and subtract from integers, are exact in floating point.
double snap(double v) { return std::round(v * 1024.0) / 1024.0; }

bool inside_polygon(const std::vector<Point>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

bool inside(const ShapeInstance& s, double x, double y) {
  const double dx = x - s.center.x, dy = y - s.center.y;
  switch (s.family) {
    case Family::circle:
      return dx * dx + dy * dy <= s.radius * s.radius;
    case Family::ellipse: {
      const double a = s.radius, b = s.radius / s.aspect;
      const double u = dx * std::cos(s.angle) + dy * std::sin(s.angle);
      const double v = -dx * std::sin(s.angle) + dy * std::cos(s.angle);
      return (u / a) * (u / a) + (v / b) * (v / b) <= 1.0;
    }
    default:
      return inside_polygon(s.points, x, y);
  }
}

/// Smallest positive t with center + t·dir on the polygon outline.
double ray_exit(const std::vector<Point>& poly, Point c, double dx, double dy) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % poly.size()];
    const double ex = q.x - p.x, ey = q.y - p.y;
    const double den = dx * ey - dy * ex;
    if (std::abs(den) < 1e-14) continue;
    const double wx = p.x - c.x, wy = p.y - c.y;
    const double t = (wx * ey - wy * ex) / den;
    const double s = (wx * dy - wy * dx) / den;
    if (t > 1e-12 && s >= -1e-12 && s <= 1 + 1e-12) best = std::min(best, t);
  }
  return best;
}

/// Axis through `c` along angle phi, reaching t_plus forward and t_minus backward. The
/// direction is snapped first so the endpoints and c stay exactly collinear.
Segment axis_segment(Point c, double phi, double t_plus, double t_minus) {
  const double dx = snap(std::cos(phi)), dy = snap(std::sin(phi));
  const double norm = std::hypot(dx, dy);
  const double tp = snap(t_plus / norm), tm = snap(t_minus / norm);
  return {{c.x + tp * dx, c.y + tp * dy}, {c.x - tm * dx, c.y - tm * dy}};
}

Point rotate_exact(Point p, int k, double s) {
  switch (((k % 4) + 4) % 4) {
    case 1:
      return {p.y, s - p.x};
    case 2:
      return {s - p.x, s - p.y};
    case 3:
      return {s - p.y, p.x};
    default:
      return p;
  }
}

/// Liang-Barsky clip to [0, cols-1] x [0, rows-1].
bool clip(Segment& seg, Index rows, Index cols) {
  double t0 = 0.0, t1 = 1.0;
  const double dx = seg.b.x - seg.a.x, dy = seg.b.y - seg.a.y;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {seg.a.x, double(cols - 1) - seg.a.x, seg.a.y, double(rows - 1) - seg.a.y};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0) return false;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0) {
      t0 = std::max(t0, r);
    } else {
      t1 = std::min(t1, r);
    }
    if (t0 > t1) return false;
  }
  const Point a = seg.a;
  seg.a = {a.x + t0 * dx, a.y + t0 * dy};
  seg.b = {a.x + t1 * dx, a.y + t1 * dy};
  return true;
}

double luminance(const std::array<double, 3>& c) { return (c[0] + c[1] + c[2]) / 3.0; }

}  // namespace

double Segment::length() const { return std::hypot(b.x - a.x, b.y - a.y); }

Family parse_family(const std::string& name) {
  if (name == "ellipse") return Family::ellipse;
  if (name == "rectangle") return Family::rectangle;
  if (name == "polygon") return Family::polygon;
  if (name == "star") return Family::star;
  if (name == "circle") return Family::circle;
  throw ConfigError("unknown shape family '" + name + "'");
}

std::string family_name(Family f) {
  switch (f) {
    case Family::ellipse:
      return "ellipse";
    case Family::rectangle:
      return "rectangle";
    case Family::polygon:
      return "polygon";
    case Family::star:
      return "star";
    case Family::circle:
      return "circle";
  }
  return "?";
}

void SceneSpec::validate() const {
  if (image_size < 16) throw ConfigError("scene image_size must be >= 16");
  if (min_shapes < 1 || max_shapes < min_shapes) throw ConfigError("scene needs 1 <= min_shapes <= max_shapes");
  if (families.empty()) throw ConfigError("scene families must not be empty");
  if (!(min_radius > 0 && max_radius >= min_radius && max_radius <= 0.5)) {
    throw ConfigError("scene radii must satisfy 0 < min_radius <= max_radius <= 0.5");
  }
  if (min_sides < 3 || max_sides < min_sides) throw ConfigError("scene needs 3 <= min_sides <= max_sides");
  if (noise < 0 || texture < 0 || min_contrast < 0 || min_contrast > 0.8) throw ConfigError("scene color parameters out of range");
  if (max_retries < 1) throw ConfigError("scene max_retries must be >= 1");
}

Annotation symmetry_of(const ShapeInstance& s) {
  Annotation ann;
  const Point c = s.center;
  switch (s.family) {
    case Family::circle:
      ann.centers.push_back({c, 0});
      break;
    case Family::ellipse: {
      const double a = s.radius, b = s.radius / s.aspect;
      ann.axes.push_back(axis_segment(c, s.angle, a, a));
      ann.axes.push_back(axis_segment(c, s.angle + kPi / 2, b, b));
      ann.centers.push_back({c, 2});
      break;
    }
    case Family::rectangle: {
      const double hw = s.radius * std::cos(std::atan(1.0 / s.aspect));
      const double hh = s.radius * std::sin(std::atan(1.0 / s.aspect));
      ann.axes.push_back(axis_segment(c, s.angle, hw, hw));
      ann.axes.push_back(axis_segment(c, s.angle + kPi / 2, hh, hh));
      ann.centers.push_back({c, 2});
      break;
    }
    case Family::polygon:
    case Family::star: {
      for (int j = 0; j < s.sides; ++j) {
        const double phi = s.angle + kPi * j / s.sides;
        const double dx = std::cos(phi), dy = std::sin(phi);
        ann.axes.push_back(axis_segment(c, phi, ray_exit(s.points, c, dx, dy), ray_exit(s.points, c, -dx, -dy)));
      }
      ann.centers.push_back({c, s.sides});
      break;
    }
  }
  return ann;
}

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const double size = spec.image_size;

  const int wanted = pick(spec.min_shapes, spec.max_shapes);
  std::vector<ShapeInstance> shapes;
  for (int n = 0; n < wanted; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
      ShapeInstance s;
      s.family = spec.families[std::size_t(pick(0, int(spec.families.size()) - 1))];
      s.radius = snap(uni(spec.min_radius, spec.max_radius) * size);
      if (s.radius + 1 > size - 2 - s.radius) continue;  // no room for the border margin
      s.center = {snap(uni(s.radius + 1, size - 2 - s.radius)), snap(uni(s.radius + 1, size - 2 - s.radius))};
      s.angle = uni(0.0, 2 * kPi);
      bool clear = true;
      for (const auto& o : shapes) {
        if (std::hypot(o.center.x - s.center.x, o.center.y - s.center.y) < o.radius + s.radius + 2) clear = false;
      }
      if (!clear) continue;
      if (s.family == Family::ellipse || s.family == Family::rectangle) s.aspect = uni(1.3, 2.0);
      if (s.family == Family::polygon) s.sides = pick(spec.min_sides, spec.max_sides);
      if (s.family == Family::star) s.sides = pick(std::max(5, spec.min_sides), std::max(5, spec.max_sides));
      if (s.family == Family::rectangle) {
        const double beta = std::atan(1.0 / s.aspect);
        for (double a : {beta, kPi - beta, kPi + beta, 2 * kPi - beta}) {
          s.points.push_back({s.center.x + s.radius * std::cos(s.angle + a), s.center.y + s.radius * std::sin(s.angle + a)});
        }
      } else if (s.family == Family::polygon || s.family == Family::star) {
        const bool star = s.family == Family::star;
        const int count = star ? 2 * s.sides : s.sides;
        for (int j = 0; j < count; ++j) {
          const double r = star && j % 2 == 1 ? 0.45 * s.radius : s.radius;
          const double a = s.angle + 2 * kPi * j / count;
          s.points.push_back({s.center.x + r * std::cos(a), s.center.y + r * std::sin(a)});
        }
      }
      shapes.push_back(std::move(s));
      placed = true;
    }
    if (!placed) {
      if (shapes.empty()) {
        throw GenerationError("could not place a shape in " + std::to_string(spec.max_retries) + " attempts");
      }
      break;
    }
  }

  // Background: linear gradient between two random colors along a random direction.
  std::array<double, 3> c0{}, c1{};
  for (int i = 0; i < 3; ++i) {
    c0[std::size_t(i)] = uni(0.05, 0.95);
    c1[std::size_t(i)] = std::clamp(c0[std::size_t(i)] + uni(-0.2, 0.2), 0.0, 1.0);
  }
  const double gdir = uni(0.0, 2 * kPi);
  const Index n = spec.image_size;
  Tensor<float> img(Shape{3, n, n});
  for (Index r = 0; r < n; ++r) {
    for (Index q = 0; q < n; ++q) {
      const double t = 0.5 + 0.5 * ((double(q) / (n - 1) - 0.5) * std::cos(gdir) + (double(r) / (n - 1) - 0.5) * std::sin(gdir));
      for (Index c = 0; c < 3; ++c) img(c, r, q) = float(c0[std::size_t(c)] + t * (c1[std::size_t(c)] - c0[std::size_t(c)]));
    }
  }
  const double bg = 0.5 * (luminance(c0) + luminance(c1));

  Scene scene;
  for (const auto& s : shapes) {
    std::array<double, 3> fill{};
    for (int attempt = 0; attempt < 64; ++attempt) {
      for (auto& v : fill) v = uni(0.0, 1.0);
      if (std::abs(luminance(fill) - bg) >= spec.min_contrast) break;
      if (attempt == 63) fill = bg > 0.5 ? std::array<double, 3>{0.05, 0.05, 0.05} : std::array<double, 3>{0.95, 0.95, 0.95};
    }
    const double period = std::max(2.0, s.radius / 3.0);
    const Index lo_r = std::max<Index>(0, Index(std::floor(s.center.y - s.radius - 1)));
    const Index hi_r = std::min<Index>(n - 1, Index(std::ceil(s.center.y + s.radius + 1)));
    const Index lo_c = std::max<Index>(0, Index(std::floor(s.center.x - s.radius - 1)));
    const Index hi_c = std::min<Index>(n - 1, Index(std::ceil(s.center.x + s.radius + 1)));
    for (Index r = lo_r; r <= hi_r; ++r) {
      for (Index q = lo_c; q <= hi_c; ++q) {
        int hits = 0;
        for (int sy = 0; sy < 3; ++sy) {
          for (int sx = 0; sx < 3; ++sx) hits += inside(s, double(q) + (sx - 1) / 3.0, double(r) + (sy - 1) / 3.0);
        }
        if (hits == 0) continue;
        const double cover = hits / 9.0;
        const double ring = 1.0 + spec.texture * std::cos(2 * kPi * std::hypot(q - s.center.x, r - s.center.y) / period);
        for (Index c = 0; c < 3; ++c) {
          const double v = std::clamp(fill[std::size_t(c)] * ring, 0.0, 1.0);
          img(c, r, q) = float((1 - cover) * img(c, r, q) + cover * v);
        }
      }
    }
    const Annotation a = symmetry_of(s);
    scene.annotation.axes.insert(scene.annotation.axes.end(), a.axes.begin(), a.axes.end());
    scene.annotation.centers.insert(scene.annotation.centers.end(), a.centers.begin(), a.centers.end());
  }
  if (spec.noise > 0) {
    std::normal_distribution<double> gauss(0.0, spec.noise);
    for (Index i = 0; i < img.size(); ++i) img[i] = float(std::clamp(double(img[i]) + gauss(rng), 0.0, 1.0));
  }
  scene.image = image::quantize8(img);
  scene.shapes = std::move(shapes);
  return scene;
}

Task parse_task(const std::string& name) {
  if (name == "reflection") return Task::reflection;
  if (name == "rotation") return Task::rotation;
  throw ConfigError("unknown task '" + name + "' (expected reflection|rotation)");
}

std::string task_name(Task t) { return t == Task::reflection ? "reflection" : "rotation"; }

Raster rasterize(const Annotation& ann, Index rows, Index cols, Task task, const RasterOptions& opts) {
  Raster out{Tensor<float>(Shape{rows, cols}), false};
  if (task == Task::reflection) {
    if (!(opts.width >= 1)) throw ConfigError("reflection stroke width must be >= 1");
    out.empty = ann.axes.empty();
    const double half = opts.width / 2, limit = half * half;
    for (const auto& s : ann.axes) {
      const Index r0 = std::max<Index>(0, Index(std::floor(std::min(s.a.y, s.b.y) - half - 1)));
      const Index r1 = std::min<Index>(rows - 1, Index(std::ceil(std::max(s.a.y, s.b.y) + half + 1)));
      const Index q0 = std::max<Index>(0, Index(std::floor(std::min(s.a.x, s.b.x) - half - 1)));
      const Index q1 = std::min<Index>(cols - 1, Index(std::ceil(std::max(s.a.x, s.b.x) + half + 1)));
      const double abx = s.b.x - s.a.x, aby = s.b.y - s.a.y;
      const double len2 = abx * abx + aby * aby;
      for (Index r = r0; r <= r1; ++r) {
        for (Index q = q0; q <= q1; ++q) {
          // Two-term sums only: a quarter turn permutes and negates the terms, and x + y == y + x.
          const double px = double(q) - s.a.x, py = double(r) - s.a.y;
          const double t = len2 > 0 ? std::clamp((px * abx + py * aby) / len2, 0.0, 1.0) : 0.0;
          const double ex = px - t * abx, ey = py - t * aby;
          if (ex * ex + ey * ey <= limit) out.heatmap(r, q) = 1.0f;
        }
      }
    }
  } else {
    if (!(opts.sigma > 0)) throw ConfigError("rotation sigma must be positive");
    out.empty = ann.centers.empty();
    const double two_s2 = 2 * opts.sigma * opts.sigma;
    for (const auto& c : ann.centers) {
      for (Index r = 0; r < rows; ++r) {
        for (Index q = 0; q < cols; ++q) {
          const double dx = double(q) - c.p.x, dy = double(r) - c.p.y;
          const double d2 = dx * dx + dy * dy;
          const float v = opts.binarize ? (d2 <= two_s2 * std::log(2.0) ? 1.0f : 0.0f) : float(std::exp(-d2 / two_s2));
          out.heatmap(r, q) = std::max(out.heatmap(r, q), v);
        }
      }
    }
  }
  return out;
}

Annotation rotate(const Annotation& ann, grid::RotationAngle angle, Index rows, Index cols) {
  if (rows != cols) throw ShapeError("annotation rotation needs a square image");
  Annotation out;
  const double s = double(rows - 1);
  if (angle.exact()) {
    const int k = angle.quarter_turns();
    for (const auto& a : ann.axes) out.axes.push_back({rotate_exact(a.a, k, s), rotate_exact(a.b, k, s)});
    for (const auto& c : ann.centers) out.centers.push_back({rotate_exact(c.p, k, s), c.order});
    return out;
  }
  const double m = s / 2, cs = std::cos(angle.radians()), sn = std::sin(angle.radians());
  auto map = [&](Point p) {
    const double a = p.y - m, b = p.x - m;
    return Point{sn * a + cs * b + m, cs * a - sn * b + m};
  };
  for (const auto& a : ann.axes) {
    Segment seg{map(a.a), map(a.b)};
    if (clip(seg, rows, cols) && seg.length() > 1.0) out.axes.push_back(seg);
  }
  for (const auto& c : ann.centers) {
    const Point p = map(c.p);
    if (p.x >= 0 && p.y >= 0 && p.x <= double(cols - 1) && p.y <= double(rows - 1)) out.centers.push_back({p, c.order});
  }
  return out;
}

Annotation flip_horizontal(const Annotation& ann, Index cols) {
  const double s = double(cols - 1);
  Annotation out;
  for (const auto& a : ann.axes) out.axes.push_back({{s - a.a.x, a.a.y}, {s - a.b.x, a.b.y}});
  for (const auto& c : ann.centers) out.centers.push_back({{s - c.p.x, c.p.y}, c.order});
  return out;
}

std::string format_annotation(const Annotation& ann) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& a : ann.axes) os << "axis " << a.a.x << ' ' << a.a.y << ' ' << a.b.x << ' ' << a.b.y << '\n';
  for (const auto& c : ann.centers) os << "center " << c.p.x << ' ' << c.p.y << ' ' << c.order << '\n';
  return os.str();
}

Annotation parse_annotation(const std::string& text, const std::string& origin) {
  Annotation ann;
  std::istringstream is(text);
  std::string line;
  for (int no = 1; std::getline(is, line); ++no) {
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind) || kind[0] == '#') continue;
    auto fail = [&](const std::string& why) { return FormatError(origin + ":" + std::to_string(no) + ": " + why); };
    if (kind == "axis") {
      Segment s;
      if (!(ls >> s.a.x >> s.a.y >> s.b.x >> s.b.y)) throw fail("axis needs x0 y0 x1 y1");
      ann.axes.push_back(s);
    } else if (kind == "center") {
      Center c;
      if (!(ls >> c.p.x >> c.p.y >> c.order)) throw fail("center needs x y k");
      if (c.order != 0 && c.order < 2) throw fail("rotation order must be >= 2 (or 0 for continuous)");
      ann.centers.push_back(c);
    } else {
      throw fail("unknown element '" + kind + "'");
    }
    std::string extra;
    if (ls >> extra) throw fail("trailing text '" + extra + "'");
  }
  return ann;
}

DatasetManifest write_dataset(const SceneSpec& spec, int count, const std::filesystem::path& dir,
                              const std::string& split, std::uint64_t seed) {
  spec.validate();
  if (count < 1) throw ConfigError("dataset count must be >= 1");
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "annotations");
  DatasetManifest manifest{split, kDatasetVersion, {}};
  const std::uint64_t split_key = sapg::fnv1a(split);
  for (int i = 0; i < count; ++i) {
    std::ostringstream stem;
    stem << std::setw(4) << std::setfill('0') << i;
    const Scene scene = generate_scene(spec, derive_seed({seed, split_key, std::uint64_t(i)}));
    ManifestEntry e{"images/" + stem.str() + ".ppm", "annotations/" + stem.str() + ".txt", spec.image_size,
                    spec.image_size};
    image::write_ppm(dir / e.image, scene.image);
    std::ofstream os(dir / e.annotation);
    if (!os) throw IoError("cannot write " + (dir / e.annotation).string());
    os << format_annotation(scene.annotation);
    manifest.entries.push_back(std::move(e));
  }
  nlohmann::json j;
  j["format"] = "symdec-dataset";
  j["version"] = manifest.version;
  j["split"] = split;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    j["entries"].push_back({{"image", e.image}, {"annotation", e.annotation}, {"height", e.height}, {"width", e.width}});
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  os << j.dump(2) << '\n';
  return manifest;
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw IoError("cannot open dataset manifest " + path.string());
  Dataset ds;
  try {
    const auto j = nlohmann::json::parse(is);
    ds.manifest.version = j.at("version").get<int>();
    if (ds.manifest.version != kDatasetVersion) {
      throw FormatError(path.string() + ": unsupported version " + std::to_string(ds.manifest.version));
    }
    ds.manifest.split = j.at("split").get<std::string>();
    for (const auto& e : j.at("entries")) {
      ds.manifest.entries.push_back({e.at("image").get<std::string>(), e.at("annotation").get<std::string>(),
                                     e.at("height").get<Index>(), e.at("width").get<Index>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  for (const auto& e : ds.manifest.entries) {
    for (const auto& rel : {e.image, e.annotation}) {
      if (!std::filesystem::exists(dir / rel)) throw IoError("dataset entry " + rel + ": file " + (dir / rel).string() + " is missing");
    }
    Sample s;
    s.name = std::filesystem::path(e.image).stem().string();
    s.image = image::read_ppm(dir / e.image);
    if (s.image.dim(1) != e.height || s.image.dim(2) != e.width) {
      throw FormatError("dataset entry " + e.image + ": size differs from manifest");
    }
    std::ifstream as(dir / e.annotation);
    std::stringstream buf;
    buf << as.rdbuf();
    s.annotation = parse_annotation(buf.str(), (dir / e.annotation).string());
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace symdec::synth
