#ifndef SYMDEC_SYNTHDATA_HPP
#define SYMDEC_SYNTHDATA_HPP

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "symdec/grid.hpp"
#include "symdec/tensor.hpp"

namespace symdec::synth {

/// Pixel coordinates: x is the column, y the row; pixel centers sit on integers.
struct Point {
  double x = 0.0, y = 0.0;
};

struct Segment {
  Point a, b;
  double length() const;
};

/// order 0 marks continuous rotational symmetry (a circle).
struct Center {
  Point p;
  int order = 2;
};

struct Annotation {
  std::vector<Segment> axes;
  std::vector<Center> centers;

  bool empty() const { return axes.empty() && centers.empty(); }
};

enum class Family { ellipse, rectangle, polygon, star, circle };

Family parse_family(const std::string& name);
std::string family_name(Family f);

struct SceneSpec {
  int image_size = 128;
  int min_shapes = 1;
  int max_shapes = 2;
  std::vector<Family> families{Family::ellipse, Family::rectangle, Family::polygon, Family::star};
  double min_radius = 0.15;  // bounding radius as a fraction of the image size
  double max_radius = 0.3;
  int min_sides = 3;  // regular polygons; stars use max(5, min_sides)..max_sides points
  int max_sides = 8;
  double min_contrast = 0.3;  // mean-intensity gap between a shape and the background
  double texture = 0.08;      // amplitude of concentric rings inside shapes
  double noise = 0.02;        // Gaussian pixel noise
  int max_retries = 200;

  void validate() const;
};

/// Description of one placed shape; `points` holds the outline for polygonal families.
struct ShapeInstance {
  Family family = Family::ellipse;
  Point center;
  double radius = 0.0;  // bounding radius
  double angle = 0.0;   // orientation in radians
  int sides = 0;
  double aspect = 1.0;
  std::vector<Point> points;
};

struct Scene {
  Tensor<float> image;  // [3, S, S], 8-bit quantized
  Annotation annotation;
  std::vector<ShapeInstance> shapes;
};

/// Places min..max non-overlapping shapes (bounded retries, GenerationError if not even one
/// fits) and records each shape's exact symmetry elements.
Scene generate_scene(const SceneSpec& spec, std::uint64_t seed);

/// Symmetry elements of a single shape: ellipse and rectangle 2 axes + order-2 center,
/// regular k-gon and k-star k axes + order-k center, circle an order-0 center.
Annotation symmetry_of(const ShapeInstance& shape);

enum class Task { reflection, rotation };
Task parse_task(const std::string& name);
std::string task_name(Task t);

struct RasterOptions {
  double width = 3.0;  // reflection stroke width
  double sigma = 3.0;  // rotation Gaussian
  bool binarize = true;
};

struct Raster {
  Tensor<float> heatmap;  // [H, W]
  bool empty = false;     // annotation had nothing for this task
};

/// Reflection: 1 where the pixel center lies within width/2 of an axis segment. Rotation:
/// max over centers of exp(-r²/2σ²), binarized at 0.5 unless disabled.
Raster rasterize(const Annotation& ann, Index rows, Index cols, Task task, const RasterOptions& opts = {});

/// Analytic transforms matching grid::rotate / grid::flip_horizontal on an image of the given
/// size. Quarter turns are exact; other angles clip segments to the image and drop centers
/// that leave it.
Annotation rotate(const Annotation& ann, grid::RotationAngle angle, Index rows, Index cols);
Annotation flip_horizontal(const Annotation& ann, Index cols);

/// Text form: one element per line, `axis x0 y0 x1 y1` or `center x y k`.
std::string format_annotation(const Annotation& ann);
Annotation parse_annotation(const std::string& text, const std::string& origin = "annotation");

inline constexpr int kDatasetVersion = 1;

struct ManifestEntry {
  std::string image;       // relative to the split directory
  std::string annotation;  // relative to the split directory
  Index height = 0, width = 0;
};

struct DatasetManifest {
  std::string split;
  int version = kDatasetVersion;
  std::vector<ManifestEntry> entries;
};

struct Sample {
  std::string name;
  Tensor<float> image;
  Annotation annotation;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;
};

/// Writes `count` scenes into dir/{images,annotations}/NNNN.* plus dir/manifest.json. Sample i
/// uses seed derive_seed({seed, hash(split), i}).
DatasetManifest write_dataset(const SceneSpec& spec, int count, const std::filesystem::path& dir,
                              const std::string& split, std::uint64_t seed);

Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace symdec::synth

#endif  // SYMDEC_SYNTHDATA_HPP
