#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "otmf/common.hpp"

namespace otmf::data {

/// Points in rows: n x d. Weights are implicitly uniform (1/n each).
struct PointBatch {
  Matrix points;

  PointBatch() = default;
  explicit PointBatch(Matrix pts) : points(std::move(pts)) {}

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
  /// Throws std::invalid_argument if empty or non-finite.
  void validate() const;
};

enum class DatasetKind { gaussian, eight_gaussians, moons, scurve, checkerboard, file };

std::string to_string(DatasetKind k);
DatasetKind parse_dataset_kind(const std::string& name);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::gaussian;
  double scale = 1.0;  // multiplies every generated point
  std::string path;    // file kind only
};

// Shape constants. All synthetic sets except the checkerboard are centred and
// isotropically rescaled to unit per-coordinate variance (before `scale`).
inline constexpr double kEightGaussiansRadius = 8.0;
inline constexpr double kEightGaussiansModeStd = 0.5;
inline constexpr double kMoonsNoise = 0.05;
inline constexpr double kScurveNoise = 0.05;
inline constexpr double kCheckerboardHalfExtent = 2.0;  // [-2, 2]^2, 4x4 squares

/// Centres of the eight mixture modes after standardisation (and scale).
Matrix eight_gaussians_centers(double scale = 1.0);

/// Axis-aligned box [-h, h]^d every sample falls in. Gaussian tails are
/// unbounded; their box is the 8-sigma one, so the chance of a point escaping
/// is below 1e-14 per coordinate.
double bounding_half_width(DatasetKind k, double scale = 1.0);

/// Draws from a dataset spec. File-backed specs load once and then resample
/// rows uniformly with replacement.
class Sampler {
 public:
  explicit Sampler(DatasetSpec spec);

  const DatasetSpec& spec() const { return spec_; }
  int dim() const;
  PointBatch sample(std::size_t n, Rng& rng) const;

 private:
  DatasetSpec spec_;
  Matrix file_points_;
};

PointBatch sample(const DatasetSpec& spec, std::size_t n, Rng& rng);

/// One point per row, comma separated. Rejects ragged rows, unparsable cells,
/// non-finite values and empty files.
PointBatch load_csv(const std::filesystem::path& path);
void save_csv(const PointBatch& batch, const std::filesystem::path& path);

}  // namespace otmf::data
