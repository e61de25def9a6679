#include "otmf/datasets.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace otmf::data {

namespace {

constexpr double kPi = std::numbers::pi;

// Per-coordinate standard deviation of the raw mixture: R^2/2 + s^2.
const double kEightGaussiansStd =
    std::sqrt(kEightGaussiansRadius * kEightGaussiansRadius / 2.0 +
              kEightGaussiansModeStd * kEightGaussiansModeStd);

// Raw moons (sklearn layout): mean (1/2, 1/4), coordinate variances 3/4 and
// 9/16 - 1/pi (noise ignored); isotropic rescale by their RMS.
constexpr double kMoonsMeanX = 0.5;
constexpr double kMoonsMeanY = 0.25;
const double kMoonsStd = std::sqrt((0.75 + 0.5625 - 1.0 / kPi) / 2.0);

double scurve_std() {
  // x = sin(t), t ~ U(-3pi/2, 3pi/2): E[x^2] = 1/2.
  // z = sign(t)(cos t - 1): E[z^2] = 1/2 + 2/(1.5 pi) + 1.
  const double ex2 = 0.5;
  const double ez2 = 0.5 + 2.0 / (1.5 * kPi) + 1.0;
  return std::sqrt((ex2 + ez2) / 2.0);
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw std::runtime_error(std::string(what) + ": non-finite sample");
}

}  // namespace

void PointBatch::validate() const {
  if (points.rows() < 1 || points.cols() < 1) {
    throw std::invalid_argument("point batch must hold at least one point");
  }
  if (!points.allFinite()) throw std::invalid_argument("point batch has non-finite entries");
}

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::gaussian: return "gaussian";
    case DatasetKind::eight_gaussians: return "eight_gaussians";
    case DatasetKind::moons: return "moons";
    case DatasetKind::scurve: return "scurve";
    case DatasetKind::checkerboard: return "checkerboard";
    case DatasetKind::file: return "file";
  }
  return "gaussian";
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "gaussian" || name == "N") return DatasetKind::gaussian;
  if (name == "eight_gaussians" || name == "8gaussians") return DatasetKind::eight_gaussians;
  if (name == "moons") return DatasetKind::moons;
  if (name == "scurve") return DatasetKind::scurve;
  if (name == "checkerboard") return DatasetKind::checkerboard;
  if (name == "file") return DatasetKind::file;
  throw std::invalid_argument("unknown dataset kind '" + name + "'");
}

Matrix eight_gaussians_centers(double scale) {
  Matrix c(8, 2);
  for (int k = 0; k < 8; ++k) {
    const double a = kPi * k / 4.0;
    c(k, 0) = kEightGaussiansRadius * std::cos(a);
    c(k, 1) = kEightGaussiansRadius * std::sin(a);
  }
  return c * (scale / kEightGaussiansStd);
}

double bounding_half_width(DatasetKind k, double scale) {
  double h = 0.0;
  switch (k) {
    case DatasetKind::gaussian: h = 8.0; break;
    case DatasetKind::eight_gaussians:
      h = (kEightGaussiansRadius + 8.0 * kEightGaussiansModeStd) / kEightGaussiansStd;
      break;
    case DatasetKind::moons:
      h = (1.5 + 8.0 * kMoonsNoise) / kMoonsStd;
      break;
    case DatasetKind::scurve:
      h = (2.0 + 8.0 * kScurveNoise) / scurve_std();
      break;
    case DatasetKind::checkerboard: h = kCheckerboardHalfExtent; break;
    case DatasetKind::file:
      throw std::invalid_argument("file datasets have no fixed bounding box");
  }
  return h * std::abs(scale);
}

Sampler::Sampler(DatasetSpec spec) : spec_(std::move(spec)) {
  if (!(spec_.scale > 0.0) || !std::isfinite(spec_.scale)) {
    throw std::invalid_argument("dataset scale must be positive and finite");
  }
  if (spec_.kind == DatasetKind::file) {
    if (spec_.path.empty()) throw std::invalid_argument("file dataset needs a path");
    file_points_ = load_csv(spec_.path).points;
  } else if (!spec_.path.empty()) {
    throw std::invalid_argument("dataset path is only valid for kind=file");
  }
}

int Sampler::dim() const {
  return spec_.kind == DatasetKind::file ? static_cast<int>(file_points_.cols()) : 2;
}

PointBatch Sampler::sample(std::size_t n, Rng& rng) const {
  if (n == 0) throw std::invalid_argument("sample: n must be >= 1");
  const auto rows = static_cast<Eigen::Index>(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Matrix out;
  switch (spec_.kind) {
    case DatasetKind::gaussian: {
      out.resize(rows, 2);
      for (Eigen::Index i = 0; i < rows; ++i) {
        out(i, 0) = normal(rng);
        out(i, 1) = normal(rng);
      }
      break;
    }
    case DatasetKind::eight_gaussians: {
      out.resize(rows, 2);
      std::uniform_int_distribution<int> mode(0, 7);
      for (Eigen::Index i = 0; i < rows; ++i) {
        const double a = kPi * mode(rng) / 4.0;
        const double x = kEightGaussiansRadius * std::cos(a) + kEightGaussiansModeStd * normal(rng);
        const double y = kEightGaussiansRadius * std::sin(a) + kEightGaussiansModeStd * normal(rng);
        out(i, 0) = x / kEightGaussiansStd;
        out(i, 1) = y / kEightGaussiansStd;
      }
      break;
    }
    case DatasetKind::moons: {
      out.resize(rows, 2);
      std::bernoulli_distribution inner(0.5);
      for (Eigen::Index i = 0; i < rows; ++i) {
        const double a = kPi * unif(rng);
        double x, y;
        if (inner(rng)) {
          x = 1.0 - std::cos(a);
          y = 0.5 - std::sin(a);
        } else {
          x = std::cos(a);
          y = std::sin(a);
        }
        x += kMoonsNoise * normal(rng);
        y += kMoonsNoise * normal(rng);
        out(i, 0) = (x - kMoonsMeanX) / kMoonsStd;
        out(i, 1) = (y - kMoonsMeanY) / kMoonsStd;
      }
      break;
    }
    case DatasetKind::scurve: {
      out.resize(rows, 2);
      const double s = scurve_std();
      for (Eigen::Index i = 0; i < rows; ++i) {
        const double t = 3.0 * kPi * (unif(rng) - 0.5);
        const double x = std::sin(t) + kScurveNoise * normal(rng);
        const double z = (t >= 0.0 ? 1.0 : -1.0) * (std::cos(t) - 1.0) +
                         kScurveNoise * normal(rng);
        out(i, 0) = x / s;
        out(i, 1) = z / s;
      }
      break;
    }
    case DatasetKind::checkerboard: {
      out.resize(rows, 2);
      // 8 "on" cells of the 4x4 grid over [-2, 2]^2: (col + row) even.
      std::uniform_int_distribution<int> cell(0, 7);
      for (Eigen::Index i = 0; i < rows; ++i) {
        const int c = cell(rng);
        const int row = c / 2;
        const int col = 2 * (c % 2) + (row % 2);
        out(i, 0) = -kCheckerboardHalfExtent + col + unif(rng);
        out(i, 1) = -kCheckerboardHalfExtent + row + unif(rng);
      }
      break;
    }
    case DatasetKind::file: {
      std::uniform_int_distribution<Eigen::Index> pick(0, file_points_.rows() - 1);
      out.resize(rows, file_points_.cols());
      for (Eigen::Index i = 0; i < rows; ++i) out.row(i) = file_points_.row(pick(rng));
      break;
    }
  }
  out *= spec_.scale;
  check_finite(out, "sample");
  return PointBatch(std::move(out));
}

PointBatch sample(const DatasetSpec& spec, std::size_t n, Rng& rng) {
  return Sampler(spec).sample(n, rng);
}

PointBatch load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read point file " + path.string());
  std::vector<double> values;
  Eigen::Index cols = -1;
  Eigen::Index rows = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Eigen::Index count = 0;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      const auto first = cell.find_first_not_of(" \t");
      const auto last = cell.find_last_not_of(" \t");
      cell = first == std::string::npos ? "" : cell.substr(first, last - first + 1);
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc{} || res.ptr != cell.data() + cell.size() ||
          !std::isfinite(v)) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": cannot parse '" + cell + "' as a real number");
      }
      values.push_back(v);
      ++count;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (cols < 0) {
      cols = count;
    } else if (count != cols) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(cols) + " columns, found " +
                               std::to_string(count));
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error(path.string() + ": no points");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values[std::size_t(i * cols + j)];
  }
  return PointBatch(std::move(m));
}

void save_csv(const PointBatch& batch, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write point file " + path.string());
  char buf[64];
  for (Eigen::Index i = 0; i < batch.points.rows(); ++i) {
    for (Eigen::Index j = 0; j < batch.points.cols(); ++j) {
      if (j > 0) out << ',';
      const auto res = std::to_chars(buf, buf + sizeof(buf), batch.points(i, j));
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing point file " + path.string());
}

}  // namespace otmf::data
