#include "cropstress/masking/masking.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "cropstress/core/error.hpp"
#include "cropstress/core/rng.hpp"
#include "cropstress/core/util.hpp"

namespace cropstress::masking {

using core::ErrorKind;
using core::require;

Standardized standardize(const RowMatrix& input) {
  require(input.rows >= 2, ErrorKind::data, "standardization needs at least 2 rows");
  require(input.cols >= 1, ErrorKind::data, "standardization needs at least 1 column");

  Standardized out;
  out.matrix = RowMatrix(input.rows, input.cols);
  out.means.resize(input.cols);
  out.scales.resize(input.cols);

  for (int c = 0; c < input.cols; ++c) {
    double sum = 0.0;
    for (int r = 0; r < input.rows; ++r) sum += input.at(r, c);
    const double mean = sum / input.rows;
    double ss = 0.0;
    for (int r = 0; r < input.rows; ++r) {
      const double d = input.at(r, c) - mean;
      ss += d * d;
    }
    const double variance = ss / input.rows;  // population convention
    const double scale = variance > 0.0 ? std::sqrt(variance) : 1.0;
    out.means[c] = mean;
    out.scales[c] = scale;
    for (int r = 0; r < input.rows; ++r) {
      out.matrix.at(r, c) = (input.at(r, c) - mean) / scale;
    }
  }
  return out;
}

PcaModel fit_pca(const RowMatrix& input, double variance_target) {
  require(input.rows >= input.cols, ErrorKind::data,
          "PCA needs at least as many rows as dimensions");
  require(variance_target > 0.0 && variance_target <= 1.0, ErrorKind::config,
          "variance_target must lie in (0, 1]");

  const int n = input.rows;
  const int d = input.cols;

  PcaModel model;
  model.means.resize(d);
  Eigen::MatrixXd centered(n, d);
  for (int c = 0; c < d; ++c) {
    double sum = 0.0;
    for (int r = 0; r < n; ++r) sum += input.at(r, c);
    model.means[c] = sum / n;
    for (int r = 0; r < n; ++r) centered(r, c) = input.at(r, c) - model.means[c];
  }

  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  const double total = cov.trace();
  require(total > 0.0, ErrorKind::numeric, "PCA on an all-zero (degenerate) matrix");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, ErrorKind::numeric,
          "covariance eigendecomposition failed");

  // Eigen returns ascending eigenvalues; flip to variance-descending order
  // and clamp the tiny negatives roundoff produces.
  model.components.resize(d);
  model.explained_variance.resize(d);
  for (int i = 0; i < d; ++i) {
    const int src = d - 1 - i;
    model.explained_variance[i] = std::max(0.0, solver.eigenvalues()(src));
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    // Canonical sign: largest-magnitude entry positive, so results do not
    // depend on the solver's arbitrary sign choice.
    int arg = 0;
    for (int k = 1; k < d; ++k) {
      if (std::abs(v(k)) > std::abs(v(arg))) arg = k;
    }
    if (v(arg) < 0.0) v = -v;
    model.components[i].assign(v.data(), v.data() + d);
  }

  double cumulative = 0.0;
  model.retained = d;
  for (int i = 0; i < d; ++i) {
    cumulative += model.explained_variance[i];
    if (cumulative / total >= variance_target) {
      model.retained = i + 1;
      break;
    }
  }
  return model;
}

RowMatrix project(const PcaModel& model, const RowMatrix& input, int n_components) {
  const int d = static_cast<int>(model.means.size());
  require(input.cols == d, ErrorKind::config, "projection dimension mismatch");
  const int k = n_components <= 0 ? model.retained : n_components;
  require(k >= 1 && k <= static_cast<int>(model.components.size()), ErrorKind::config,
          "component count out of range");

  RowMatrix out(input.rows, k);
  for (int r = 0; r < input.rows; ++r) {
    for (int c = 0; c < k; ++c) {
      double dot = 0.0;
      for (int j = 0; j < d; ++j) {
        dot += (input.at(r, j) - model.means[j]) * model.components[c][j];
      }
      out.at(r, c) = dot;
    }
  }
  return out;
}

namespace {

double sq_dist(const RowMatrix& points, int r, const std::vector<double>& centroid) {
  double s = 0.0;
  for (int c = 0; c < points.cols; ++c) {
    const double d = points.at(r, c) - centroid[c];
    s += d * d;
  }
  return s;
}

}  // namespace

ClusterModel kmeans(const RowMatrix& points, int k, std::uint64_t seed, int max_iter) {
  require(k >= 1, ErrorKind::config, "k must be >= 1");
  require(points.rows >= k, ErrorKind::data, "fewer points than clusters");
  require(max_iter >= 1, ErrorKind::config, "max_iter must be >= 1");

  const int n = points.rows;
  const int d = points.cols;
  core::Rng rng(seed);

  ClusterModel model;
  model.centroids.reserve(k);

  // Farthest-point initialization: seeded first pick, then repeatedly the
  // point farthest from its nearest chosen centroid (lowest index on ties).
  auto point_row = [&](int r) {
    std::vector<double> p(d);
    for (int c = 0; c < d; ++c) p[c] = points.at(r, c);
    return p;
  };
  model.centroids.push_back(point_row(static_cast<int>(rng.below(n))));
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(model.centroids.size()) < k) {
    int best = 0;
    double best_dist = -1.0;
    for (int r = 0; r < n; ++r) {
      nearest[r] = std::min(nearest[r], sq_dist(points, r, model.centroids.back()));
      if (nearest[r] > best_dist) {
        best_dist = nearest[r];
        best = r;
      }
    }
    model.centroids.push_back(point_row(best));
  }

  model.assignment.assign(n, -1);
  std::vector<int> counts(k, 0);

  for (int iter = 0; iter < max_iter; ++iter) {
    // Assignment pass.
    bool changed = false;
    double objective = 0.0;
    std::fill(counts.begin(), counts.end(), 0);
    for (int r = 0; r < n; ++r) {
      int best = 0;
      double best_dist = sq_dist(points, r, model.centroids[0]);
      for (int c = 1; c < k; ++c) {
        const double dist = sq_dist(points, r, model.centroids[c]);
        if (dist < best_dist) {
          best_dist = dist;
          best = c;
        }
      }
      changed = changed || best != model.assignment[r];
      model.assignment[r] = best;
      counts[best] += 1;
      objective += best_dist;
    }
    model.objective_trace.push_back(objective);
    model.objective = objective;
    if (!changed && iter > 0) break;

    // Empty-cluster repair: hand the cluster the point farthest from its own
    // centroid. All-duplicate inputs cannot be separated; flag and stop.
    bool repaired = false;
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      int far = 0;
      double far_dist = -1.0;
      for (int r = 0; r < n; ++r) {
        const double dist = sq_dist(points, r, model.centroids[model.assignment[r]]);
        if (dist > far_dist) {
          far_dist = dist;
          far = r;
        }
      }
      if (far_dist <= 0.0) {
        model.degenerate = true;
        return model;
      }
      model.centroids[c] = point_row(far);
      repaired = true;
    }
    if (repaired) continue;  // re-assign before the update pass

    // Update pass.
    for (int c = 0; c < k; ++c) {
      std::fill(model.centroids[c].begin(), model.centroids[c].end(), 0.0);
    }
    for (int r = 0; r < n; ++r) {
      const int c = model.assignment[r];
      for (int j = 0; j < d; ++j) model.centroids[c][j] += points.at(r, j);
    }
    for (int c = 0; c < k; ++c) {
      for (int j = 0; j < d; ++j) model.centroids[c][j] /= counts[c];
    }
  }
  return model;
}

VegetationMaskResult vegetation_mask(const std::vector<traits::TraitPlane>& trait_planes,
                                     double variance_target, std::uint64_t seed) {
  require(static_cast<int>(trait_planes.size()) == traits::kNumTraits, ErrorKind::config,
          "vegetation mask needs all 5 trait planes");
  const int w = trait_planes[0].plane.width;
  const int h = trait_planes[0].plane.height;
  int ccc_index = -1;
  for (int t = 0; t < traits::kNumTraits; ++t) {
    require(trait_planes[t].plane.width == w && trait_planes[t].plane.height == h,
            ErrorKind::data, "trait planes disagree in shape");
    if (trait_planes[t].trait == traits::TraitKind::CCC) ccc_index = t;
  }
  require(ccc_index >= 0, ErrorKind::config, "trait planes must include CCC");

  // Rows are pixels valid in every trait plane.
  std::vector<std::size_t> pixel_of_row;
  for (std::size_t i = 0; i < trait_planes[0].plane.size(); ++i) {
    bool ok = true;
    for (const auto& tp : trait_planes) ok = ok && tp.plane.valid[i] != 0;
    if (ok) pixel_of_row.push_back(i);
  }
  require(!pixel_of_row.empty(), ErrorKind::data, "all pixels invalid: cannot mask");

  RowMatrix matrix(static_cast<int>(pixel_of_row.size()), traits::kNumTraits);
  for (int r = 0; r < matrix.rows; ++r) {
    for (int t = 0; t < traits::kNumTraits; ++t) {
      matrix.at(r, t) = trait_planes[t].plane.values[pixel_of_row[r]];
    }
  }

  VegetationMaskResult result;
  const Standardized std_data = standardize(matrix);
  double spread = 0.0;
  for (const double v : std_data.matrix.data) spread += v * v;
  RowMatrix projected;
  if (spread > 0.0) {
    result.pca = fit_pca(std_data.matrix, variance_target);
    projected = project(result.pca, std_data.matrix);
  } else {
    // Perfectly uniform scene: no principal axes exist. Cluster the centered
    // zeros directly so the empty-cluster repair rule still defines a mask.
    result.degenerate_warning = true;
    projected = std_data.matrix;
  }
  result.clusters = kmeans(projected, 2, seed);
  result.degenerate_warning = result.degenerate_warning || result.clusters.degenerate;

  // The cluster whose pixels carry more raw CCC is the vegetation.
  double mean_ccc[2] = {0.0, 0.0};
  int count[2] = {0, 0};
  for (int r = 0; r < matrix.rows; ++r) {
    const int c = result.clusters.assignment[r];
    mean_ccc[c] += matrix.at(r, ccc_index);
    count[c] += 1;
  }
  for (int c = 0; c < 2; ++c) {
    if (count[c] > 0) mean_ccc[c] /= count[c];
  }
  // An empty cluster (possible after a failed repair) never wins the label.
  int vegetation_cluster = 0;
  if (count[0] == 0) {
    vegetation_cluster = 1;
  } else if (count[1] > 0 && mean_ccc[1] > mean_ccc[0]) {
    vegetation_cluster = 1;
  }

  result.mask = core::Plane(w, h, 0.0, false);
  for (int r = 0; r < matrix.rows; ++r) {
    const std::size_t i = pixel_of_row[r];
    result.mask.values[i] = result.clusters.assignment[r] == vegetation_cluster ? 1.0 : 0.0;
    result.mask.valid[i] = 1;
  }
  return result;
}

void write_mask_csv(const core::Plane& mask, const std::filesystem::path& path) {
  std::string csv = "x,y,is_vegetation\n";
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.is_valid(x, y)) continue;
      csv += std::to_string(x);
      csv += ',';
      csv += std::to_string(y);
      csv += ',';
      csv += mask.at(x, y) != 0.0 ? '1' : '0';
      csv += '\n';
    }
  }
  core::spit(path, csv);
}

core::Plane load_mask_csv(const std::filesystem::path& path, int width, int height) {
  const std::string text = core::slurp(path);
  const auto lines = core::split(core::trim(text), '\n');
  require(!lines.empty() && core::trim(lines[0]) == "x,y,is_vegetation", ErrorKind::data,
          path.string() + ": expected header 'x,y,is_vegetation'");
  core::Plane mask(width, height, 0.0, false);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string line = core::trim(lines[i]);
    if (line.empty()) continue;
    const auto cells = core::split(line, ',');
    require(cells.size() == 3, ErrorKind::data,
            path.string() + ": row " + std::to_string(i) + " needs 3 columns");
    const int x = static_cast<int>(core::parse_int(cells[0]));
    const int y = static_cast<int>(core::parse_int(cells[1]));
    mask.set(x, y, core::parse_int(cells[2]) != 0 ? 1.0 : 0.0, true);
  }
  return mask;
}

}  // namespace cropstress::masking
