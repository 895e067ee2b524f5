#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tcvae/rng.hpp"
#include "tcvae/tensor.hpp"

namespace tcvae {

inline constexpr std::size_t kImageSide = 16;

// One quantized ground-truth factor.
struct FactorSpec {
  std::string name;
  std::vector<double> values;  // strictly increasing grid

  FactorSpec() = default;
  FactorSpec(std::string name, std::vector<double> values);
  std::size_t cardinality() const { return values.size(); }
  // Level index of a grid value; throws if v is not on the grid.
  std::size_t level_of(double v) const;
};

// Probability table over the full factor grid, last factor varying fastest.
class JointFactorDistribution {
 public:
  JointFactorDistribution() = default;
  JointFactorDistribution(std::vector<std::size_t> cardinalities, std::vector<double> probabilities,
                          std::string tag);

  const std::vector<std::size_t>& cardinalities() const { return cardinalities_; }
  const std::vector<double>& probabilities() const { return probabilities_; }
  const std::string& tag() const { return tag_; }
  std::size_t num_cells() const { return probabilities_.size(); }
  std::size_t num_factors() const { return cardinalities_.size(); }
  double max_min_ratio() const { return max_min_ratio_; }

  std::size_t cell_index(std::span<const std::size_t> levels) const;
  std::vector<std::size_t> levels_of(std::size_t cell) const;
  std::vector<double> marginal(std::size_t factor) const;

 private:
  std::vector<std::size_t> cardinalities_;
  std::vector<double> probabilities_;
  std::string tag_;
  double max_min_ratio_ = 1.0;
};

// Dataset index n <-> factor levels, plus the index sets X_{v_k}.
struct FactorTable {
  std::vector<std::vector<std::size_t>> levels;  // [n][k]
  std::vector<std::vector<std::vector<std::size_t>>> index_sets;  // [k][level] -> indices
};

// p(n | v_k = v) restricted to its support.
struct ConditionalIndexDistribution {
  std::vector<std::size_t> indices;
  std::vector<double> weights;
};

struct RenderedDataset {
  std::string spec;
  std::vector<FactorSpec> factors;
  JointFactorDistribution joint;
  FactorTable table;
  Tensor images;  // [N, 16 * 16], values in [0, 1]

  std::size_t size() const { return images.dim(0); }
  std::size_t num_pixels() const { return images.dim(1); }
  std::size_t num_factors() const { return factors.size(); }
  std::span<const double> image(std::size_t n) const { return images.row(n); }
  // p(n); dataset indices coincide with grid cells.
  const std::vector<double>& index_probabilities() const { return joint.probabilities(); }
  bool uniform() const;
  Tensor gather(std::span<const std::size_t> indices) const;
};

// Isotropic Gaussian bump; pixel (r, c) sits at coordinates (x = c, y = r).
std::vector<double> render_bump(double cx, double cy, double sigma);
// Bar of fixed length through (7.5, offset) at the given angle (radians).
std::vector<double> render_bar(double angle, double offset);

// posX x posY x scale grid of bumps with a uniform joint.
RenderedDataset make_bumps_dataset(std::size_t x_levels = 8, std::size_t y_levels = 8,
                                   std::size_t scale_levels = 4);

enum class PoseConfig { kA, kB, kC, kD };
PoseConfig parse_pose_config(const std::string& name);
// 16 azimuth x 16 elevation bars. A: uniform; B: independent triangular
// marginals; C: uncorrelated but dependent; D: correlated. Every table has
// full support and, for B-D, a max/min cell ratio of exactly 4.
RenderedDataset make_pose_dataset(PoseConfig config);
JointFactorDistribution pose_joint(PoseConfig config);

// "bumps", "bumps:XxYxS" or "pose:A".."pose:D".
RenderedDataset make_dataset(const std::string& spec);

// Inverse-CDF sampler over dataset indices.
class IndexSampler {
 public:
  explicit IndexSampler(const std::vector<double>& probabilities);
  std::size_t operator()(RngStream& rng) const;

 private:
  std::vector<double> cdf_;
};

std::size_t sample_index(const JointFactorDistribution& joint, RngStream& rng);

// Throws std::invalid_argument if `value` is not on factor k's grid.
ConditionalIndexDistribution conditional_index_distribution(const RenderedDataset& data,
                                                            std::size_t factor, double value);
ConditionalIndexDistribution conditional_index_distribution_by_level(const RenderedDataset& data,
                                                                     std::size_t factor,
                                                                     std::size_t level);

// Moments of the factor grid values under the joint table.
double factor_covariance(const RenderedDataset& data, std::size_t a, std::size_t b);
double factor_correlation(const RenderedDataset& data, std::size_t a, std::size_t b);
// Mutual information (nats) between two factors under the joint table.
double factor_mutual_information(const JointFactorDistribution& joint, std::size_t a,
                                 std::size_t b);

// Header text + raw little-endian float64 image block.
void export_images(const RenderedDataset& data, const std::filesystem::path& path);
// CSV rows: index, v_1..v_K, probability.
void export_factor_csv(const RenderedDataset& data, const std::filesystem::path& path);

// dSprites is not bundled; the procedural datasets above stand in for it.
// Always throws std::runtime_error naming the substitute.
RenderedDataset load_dsprites(const std::filesystem::path& path);

}  // namespace tcvae
