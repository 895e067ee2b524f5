#include "tcvae/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tcvae/decomposition.hpp"

namespace tcvae {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = n == 1 ? lo : lo + (hi - lo) * double(i) / double(n - 1);
  }
  return v;
}

std::vector<double> normalized(std::vector<double> w) {
  const double z = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= z;
  return w;
}

FactorTable build_table(const JointFactorDistribution& joint) {
  FactorTable t;
  const std::size_t K = joint.num_factors();
  t.index_sets.resize(K);
  for (std::size_t k = 0; k < K; ++k) t.index_sets[k].resize(joint.cardinalities()[k]);
  for (std::size_t n = 0; n < joint.num_cells(); ++n) {
    auto levels = joint.levels_of(n);
    for (std::size_t k = 0; k < K; ++k) t.index_sets[k][levels[k]].push_back(n);
    t.levels.push_back(std::move(levels));
  }
  return t;
}

}  // namespace

FactorSpec::FactorSpec(std::string n, std::vector<double> v) : name(std::move(n)), values(std::move(v)) {
  require(values.size() >= 2, "factor '" + name + "' needs at least two values");
  for (std::size_t i = 1; i < values.size(); ++i) {
    require(values[i] > values[i - 1], "factor '" + name + "' grid must be strictly increasing");
  }
}

std::size_t FactorSpec::level_of(double v) const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::abs(values[i] - v) <= 1e-9 * std::max(1.0, std::abs(v))) return i;
  }
  std::ostringstream msg;
  msg << "value " << v << " is not on the grid of factor '" << name << "'";
  throw std::invalid_argument(msg.str());
}

JointFactorDistribution::JointFactorDistribution(std::vector<std::size_t> cardinalities,
                                                 std::vector<double> probabilities,
                                                 std::string tag)
    : cardinalities_(std::move(cardinalities)),
      probabilities_(std::move(probabilities)),
      tag_(std::move(tag)) {
  std::size_t cells = 1;
  for (std::size_t c : cardinalities_) cells *= c;
  require(cells == probabilities_.size(), "joint table size does not match factor grid");
  double total = 0.0;
  for (double p : probabilities_) {
    require(p >= 0.0 && std::isfinite(p), "joint table entries must be non-negative");
    total += p;
  }
  require(std::abs(total - 1.0) <= 1e-12, "joint table must sum to 1");
  const auto [mn, mx] = std::minmax_element(probabilities_.begin(), probabilities_.end());
  max_min_ratio_ = *mn > 0.0 ? *mx / *mn : INFINITY;
}

std::size_t JointFactorDistribution::cell_index(std::span<const std::size_t> levels) const {
  require(levels.size() == cardinalities_.size(), "cell_index: wrong number of levels");
  std::size_t idx = 0;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    require(levels[k] < cardinalities_[k], "cell_index: level out of range");
    idx = idx * cardinalities_[k] + levels[k];
  }
  return idx;
}

std::vector<std::size_t> JointFactorDistribution::levels_of(std::size_t cell) const {
  std::vector<std::size_t> levels(cardinalities_.size());
  for (std::size_t k = cardinalities_.size(); k-- > 0;) {
    levels[k] = cell % cardinalities_[k];
    cell /= cardinalities_[k];
  }
  return levels;
}

std::vector<double> JointFactorDistribution::marginal(std::size_t factor) const {
  std::vector<double> m(cardinalities_.at(factor), 0.0);
  for (std::size_t n = 0; n < num_cells(); ++n) m[levels_of(n)[factor]] += probabilities_[n];
  return m;
}

bool RenderedDataset::uniform() const {
  const auto& p = joint.probabilities();
  return std::all_of(p.begin(), p.end(), [&](double v) { return v == p.front(); });
}

Tensor RenderedDataset::gather(std::span<const std::size_t> indices) const {
  const std::size_t P = num_pixels();
  Tensor out({indices.size(), P});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = image(indices[i]);
    std::copy(src.begin(), src.end(), out.data() + i * P);
  }
  return out;
}

std::vector<double> render_bump(double cx, double cy, double sigma) {
  std::vector<double> img(kImageSide * kImageSide);
  for (std::size_t r = 0; r < kImageSide; ++r) {
    for (std::size_t c = 0; c < kImageSide; ++c) {
      const double dx = double(c) - cx, dy = double(r) - cy;
      img[r * kImageSide + c] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  }
  return img;
}

std::vector<double> render_bar(double angle, double offset) {
  constexpr double kHalfLength = 5.0;
  constexpr double kWidth = 0.7;
  const double cx = 7.5, cy = offset;
  const double ux = std::cos(angle), uy = std::sin(angle);
  std::vector<double> img(kImageSide * kImageSide);
  for (std::size_t r = 0; r < kImageSide; ++r) {
    for (std::size_t c = 0; c < kImageSide; ++c) {
      const double px = double(c) - cx, py = double(r) - cy;
      const double t = std::clamp(px * ux + py * uy, -kHalfLength, kHalfLength);
      const double dx = px - t * ux, dy = py - t * uy;
      img[r * kImageSide + c] = std::exp(-(dx * dx + dy * dy) / (2.0 * kWidth * kWidth));
    }
  }
  return img;
}

RenderedDataset make_bumps_dataset(std::size_t x_levels, std::size_t y_levels,
                                   std::size_t scale_levels) {
  require(x_levels >= 2 && y_levels >= 2 && scale_levels >= 2,
          "make_bumps_dataset: every factor needs at least two levels");
  const std::size_t n = x_levels * y_levels * scale_levels;
  require(n <= kExactOracleMaxN, "make_bumps_dataset: grid of " + std::to_string(n) +
                                     " cells exceeds the exact-oracle limit " +
                                     std::to_string(kExactOracleMaxN));
  RenderedDataset d;
  d.spec = "bumps:" + std::to_string(x_levels) + "x" + std::to_string(y_levels) + "x" +
           std::to_string(scale_levels);
  d.factors = {FactorSpec("posX", linspace(2.0, 13.0, x_levels)),
               FactorSpec("posY", linspace(2.0, 13.0, y_levels)),
               FactorSpec("scale", linspace(1.0, 2.5, scale_levels))};
  d.joint = JointFactorDistribution({x_levels, y_levels, scale_levels},
                                    std::vector<double>(n, 1.0 / double(n)), "uniform");
  d.table = build_table(d.joint);
  d.images = Tensor({n, kImageSide * kImageSide});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& lv = d.table.levels[i];
    const auto img = render_bump(d.factors[0].values[lv[0]], d.factors[1].values[lv[1]],
                                 d.factors[2].values[lv[2]]);
    std::copy(img.begin(), img.end(), d.images.data() + i * img.size());
  }
  return d;
}

PoseConfig parse_pose_config(const std::string& name) {
  if (name == "A" || name == "a") return PoseConfig::kA;
  if (name == "B" || name == "b") return PoseConfig::kB;
  if (name == "C" || name == "c") return PoseConfig::kC;
  if (name == "D" || name == "d") return PoseConfig::kD;
  throw std::invalid_argument("unknown pose configuration '" + name + "' (expected A-D)");
}

JointFactorDistribution pose_joint(PoseConfig config) {
  constexpr std::size_t L = 16;
  std::vector<double> w(L * L, 1.0);
  std::string tag;
  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t e = 0; e < L; ++e) {
      double& cell = w[a * L + e];
      const double da = std::abs(double(a) - 7.5), de = std::abs(double(e) - 7.5);
      switch (config) {
        case PoseConfig::kA:
          tag = "A";
          cell = 1.0;
          break;
        case PoseConfig::kB:
          // Triangular marginals with end/centre ratio 2 on each axis.
          tag = "B";
          cell = (14.5 - da) * (14.5 - de);
          break;
        case PoseConfig::kC:
          // Block checkerboard, symmetric about the grid centre in each axis:
          // uniform marginals and zero covariance, but dependent.
          tag = "C";
          cell = ((da < 4.0) != (de < 4.0)) ? 4.0 : 1.0;
          break;
        case PoseConfig::kD:
          tag = "D";
          cell = 1.0 + 3.0 * std::max(0.0, 1.0 - std::abs(double(a) - double(e)) / 4.0);
          break;
      }
    }
  }
  return JointFactorDistribution({L, L}, normalized(std::move(w)), tag);
}

RenderedDataset make_pose_dataset(PoseConfig config) {
  constexpr std::size_t L = 16;
  RenderedDataset d;
  d.joint = pose_joint(config);
  d.spec = "pose:" + d.joint.tag();
  std::vector<double> azimuth(L);
  for (std::size_t i = 0; i < L; ++i) azimuth[i] = std::numbers::pi * double(i) / double(L);
  d.factors = {FactorSpec("azimuth", azimuth), FactorSpec("elevation", linspace(3.0, 12.0, L))};
  d.table = build_table(d.joint);
  d.images = Tensor({L * L, kImageSide * kImageSide});
  for (std::size_t i = 0; i < L * L; ++i) {
    const auto& lv = d.table.levels[i];
    const auto img = render_bar(d.factors[0].values[lv[0]], d.factors[1].values[lv[1]]);
    std::copy(img.begin(), img.end(), d.images.data() + i * img.size());
  }
  return d;
}

RenderedDataset make_dataset(const std::string& spec) {
  if (spec == "bumps") return make_bumps_dataset();
  if (spec.rfind("bumps:", 0) == 0) {
    std::size_t x = 0, y = 0, s = 0;
    char sep1 = 0, sep2 = 0;
    std::istringstream in(spec.substr(6));
    if (!(in >> x >> sep1 >> y >> sep2 >> s) || sep1 != 'x' || sep2 != 'x' || !in.eof()) {
      throw std::invalid_argument("bad bumps dataset spec '" + spec + "' (expected bumps:XxYxS)");
    }
    return make_bumps_dataset(x, y, s);
  }
  if (spec.rfind("pose:", 0) == 0) return make_pose_dataset(parse_pose_config(spec.substr(5)));
  throw std::invalid_argument("unknown dataset spec '" + spec + "'");
}

IndexSampler::IndexSampler(const std::vector<double>& probabilities) {
  require(!probabilities.empty(), "IndexSampler: empty distribution");
  cdf_.resize(probabilities.size());
  std::partial_sum(probabilities.begin(), probabilities.end(), cdf_.begin());
}

std::size_t IndexSampler::operator()(RngStream& rng) const {
  const double u = rng.uniform() * cdf_.back();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  std::size_t idx = static_cast<std::size_t>(it - cdf_.begin());
  idx = std::min(idx, cdf_.size() - 1);
  // Never return a zero-mass cell.
  while (idx > 0 && cdf_[idx] == cdf_[idx - 1]) --idx;
  return idx;
}

std::size_t sample_index(const JointFactorDistribution& joint, RngStream& rng) {
  return IndexSampler(joint.probabilities())(rng);
}

ConditionalIndexDistribution conditional_index_distribution_by_level(const RenderedDataset& data,
                                                                     std::size_t factor,
                                                                     std::size_t level) {
  require(factor < data.num_factors(), "conditional_index_distribution: factor out of range");
  require(level < data.factors[factor].cardinality(),
          "conditional_index_distribution: level out of range");
  ConditionalIndexDistribution c;
  const auto& p = data.index_probabilities();
  double total = 0.0;
  for (std::size_t n : data.table.index_sets[factor][level]) {
    if (p[n] <= 0.0) continue;
    c.indices.push_back(n);
    c.weights.push_back(p[n]);
    total += p[n];
  }
  if (c.indices.empty()) {
    throw std::invalid_argument("conditional_index_distribution: slice has no support");
  }
  for (double& w : c.weights) w /= total;
  return c;
}

ConditionalIndexDistribution conditional_index_distribution(const RenderedDataset& data,
                                                            std::size_t factor, double value) {
  require(factor < data.num_factors(), "conditional_index_distribution: factor out of range");
  return conditional_index_distribution_by_level(data, factor,
                                                 data.factors[factor].level_of(value));
}

double factor_covariance(const RenderedDataset& data, std::size_t a, std::size_t b) {
  const auto& p = data.index_probabilities();
  double ea = 0, eb = 0, eab = 0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    const double va = data.factors[a].values[data.table.levels[n][a]];
    const double vb = data.factors[b].values[data.table.levels[n][b]];
    ea += p[n] * va;
    eb += p[n] * vb;
    eab += p[n] * va * vb;
  }
  return eab - ea * eb;
}

double factor_correlation(const RenderedDataset& data, std::size_t a, std::size_t b) {
  const double cov = factor_covariance(data, a, b);
  const double va = factor_covariance(data, a, a), vb = factor_covariance(data, b, b);
  return cov / std::sqrt(va * vb);
}

double factor_mutual_information(const JointFactorDistribution& joint, std::size_t a,
                                 std::size_t b) {
  const auto pa = joint.marginal(a), pb = joint.marginal(b);
  std::vector<double> pab(pa.size() * pb.size(), 0.0);
  for (std::size_t n = 0; n < joint.num_cells(); ++n) {
    const auto lv = joint.levels_of(n);
    pab[lv[a] * pb.size() + lv[b]] += joint.probabilities()[n];
  }
  double mi = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t j = 0; j < pb.size(); ++j) {
      const double p = pab[i * pb.size() + j];
      if (p > 0.0) mi += p * std::log(p / (pa[i] * pb[j]));
    }
  }
  return mi;
}

void export_images(const RenderedDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "tcvae-dataset 1\n";
  out << "spec " << data.spec << "\n";
  out << "joint " << data.joint.tag() << "\n";
  out << "width " << kImageSide << "\nheight " << kImageSide << "\n";
  out << "count " << data.size() << "\n";
  out << std::setprecision(17);
  for (const auto& f : data.factors) {
    out << "factor " << f.name << ' ' << f.cardinality();
    for (double v : f.values) out << ' ' << v;
    out << "\n";
  }
  out << "data\n";
  for (double v : data.images.values()) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
}

void export_factor_csv(const RenderedDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "index";
  for (const auto& f : data.factors) out << ',' << f.name;
  out << ",probability\n";
  out << std::setprecision(17);
  for (std::size_t n = 0; n < data.size(); ++n) {
    out << n;
    for (std::size_t k = 0; k < data.num_factors(); ++k) {
      out << ',' << data.factors[k].values[data.table.levels[n][k]];
    }
    out << ',' << data.index_probabilities()[n] << "\n";
  }
}

RenderedDataset load_dsprites(const std::filesystem::path& path) {
  throw std::runtime_error("dSprites ingestion is not supported (" + path.string() +
                           "); use the procedural 'bumps' or 'pose:A-D' datasets instead");
}

}  // namespace tcvae
