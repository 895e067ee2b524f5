#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "tcvae/data.hpp"

using namespace tcvae;

namespace {

std::size_t argmax_pixel(std::span<const double> img) {
  return std::size_t(std::max_element(img.begin(), img.end()) - img.begin());
}

}  // namespace

TEST(Bumps, SizeAndFactors) {
  const auto d = make_bumps_dataset();
  EXPECT_EQ(d.size(), 256u);
  EXPECT_EQ(d.num_pixels(), 256u);
  ASSERT_EQ(d.num_factors(), 3u);
  EXPECT_EQ(d.factors[0].name, "posX");
  EXPECT_EQ(d.factors[1].name, "posY");
  EXPECT_EQ(d.factors[2].name, "scale");
  EXPECT_TRUE(d.uniform());
  for (double p : d.index_probabilities()) EXPECT_DOUBLE_EQ(p, 1.0 / 256.0);
  for (double v : d.images.values()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Bumps, PeakSitsAtCentre) {
  const auto img = render_bump(8.0, 8.0, 1.75);
  EXPECT_EQ(argmax_pixel(img), 8u * kImageSide + 8u);
  EXPECT_DOUBLE_EQ(img[8 * kImageSide + 8], 1.0);
  // Grid is symmetric about the image centre.
  const auto d = make_bumps_dataset();
  const auto& xs = d.factors[0].values;
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_NEAR(xs[i] + xs[xs.size() - 1 - i], 15.0, 1e-12);
}

TEST(Bumps, ExtremePositionsDiffer) {
  const auto d = make_bumps_dataset();
  const std::vector<std::size_t> lo{0, 3, 2}, hi{7, 3, 2};
  const auto a = d.image(d.joint.cell_index(lo));
  const auto b = d.image(d.joint.cell_index(hi));
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) count += std::abs(a[i] - b[i]) > 0.1;
  EXPECT_GT(count, 10u);
  // Table rows agree with the levels used to render them.
  for (std::size_t n = 0; n < d.size(); ++n) ASSERT_EQ(d.joint.cell_index(d.table.levels[n]), n);
}

TEST(Bumps, RenderingIsPure) {
  const auto a = make_bumps_dataset();
  const auto b = make_bumps_dataset();
  EXPECT_EQ(a.images.storage(), b.images.storage());
  const auto img = render_bump(a.factors[0].values[2], a.factors[1].values[5], a.factors[2].values[1]);
  const std::vector<std::size_t> lv{2, 5, 1};
  const auto row = a.image(a.joint.cell_index(lv));
  EXPECT_TRUE(std::equal(img.begin(), img.end(), row.begin()));
}

TEST(Bumps, Guards) {
  EXPECT_THROW(make_bumps_dataset(1, 8, 4), std::invalid_argument);
  EXPECT_THROW(make_bumps_dataset(32, 32, 5), std::invalid_argument);
  EXPECT_NO_THROW(make_bumps_dataset(16, 16, 16));
}

TEST(IndexSets, PartitionPerFactor) {
  const auto d = make_bumps_dataset();
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<int> seen(d.size(), 0);
    for (const auto& set : d.table.index_sets[k]) {
      for (std::size_t n : set) ++seen[n];
    }
    for (int s : seen) ASSERT_EQ(s, 1);
  }
}

TEST(Pose, ConfigAIsUniform) {
  const auto j = pose_joint(PoseConfig::kA);
  ASSERT_EQ(j.num_cells(), 256u);
  for (double p : j.probabilities()) EXPECT_DOUBLE_EQ(p, 1.0 / 256.0);
  EXPECT_DOUBLE_EQ(j.max_min_ratio(), 1.0);
}

TEST(Pose, RatiosAreExactlyFour) {
  for (PoseConfig c : {PoseConfig::kB, PoseConfig::kC, PoseConfig::kD}) {
    const auto j = pose_joint(c);
    const auto [lo, hi] = std::minmax_element(j.probabilities().begin(), j.probabilities().end());
    EXPECT_GT(*lo, 0.0);
    EXPECT_NEAR(*hi / *lo, 4.0, 1e-12);
    EXPECT_NEAR(j.max_min_ratio(), 4.0, 1e-12);
    double s = 0.0;
    for (double p : j.probabilities()) s += p;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Pose, ConfigBIsProductOfMarginals) {
  const auto d = make_pose_dataset(PoseConfig::kB);
  const auto ma = d.joint.marginal(0), me = d.joint.marginal(1);
  for (std::size_t a = 0; a < 16; ++a) {
    for (std::size_t e = 0; e < 16; ++e) {
      const std::vector<std::size_t> lv{a, e};
      EXPECT_NEAR(d.joint.probabilities()[d.joint.cell_index(lv)], ma[a] * me[e], 1e-15);
    }
  }
  for (const auto* m : {&ma, &me}) {
    const auto [lo, hi] = std::minmax_element(m->begin(), m->end());
    EXPECT_NEAR(*hi / *lo, 2.0, 1e-12);
  }
  EXPECT_NEAR(factor_correlation(d, 0, 1), 0.0, 1e-12);
  EXPECT_NEAR(factor_mutual_information(d.joint, 0, 1), 0.0, 1e-12);
}

TEST(Pose, ConfigCUncorrelatedButDependent) {
  const auto d = make_pose_dataset(PoseConfig::kC);
  EXPECT_NEAR(factor_covariance(d, 0, 1), 0.0, 1e-12);
  EXPECT_GT(factor_mutual_information(d.joint, 0, 1), 1e-3);
}

TEST(Pose, ConfigDCorrelated) {
  const auto d = make_pose_dataset(PoseConfig::kD);
  // Direct moments from the table.
  const auto& p = d.joint.probabilities();
  const auto& av = d.factors[0].values;
  const auto& ev = d.factors[1].values;
  double ma = 0, me = 0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    const auto lv = d.joint.levels_of(c);
    ma += p[c] * av[lv[0]];
    me += p[c] * ev[lv[1]];
  }
  double caa = 0, cee = 0, cae = 0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    const auto lv = d.joint.levels_of(c);
    const double da = av[lv[0]] - ma, de = ev[lv[1]] - me;
    caa += p[c] * da * da;
    cee += p[c] * de * de;
    cae += p[c] * da * de;
  }
  const double corr = cae / std::sqrt(caa * cee);
  EXPECT_NEAR(factor_correlation(d, 0, 1), corr, 1e-12);
  EXPECT_GT(std::abs(corr), 0.3);
}

TEST(Pose, BarsDependOnBothFactors) {
  const auto d = make_pose_dataset(PoseConfig::kA);
  const std::vector<std::size_t> a{0, 8}, b{4, 8}, c{0, 2};
  const auto ia = d.image(d.joint.cell_index(a));
  const auto ib = d.image(d.joint.cell_index(b));
  const auto ic = d.image(d.joint.cell_index(c));
  EXPECT_FALSE(std::equal(ia.begin(), ia.end(), ib.begin()));
  EXPECT_FALSE(std::equal(ia.begin(), ia.end(), ic.begin()));
}

TEST(Joint, RejectsInvalidTables) {
  EXPECT_THROW(JointFactorDistribution({2, 2}, {0.25, 0.25, 0.25, 0.3}, "x"), std::invalid_argument);
  EXPECT_THROW(JointFactorDistribution({2, 2}, {0.5, 0.5, -0.25, 0.25}, "x"), std::invalid_argument);
  EXPECT_THROW(JointFactorDistribution({2, 2}, {0.5, 0.5}, "x"), std::invalid_argument);
  EXPECT_THROW(FactorSpec("v", {1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(FactorSpec("v", {1.0}), std::invalid_argument);
}

TEST(Sampling, UniformPassesChiSquare) {
  const auto d = make_bumps_dataset();
  RngStream r(1);
  std::vector<double> counts(256, 0.0);
  const std::size_t n = 1000000;
  for (std::size_t i = 0; i < n; ++i) counts[sample_index(d.joint, r)] += 1.0;
  const double expect = double(n) / 256.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // Upper 0.001 quantile of chi-square with 255 degrees of freedom.
  EXPECT_LT(chi2, 330.5);
}

TEST(Sampling, PointMass) {
  std::vector<double> p(6, 0.0);
  p[4] = 1.0;
  const JointFactorDistribution j({2, 3}, p, "point");
  RngStream r(2);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample_index(j, r), 4u);
}

TEST(Sampling, ConfigBMarginals) {
  const auto d = make_pose_dataset(PoseConfig::kB);
  const IndexSampler s(d.index_probabilities());
  RngStream r(3);
  std::vector<double> ca(16, 0.0), ce(16, 0.0);
  const std::size_t n = 1000000;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& lv = d.table.levels[s(r)];
    ca[lv[0]] += 1.0;
    ce[lv[1]] += 1.0;
  }
  const auto ma = d.joint.marginal(0), me = d.joint.marginal(1);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(ca[i] / double(n), ma[i], 0.01 * ma[i]) << i;
    EXPECT_NEAR(ce[i] / double(n), me[i], 0.01 * me[i]) << i;
  }
}

TEST(Conditional, UniformSliceOfBumps) {
  const auto d = make_bumps_dataset();
  const auto c = conditional_index_distribution(d, 0, d.factors[0].values[3]);
  ASSERT_EQ(c.indices.size(), 32u);
  for (std::size_t i = 0; i < 32; ++i) {
    EXPECT_DOUBLE_EQ(c.weights[i], 1.0 / 32.0);
    EXPECT_EQ(d.table.levels[c.indices[i]][0], 3u);
  }
  EXPECT_THROW(conditional_index_distribution(d, 0, 3.3), std::invalid_argument);
  EXPECT_THROW(conditional_index_distribution_by_level(d, 0, 8), std::invalid_argument);
}

TEST(Conditional, ConfigDSliceMatchesTableRow) {
  const auto d = make_pose_dataset(PoseConfig::kD);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t level : {0u, 5u, 15u}) {
      const auto c = conditional_index_distribution_by_level(d, k, level);
      double row = 0.0;
      for (std::size_t other = 0; other < 16; ++other) {
        std::vector<std::size_t> lv{level, other};
        if (k == 1) std::swap(lv[0], lv[1]);
        row += d.joint.probabilities()[d.joint.cell_index(lv)];
      }
      double total = 0.0;
      for (std::size_t i = 0; i < c.indices.size(); ++i) {
        EXPECT_EQ(d.table.levels[c.indices[i]][k], level);
        EXPECT_NEAR(c.weights[i], d.joint.probabilities()[c.indices[i]] / row, 1e-15);
        total += c.weights[i];
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Export, WritesHeaderAndCsv) {
  const auto d = make_dataset("bumps:2x2x2");
  EXPECT_EQ(d.size(), 8u);
  const auto dir = std::filesystem::temp_directory_path() / "tcvae_export_test";
  std::filesystem::create_directories(dir);
  export_images(d, dir / "images.bin");
  export_factor_csv(d, dir / "factors.csv");
  std::ifstream in(dir / "images.bin", std::ios::binary);
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first, "tcvae-dataset 1");
  std::ifstream csv(dir / "factors.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "index,posX,posY,scale,probability");
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) rows += !line.empty();
  EXPECT_EQ(rows, 8u);
  const auto bytes = std::filesystem::file_size(dir / "images.bin");
  EXPECT_GT(bytes, 8u * 256u * sizeof(double));
  std::filesystem::remove_all(dir);
}

TEST(Datasets, SpecsAndStub) {
  EXPECT_EQ(make_dataset("bumps").size(), 256u);
  EXPECT_EQ(make_dataset("pose:C").joint.tag(), pose_joint(PoseConfig::kC).tag());
  EXPECT_THROW(make_dataset("mnist"), std::invalid_argument);
  EXPECT_THROW(make_dataset("bumps:2x2"), std::invalid_argument);
  EXPECT_THROW(load_dsprites("dsprites.npz"), std::runtime_error);
}
