#include "tpwng/errors.hpp"
#include "tpwng/plg.hpp"
#include "test_util.hpp"

namespace tpwng::plg {
namespace {

using testing::random_matrix;

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TEST(Plg, Similarities) {
  Matrix x(2, 2);
  x << 1.0, 0.0, 0.0, 1.0;
  Eigen::RowVectorXd t(2);
  t << 0.0, 0.0;
  EXPECT_EQ(similarities(x, t), Vector::Zero(2));

  Eigen::RowVectorXd u(2);
  u << 2.0, 0.0;
  Matrix self(1, 2);
  self << 2.0, 0.0;
  EXPECT_DOUBLE_EQ(similarities(self, u)[0], 4.0);

  Rng rng(1);
  const Matrix r = random_matrix(5, 3, rng);
  const Eigen::RowVectorXd w = random_matrix(1, 3, rng);
  const Vector s = similarities(r, w);
  for (int j = 0; j < 5; ++j) {
    double dot = 0.0;
    for (int d = 0; d < 3; ++d) dot += r(j, d) * w(d);
    EXPECT_NEAR(s[j], dot, 1e-15);
  }
  EXPECT_THROW(similarities(r, Eigen::RowVectorXd::Zero(4)), DimensionError);
}

TEST(Plg, MinMax) {
  EXPECT_EQ(minmax_normalize(vec({2, 4, 6})), vec({0, 0.5, 1}));
  EXPECT_EQ(minmax_normalize(vec({3, 3, 3})), vec({0, 0, 0}));
  const Vector m = minmax_normalize(vec({1, 5, 2, 9}));
  EXPECT_LT(m[0], m[2]);
  EXPECT_LT(m[2], m[1]);
  EXPECT_LT(m[1], m[3]);
}

TEST(Plg, FuseEndpoints) {
  const Vector an = vec({0.2, 0.9});
  const Vector aa = vec({0.6, 0.1});
  EXPECT_TRUE(fuse(an, aa, 0.0).isApprox(vec({0.4, 0.9})));
  EXPECT_EQ(fuse(an, aa, 1.0), an);
  EXPECT_THROW(fuse(an, vec({1}), 0.5), ContractError);
}

TEST(Plg, ThresholdLiteral) {
  EXPECT_EQ(threshold_labels(vec({0.6, 0.4, 0.9}), 0.5, LabelPolarity::Literal),
            (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_EQ(threshold_labels(vec({0.5}), 0.5, LabelPolarity::Literal), (std::vector<std::uint8_t>{1}));
}

TEST(Plg, ThresholdAnomalyOriented) {
  EXPECT_EQ(threshold_labels(vec({0.0, 1.0, 0.3}), 0.55), (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_EQ(threshold_labels(vec({0.0, 0.0, 0.0}), 0.55), (std::vector<std::uint8_t>{0, 0, 0}));
}

TEST(Plg, NormalVideosGetZeros) {
  data::FeatureSequence v;
  v.video_id = "n";
  v.frames = Matrix::Ones(5, 3);
  v.label = 0;
  v.class_index = 3;
  const auto pl = pseudo_labels(v, Matrix::Ones(3, 3), Eigen::RowVectorXd::Ones(3), PlgConfig{});
  EXPECT_EQ(pl.gamma, std::vector<std::uint8_t>(5, 0));
  EXPECT_FALSE(pl.psi_norm.has_value());
}

TEST(Plg, AnomalousSegmentIsLabeled) {
  // Frames 2..3 match the abnormal text, the rest match the normal text.
  Matrix x = Matrix::Zero(6, 2);
  for (int j = 0; j < 6; ++j) x(j, 1) = 1.0;
  x(2, 0) = 1.0;
  x(2, 1) = 0.0;
  x(3, 0) = 1.0;
  x(3, 1) = 0.0;
  Matrix texts(2, 2);
  texts << 1.0, 0.0, 0.0, 1.0;
  data::FeatureSequence v{"a", x, 1, 1, std::nullopt};
  const auto pl = pseudo_labels(v, texts, texts.row(1), PlgConfig{});
  EXPECT_EQ(pl.gamma, (std::vector<std::uint8_t>{0, 0, 1, 1, 0, 0}));
  ASSERT_TRUE(pl.psi_norm.has_value());
  EXPECT_DOUBLE_EQ((*pl.psi_norm)[2], 0.0);

  PlgConfig literal;
  literal.polarity = LabelPolarity::Literal;
  EXPECT_EQ(pseudo_labels(v, texts, texts.row(1), literal).gamma,
            (std::vector<std::uint8_t>{1, 1, 0, 0, 1, 1}));
}

TEST(Plg, ConfigAndIndexErrors) {
  EXPECT_THROW(validate(PlgConfig{1.5, 0.5}), ContractError);
  EXPECT_THROW(validate(PlgConfig{0.2, 0.0}), ContractError);
  EXPECT_THROW(validate(PlgConfig{0.2, 1.0}), ContractError);
  data::FeatureSequence v{"a", Matrix::Ones(3, 2), 1, 2, std::nullopt};
  EXPECT_THROW(pseudo_labels(v, Matrix::Ones(2, 2), Eigen::RowVectorXd::Ones(2), PlgConfig{}), ContractError);
}

// Independent scalar loop over the fusion and threshold.
std::vector<std::uint8_t> oracle(const std::vector<double>& an, const std::vector<double>& aa, double alpha,
                                 double theta, bool anomaly_oriented) {
  auto mm = [](const std::vector<double>& s) {
    double lo = s[0], hi = s[0];
    for (double x : s) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    std::vector<double> out(s.size(), 0.0);
    if (hi == lo) return out;
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = (s[i] - lo) / (hi - lo);
    return out;
  };
  const auto n_an = mm(an);
  const auto n_aa = mm(aa);
  std::vector<double> psi(an.size());
  for (std::size_t i = 0; i < an.size(); ++i) psi[i] = alpha * n_an[i] + (1.0 - alpha) * (1.0 - n_aa[i]);
  const auto p = mm(psi);
  bool constant = true;
  for (double x : p) constant = constant && x == p[0];
  std::vector<std::uint8_t> g(p.size(), 0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (anomaly_oriented) g[i] = (!constant && 1.0 - p[i] >= theta) ? 1 : 0;
    else g[i] = p[i] >= theta ? 1 : 0;
  }
  return g;
}

TEST(Plg, MatchesScalarOracle) {
  Rng rng(77);
  std::uniform_int_distribution<int> len(1, 32);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 0; c < 200; ++c) {
    const int f = len(rng);
    std::vector<double> an(f), aa(f);
    Vector van(f), vaa(f);
    for (int j = 0; j < f; ++j) {
      // Coarse values create ties and constant vectors.
      an[j] = van[j] = std::round(unit(rng) * 4.0) - 2.0;
      aa[j] = vaa[j] = unit(rng) * 3.0;
    }
    const double alpha = unit(rng);
    const double theta = 0.05 + 0.9 * unit(rng);
    for (auto pol : {LabelPolarity::AnomalyOriented, LabelPolarity::Literal}) {
      const auto got = labels_from_similarities(van, vaa, {alpha, theta, pol}).gamma;
      EXPECT_EQ(got, oracle(an, aa, alpha, theta, pol == LabelPolarity::AnomalyOriented)) << "case " << c;
    }
  }
}

}  // namespace
}  // namespace tpwng::plg
