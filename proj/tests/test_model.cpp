#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "grad_check.hpp"
#include "socnet/model.hpp"
#include "test_util.hpp"

using namespace socnet;

namespace {

std::vector<double> random_window(std::size_t tw, Rng& rng) {
  std::vector<double> w(tw * kFeatureChannels);
  for (auto& v : w) v = rng.gaussian(0.0, 1.0);
  return w;
}

ArchSpec make_spec(ArchKind kind, std::size_t conv_layers, std::size_t window) {
  ArchSpec s;
  s.kind = kind;
  s.conv_layers = conv_layers;
  s.window = window;
  return s;
}

// A model whose final neuron is active on typical inputs.
CnnModel active_model(const ArchSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  auto m = CnnModel::build(spec, rng);
  m.params()[m.final_index()].biases[0] = 1.0;
  return m;
}

}  // namespace

TEST(ArchSpec, PaperScaleShapes) {
  const auto shapes = CnnModel::parameter_shapes(ArchSpec{});
  ASSERT_EQ(shapes.size(), 10u);
  EXPECT_EQ(shapes[0].first, (Shape{16, 50, 3}));
  EXPECT_EQ(shapes[1].first, (Shape{16, 100, 3}));
  EXPECT_EQ(shapes[2].first, (Shape{16, 250, 3}));
  for (std::size_t b = 3; b < 6; ++b) EXPECT_EQ(shapes[b].first, (Shape{8, 100, 16}));
  EXPECT_EQ(shapes[9].first, (Shape{1, 192}));
}

TEST(ArchSpec, FeatureMapLengthsAtWindow100) {
  const auto spec = make_spec(ArchKind::DenseFirst, 1, 100);
  EXPECT_EQ(spec.pre_pool_lengths(), (std::array<std::size_t, 3>{91, 81, 51}));
}

TEST(ArchSpec, RejectsWindowNotMultipleOfTen) {
  EXPECT_THROW(make_spec(ArchKind::DenseFirst, 2, 7).validate(), SpecError);
  EXPECT_THROW(make_spec(ArchKind::DenseFirst, 3, 100).validate(), SpecError);
}

TEST(ArchSpec, ParseKinds) {
  EXPECT_EQ(parse_arch_kind("dense-first"), ArchKind::DenseFirst);
  EXPECT_EQ(parse_arch_kind("merge-first"), ArchKind::MergeFirst);
  EXPECT_THROW(parse_arch_kind("sideways"), SpecError);
}

TEST(Model, ZeroNetworkPredictsZero) {
  const auto m = CnnModel::zeros(make_spec(ArchKind::DenseFirst, 2, 20));
  Rng rng(1);
  EXPECT_EQ(predict(m, random_window(20, rng)), 0.0);
}

TEST(Model, InferenceIsDeterministic) {
  Rng rng(2);
  const auto m = CnnModel::build(make_spec(ArchKind::MergeFirst, 2, 50), rng);
  const auto w = random_window(50, rng);
  const double a = predict(m, w);
  const double b = predict(m, w);
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}

TEST(Model, OutputIsNonNegative) {
  Rng rng(3);
  for (int s = 0; s < 5; ++s) {
    const auto m = CnnModel::build(make_spec(ArchKind::DenseFirst, 2, 20), rng);
    for (int i = 0; i < 20; ++i) EXPECT_GE(predict(m, random_window(20, rng)), 0.0);
  }
}

TEST(Model, WrongWindowSizeThrows) {
  Rng rng(4);
  const auto m = CnnModel::build(make_spec(ArchKind::DenseFirst, 2, 20), rng);
  EXPECT_THROW(predict(m, random_window(30, rng)), ShapeError);
  EXPECT_THROW(forward(m, random_window(20, rng), nullptr, true), std::invalid_argument);
}

TEST(Model, EveryVariantRunsForwardAndBackward) {
  for (std::size_t tw : {10u, 50u, 100u, 500u, 1000u}) {
    for (auto kind : {ArchKind::MergeFirst, ArchKind::DenseFirst}) {
      for (std::size_t layers : {1u, 2u}) {
        const auto spec = make_spec(kind, layers, tw);
        auto m = active_model(spec, tw + layers);
        Rng rng(tw);
        const auto w = random_window(tw, rng);
        const auto cache = forward(m, w, &rng, true);
        const auto g = backward(m, cache, 0.5);
        ASSERT_EQ(g.size(), m.params().size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          EXPECT_TRUE(all_finite(g[i].weights)) << tw << " " << to_string(kind) << " " << layers;
        }
        EXPECT_GE(cache.output, 0.0);
      }
    }
  }
}

TEST(Model, BackwardZeroUpstreamNoPenaltyIsZero) {
  auto spec = make_spec(ArchKind::DenseFirst, 2, 20);
  spec.final_l2 = 0.0;
  auto m = active_model(spec, 5);
  Rng rng(5);
  const auto cache = forward(m, random_window(20, rng), &rng, true);
  for (const auto& g : backward(m, cache, 0.0)) {
    for (double v : g.weights.data()) EXPECT_EQ(v, 0.0);
    for (double v : g.biases.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Model, PenaltyOnlyGradientOnZeroData) {
  const auto spec = make_spec(ArchKind::DenseFirst, 2, 20);
  auto m = active_model(spec, 6);
  const std::vector<double> zeros(20 * kFeatureChannels, 0.0);
  Rng rng(6);
  const auto cache = forward(m, zeros, &rng, true);
  const auto g = backward(m, cache, 0.0);
  const auto fi = m.final_index();
  const auto w = m.params()[fi].weights.data();
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_DOUBLE_EQ(g[fi].weights[i], 2 * 1e-4 * w[i]);
  EXPECT_EQ(g[fi].biases[0], 0.0);
}

TEST(Model, StaleCacheThrows) {
  auto m = active_model(make_spec(ArchKind::DenseFirst, 2, 20), 7);
  ForwardCache empty;
  EXPECT_THROW(backward(m, empty, 1.0), StaleCacheError);
  Rng rng(7);
  const auto other = active_model(make_spec(ArchKind::MergeFirst, 2, 20), 8);
  const auto cache = forward(other, random_window(20, rng), &rng, true);
  EXPECT_THROW(backward(m, cache, 1.0), StaleCacheError);
}

TEST(Model, WholeModelGradientCheckBothKinds) {
  for (auto kind : {ArchKind::DenseFirst, ArchKind::MergeFirst}) {
    auto m = active_model(make_spec(kind, 2, 20), 11);
    Rng rng(12);
    const auto res = socnet::testing::whole_model_grad_check(m, random_window(20, rng), 99);
    EXPECT_GT(res.output, 0.0);
    EXPECT_LT(res.max_rel_err, 1e-4) << to_string(kind);
  }
}

TEST(Model, LayerRolesAndNames) {
  const auto m = CnnModel::zeros(make_spec(ArchKind::DenseFirst, 2, 20));
  EXPECT_EQ(m.role(0), LayerRole::Conv);
  EXPECT_EQ(m.role(m.dense_index(2)), LayerRole::Dense);
  EXPECT_EQ(m.role(m.final_index()), LayerRole::Final);
  EXPECT_EQ(m.layer_name(m.final_index()), "final");
}

TEST(ModelIo, RoundTripIsBitExact) {
  Rng rng(13);
  auto m = CnnModel::build(make_spec(ArchKind::MergeFirst, 2, 50), rng);
  NormStats st;
  st.mean = {3.7, 1.1, 24.9};
  st.stddev = {0.3, 2.2, 1.7};
  m.set_norm_stats(st);
  m.params()[m.dense_index(0)].trainable = false;
  socnet::testing::TempDir dir("modelio");
  const auto path = dir.path() / "m.cgm";
  save_model(m, path);
  const auto back = load_model(path);
  EXPECT_EQ(back.spec(), m.spec());
  EXPECT_EQ(back.norm_stats(), st);
  EXPECT_EQ(back.creation_seed(), m.creation_seed());
  ASSERT_EQ(back.params().size(), m.params().size());
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    EXPECT_TRUE(bit_identical(back.params()[i].weights, m.params()[i].weights));
    EXPECT_TRUE(bit_identical(back.params()[i].biases, m.params()[i].biases));
    EXPECT_EQ(back.params()[i].trainable, m.params()[i].trainable);
  }
  const auto w = random_window(50, rng);
  const double a = predict(m, w), b = predict(back, w);
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}

TEST(ModelIo, TruncatedFileIsRejected) {
  Rng rng(14);
  const auto bytes = serialize_model(CnnModel::build(make_spec(ArchKind::DenseFirst, 2, 20), rng));
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(deserialize_model(std::string_view(bytes).substr(0, cut)), ModelFormatError) << cut;
  }
  EXPECT_THROW(deserialize_model(bytes + "x"), ModelFormatError);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_model(bad), ModelFormatError);
}

TEST(ModelIo, PaperScaleFileReportsStructure) {
  Rng rng(15);
  const auto bytes = serialize_model(CnnModel::build(ArchSpec{}, rng));
  const auto m = deserialize_model(bytes);
  std::size_t conv = 0;
  for (std::size_t i = 0; i < m.params().size(); ++i) conv += m.role(i) == LayerRole::Conv;
  EXPECT_EQ(m.spec().conv_layers, 2u);
  EXPECT_EQ(conv, 6u);
  EXPECT_EQ(m.spec().window, 500u);
}

TEST(ModelIo, FailedSaveLeavesNoFile) {
  Rng rng(16);
  const auto m = CnnModel::build(make_spec(ArchKind::DenseFirst, 1, 20), rng);
  socnet::testing::TempDir dir("modelio_fail");
  const auto path = dir.path() / "missing_dir" / "sub" / "m.cgm";
  std::ofstream(dir.path() / "missing_dir") << "not a directory";
  EXPECT_ANY_THROW(save_model(m, path));
  EXPECT_FALSE(std::filesystem::exists(path));
}

TEST(Gradients, AccumulateAndScale) {
  const auto m = CnnModel::zeros(make_spec(ArchKind::DenseFirst, 1, 10));
  auto a = zero_gradients(m);
  auto b = zero_gradients(m);
  b[0].weights.fill(2.0);
  accumulate(a, b);
  scale(a, 0.5);
  for (double v : a[0].weights.data()) EXPECT_EQ(v, 1.0);
}
