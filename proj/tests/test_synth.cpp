#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "socnet/recipe.hpp"
#include "socnet/synth.hpp"
#include "test_util.hpp"

using namespace socnet;

namespace {

SynthCellSpec base_spec() {
  SynthCellSpec s;
  s.capacity_ah = 2.9;
  s.resistance_ohm = 0.03;
  s.ocv_coeffs = {3.0, 1.2, -0.9, 0.9};
  s.current.dc_a = 2.0;
  s.current.tones = {{1.0, 1.0 / 60.0, 0.3}};
  s.current.jitter_a = 0.3;
  s.seed = 5;
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Synth, NoLoadKeepsFullCharge) {
  auto s = base_spec();
  s.current = {};
  const auto c = synth_generate(s, 100, 1.0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(c.soc[i], 1.0);
    EXPECT_DOUBLE_EQ(c.voltage_v[i], s.ocv(1.0));
  }
}

TEST(Synth, LabelsMatchCoulombCounting) {
  const auto s = base_spec();
  const auto c = synth_generate(s, 3000, 1.0);
  const auto ref = derive_soc(c.current_a, 1.0, s.capacity_ah, 1.0);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c.soc[i], ref[i], 1e-12);
  EXPECT_NO_THROW(c.validate());
}

TEST(Synth, MonotoneDischargeAboveFloor) {
  auto s = base_spec();
  s.current.dc_a = 6.0;  // drains the cell well before the end
  const auto c = synth_generate(s, 3000, 1.0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_GE(c.current_a[i], 0.0);
    EXPECT_GE(c.soc[i], 0.02 - 1e-12);
    if (i > 0) {
      EXPECT_LE(c.soc[i], c.soc[i - 1]);
    }
  }
  EXPECT_NEAR(c.soc.back(), 0.02, 1e-9);
}

TEST(Synth, VoltageFollowsOcvMinusIr) {
  const auto s = base_spec();
  const auto c = synth_generate(s, 200, 1.0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_DOUBLE_EQ(c.voltage_v[i], s.ocv(c.soc[i]) - c.current_a[i] * s.resistance_ohm);
  }
}

TEST(Synth, DeterministicUnderSeed) {
  const auto a = synth_generate(base_spec(), 500, 1.0);
  const auto b = synth_generate(base_spec(), 500, 1.0);
  EXPECT_EQ(a.current_a, b.current_a);
  auto other = base_spec();
  other.seed = 6;
  EXPECT_NE(synth_generate(other, 500, 1.0).current_a, a.current_a);
}

TEST(Synth, InvalidSpecsThrow) {
  auto s = base_spec();
  s.ocv_coeffs = {4.0, -1.0};
  EXPECT_THROW(synth_generate(s, 10, 1.0), std::invalid_argument);
  s = base_spec();
  s.capacity_ah = 0.0;
  EXPECT_THROW(synth_generate(s, 10, 1.0), std::invalid_argument);
  s = base_spec();
  s.resistance_ohm = -0.1;
  EXPECT_THROW(synth_generate(s, 10, 1.0), std::invalid_argument);
  EXPECT_THROW(synth_generate(base_spec(), 0.5, 1.0), std::invalid_argument);
}

TEST(Synth, PresetsShiftTheVoltageMarginal) {
  const auto a = synth_preset("synthA"), b = synth_preset("synthB");
  auto sa = synth_cycle_spec(a, "UDDS", 25, 1);
  auto sb = sa;
  sb.ocv_coeffs = b.ocv_coeffs;
  sb.resistance_ohm = b.resistance_ohm;
  const auto ca = synth_generate(sa, 1000, 1.0), cb = synth_generate(sb, 1000, 1.0);
  double diff = 0.0;
  for (std::size_t i = 0; i < ca.size(); ++i) diff += std::abs(ca.voltage_v[i] - cb.voltage_v[i]);
  EXPECT_GT(diff / static_cast<double>(ca.size()), 0.0);
  EXPECT_EQ(ca.current_a, cb.current_a);
  EXPECT_THROW(synth_preset("synthC"), std::invalid_argument);
}

TEST(SynthDataset, WritesTwelveFilesDeterministically) {
  socnet::testing::TempDir a("synth_a"), b("synth_b");
  SynthDatasetOptions o;
  o.duration_s = 200;
  o.seed = 3;
  const auto pa = write_synth_dataset("synthA", a.path(), o);
  o.threads = 1;
  const auto pb = write_synth_dataset("synthA", b.path(), o);
  ASSERT_EQ(pa.size(), 12u);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(slurp(pa[i]), slurp(pb[i])) << pa[i];
  }
  const auto m = RecipeManifest::load(a.path() / "recipe.txt");
  EXPECT_EQ(m.dataset, "synthA");
  EXPECT_EQ(m.native_hz, 1.0);
  const auto c = load_cycle(pa[0], CycleMeta{});
  EXPECT_EQ(c.size(), 200u);
}
