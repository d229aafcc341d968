#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "cost_oracle.hpp"
#include "onion/cost_model.hpp"
#include "spec_gen.hpp"

using namespace onion;

namespace {

ArchSpec load(const std::string& name) {
  std::ifstream in(std::string(ONION_SOURCE_DIR) + "/arch/" + name + ".arch");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_arch(ss.str());
}

const char* kRetrievalVariants[] = {"r_m", "r_w3", "r_w2", "r_w1", "r_d2", "r_d1"};

}  // namespace

TEST(Macs, SingleLayerFormula) {
  const CostReport r = mac_count(parse_arch("C3(4)p1"), {1, 8, 8});
  EXPECT_EQ(r.cost_m, 2304u);
  EXPECT_EQ(r.cost_s1, 0u);
  EXPECT_EQ(r.cost_s2_shared, 2304u);
  ASSERT_EQ(r.stages.size(), 1u);
  EXPECT_EQ(r.stages[0].height, 8u);
}

TEST(Macs, TwoSplitLayersIdentity) {
  const std::uint64_t m2 = 36;  // 6x6 maps kept by padding
  const CostReport r = mac_count(parse_arch("C3(2/6)p1, R, C3(2/6)p1"), {1, 6, 6});
  ASSERT_EQ(r.stages.size(), 2u);
  EXPECT_EQ(r.stages[1].s1, 2 * 9 * 2 * m2);
  EXPECT_EQ(r.stages[1].s2_shared, 8 * 9 * 6 * m2);
  EXPECT_EQ(r.stages[1].monolithic, 8 * 9 * 8 * m2);
  EXPECT_EQ(r.cost_s1 + r.cost_s2_shared, r.cost_m - 9 * 6 * 2 * m2);
}

TEST(Macs, NonConvLayersFreeByDefault) {
  const CostReport a = mac_count(parse_arch("C3(2/6)p1, R, P2, C3(2/6)"), {1, 8, 8});
  const CostReport b = mac_count(parse_arch("C3(2/6)p1, R, P2, C3(2/6)"), {1, 8, 8}, {.include_pool_relu = true});
  EXPECT_GT(b.cost_m, a.cost_m);
  EXPECT_GT(b.cost_s1, a.cost_s1);
  // ReLU: 8 maps of 8x8; pool: 8 maps of 4x4 at 4 ops each.
  EXPECT_EQ(b.cost_m - a.cost_m, 8u * 64 + 8u * 16 * 4);
}

TEST(Macs, CollapsingMapsRejected) {
  EXPECT_THROW(mac_count(parse_arch("C5(2/2)"), {1, 4, 4}), ParseError);
  EXPECT_THROW(mac_count(parse_arch("C1(2/2)"), {1, 0, 0}), std::invalid_argument);
}

TEST(Macs, NonSharingEqualsMonolithic) {
  for (const char* name : kRetrievalVariants) {
    const CostReport r = mac_count(load(name), load(name).input);
    EXPECT_EQ(r.cost_s2_ns, r.cost_m) << name;
  }
}

TEST(Macs, RecountMatchesOnRandomSpecs) {
  std::mt19937_64 rng(51);
  for (int i = 0; i < 300; ++i) {
    const ArchSpec s = gen::sharing_spec(rng);
    const CostReport r = mac_count(s, s.input);
    const auto t = cost_oracle::terms(s, s.input);
    EXPECT_EQ(r.cost_m, t.cost_m) << to_text(s);
    EXPECT_EQ(r.cost_s1, t.s1) << to_text(s);
    EXPECT_EQ(r.cost_s2_shared, t.s2) << to_text(s);
    if (!t.s1_pool) {
      EXPECT_EQ(r.cost_s1 + r.cost_s2_shared, r.cost_m - t.reduction) << to_text(s);
    }
  }
}

TEST(Macs, DepthsReported) {
  const CostReport r = mac_count(load("r_d1"), load("r_d1").input);
  EXPECT_EQ(r.d1, 4u);
  EXPECT_EQ(r.d2, 5u);
}

TEST(Macs, DeepS1SparesLittle) {
  const CostReport r = mac_count(load("r_d2"), load("r_d2").input);
  EXPECT_GT(static_cast<double>(r.cost_s1) / static_cast<double>(r.cost_m), 0.85);
}

TEST(Macs, MonolithicBaselineIsMaximal) {
  const double rm = static_cast<double>(mac_count(load("r_m"), load("r_m").input).cost_m);
  for (const char* name : kRetrievalVariants) {
    const CostReport r = mac_count(load(name), load(name).input);
    const double one = 1.0;
    EXPECT_LE(curves(r, std::span(&one, 1)).t[0], rm) << name;
  }
}

TEST(Params, HandCountedExamples) {
  const ParamCounts p = param_count(parse_arch("in=1, C1(1/1)"));
  EXPECT_EQ(p.monolithic, 4u);
  EXPECT_EQ(p.sharing_total(), 4u);  // first layer: both stages read the input
  const ParamCounts q = param_count(parse_arch("in=1, C1(1/1), C1(1/1)"));
  EXPECT_EQ(q.monolithic, 4u + 4u + 2u);
  EXPECT_EQ(q.sharing_total(), q.monolithic - 1u);  // 1 + 2 weights + 2 biases at layer 2
}

TEST(Params, ReductionTerm) {
  const ParamCounts p = param_count(parse_arch("in=3, C3(5/4), C3(2/6)"));
  EXPECT_EQ(p.monolithic - p.sharing_total(), 9u * 4u * 2u);
}

TEST(Params, IndependentOfSpatialSize) {
  EXPECT_EQ(param_count(parse_arch("in=3x32x32, C3(2/4)p1, R, C3(2/4)")).monolithic,
            param_count(parse_arch("in=3, C3(2/4)p1, R, C3(2/4)")).monolithic);
}

TEST(Curves, EndpointsAndCrossover) {
  const CostReport r = mac_count(parse_arch("C3(2/6)p1, R, C3(2/6)p1"), {1, 6, 6});
  const std::vector<double> grid{0.0, 0.25, 1.0};
  const CostCurve c = curves(r, grid);
  EXPECT_EQ(c.t[0], static_cast<double>(r.cost_s1));
  EXPECT_EQ(c.t[2], static_cast<double>(r.cost_m - 9 * 6 * 2 * 36));
  EXPECT_LT(c.t[2], c.t_ns[2]);
  EXPECT_EQ(c.t[0], c.t_ns[0]);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(c.t_m[i], static_cast<double>(r.cost_m));
    if (grid[i] > 0.0) {
      EXPECT_LT(c.t[i], c.t_ns[i]);
    }
  }
  EXPECT_DOUBLE_EQ(c.crossover, 1.0 - static_cast<double>(r.cost_s1) / static_cast<double>(r.cost_m));
  const std::vector<double> bad{1.2};
  EXPECT_THROW(curves(r, bad), std::invalid_argument);
}

TEST(Curves, AffineInP) {
  const CostReport r = mac_count(load("r_w1"), load("r_w1").input);
  const auto grid = uniform_grid(11);
  const CostCurve c = curves(r, grid);
  for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
    EXPECT_NEAR(c.t[i] - c.t[i - 1], c.t[i + 1] - c.t[i], 1e-6 * c.t_m[0]);
    EXPECT_NEAR(c.t_ns[i] - c.t_ns[i - 1], c.t_ns[i + 1] - c.t_ns[i], 1e-6 * c.t_m[0]);
  }
}

TEST(Curves, SharingNeverSlowerOnRetrievalVariants) {
  const auto grid = uniform_grid(101);
  for (const char* name : kRetrievalVariants) {
    const CostCurve c = curves(mac_count(load(name), load(name).input), grid);
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_LE(c.t[i], c.t_ns[i]) << name << " p=" << grid[i];
  }
}

TEST(Curves, NonSharingOvertakesMonolithicPastCrossover) {
  const CostCurve c = curves(mac_count(load("r_w1"), load("r_w1").input), uniform_grid(1001));
  for (std::size_t i = 0; i < c.p.size(); ++i) EXPECT_EQ(c.t_ns[i] > c.t_m[i], c.p[i] > c.crossover) << c.p[i];
}

TEST(Curves, MonolithicSpecIsFlat) {
  const CostCurve c = curves(mac_count(load("r_m"), load("r_m").input), uniform_grid(5));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(c.t[i], c.t_m[i]);
    EXPECT_EQ(c.t_ns[i], c.t_m[i]);
  }
  EXPECT_EQ(c.crossover, 1.0);
}

TEST(Curves, GridAndCsv) {
  EXPECT_EQ(uniform_grid(1), (std::vector<double>{0.0}));
  EXPECT_EQ(uniform_grid(3), (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_TRUE(uniform_grid(0).empty());
  const CostReport r = mac_count(parse_arch("C3(4)p1"), {1, 8, 8});
  const std::vector<double> grid{0.0, 1.0};
  std::ostringstream os;
  write_curve_csv(curves(r, grid), os);
  EXPECT_EQ(os.str(),
            "p,t,t_M,t_NS\n"
            "0.000000,2304.000000,2304.000000,2304.000000\n"
            "1.000000,2304.000000,2304.000000,2304.000000\n"
            "crossover_p,1.000000,,\n");
}
