#include <gtest/gtest.h>

#include <cmath>

#include "ffm/nn/adam.hpp"
#include "ffm/nn/checkpoint.hpp"
#include "ffm/nn/model.hpp"
#include "gradcheck.hpp"
#include "test_support.hpp"

using namespace ffm;
using namespace ffm::nn;
using ffm::testing::tiny_config;

namespace {

FeaturePyramid zero_pyramid(const ModelConfig& cfg) {
  auto p = ffm::testing::random_pyramid(cfg, 1);
  for (auto& l : p.levels) l.fill(0.0f);
  return p;
}

// Parameter count of the architecture, counted layer by layer from the config.
std::size_t expected_parameter_count(const ModelConfig& c) {
  std::size_t n = 0;
  for (auto cin : c.pyramid_channels) n += c.ffm_channels * cin + c.ffm_channels;
  n += 2 * c.trunk_blocks * (c.ffm_channels * c.ffm_channels * 9 + c.ffm_channels + 2 * c.ffm_channels);
  n += c.head_channels * c.ffm_channels * 9 + c.head_channels;
  n += c.tasks.size() * c.head_channels * 9 + c.tasks.size();
  n += c.head_channels * c.ffm_channels * 9 + c.head_channels;
  n += c.num_classes * c.head_channels * 9 + c.num_classes;
  const std::size_t in = static_cast<std::size_t>(c.grid_h() * c.grid_w()) + 1;
  n += c.termination_hidden * in + c.termination_hidden + c.termination_hidden + 1;
  return n + 2;
}

}  // namespace

TEST(ModelConfig, DefaultGridIsTwentyByThirtyTwo) {
  ModelConfig c;
  EXPECT_EQ(c.grid_h(), 20);
  EXPECT_EQ(c.grid_w(), 32);
  EXPECT_EQ(c.num_actions(), 640);
  EXPECT_EQ(c.image_h(), 320);
  EXPECT_EQ(c.image_w(), 512);
}

TEST(ModelConfig, JsonRoundTrip) {
  auto c = tiny_config();
  ModelConfig back;
  from_json(nlohmann::json::parse(to_json(c).dump()), back);
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(ModelConfig, UnknownTaskListsValidOnes) {
  auto c = tiny_config();
  try {
    c.task_index("spoon");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("cup, fork"), std::string::npos);
  }
}

TEST(Init, DefaultParameterCount) {
  ModelConfig c;
  Model<float> m(c);
  const auto p = m.init(0);
  EXPECT_EQ(p.parameter_count(), expected_parameter_count(c));
  EXPECT_EQ(p.parameter_count(), 1176037u);
}

TEST(Init, SameSeedSameBytes) {
  Model<float> m(tiny_config());
  const auto a = m.init(42), b = m.init(42), c = m.init(43);
  EXPECT_EQ(a.to_named_tensors(), b.to_named_tensors());
  EXPECT_NE(a.to_named_tensors(), c.to_named_tensors());
}

TEST(Init, RetinaScalarsDecodeToDefaults) {
  Model<double> m(tiny_config());
  const auto p = m.init(0);
  const auto r = m.retina(p);
  EXPECT_NEAR(r.alpha, 2.5, 1e-6);
  EXPECT_NEAR(r.sigma, 0.3, 1e-6);
}

TEST(Forward, HeadDims) {
  auto c = tiny_config();
  c.base_h = 160;
  c.base_w = 256;
  Model<float> m(c);
  const auto p = m.init(0);
  const auto pyr = ffm::testing::random_pyramid(c, 3);
  const Fixation f{256, 160};
  const auto out = m.forward(p, pyr, std::span(&f, 1), 0);
  EXPECT_EQ(out.attention.shape(), (Shape{2, 20, 32}));
  EXPECT_EQ(out.center.shape(), (Shape{4, 20, 32}));
  EXPECT_EQ(out.q_values.size(), 640u);
}

TEST(Forward, ZeroInputZeroBias) {
  auto c = tiny_config();
  Model<float> m(c);
  const auto p = m.init(5);
  const auto pyr = zero_pyramid(c);
  const Fixation f{64, 40};
  const auto out = m.forward(p, pyr, std::span(&f, 1), 0);
  for (float q : out.q_values) EXPECT_EQ(q, 0.0f);
  for (float v : out.center.vec()) EXPECT_EQ(v, 0.5f);
}

TEST(Forward, TaskRoutesOnlyTheFixationHead) {
  auto c = tiny_config();
  Model<float> m(c);
  const auto p = m.init(5);
  const auto pyr = ffm::testing::random_pyramid(c, 9);
  const Fixation f{64, 40};
  const auto a = m.forward(p, pyr, std::span(&f, 1), 0);
  const auto b = m.forward(p, pyr, std::span(&f, 1), 1);
  EXPECT_NE(a.q_values, b.q_values);
  EXPECT_EQ(a.center, b.center);
  EXPECT_EQ(a.attention, b.attention);
}

TEST(Forward, Deterministic) {
  auto c = tiny_config();
  Model<float> m(c);
  const auto p = m.init(5);
  const auto pyr = ffm::testing::random_pyramid(c, 9);
  const std::vector<Fixation> f{{64, 40}, {10, 70}};
  const auto a = m.forward(p, pyr, f, 1);
  const auto b = m.forward(p, pyr, f, 1);
  EXPECT_EQ(a.q_values, b.q_values);
  EXPECT_EQ(a.center, b.center);
  EXPECT_EQ(a.termination_prob, b.termination_prob);
}

TEST(Forward, RejectsWrongPyramid) {
  auto c = tiny_config();
  Model<float> m(c);
  const auto p = m.init(0);
  auto pyr = ffm::testing::random_pyramid(c, 1);
  pyr.levels[2] = Tensor<float>({5, 10, 16});
  const Fixation f{64, 40};
  EXPECT_THROW(m.forward(p, pyr, std::span(&f, 1), 0), DataError);
}

TEST(Termination, ZeroWeightsGiveHalf) {
  Model<double> m(tiny_config());
  auto p = m.init(0);
  p["term.fc1.weight"].fill(0);
  p["term.fc2.weight"].fill(0);
  std::vector<double> q(m.config().num_actions(), 3.0);
  EXPECT_DOUBLE_EQ(m.termination_forward(p, q, 4), 0.5);
}

TEST(Termination, OpenIntervalAndMonotoneInBias) {
  Model<double> m(tiny_config());
  auto p = m.init(0);
  std::vector<double> q(m.config().num_actions(), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::sin(static_cast<double>(i));
  double prev = 0;
  for (double b : {-5.0, -1.0, 0.0, 1.0, 5.0}) {
    p["term.fc2.bias"][0] = b;
    const double pr = m.termination_forward(p, q, 2);
    EXPECT_GT(pr, 0.0);
    EXPECT_LT(pr, 1.0);
    EXPECT_GT(pr, prev);
    prev = pr;
  }
}

TEST(LayerNorm, ZeroMeanUnitVariancePerLocation) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(2.0, 3.0);
  Tensor<double> x({16, 5, 7});
  for (auto& v : x.vec()) v = nd(rng);
  Tensor<double> gamma({16}, 1.0), beta({16});
  const auto y = layer_norm(x, gamma, beta, static_cast<NormCache<double>*>(nullptr));
  for (std::size_t i = 0; i < 35; ++i) {
    double m = 0, s = 0;
    for (std::size_t c = 0; c < 16; ++c) m += y[c * 35 + i];
    m /= 16;
    for (std::size_t c = 0; c < 16; ++c) s += (y[c * 35 + i] - m) * (y[c * 35 + i] - m);
    EXPECT_NEAR(m, 0.0, 1e-4);
    EXPECT_NEAR(s / 16, 1.0, 1e-4);
  }
}

TEST(Backward, FiniteDifferencesEveryGroup) {
  ffm::testing::GradProblem prob(11);
  const auto res = ffm::testing::finite_difference_check(prob);
  for (const auto& name : {"proj", "trunk", "fix", "det", "term", "retina.alpha", "retina.sigma"}) {
    ASSERT_TRUE(res.count(name)) << name;
    EXPECT_GT(res.at(name).checked, 0);
    EXPECT_LE(res.at(name).worst, 1e-3) << res.at(name).worst_entry;
  }
}

TEST(Backward, RetinaGradientIsNonzero) {
  ffm::testing::GradProblem prob(4);
  Model<double> m(prob.cfg);
  const auto p = m.init(1);
  const auto g = prob.gradient(m, p);
  EXPECT_NE(g["retina.alpha"][0], 0.0);
  EXPECT_NE(g["retina.sigma"][0], 0.0);
}

TEST(Backward, FrozenHeadHasExactlyZeroGradient) {
  auto c = tiny_config();
  Model<double> m(c);
  const auto p = m.init(2);
  const auto pyr = ffm::testing::random_pyramid(c, 2);
  const Fixation f{30, 50};
  Graph<double> g;
  const auto out = m.forward(p, pyr, std::span(&f, 1), 0, &g);
  OutputGrad<double> og;
  og.q.assign(out.q_values.size(), 0.25);
  auto grads = p.zeros_like();
  m.backward(p, g, og, grads);
  for (const char* n : {"det.conv1.weight", "det.conv1.bias", "det.conv2.weight", "det.conv2.bias"}) {
    for (double v : grads[n].vec()) EXPECT_EQ(v, 0.0) << n;
  }
  double s = 0;
  for (double v : grads["fix.conv2.weight"].vec()) s += std::abs(v);
  EXPECT_GT(s, 0.0);
}

TEST(Backward, ConsumedGraphIsAContractError) {
  auto c = tiny_config();
  Model<double> m(c);
  const auto p = m.init(2);
  const auto pyr = ffm::testing::random_pyramid(c, 2);
  const Fixation f{30, 50};
  Graph<double> g;
  const auto out = m.forward(p, pyr, std::span(&f, 1), 0, &g);
  OutputGrad<double> og;
  og.q.assign(out.q_values.size(), 1.0);
  auto grads = p.zeros_like();
  m.backward(p, g, og, grads);
  EXPECT_THROW(m.backward(p, g, og, grads), ContractError);
}

TEST(Backward, IdenticalGraphsIdenticalGradients) {
  ffm::testing::GradProblem prob(5);
  Model<double> m(prob.cfg);
  const auto p = m.init(3);
  const auto a = prob.gradient(m, p), b = prob.gradient(m, p);
  EXPECT_EQ(a.to_named_tensors(), b.to_named_tensors());
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Model<double> m(tiny_config());
  auto p = m.init(0);
  const auto before = p.to_named_tensors();
  Adam<double> opt(p);
  opt.step(p, p.zeros_like());
  EXPECT_EQ(p.to_named_tensors(), before);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, FirstStepMovesBySignTimesLr) {
  ParamStore<double> p;
  p.add("w", Tensor<double>({4}, std::vector<double>{1, 2, 3, 4}));
  ParamStore<double> g;
  g.add("w", Tensor<double>({4}, std::vector<double>{0.5, -3.0, 1e-3, -1e2}));
  Adam<double> opt(p, {.lr = 1e-4});
  opt.step(p, g);
  const double expect[4] = {1 - 1e-4, 2 + 1e-4, 3 - 1e-4, 4 + 1e-4};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(p["w"][i], expect[i], 1e-9);
}

TEST(Adam, Deterministic) {
  auto run = [] {
    ParamStore<double> p;
    p.add("w", Tensor<double>({3}, std::vector<double>{1, -1, 0.5}));
    Adam<double> opt(p, {.lr = 1e-2});
    for (int t = 0; t < 10; ++t) {
      ParamStore<double> g;
      g.add("w", Tensor<double>({3}, std::vector<double>{p["w"][0], std::sin(t * 1.0), -p["w"][2]}));
      opt.step(p, g);
    }
    return p["w"].vec();
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto dir = ffm::testing::temp_dir("ckpt");
  auto c = tiny_config();
  Model<float> m(c);
  const auto p = m.init(9);
  save_checkpoint(dir / "a.ffmw", c, p, 123);
  const auto loaded = load_checkpoint<float>(dir / "a.ffmw");
  EXPECT_EQ(loaded.step, 123u);
  EXPECT_EQ(to_json(loaded.config), to_json(c));
  save_checkpoint(dir / "b.ffmw", loaded.config, loaded.params, loaded.step);
  EXPECT_EQ(detail::read_file_bytes(dir / "a.ffmw"), detail::read_file_bytes(dir / "b.ffmw"));
}

TEST(Checkpoint, MissingTensorIsNamed) {
  const auto dir = ffm::testing::temp_dir("ckpt_missing");
  auto c = tiny_config();
  Model<float> m(c);
  Checkpoint ck;
  ck.tensors = m.init(0).to_named_tensors();
  ck.tensors.erase(ck.tensors.begin() + 3);
  const std::string missing = m.init(0).entry(3).name;
  write_checkpoint_file(dir / "x.ffmw", ck);
  try {
    load_checkpoint<float>(dir / "x.ffmw", c);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(missing), std::string::npos);
  }
}

TEST(Checkpoint, ShapeMismatchNamesBothShapes) {
  const auto dir = ffm::testing::temp_dir("ckpt_shape");
  auto c = tiny_config();
  Model<float> m(c);
  Checkpoint ck;
  ck.tensors = m.init(0).to_named_tensors();
  auto* t = &ck.tensors[0];
  t->tensor = Tensor<float>({8, 2, 1, 1});
  write_checkpoint_file(dir / "x.ffmw", ck);
  try {
    load_checkpoint<float>(dir / "x.ffmw", c);
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(t->name), std::string::npos);
    EXPECT_NE(msg.find("(8,2,1,1)"), std::string::npos);
    EXPECT_NE(msg.find("(8,3,1,1)"), std::string::npos);
  }
}
