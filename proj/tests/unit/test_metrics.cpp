#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ffm/metrics/align.hpp"
#include "ffm/metrics/cluster.hpp"
#include "ffm/metrics/density.hpp"
#include "ffm/metrics/plots.hpp"
#include "ffm/metrics/report.hpp"
#include "ffm/metrics/scores.hpp"
#include "ffm/nn/params.hpp"
#include "ffm/parallel.hpp"
#include "metric_oracles.hpp"

using namespace ffm;
using namespace ffm::metrics;
using ffm::testing::all_sequences;
using ffm::testing::best_alignment_by_enumeration;
using ffm::testing::longest_common_subsequence_by_subsets;

namespace {

std::vector<int> seq(const std::string& s) {
  std::vector<int> v;
  for (char c : s) v.push_back(c);
  return v;
}

Scanpath path(std::initializer_list<Fixation> f) { return Scanpath{std::vector<Fixation>(f), true}; }

Raster label_map(int w, int h, std::uint8_t fill = 0) {
  return Raster{w, h, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, fill)};
}

void paint(Raster& r, int x0, int y0, int x1, int y1, std::uint8_t v) {
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) r.pixels[static_cast<std::size_t>(y) * r.width + x] = v;
}

SearchTrial trial(const std::string& image, const std::string& task, int subject, Scanpath sp) {
  SearchTrial t;
  t.image_id = image;
  t.task = task;
  t.subject = subject;
  t.scanpath = std::move(sp);
  return t;
}

}  // namespace

TEST(Align, IdenticalSequencesScoreOne) { EXPECT_DOUBLE_EQ(nw_align(seq("ABC"), seq("ABC")), 1.0); }

TEST(Align, DisjointTokensScoreZero) { EXPECT_DOUBLE_EQ(nw_align(seq("A"), seq("B")), 0.0); }

TEST(Align, SwappedPairScoresHalf) { EXPECT_DOUBLE_EQ(nw_align(seq("AB"), seq("BA")), 0.5); }

TEST(Align, BothEmptyScoreOne) { EXPECT_DOUBLE_EQ(nw_align(seq(""), seq("")), 1.0); }

TEST(Align, OneEmptyScoresZero) { EXPECT_DOUBLE_EQ(nw_align(seq("ABC"), seq("")), 0.0); }

TEST(Align, UnnormalizedScoreCountsMatches) {
  AlignmentScoring s;
  s.normalize = false;
  EXPECT_DOUBLE_EQ(nw_align(seq("ABCA"), seq("ACA"), s), 3.0);
}

TEST(Align, MatchesSubsetEnumerationUpToLengthFive) {
  const auto all = all_sequences(3, 5);
  for (const auto& a : all) {
    for (const auto& b : all) {
      const double expect = a.empty() && b.empty()
                                ? 1.0
                                : static_cast<double>(longest_common_subsequence_by_subsets(a, b)) /
                                      static_cast<double>(std::max(a.size(), b.size()));
      ASSERT_DOUBLE_EQ(nw_align(a, b), expect);
    }
  }
}

TEST(Align, MatchesAlignmentEnumerationWithGeneralConstants) {
  const AlignmentScoring s{2.0, -1.0, -0.5, false};
  const auto all = all_sequences(3, 4);
  for (const auto& a : all) {
    for (const auto& b : all) {
      if (a.empty() && b.empty()) continue;
      ASSERT_NEAR(nw_align(a, b, s), best_alignment_by_enumeration(a, b, s), 1e-12);
    }
  }
}

TEST(Align, SymmetricAndBounded) {
  std::mt19937_64 rng(3);
  for (int it = 0; it < 500; ++it) {
    std::vector<int> a(rng() % 9), b(rng() % 9);
    for (auto& v : a) v = static_cast<int>(rng() % 4);
    for (auto& v : b) v = static_cast<int>(rng() % 4);
    const double ab = nw_align(a, b), ba = nw_align(b, a);
    EXPECT_DOUBLE_EQ(ab, ba);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    if (!a.empty()) EXPECT_DOUBLE_EQ(nw_align(a, a), 1.0);
  }
}

TEST(Cluster, IdenticalFixationsFormOneCluster) {
  const std::vector<Fixation> f(7, Fixation{100, 100});
  const auto m = cluster_fixations(f);
  ASSERT_EQ(m.centers.size(), 1u);
  EXPECT_DOUBLE_EQ(m.centers[0].x, 100);
}

TEST(Cluster, FarApartGroupsFormTwoClusters) {
  const std::vector<Fixation> f{{50, 50}, {55, 52}, {48, 47}, {450, 280}, {452, 283}};
  const auto m = cluster_fixations(f);
  ASSERT_EQ(m.centers.size(), 2u);
  EXPECT_EQ(m.labels(f), (std::vector<int>{0, 0, 0, 1, 1}));
}

TEST(Cluster, NeverMoreClustersThanFixations) {
  std::mt19937_64 rng(5);
  for (int it = 0; it < 50; ++it) {
    std::vector<Fixation> f(1 + rng() % 12);
    for (auto& p : f) p = {nn::uniform01(rng) * 512, nn::uniform01(rng) * 320};
    const auto m = cluster_fixations(f);
    EXPECT_LE(m.centers.size(), f.size());
    EXPECT_GE(m.centers.size(), 1u);
    const auto again = cluster_fixations(f);
    EXPECT_EQ(m.labels(f), again.labels(f));
  }
}

TEST(Cluster, EmptyInputIsADataError) { EXPECT_THROW(cluster_fixations({}), DataError); }

TEST(SequenceScore, IdenticalScanpathsScoreOne) {
  const auto s = path({{256, 160}, {40, 40}, {400, 300}, {100, 250}});
  EXPECT_DOUBLE_EQ(sequence_score(s, s), 1.0);
}

TEST(SequenceScore, OppositeOrderOverTwoClustersScoresHalf) {
  const Fixation a{60, 60}, b{450, 260};
  EXPECT_DOUBLE_EQ(sequence_score(path({a, b}), path({b, a})), 0.5);
}

TEST(SequenceScore, TruncationBeyondLengthEqualsFullScore) {
  const auto p = path({{256, 160}, {40, 40}, {400, 300}});
  const auto g = path({{256, 160}, {400, 300}, {40, 40}, {100, 250}});
  EXPECT_DOUBLE_EQ(truncated_score(p, g, 4), sequence_score(p, g));
}

TEST(SequenceScore, IdenticalPrefixesScoreOneAtTwo) {
  const auto p = path({{256, 160}, {40, 40}, {400, 300}, {480, 20}, {20, 300}});
  const auto g = path({{256, 160}, {40, 40}, {400, 300}, {100, 250}});
  EXPECT_DOUBLE_EQ(truncated_score(p, g, 2), 1.0);
  EXPECT_LT(sequence_score(p, g), 1.0);
}

TEST(Semantic, BackgroundOnlyGivesBackgroundTokens) {
  const auto lm = label_map(512, 320);
  const auto s = semantic_sequence(path({{10, 10}, {300, 200}}), lm);
  EXPECT_EQ(s, (std::vector<int>{0, 0}));
}

TEST(Semantic, TokenIsTheLabelUnderTheFixation) {
  auto lm = label_map(512, 320);
  paint(lm, 100, 100, 120, 120, 44);
  const auto s = semantic_sequence(path({{110.7, 105.2}, {99.9, 105}, {256, 160}}), lm);
  EXPECT_EQ(s, (std::vector<int>{44, 0, 0}));
}

TEST(Semantic, LengthEqualsFixationCount) {
  auto lm = label_map(512, 320, 3);
  const auto p = path({{1, 1}, {2, 2}, {2, 2}, {500, 300}});
  EXPECT_EQ(semantic_sequence(p, lm).size(), p.size());
}

TEST(Semantic, ValuesAboveCategoryCountAreRejected) {
  auto lm = label_map(512, 320, 81);
  EXPECT_THROW(semantic_sequence(path({{1, 1}}), lm), DataError);
}

TEST(Semantic, SameCategoryInDifferentCellsScoresOneButSequenceScoreDoesNot) {
  // Two instances of category 7, far apart.
  auto lm = label_map(512, 320);
  paint(lm, 20, 20, 120, 120, 7);
  paint(lm, 380, 200, 500, 310, 7);
  const auto p = path({{60, 60}, {440, 250}});
  const auto g = path({{440, 250}, {60, 60}});
  const double semss = semantic_sequence_score(p, g, lm);
  const double expect = nw_align(std::vector<int>{7, 7}, std::vector<int>{7, 7});
  EXPECT_DOUBLE_EQ(semss, expect);
  EXPECT_DOUBLE_EQ(semss, 1.0);
  EXPECT_LT(sequence_score(p, g), 1.0);
}

TEST(InformationGain, ModelEqualToBaselineGivesZero) {
  std::vector<double> m(640);
  std::mt19937_64 rng(1);
  for (auto& v : m) v = 0.1 + nn::uniform01(rng);
  const double z = std::accumulate(m.begin(), m.end(), 0.0);
  for (auto& v : m) v /= z;
  for (int c : {0, 17, 639}) EXPECT_EQ(information_gain(m, m, c), 0.0);
}

TEST(InformationGain, OneHotAgainstUniformIsLogTwoOf640) {
  std::vector<double> m(640, 0.0), u(640, 1.0 / 640);
  m[123] = 1.0;
  EXPECT_NEAR(information_gain(m, u, 123), std::log2(640.0), 1e-9);
  EXPECT_NEAR(std::log2(640.0), 9.322, 1e-3);
}

TEST(InformationGain, UniformAgainstUniformIsZero) {
  std::vector<double> u(640, 1.0 / 640);
  EXPECT_EQ(information_gain(u, u, 5), 0.0);
}

TEST(Nss, UniformMapScoresZero) {
  std::vector<double> u(640, 1.0 / 640);
  EXPECT_EQ(normalized_scanpath_saliency(u, 10), 0.0);
}

TEST(Nss, OneHotMatchesDirectZScore) {
  std::vector<double> m(640, 0.0);
  m[42] = 1.0;
  // Oracle: two-pass population statistics on the vector itself.
  long double mean = 0;
  for (double v : m) mean += v;
  mean /= 640;
  long double ss = 0;
  for (double v : m) ss += (v - mean) * (v - mean);
  const double expect = static_cast<double>((1.0L - mean) / std::sqrt(ss / 640));
  EXPECT_NEAR(normalized_scanpath_saliency(m, 42), expect, 1e-9);
  EXPECT_NEAR(expect, 25.28, 5e-3);
}

TEST(Nss, InvariantToPermutingOtherCells) {
  std::vector<double> m(640);
  std::mt19937_64 rng(9);
  for (auto& v : m) v = nn::uniform01(rng);
  const double base = normalized_scanpath_saliency(m, 0);
  std::shuffle(m.begin() + 1, m.end(), rng);
  EXPECT_NEAR(normalized_scanpath_saliency(m, 0), base, 1e-12);
}

TEST(LengthMae, EqualLengthsGiveZero) {
  const std::vector<LengthGroup> g{{4, {4, 4}}, {2, {2}}};
  EXPECT_EQ(scanpath_length_mae(g), 0.0);
}

TEST(LengthMae, SingleSubjectDifference) {
  const std::vector<LengthGroup> g{{6, {4}}};
  EXPECT_EQ(scanpath_length_mae(g), 2.0);
}

TEST(LengthMae, AveragesOverSubjectsThenImages) {
  EXPECT_EQ(scanpath_length_mae(std::vector<LengthGroup>{{6, {4, 8}}}), 2.0);
  EXPECT_EQ(scanpath_length_mae(std::vector<LengthGroup>{{6, {4, 8}}, {1, {1}}}), 1.0);
}

TEST(Density, TaskWithoutFixationsIsUniform) {
  const auto d = density_baseline({}, {"cup"});
  for (double v : d.at("cup").vec()) EXPECT_NEAR(v, 1.0 / 640, 1e-15);
}

TEST(Density, SingleCellWithoutBlur) {
  const double eps = 1e-3;
  std::vector<SearchTrial> t{trial("a", "cup", 0, path({{256, 160}, {8, 8}}))};
  const auto d = density_baseline(t, {"cup"}, {}, {eps, 0.0});
  const double eps_prime = eps / (1 + 640 * eps);
  EXPECT_NEAR(d.at("cup")[0], 1 - 639 * eps_prime, 1e-12);
  EXPECT_NEAR(d.at("cup")[1], eps_prime, 1e-15);
}

TEST(Density, NormalizedAndPositive) {
  std::mt19937_64 rng(2);
  std::vector<SearchTrial> t;
  for (int i = 0; i < 40; ++i) {
    Scanpath s{{{256, 160}}, true};
    for (int k = 0; k < 5; ++k) s.fixations.push_back({nn::uniform01(rng) * 511, nn::uniform01(rng) * 319});
    t.push_back(trial("img" + std::to_string(i), i % 2 ? "cup" : "fork", 0, s));
  }
  const auto d = density_baseline(t, {"cup", "fork", "tv"});
  ASSERT_EQ(d.maps.size(), 3u);
  for (const auto& [task, m] : d.maps) {
    EXPECT_NEAR(std::accumulate(m.vec().begin(), m.vec().end(), 0.0), 1.0, 1e-12);
    for (double v : m.vec()) EXPECT_GT(v, 0.0);
  }
}

TEST(Density, BlurKeepsMassAwayFromBorders) {
  Tensor<double> c({20, 32});
  c[10 * 32 + 16] = 1.0;
  const auto b = gaussian_blur(c, 1.0);
  EXPECT_NEAR(std::accumulate(b.vec().begin(), b.vec().end(), 0.0), 1.0, 1e-12);
  EXPECT_NEAR(b[10 * 32 + 15], b[10 * 32 + 17], 1e-15);
  EXPECT_NEAR(b[9 * 32 + 16], b[10 * 32 + 15], 1e-15);
}

TEST(Density, TensorRoundTripRenormalizes) {
  const auto d = density_baseline({trial("a", "cup", 0, path({{256, 160}, {8, 8}}))}, {"cup", "fork"});
  const auto back = density_from_tensors(density_to_tensors(d));
  for (const auto& [task, m] : d.maps) {
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(back.at(task)[i], m[i], 1e-7);
  }
  EXPECT_THROW(back.at("tv"), DataError);
}

TEST(HumanConsistency, IdenticalSubjectsGiveOne) {
  const auto s = path({{256, 160}, {40, 40}, {400, 300}});
  std::vector<SearchTrial> t{trial("a", "cup", 1, s), trial("a", "cup", 2, s), trial("a", "cup", 3, s)};
  const auto r = human_consistency(t, [](const SearchTrial& p, const SearchTrial& g) {
    return sequence_score(p.scanpath, g.scanpath);
  });
  EXPECT_DOUBLE_EQ(r.mean, 1.0);
  EXPECT_EQ(r.groups, 1u);
}

TEST(HumanConsistency, SingleSubjectGroupsAreSkipped) {
  std::vector<SearchTrial> t{trial("a", "cup", 1, path({{1, 1}})), trial("b", "cup", 1, path({{1, 1}})),
                             trial("b", "cup", 2, path({{1, 1}}))};
  const auto r = human_consistency(t, [](const SearchTrial&, const SearchTrial&) { return 0.25; });
  EXPECT_EQ(r.groups, 1u);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0], "a/cup");
  EXPECT_DOUBLE_EQ(r.mean, 0.25);
}

TEST(HumanConsistency, InvariantToSubjectOrder) {
  std::vector<SearchTrial> t{trial("a", "cup", 1, path({{256, 160}, {40, 40}, {400, 300}})),
                             trial("a", "cup", 2, path({{256, 160}, {400, 300}})),
                             trial("a", "cup", 3, path({{256, 160}, {40, 40}, {100, 250}, {400, 300}}))};
  auto score = [](const SearchTrial& p, const SearchTrial& g) { return sequence_score(p.scanpath, g.scanpath); };
  const double a = human_consistency(t, score).mean;
  std::reverse(t.begin(), t.end());
  EXPECT_NEAR(human_consistency(t, score).mean, a, 1e-15);
}

TEST(Report, GroundTruthAgainstItself) {
  auto lm = std::make_shared<const Raster>(label_map(512, 320, 5));
  std::vector<SearchTrial> gt{trial("a", "cup", 1, path({{256, 160}, {40, 40}, {400, 300}})),
                              trial("b", "cup", 1, path({{256, 160}, {100, 250}}))};
  const auto rep = evaluate(gt, gt, [&](const std::string&) { return lm; }, {}, nullptr);
  EXPECT_DOUBLE_EQ(rep.aggregate.at("SS"), 1.0);
  EXPECT_DOUBLE_EQ(rep.aggregate.at("SemSS"), 1.0);
  EXPECT_DOUBLE_EQ(rep.aggregate.at("MAE"), 0.0);
  EXPECT_FALSE(rep.aggregate.count("cIG"));
}

TEST(Report, MissingLabelMapsSkipSemSSWithAWarning) {
  std::vector<SearchTrial> gt{trial("a", "cup", 1, path({{256, 160}, {40, 40}}))};
  const auto rep = evaluate(gt, gt, [](const std::string&) { return std::shared_ptr<const Raster>(); }, {}, nullptr);
  EXPECT_FALSE(rep.aggregate.count("SemSS"));
  EXPECT_TRUE(rep.aggregate.count("SS"));
  EXPECT_FALSE(rep.warnings.empty());
}

TEST(Report, TeacherForcedScoresUseThePolicy) {
  std::vector<SearchTrial> gt{trial("a", "cup", 1, path({{256, 160}, {8, 8}, {504, 312}}))};
  // Policy puts all mass on the observed next fixation.
  PolicyFn oracle = [](const SearchTrial& t, std::span<const Fixation> prefix) {
    std::vector<double> p(640, 0.0);
    p[fixation_to_action(t.scanpath.fixations[prefix.size()], {})] = 1.0;
    return p;
  };
  DensityBaseline base;
  base.maps["cup"] = Tensor<double>({20, 32}, 1.0 / 640);
  const auto rep = evaluate(gt, gt, {}, oracle, &base);
  EXPECT_NEAR(rep.aggregate.at("cIG"), std::log2(640.0), 1e-9);
  EXPECT_GT(rep.aggregate.at("cNSS"), 25.0);
}

TEST(Report, MissingPredictionIsADataError) {
  std::vector<SearchTrial> gt{trial("a", "cup", 1, path({{256, 160}}))};
  EXPECT_THROW(evaluate({}, gt, {}, {}, nullptr), DataError);
}

TEST(Report, ParallelMatchesSerial) {
  std::mt19937_64 rng(4);
  std::vector<SearchTrial> gt, pred;
  for (int i = 0; i < 12; ++i) {
    Scanpath a{{{256, 160}}, true}, b{{{256, 160}}, true};
    for (int k = 0; k < 4; ++k) a.fixations.push_back({nn::uniform01(rng) * 511, nn::uniform01(rng) * 319});
    for (int k = 0; k < 3; ++k) b.fixations.push_back({nn::uniform01(rng) * 511, nn::uniform01(rng) * 319});
    gt.push_back(trial("img" + std::to_string(i / 2), "cup", i % 2, a));
    if (i % 2 == 0) pred.push_back(trial("img" + std::to_string(i / 2), "cup", 0, b));
  }
  EvalOptions serial, par;
  par.jobs = 4;
  EXPECT_EQ(report_to_csv(evaluate(pred, gt, {}, {}, nullptr, serial)),
            report_to_csv(evaluate(pred, gt, {}, {}, nullptr, par)));
}

TEST(Report, CsvAndJsonLayout) {
  std::vector<SearchTrial> gt{trial("a,b", "cup", 1, path({{256, 160}, {40, 40}}))};
  const auto rep = evaluate(gt, gt, {}, {}, nullptr);
  const auto csv = report_to_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "image,task,subject,SemSS,SS,SS2,SS4,cIG,cNSS,length_error");
  EXPECT_NE(csv.find("\"a,b\",cup,1,,1,1,1,,,0"), std::string::npos);
  const auto j = report_to_json(rep);
  EXPECT_TRUE(j["trials"][0]["SemSS"].is_null());
  EXPECT_EQ(j["aggregate"]["SS"], 1.0);
}

TEST(Plots, SvgHasOneMarkerPerFixation) {
  const auto p = path({{256, 160}, {40, 40}, {400, 300}});
  const auto g = path({{256, 160}, {100, 250}});
  const auto svg = scanpath_svg(p, &g, {}, "img<1>.png");
  std::size_t n = 0;
  for (auto pos = svg.find("<circle"); pos != std::string::npos; pos = svg.find("<circle", pos + 1)) ++n;
  EXPECT_EQ(n, 5u);
  EXPECT_NE(svg.find("img&lt;1&gt;.png"), std::string::npos);
}

TEST(Plots, PriorityRasterIsImageSized) {
  std::vector<double> m(640, 0.0);
  m[0] = 2.0;
  const auto r = priority_raster(m);
  EXPECT_EQ(r.width, 512);
  EXPECT_EQ(r.height, 320);
  EXPECT_EQ(r.at(0, 0, 0), 255);
  EXPECT_EQ(r.at(0, 0, 2), 255);
  EXPECT_EQ(r.at(511, 319, 0), 0);
}

TEST(Parallel, MatchesSerialAndPropagatesTheFirstError) {
  std::vector<int> out(100);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
  try {
    parallel_for(50, 3, [](std::size_t i) {
      if (i == 7 || i == 30) throw DataError("item " + std::to_string(i));
    });
    FAIL();
  } catch (const DataError& e) {
    EXPECT_STREQ(e.what(), "item 7");
  }
}
