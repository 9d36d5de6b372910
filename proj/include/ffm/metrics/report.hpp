#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ffm/error.hpp"
#include "ffm/metrics/density.hpp"
#include "ffm/metrics/scores.hpp"
#include "ffm/parallel.hpp"
#include "ffm/png_io.hpp"
#include "ffm/types.hpp"

namespace ffm::metrics {

/// Fixation distribution over the action grid given a trial and the fixations seen so far.
using PolicyFn = std::function<std::vector<double>(const SearchTrial& trial, std::span<const Fixation> prefix)>;
/// Label map for an image, or nullptr when none is available.
using LabelMapFn = std::function<std::shared_ptr<const Raster>(const std::string& image_id)>;

struct EvalOptions {
  double bandwidth = kDefaultBandwidth;
  AlignmentScoring scoring;
  ActionGrid grid;
  unsigned jobs = 1;
};

struct TrialMetrics {
  std::string image_id;
  std::string task;
  int subject = 0;
  double ss = 0, ss2 = 0, ss4 = 0;
  std::optional<double> semss, cig, cnss;
  double length_error = 0;
};

struct MetricReport {
  std::vector<TrialMetrics> trials;
  std::map<std::string, double> aggregate;  // metrics absent from every trial are omitted
  std::vector<std::string> warnings;
};

using TrialKey = std::pair<std::string, std::string>;

/// One prediction per image and task; a prediction with the same subject is preferred.
inline const SearchTrial& match_prediction(const std::multimap<TrialKey, const SearchTrial*>& preds,
                                           const SearchTrial& gt) {
  const auto [lo, hi] = preds.equal_range({gt.image_id, gt.task});
  if (lo == hi) throw DataError("no prediction for image " + gt.image_id + " and task '" + gt.task + "'");
  for (auto it = lo; it != hi; ++it) {
    if (it->second->subject == gt.subject) return *it->second;
  }
  return *lo->second;
}

struct TeacherForced {
  double cig = 0, cnss = 0;
  bool has_cig = false;
};

/// Conditions the policy on every ground-truth prefix and scores the next observed fixation.
inline TeacherForced teacher_forced(const SearchTrial& gt, const PolicyFn& policy, const Tensor<double>* baseline,
                                    const ActionGrid& grid) {
  TeacherForced r;
  const auto& fx = gt.scanpath.fixations;
  if (fx.size() < 2) return r;
  double ig = 0, nss = 0;
  for (std::size_t k = 1; k < fx.size(); ++k) {
    const auto pi = policy(gt, std::span<const Fixation>(fx.data(), k));
    if (pi.size() != static_cast<std::size_t>(grid.size())) throw ContractError("policy returned a wrong-sized map");
    const int cell = fixation_to_action(fx[k], grid);
    if (baseline) ig += information_gain(pi, baseline->vec(), cell);
    nss += normalized_scanpath_saliency(pi, cell);
  }
  const double n = static_cast<double>(fx.size() - 1);
  r.cnss = nss / n;
  if (baseline) {
    r.cig = ig / n;
    r.has_cig = true;
  }
  return r;
}

inline MetricReport evaluate(const std::vector<SearchTrial>& predictions, const std::vector<SearchTrial>& ground_truth,
                             const LabelMapFn& labels, const PolicyFn& policy, const DensityBaseline* baseline,
                             const EvalOptions& opt = {}) {
  std::multimap<TrialKey, const SearchTrial*> preds;
  for (const auto& p : predictions) preds.emplace(TrialKey{p.image_id, p.task}, &p);
  MetricReport rep;
  rep.trials.resize(ground_truth.size());
  std::vector<char> missing_labels(ground_truth.size(), 0);
  parallel_for(ground_truth.size(), opt.jobs, [&](std::size_t i) {
    const SearchTrial& gt = ground_truth[i];
    const SearchTrial& pred = match_prediction(preds, gt);
    TrialMetrics& m = rep.trials[i];
    m.image_id = gt.image_id;
    m.task = gt.task;
    m.subject = gt.subject;
    m.ss = sequence_score(pred.scanpath, gt.scanpath, opt.bandwidth, opt.scoring);
    m.ss2 = truncated_score(pred.scanpath, gt.scanpath, 2, opt.bandwidth, opt.scoring);
    m.ss4 = truncated_score(pred.scanpath, gt.scanpath, 4, opt.bandwidth, opt.scoring);
    m.length_error = std::abs(static_cast<double>(pred.scanpath.new_fixations()) -
                              static_cast<double>(gt.scanpath.new_fixations()));
    if (labels) {
      if (auto lm = labels(gt.image_id)) {
        m.semss = semantic_sequence_score(pred.scanpath, gt.scanpath, *lm, opt.grid, opt.scoring);
      } else {
        missing_labels[i] = 1;
      }
    }
    if (policy) {
      const Tensor<double>* base = baseline ? &baseline->at(gt.task) : nullptr;
      const auto tf = teacher_forced(gt, policy, base, opt.grid);
      if (gt.scanpath.size() >= 2) {
        m.cnss = tf.cnss;
        if (tf.has_cig) m.cig = tf.cig;
      }
    }
  });

  std::size_t n_missing = 0;
  for (char c : missing_labels) n_missing += c;
  if (!labels) rep.warnings.push_back("no label maps given; SemSS skipped");
  if (n_missing > 0) rep.warnings.push_back(std::to_string(n_missing) + " trials without a label map; SemSS skipped for them");
  if (!policy) rep.warnings.push_back("no model given; cIG and cNSS skipped");
  if (policy && !baseline) rep.warnings.push_back("no density baseline given; cIG skipped");

  auto mean_of = [&](const char* name, auto get) {
    double s = 0;
    std::size_t n = 0;
    for (const auto& t : rep.trials) {
      if (const std::optional<double> v = get(t)) {
        s += *v;
        ++n;
      }
    }
    if (n > 0) rep.aggregate[name] = s / static_cast<double>(n);
  };
  mean_of("SemSS", [](const TrialMetrics& t) { return t.semss; });
  mean_of("SS", [](const TrialMetrics& t) { return std::optional<double>(t.ss); });
  mean_of("SS2", [](const TrialMetrics& t) { return std::optional<double>(t.ss2); });
  mean_of("SS4", [](const TrialMetrics& t) { return std::optional<double>(t.ss4); });
  mean_of("cIG", [](const TrialMetrics& t) { return t.cig; });
  mean_of("cNSS", [](const TrialMetrics& t) { return t.cnss; });

  std::map<TrialKey, LengthGroup> lengths;
  for (const auto& gt : ground_truth) {
    auto& g = lengths[{gt.image_id, gt.task}];
    g.predicted = static_cast<double>(match_prediction(preds, gt).scanpath.new_fixations());
    g.observed.push_back(static_cast<double>(gt.scanpath.new_fixations()));
  }
  std::vector<LengthGroup> groups;
  for (auto& [k, g] : lengths) groups.push_back(std::move(g));
  if (!ground_truth.empty()) rep.aggregate["MAE"] = scanpath_length_mae(groups);
  return rep;
}

inline nlohmann::ordered_json report_to_json(const MetricReport& rep) {
  nlohmann::ordered_json j;
  j["aggregate"] = nlohmann::ordered_json::object();
  for (const char* k : {"SemSS", "SS", "SS2", "SS4", "cIG", "cNSS", "MAE"}) {
    const auto it = rep.aggregate.find(k);
    j["aggregate"][k] = it != rep.aggregate.end() ? nlohmann::ordered_json(it->second) : nlohmann::ordered_json();
  }
  j["warnings"] = rep.warnings;
  auto& rows = j["trials"] = nlohmann::ordered_json::array();
  for (const auto& t : rep.trials) {
    nlohmann::ordered_json r{{"image", t.image_id}, {"task", t.task}, {"subject", t.subject}};
    r["SemSS"] = t.semss ? nlohmann::ordered_json(*t.semss) : nlohmann::ordered_json();
    r["SS"] = t.ss;
    r["SS2"] = t.ss2;
    r["SS4"] = t.ss4;
    r["cIG"] = t.cig ? nlohmann::ordered_json(*t.cig) : nlohmann::ordered_json();
    r["cNSS"] = t.cnss ? nlohmann::ordered_json(*t.cnss) : nlohmann::ordered_json();
    r["length_error"] = t.length_error;
    rows.push_back(std::move(r));
  }
  return j;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string report_to_csv(const MetricReport& rep) {
  std::ostringstream os;
  os << "image,task,subject,SemSS,SS,SS2,SS4,cIG,cNSS,length_error\n";
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  for (const auto& t : rep.trials) {
    os << csv_field(t.image_id) << ',' << csv_field(t.task) << ',' << t.subject << ',' << opt(t.semss) << ','
       << num(t.ss) << ',' << num(t.ss2) << ',' << num(t.ss4) << ',' << opt(t.cig) << ',' << opt(t.cnss) << ','
       << num(t.length_error) << '\n';
  }
  return os.str();
}

}  // namespace ffm::metrics
