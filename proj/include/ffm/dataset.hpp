#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ffm/error.hpp"
#include "ffm/types.hpp"

namespace ffm {

struct LoadOptions {
  /// Accepted task names; empty accepts any task.
  std::vector<std::string> tasks = default_tasks();
  int image_w = kImageWidth;
  int image_h = kImageHeight;
};

namespace detail {

[[noreturn]] inline void schema_error(std::size_t index, const std::string& field, const std::string& what) {
  throw DataError("record " + std::to_string(index) + ": field " + field + ": " + what);
}

inline const nlohmann::json& require(const nlohmann::json& rec, std::size_t index, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end()) schema_error(index, key, "missing");
  return *it;
}

inline std::vector<double> number_array(const nlohmann::json& j, std::size_t index, const char* key) {
  if (!j.is_array()) schema_error(index, key, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) schema_error(index, key, "expected an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace detail

/// Parses the canonical scanpath JSON array. Duration arrays ("T") and unknown keys are ignored.
inline std::vector<SearchTrial> parse_trials(const nlohmann::json& doc, const LoadOptions& opt = {}) {
  using detail::schema_error;
  if (!doc.is_array()) throw DataError("scanpath document must be a JSON array");
  std::vector<SearchTrial> trials;
  trials.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    if (!rec.is_object()) schema_error(i, "<record>", "expected an object");
    SearchTrial t;

    const char* image_key = rec.contains("image") ? "image" : "name";
    const auto& image = detail::require(rec, i, image_key);
    if (!image.is_string()) schema_error(i, image_key, "expected a string");
    t.image_id = image.get<std::string>();

    const auto& task = detail::require(rec, i, "task");
    if (!task.is_string()) schema_error(i, "task", "expected a string");
    t.task = task.get<std::string>();
    if (!opt.tasks.empty() && std::find(opt.tasks.begin(), opt.tasks.end(), t.task) == opt.tasks.end()) {
      schema_error(i, "task", "unknown task '" + t.task + "'");
    }

    if (auto it = rec.find("subject"); it != rec.end()) {
      if (!it->is_number_integer()) schema_error(i, "subject", "expected an integer");
      t.subject = it->get<int>();
    }
    if (auto it = rec.find("present"); it != rec.end()) {
      if (!it->is_boolean()) schema_error(i, "present", "expected a boolean");
      t.present = it->get<bool>();
    } else if (auto c = rec.find("condition"); c != rec.end() && c->is_string()) {
      t.present = c->get<std::string>() == "present";
    }
    if (auto it = rec.find("split"); it != rec.end()) {
      if (!it->is_string()) schema_error(i, "split", "expected a string");
      auto s = parse_split(it->get<std::string>());
      if (!s) schema_error(i, "split", "expected train|valid|test");
      t.split = *s;
    }
    if (auto it = rec.find("predicted"); it != rec.end() && it->is_boolean()) t.predicted = it->get<bool>();
    t.scanpath.terminated = true;
    if (auto it = rec.find("terminated"); it != rec.end()) {
      if (!it->is_boolean()) schema_error(i, "terminated", "expected a boolean");
      t.scanpath.terminated = it->get<bool>();
    }

    double sx = 1.0, sy = 1.0;
    if (auto it = rec.find("source_size"); it != rec.end() && !it->is_null()) {
      const auto wh = detail::number_array(*it, i, "source_size");
      if (wh.size() != 2 || wh[0] <= 0 || wh[1] <= 0) schema_error(i, "source_size", "expected [w, h] > 0");
      sx = opt.image_w / wh[0];
      sy = opt.image_h / wh[1];
    }

    const auto xs = detail::number_array(detail::require(rec, i, "X"), i, "X");
    const auto ys = detail::number_array(detail::require(rec, i, "Y"), i, "Y");
    if (xs.size() != ys.size()) {
      schema_error(i, "X/Y", "length mismatch (" + std::to_string(xs.size()) + " vs " +
                                 std::to_string(ys.size()) + ")");
    }
    if (xs.empty()) schema_error(i, "X/Y", "scanpath must contain at least one fixation");
    for (std::size_t k = 0; k < xs.size(); ++k) {
      Fixation f{xs[k] * sx, ys[k] * sy};
      if (!(f.x >= 0.0 && f.x < opt.image_w)) {
        schema_error(i, "X", "fixation " + std::to_string(k) + " x=" + std::to_string(f.x) + " out of bounds");
      }
      if (!(f.y >= 0.0 && f.y < opt.image_h)) {
        schema_error(i, "Y", "fixation " + std::to_string(k) + " y=" + std::to_string(f.y) + " out of bounds");
      }
      t.scanpath.fixations.push_back(f);
    }

    if (auto it = rec.find("bbox"); it != rec.end() && !it->is_null()) {
      const auto b = detail::number_array(*it, i, "bbox");
      if (b.size() != 4 || b[2] < 0 || b[3] < 0) schema_error(i, "bbox", "expected [x, y, w, h]");
      if (!t.present) schema_error(i, "bbox", "target-absent trials cannot carry a bbox");
      t.bbox = BBox{b[0] * sx, b[1] * sy, b[2] * sx, b[3] * sy};
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

inline std::vector<SearchTrial> load_trials(const std::filesystem::path& path, const LoadOptions& opt = {}) {
  return parse_trials(detail::parse_json_file(path), opt);
}

inline nlohmann::ordered_json trial_to_json(const SearchTrial& t) {
  nlohmann::ordered_json j;
  j["image"] = t.image_id;
  j["task"] = t.task;
  j["subject"] = t.subject;
  j["present"] = t.present;
  auto xs = nlohmann::ordered_json::array();
  auto ys = nlohmann::ordered_json::array();
  for (const auto& f : t.scanpath.fixations) {
    xs.push_back(f.x);
    ys.push_back(f.y);
  }
  j["X"] = std::move(xs);
  j["Y"] = std::move(ys);
  if (t.bbox) j["bbox"] = {t.bbox->x, t.bbox->y, t.bbox->w, t.bbox->h};
  j["split"] = to_string(t.split);
  j["terminated"] = t.scanpath.terminated;
  if (t.predicted) j["predicted"] = true;
  return j;
}

/// Canonical serialization: one compact record per line, stable key order.
inline std::string dump_trials(const std::vector<SearchTrial>& trials) {
  std::string out = "[";
  for (std::size_t i = 0; i < trials.size(); ++i) {
    out += i ? ",\n" : "\n";
    out += trial_to_json(trials[i]).dump();
  }
  out += trials.empty() ? "]\n" : "\n]\n";
  return out;
}

inline void write_trials(const std::filesystem::path& path, const std::vector<SearchTrial>& trials) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << dump_trials(trials);
}

/// One annotated object instance; `category` is the 0-based detection-map index.
struct ObjectBox {
  int category = 0;
  BBox bbox;
};

using ObjectTable = std::map<std::string, std::vector<ObjectBox>>;

/// Object annotations: array of {"image", "category" in [1, num_categories], "bbox", "source_size"?}.
inline ObjectTable parse_objects(const nlohmann::json& doc, int num_categories = 80, const LoadOptions& opt = {}) {
  using detail::schema_error;
  if (!doc.is_array()) throw DataError("object document must be a JSON array");
  ObjectTable table;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    const auto& image = detail::require(rec, i, "image");
    if (!image.is_string()) schema_error(i, "image", "expected a string");
    const auto& cat = detail::require(rec, i, "category");
    if (!cat.is_number_integer()) schema_error(i, "category", "expected an integer");
    const int k = cat.get<int>();
    if (k < 1 || k > num_categories) schema_error(i, "category", "outside [1, " + std::to_string(num_categories) + "]");
    double sx = 1.0, sy = 1.0;
    if (auto it = rec.find("source_size"); it != rec.end() && !it->is_null()) {
      const auto wh = detail::number_array(*it, i, "source_size");
      if (wh.size() != 2 || wh[0] <= 0 || wh[1] <= 0) schema_error(i, "source_size", "expected [w, h] > 0");
      sx = opt.image_w / wh[0];
      sy = opt.image_h / wh[1];
    }
    const auto b = detail::number_array(detail::require(rec, i, "bbox"), i, "bbox");
    if (b.size() != 4 || b[2] < 0 || b[3] < 0) schema_error(i, "bbox", "expected [x, y, w, h]");
    table[image.get<std::string>()].push_back({k - 1, BBox{b[0] * sx, b[1] * sy, b[2] * sx, b[3] * sy}});
  }
  return table;
}

inline ObjectTable load_objects(const std::filesystem::path& path, int num_categories = 80,
                                const LoadOptions& opt = {}) {
  return parse_objects(detail::parse_json_file(path), num_categories, opt);
}

/// COCO "thing" categories; label-map value k in [1, 80] names coco_categories()[k - 1].
struct Category {
  int index;    // contiguous label-map value
  int coco_id;  // original sparse COCO id
  const char* name;
};

inline const std::vector<Category>& coco_categories() {
  static const std::vector<Category> table = {
      {1, 1, "person"}, {2, 2, "bicycle"}, {3, 3, "car"}, {4, 4, "motorcycle"}, {5, 5, "airplane"},
      {6, 6, "bus"}, {7, 7, "train"}, {8, 8, "truck"}, {9, 9, "boat"}, {10, 10, "traffic light"},
      {11, 11, "fire hydrant"}, {12, 13, "stop sign"}, {13, 14, "parking meter"}, {14, 15, "bench"},
      {15, 16, "bird"}, {16, 17, "cat"}, {17, 18, "dog"}, {18, 19, "horse"}, {19, 20, "sheep"},
      {20, 21, "cow"}, {21, 22, "elephant"}, {22, 23, "bear"}, {23, 24, "zebra"}, {24, 25, "giraffe"},
      {25, 27, "backpack"}, {26, 28, "umbrella"}, {27, 31, "handbag"}, {28, 32, "tie"},
      {29, 33, "suitcase"}, {30, 34, "frisbee"}, {31, 35, "skis"}, {32, 36, "snowboard"},
      {33, 37, "sports ball"}, {34, 38, "kite"}, {35, 39, "baseball bat"}, {36, 40, "baseball glove"},
      {37, 41, "skateboard"}, {38, 42, "surfboard"}, {39, 43, "tennis racket"}, {40, 44, "bottle"},
      {41, 46, "wine glass"}, {42, 47, "cup"}, {43, 48, "fork"}, {44, 49, "knife"}, {45, 50, "spoon"},
      {46, 51, "bowl"}, {47, 52, "banana"}, {48, 53, "apple"}, {49, 54, "sandwich"}, {50, 55, "orange"},
      {51, 56, "broccoli"}, {52, 57, "carrot"}, {53, 58, "hot dog"}, {54, 59, "pizza"}, {55, 60, "donut"},
      {56, 61, "cake"}, {57, 62, "chair"}, {58, 63, "couch"}, {59, 64, "potted plant"}, {60, 65, "bed"},
      {61, 67, "dining table"}, {62, 70, "toilet"}, {63, 72, "tv"}, {64, 73, "laptop"}, {65, 74, "mouse"},
      {66, 75, "remote"}, {67, 76, "keyboard"}, {68, 77, "cell phone"}, {69, 78, "microwave"},
      {70, 79, "oven"}, {71, 80, "toaster"}, {72, 81, "sink"}, {73, 82, "refrigerator"}, {74, 84, "book"},
      {75, 85, "clock"}, {76, 86, "vase"}, {77, 87, "scissors"}, {78, 88, "teddy bear"},
      {79, 89, "hair drier"}, {80, 90, "toothbrush"}};
  return table;
}

inline nlohmann::ordered_json categories_to_json() {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : coco_categories()) {
    arr.push_back({{"index", c.index}, {"coco_id", c.coco_id}, {"name", c.name}});
  }
  return arr;
}

/// Strips the directory and extension of an image id ("a/b/0001.jpg" -> "0001").
inline std::string image_stem(const std::string& image_id) {
  return std::filesystem::path(image_id).stem().string();
}

}  // namespace ffm
