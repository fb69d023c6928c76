#include "deixis/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_set>

namespace deixis {

namespace {

[[noreturn]] void fail_field(const std::string& field, const std::string& what) {
  throw std::invalid_argument(field + ": " + what);
}

Vec2 parse_point(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    fail_field(field, "expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

void Sample::validate() const {
  if (!dims.valid()) fail_field("dims", "width and height must be positive");
  for (const Vec2& lm : hand.landmarks()) {
    if (!dims.contains(lm))
      fail_field("hand", "landmark outside image bounds");
  }
  for (const Vec2& c : objects.centroids()) {
    if (!dims.contains(c)) fail_field("objects", "centroid outside image bounds");
  }
  if (targets.empty()) fail_field("targets", "must be nonempty");
  if (!std::is_sorted(targets.begin(), targets.end()) ||
      std::adjacent_find(targets.begin(), targets.end()) != targets.end())
    fail_field("targets", "must be sorted and unique");
  for (std::size_t t : targets) {
    if (t > objects.sentinel_index())
      fail_field("targets", "index out of range");
  }
  const bool has_sentinel_target =
      targets.back() == objects.sentinel_index();
  if (has_sentinel_target && targets.size() > 1)
    fail_field("targets", "sentinel target excludes object targets");
  if (relations.token_count() != objects.token_count())
    fail_field("relations", "length must equal object sequence length");
}

nlohmann::json sample_to_json(const Sample& sample) {
  nlohmann::json j;
  j["dims"] = {sample.dims.width, sample.dims.height};
  auto& hand = j["hand"] = nlohmann::json::array();
  for (const Vec2& lm : sample.hand.landmarks()) hand.push_back({lm.x, lm.y});
  auto& objects = j["objects"] = nlohmann::json::array();
  for (const Vec2& c : sample.objects.centroids()) objects.push_back({c.x, c.y});
  j["targets"] = sample.targets;
  j["resting"] = sample.resting();
  j["meta"] = {{"scene", sample.meta.scene},
               {"side", sample.meta.side},
               {"aug", sample.meta.augment}};
  return j;
}

Sample sample_from_json(const nlohmann::json& j) {
  Sample sample;
  if (!j.is_object()) fail_field("sample", "expected a JSON object");

  if (!j.contains("dims")) fail_field("dims", "missing");
  const Vec2 dims = parse_point(j["dims"], "dims");
  sample.dims = {dims.x, dims.y};

  if (!j.contains("hand") || !j["hand"].is_array())
    fail_field("hand", "missing or not an array");
  const auto& hand = j["hand"];
  if (hand.size() != HandPose::kLandmarkCount)
    fail_field("landmarks", "expected 21, got " + std::to_string(hand.size()));
  std::array<Vec2, HandPose::kLandmarkCount> landmarks;
  for (std::size_t i = 0; i < HandPose::kLandmarkCount; ++i)
    landmarks[i] = parse_point(hand[i], "hand[" + std::to_string(i) + "]");
  sample.hand = HandPose(landmarks);

  if (!j.contains("objects") || !j["objects"].is_array())
    fail_field("objects", "missing or not an array");
  std::vector<Vec2> centroids;
  centroids.reserve(j["objects"].size());
  for (std::size_t i = 0; i < j["objects"].size(); ++i)
    centroids.push_back(
        parse_point(j["objects"][i], "objects[" + std::to_string(i) + "]"));
  sample.objects = build_object_sequence(std::move(centroids));

  if (!j.contains("targets") || !j["targets"].is_array())
    fail_field("targets", "missing or not an array");
  for (const auto& t : j["targets"]) {
    if (!t.is_number_unsigned()) fail_field("targets", "expected indices");
    sample.targets.push_back(t.get<std::size_t>());
  }
  std::sort(sample.targets.begin(), sample.targets.end());
  sample.targets.erase(
      std::unique(sample.targets.begin(), sample.targets.end()),
      sample.targets.end());

  if (j.contains("resting")) {
    if (!j["resting"].is_boolean()) fail_field("resting", "expected a boolean");
    if (j["resting"].get<bool>() != (sample.targets ==
                                     std::vector<std::size_t>{
                                         sample.objects.sentinel_index()}))
      fail_field("resting", "inconsistent with targets");
  }

  if (j.contains("meta") && j["meta"].is_object()) {
    const auto& meta = j["meta"];
    if (meta.contains("scene")) sample.meta.scene = meta["scene"].get<std::int64_t>();
    if (meta.contains("side")) sample.meta.side = meta["side"].get<std::string>();
    if (meta.contains("aug")) sample.meta.augment = meta["aug"].get<std::string>();
  }

  sample.recompute_relations();
  sample.validate();
  return sample;
}

void save_jsonl(std::span<const Sample> samples, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_jsonl: cannot open '" + path + "'");
  for (const Sample& sample : samples) {
    out << sample_to_json(sample).dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_jsonl: write failed for '" + path + "'");
}

std::vector<Sample> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_jsonl: cannot open '" + path + "'");
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("load_jsonl: line " + std::to_string(line_no) +
                               ": malformed JSON (" + e.what() + ")");
    }
    try {
      samples.push_back(sample_from_json(j));
    } catch (const std::exception& e) {
      throw std::runtime_error("load_jsonl: line " + std::to_string(line_no) +
                               ": " + e.what());
    }
  }
  return samples;
}

std::vector<std::int64_t> scene_ids(std::span<const Sample> samples) {
  std::set<std::int64_t> ids;
  for (const Sample& s : samples) ids.insert(s.meta.scene);
  return {ids.begin(), ids.end()};
}

std::vector<Sample> samples_for_scenes(std::span<const Sample> samples,
                                       std::span<const std::int64_t> scenes) {
  std::unordered_set<std::int64_t> wanted(scenes.begin(), scenes.end());
  std::vector<Sample> out;
  for (const Sample& s : samples) {
    if (wanted.count(s.meta.scene)) out.push_back(s);
  }
  return out;
}

}  // namespace deixis
