#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "deixis/geometry.hpp"

namespace deixis {

struct SampleMeta {
  std::int64_t scene = 0;
  std::string side = "right";
  std::string augment = "base";
};

// One hand in one scene: the unit of training and evaluation. Targets index
// into the object sequence; a resting hand targets exactly the sentinel.
struct Sample {
  ImageDims dims;
  HandPose hand;
  ObjectSequence objects;
  RelationSequence relations;  // cached; recompute after editing geometry
  std::vector<std::size_t> targets;  // sorted, unique, nonempty
  SampleMeta meta;

  bool resting() const {
    return targets.size() == 1 && targets[0] == objects.sentinel_index();
  }

  void recompute_relations() {
    relations = build_relation_sequence(hand, objects);
  }

  // Enforces the structural invariants; throws with a field-level message.
  void validate() const;
};

nlohmann::json sample_to_json(const Sample& sample);
Sample sample_from_json(const nlohmann::json& j);

// One JSON object per line; relations are never serialized (recomputed on
// load). Errors carry the 1-based line number.
void save_jsonl(std::span<const Sample> samples, const std::string& path);
std::vector<Sample> load_jsonl(const std::string& path);

std::vector<std::int64_t> scene_ids(std::span<const Sample> samples);
std::vector<Sample> samples_for_scenes(std::span<const Sample> samples,
                                       std::span<const std::int64_t> scenes);

}  // namespace deixis
