#include "sama/record.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "sama/errors.hpp"

namespace sama {

const RecordObject* GroundedDialogueRecord::find_object(std::string_view id) const {
  for (const RecordObject& o : objects) {
    if (o.object_id == id) return &o;
  }
  return nullptr;
}

MaskTrack GroundedDialogueRecord::track(std::string_view object_id) const {
  const RecordObject* o = find_object(object_id);
  if (o == nullptr) throw DataError("record " + video_id + " has no object '" + std::string(object_id) + "'");
  MaskTrack t;
  t.object_id = o->object_id;
  for (const RleMask& r : o->masks) t.masks.push_back(rle_decode(r));
  return t;
}

int GroundedDialogueRecord::frame_width() const {
  return objects.empty() || objects.front().masks.empty() ? 0 : objects.front().masks.front().width;
}

int GroundedDialogueRecord::frame_height() const {
  return objects.empty() || objects.front().masks.empty() ? 0 : objects.front().masks.front().height;
}

void GroundedDialogueRecord::validate() const {
  const std::string where = "record " + video_id + ": ";
  if (video_id.empty()) throw DataError("record without video_id");
  if (sampled_frames.empty()) throw DataError(where + "no sampled frames");
  if (objects.empty()) throw DataError(where + "no objects");
  std::set<std::string> ids, colors;
  for (const RecordObject& o : objects) {
    if (!ids.insert(o.object_id).second) throw DataError(where + "duplicate object id " + o.object_id);
    if (!colors.insert(o.color_tag).second) throw DataError(where + "color " + o.color_tag + " used by two objects");
    if (o.masks.size() != sampled_frames.size()) {
      throw DataError(where + "object " + o.object_id + " has " + std::to_string(o.masks.size()) + " masks for " +
                      std::to_string(sampled_frames.size()) + " frames");
    }
    for (const RleMask& m : o.masks) {
      if (m.width != frame_width() || m.height != frame_height()) throw DataError(where + "mask resolution differs");
      try {
        rle_decode(m);
      } catch (const InputError& e) {
        throw DataError(where + e.what());
      }
    }
  }
  for (const DescriptionEntry& d : descriptions) {
    if (!ids.count(d.object_id)) throw DataError(where + "description for unknown object " + d.object_id);
  }
  for (const Turn& t : conversation) {
    if (t.role != "user" && t.role != "assistant") throw DataError(where + "unknown role '" + t.role + "'");
  }
}

OrderedJson rle_to_json(const RleMask& rle) {
  OrderedJson j;
  j["height"] = rle.height;
  j["width"] = rle.width;
  j["counts"] = rle.counts;
  return j;
}

RleMask rle_from_json(const OrderedJson& j) {
  RleMask r;
  r.height = j.at("height").get<int>();
  r.width = j.at("width").get<int>();
  r.counts = j.at("counts").get<std::vector<std::int64_t>>();
  return r;
}

namespace {

OrderedJson masks_to_json(const std::vector<RleMask>& masks) {
  OrderedJson arr = OrderedJson::array();
  for (const RleMask& m : masks) arr.push_back(rle_to_json(m));
  return arr;
}

std::vector<RleMask> masks_from_json(const OrderedJson& j) {
  std::vector<RleMask> out;
  for (const auto& m : j) out.push_back(rle_from_json(m));
  return out;
}

}  // namespace

OrderedJson record_to_json(const GroundedDialogueRecord& r) {
  OrderedJson j;
  j["video_id"] = r.video_id;
  if (r.source) j["source"] = *r.source;
  j["sampled_frames"] = r.sampled_frames;
  j["objects"] = OrderedJson::array();
  for (const RecordObject& o : r.objects) {
    OrderedJson oj;
    oj["object_id"] = o.object_id;
    oj["color_tag"] = o.color_tag;
    if (o.category) oj["category"] = *o.category;
    oj["rle_masks"] = masks_to_json(o.masks);
    j["objects"].push_back(std::move(oj));
  }
  j["descriptions"] = OrderedJson::array();
  for (const DescriptionEntry& d : r.descriptions) j["descriptions"].push_back({{"object_id", d.object_id}, {"text", d.text}});
  j["conversation"] = OrderedJson::array();
  for (const Turn& t : r.conversation) j["conversation"].push_back({{"role", t.role}, {"text", t.text}});
  if (r.prediction) {
    OrderedJson p;
    p["text"] = r.prediction->text;
    p["tracks"] = OrderedJson::array();
    for (const PredictedTrack& t : r.prediction->tracks) {
      OrderedJson tj;
      tj["phrase"] = t.phrase;
      tj["rle_masks"] = masks_to_json(t.masks);
      p["tracks"].push_back(std::move(tj));
    }
    j["prediction"] = std::move(p);
  }
  return j;
}

GroundedDialogueRecord record_from_json(const OrderedJson& j) {
  try {
    GroundedDialogueRecord r;
    r.video_id = j.at("video_id").get<std::string>();
    if (j.contains("source")) r.source = j.at("source").get<std::string>();
    r.sampled_frames = j.at("sampled_frames").get<std::vector<std::string>>();
    for (const auto& oj : j.at("objects")) {
      RecordObject o;
      o.object_id = oj.at("object_id").get<std::string>();
      o.color_tag = oj.at("color_tag").get<std::string>();
      if (oj.contains("category")) o.category = oj.at("category").get<std::string>();
      o.masks = masks_from_json(oj.at("rle_masks"));
      r.objects.push_back(std::move(o));
    }
    for (const auto& d : j.at("descriptions")) {
      r.descriptions.push_back({d.at("object_id").get<std::string>(), d.at("text").get<std::string>()});
    }
    for (const auto& t : j.at("conversation")) {
      r.conversation.push_back({t.at("role").get<std::string>(), t.at("text").get<std::string>()});
    }
    if (j.contains("prediction")) {
      Prediction p;
      const auto& pj = j.at("prediction");
      p.text = pj.at("text").get<std::string>();
      for (const auto& tj : pj.at("tracks")) p.tracks.push_back({tj.at("phrase").get<std::string>(), masks_from_json(tj.at("rle_masks"))});
      r.prediction = std::move(p);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("record schema: ") + e.what());
  }
}

std::string record_to_line(const GroundedDialogueRecord& record) { return record_to_json(record).dump(); }

void emit_jsonl(const std::vector<GroundedDialogueRecord>& records, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const GroundedDialogueRecord& r : records) out << record_to_line(r) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<GroundedDialogueRecord> parse_jsonl(std::string_view text) {
  std::vector<GroundedDialogueRecord> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      out.push_back(record_from_json(OrderedJson::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<GroundedDialogueRecord> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str());
}

}  // namespace sama
