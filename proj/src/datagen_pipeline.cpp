#include <fstream>
#include <iomanip>
#include <sstream>

#include "sama/datagen.hpp"
#include "sama/errors.hpp"

namespace sama {

namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("missing prompt template " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string object_line(const SourceObject& o, const SomFrames& som) {
  std::string line = "- " + o.object_id + ": " + color_word(som.colors.at(o.object_id)) + " rectangle";
  if (o.category) line += " (" + *o.category + ")";
  return line;
}

}  // namespace

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  return {read_text(dir / "description.txt"), read_text(dir / "dialogue.txt"), read_text(dir / "reprompt.txt")};
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

DialogueResult synthesize_dialogue(const SourceAnnotation& source, const SomFrames& som,
                                   const std::vector<std::string>& image_refs, CompletionClient& client,
                                   const PromptTemplates& templates, int reprompts) {
  DialogueResult result;
  std::vector<std::string> ids;
  std::string object_list;
  for (const SourceObject& o : source.objects) {
    ids.push_back(o.object_id);
    object_list += object_line(o, som) + "\n";
    const std::map<std::string, std::string> values{{"video_id", source.video_id},
                                                    {"object_id", o.object_id},
                                                    {"color", color_word(som.colors.at(o.object_id))},
                                                    {"category", o.category.value_or("object")}};
    CompletionRequest req{source.video_id + "/description/" + o.object_id, fill_template(templates.description, values),
                          image_refs, 0};
    result.descriptions.push_back({o.object_id, trim(client.complete(req))});
  }

  const std::string base_prompt =
      fill_template(templates.dialogue, {{"video_id", source.video_id}, {"object_list", object_list}});
  std::string prompt = base_prompt;
  for (int attempt = 0; attempt <= reprompts; ++attempt) {
    result.attempts = attempt + 1;
    const std::string reply = client.complete({source.video_id + "/dialogue", prompt, image_refs, attempt});
    ValidationResult v = parse_and_validate(reply, ids);
    if (v.ok()) {
      result.conversation = std::move(v.turns);
      result.accepted = true;
      result.last_errors.clear();
      return result;
    }
    result.last_errors = v.errors;
    std::string listing;
    for (const MarkupError& e : v.errors) {
      listing += "- " + std::string(to_string(e.kind)) + " at byte " + std::to_string(e.offset) + ": " + e.message + "\n";
    }
    prompt = base_prompt + "\n\n" + fill_template(templates.reprompt, {{"errors", listing}});
  }
  return result;
}

LedgerRow CorpusLedger::total() const {
  LedgerRow t;
  for (const auto& [_, r] : per_source) {
    t.clips += r.clips;
    t.qa_pairs += r.qa_pairs;
    t.descriptions += r.descriptions;
    t.dropped += r.dropped;
  }
  return t;
}

std::string CorpusLedger::table() const {
  std::ostringstream os;
  auto row = [&](const std::string& name, const LedgerRow& r) {
    os << std::left << std::setw(16) << name << std::right << std::setw(8) << r.clips << std::setw(10) << r.qa_pairs
       << std::setw(14) << r.descriptions << std::setw(9) << r.dropped << "\n";
  };
  os << std::left << std::setw(16) << "source" << std::right << std::setw(8) << "clips" << std::setw(10) << "qa_pairs"
     << std::setw(14) << "descriptions" << std::setw(9) << "dropped" << "\n";
  for (const auto& [name, r] : per_source) row(name, r);
  row("total", total());
  return os.str();
}

OrderedJson CorpusLedger::to_json() const {
  auto row = [](const LedgerRow& r) {
    OrderedJson j;
    j["clips"] = r.clips;
    j["qa_pairs"] = r.qa_pairs;
    j["descriptions"] = r.descriptions;
    j["dropped"] = r.dropped;
    return j;
  };
  OrderedJson j;
  j["per_source"] = OrderedJson::object();
  for (const auto& [name, r] : per_source) j["per_source"][name] = row(r);
  j["total"] = row(total());
  return j;
}

void add_to_ledger(CorpusLedger& ledger, const GroundedDialogueRecord& record) {
  LedgerRow& r = ledger.per_source[record.source.value_or("unknown")];
  r.clips += 1;
  r.descriptions += static_cast<int>(record.descriptions.size());
  for (const Turn& t : record.conversation) r.qa_pairs += t.role == "assistant" ? 1 : 0;
}

PipelineResult run_annotation_pipeline(const std::vector<SourceAnnotation>& sources, CompletionClient& client,
                                       const PipelineOptions& options) {
  PipelineResult out;
  for (const SourceAnnotation& source : sources) {
    auto drop = [&](const std::string& why) {
      out.ledger.per_source[source.source].dropped += 1;
      out.log.push_back(source.video_id + ": dropped, " + why);
    };
    if (!source.has_masks()) {
      drop("no masks (run the pseudomask step first)");
      continue;
    }
    if (options.filter_single_object && source.objects.size() < 2) {
      drop("single object");
      continue;
    }
    try {
      std::vector<Image> images;
      for (const std::string& ref : source.frames) images.push_back(read_ppm(options.frame_dir / ref));
      const SomFrames som = render_som_frames(source, images, options.palette, options.sampled_frames);

      std::vector<std::string> image_refs;
      for (std::size_t i = 0; i < som.frames.size(); ++i) {
        std::ostringstream name;
        name << "som/" << source.video_id << "/" << std::setw(2) << std::setfill('0') << i << ".ppm";
        image_refs.push_back(name.str());
        if (!options.out_dir.empty()) {
          const auto path = options.out_dir / name.str();
          std::filesystem::create_directories(path.parent_path());
          write_ppm(path, som.frames[i]);
        }
      }

      DialogueResult dlg =
          synthesize_dialogue(source, som, image_refs, client, options.templates, options.reprompts);
      if (!dlg.accepted) {
        std::string kinds;
        for (const MarkupError& e : dlg.last_errors) kinds += (kinds.empty() ? "" : ",") + std::string(to_string(e.kind));
        drop("dialogue rejected after " + std::to_string(dlg.attempts) + " attempts (" + kinds + ")");
        continue;
      }

      GroundedDialogueRecord rec;
      rec.video_id = source.video_id;
      rec.source = source.source;
      for (int t : som.frame_indices) rec.sampled_frames.push_back(source.frames[static_cast<std::size_t>(t)]);
      for (const SourceObject& o : source.objects) {
        RecordObject ro;
        ro.object_id = o.object_id;
        ro.color_tag = to_hex(som.colors.at(o.object_id));
        ro.category = o.category;
        for (int t : som.frame_indices) ro.masks.push_back(rle_encode(o.masks[static_cast<std::size_t>(t)]));
        rec.objects.push_back(std::move(ro));
      }
      rec.descriptions = std::move(dlg.descriptions);
      rec.conversation = std::move(dlg.conversation);
      rec.validate();
      add_to_ledger(out.ledger, rec);
      out.records.push_back(std::move(rec));
    } catch (const ClientError& e) {
      drop(std::string("client failure: ") + e.what());
    } catch (const InputError& e) {
      drop(e.what());
    }
  }
  return out;
}

}  // namespace sama
