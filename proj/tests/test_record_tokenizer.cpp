#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "sama/datagen.hpp"
#include "sama/errors.hpp"
#include "sama/frames.hpp"
#include "sama/record.hpp"
#include "sama/tokenizer.hpp"

using namespace sama;

namespace {

GroundedDialogueRecord tiny_record() {
  GroundedDialogueRecord r;
  r.video_id = "v1";
  r.source = "test";
  r.sampled_frames = {"a.ppm", "b.ppm"};
  BinaryMask m(4, 3);
  m.fill_box({1, 0, 3, 2});
  r.objects.push_back({"o1", "#ff0000", {rle_encode(m), rle_encode(BinaryMask(4, 3))}, std::string("car")});
  r.objects.push_back({"o2", "#00ff00", {rle_encode(BinaryMask(4, 3)), rle_encode(m)}, std::nullopt});
  r.descriptions.push_back({"o1", "A red car."});
  r.conversation = {{"user", "What is <region:o1> doing?"}, {"assistant", "<p>the car</p>[SEG:o1] drives."}};
  return r;
}

}  // namespace

TEST_CASE("record JSON keeps schema key order and round-trips") {
  const GroundedDialogueRecord r = tiny_record();
  const std::string line = record_to_line(r);
  CHECK(line.find("\"video_id\"") < line.find("\"sampled_frames\""));
  CHECK(line.find("\"objects\"") < line.find("\"conversation\""));
  CHECK(line.find('\n') == std::string::npos);
  const auto back = parse_jsonl(line + "\n");
  REQUIRE(back.size() == 1);
  CHECK(back[0] == r);
  CHECK(record_to_line(back[0]) == line);
}

TEST_CASE("predictions survive the round trip") {
  GroundedDialogueRecord r = tiny_record();
  r.prediction = Prediction{"<p>the car</p>[SEG] drives.", {{"the car", r.objects[0].masks}}};
  CHECK(parse_jsonl(record_to_line(r))[0] == r);
}

TEST_CASE("JSONL round trip is the identity on 1000 synthetic records") {
  const auto records = generate_synthetic_corpus(1000, 5);
  const auto path = std::filesystem::temp_directory_path() / "sama_roundtrip_test.jsonl";
  emit_jsonl(records, path);
  const auto back = load_jsonl(path);
  std::filesystem::remove(path);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) REQUIRE(back[i] == records[i]);
}

TEST_CASE("malformed JSONL lines are reported by line number") {
  const std::string good = record_to_line(tiny_record());
  try {
    parse_jsonl(good + "\n{not json\n");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_jsonl(R"({"video_id": "x"})"), DataError);
  CHECK(parse_jsonl("\n\n").empty());
}

TEST_CASE("record validation catches structural problems") {
  CHECK_NOTHROW(tiny_record().validate());
  auto r = tiny_record();
  r.objects[1].object_id = "o1";
  CHECK_THROWS_AS(r.validate(), DataError);
  r = tiny_record();
  r.objects[1].color_tag = "#ff0000";
  CHECK_THROWS_AS(r.validate(), DataError);
  r = tiny_record();
  r.objects[0].masks.pop_back();
  CHECK_THROWS_AS(r.validate(), DataError);
  r = tiny_record();
  r.conversation[0].role = "system";
  CHECK_THROWS_AS(r.validate(), DataError);
  r = tiny_record();
  CHECK_THROWS_AS(r.track("nope"), DataError);
  CHECK(r.track("o1").masks[0].count() == 4);
}

TEST_CASE("tokenizer reserves the markup tokens") {
  const Tokenizer tok = Tokenizer::build({"The car drives."});
  CHECK(tok.id("<pad>") == SpecialTokens::pad);
  CHECK(tok.id("[SEG]") == SpecialTokens::seg);
  CHECK(tok.id("<p>") == SpecialTokens::phrase_open);
  CHECK(tok.id("</p>") == SpecialTokens::phrase_close);
  CHECK(tok.id("zebra") == SpecialTokens::unk);
  CHECK(tok.size() == SpecialTokens::count + 4);  // car, drives, the, "."
  CHECK(tok.token(SpecialTokens::count) == ".");
}

TEST_CASE("tokenizer records seg objects and region insertion points") {
  const Tokenizer tok = Tokenizer::build({"what is doing the car drives."});
  const TokenizedText q = tok.encode("What is <region:o3> doing?");
  REQUIRE(q.regions.size() == 1);
  CHECK(q.regions[0].position == 2);
  CHECK(q.regions[0].object_id == "o3");
  CHECK(q.ids.size() == 4);  // what is doing <unk>

  const TokenizedText a = tok.encode("<p>the car</p>[SEG:o3] drives [SEG].");
  REQUIRE(a.seg_objects.size() == 2);
  CHECK(a.seg_objects[0] == "o3");
  CHECK_FALSE(a.seg_objects[1].has_value());
  CHECK(a.ids.front() == SpecialTokens::phrase_open);
  CHECK(tok.decode(a.ids) == "<p>the car</p>[SEG] drives [SEG].");
}

TEST_CASE("decode drops control tokens") {
  const Tokenizer tok = Tokenizer::build({"hello"});
  CHECK(tok.decode({SpecialTokens::bos, tok.id("hello"), SpecialTokens::eos}) == "hello");
}

TEST_CASE("synthetic frames paint masks in the category color") {
  const auto rec = generate_synthetic_corpus(1, 3)[0];
  const Image img = render_synthetic_frame(rec, 0);
  const auto mask = rec.track(rec.objects[0].object_id).masks[0];
  const Rgb want = *category_color(*rec.objects[0].category);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.at(x, y)) CHECK(img.at(x, y) == want);
    }
  }
  BinaryMask any(mask.width(), mask.height());
  for (const auto& o : rec.objects) {
    const auto m = rec.track(o.object_id).masks[0];
    for (std::size_t i = 0; i < m.bits().size(); ++i) any.bits()[i] |= m.bits()[i];
  }
  for (int y = 0; y < any.height(); ++y) {
    for (int x = 0; x < any.width(); ++x) {
      if (!any.at(x, y)) CHECK(img.at(x, y) == kSyntheticBackground);
    }
  }
  CHECK_THROWS_AS(load_record_frames(tiny_record(), "/nonexistent"), DataError);
}
