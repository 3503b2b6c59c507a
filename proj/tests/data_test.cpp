#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scnet/dataset.hpp"
#include "scnet/errors.hpp"
#include "scnet/model.hpp"
#include "scnet/synth.hpp"
#include "scnet/text_norm.hpp"
#include "scnet/word_vectors.hpp"

namespace {

using namespace scnet;

std::filesystem::path test_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "scnet_data_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

WordVectorTable tiny_table() {
  WordVectorTable table;
  table.dim = 4;
  table.vectors["a"] = {1, 0, 0, 0};
  table.vectors["b"] = {0, 1, 0, 0};
  table.vectors["x"] = {0, 0, 1, 0};
  table.vectors["y"] = {0, 0, 0, 1};
  return table;
}

SynthConfig small_synth() {
  SynthConfig sc;
  sc.seed = 21;
  sc.n_instances = 12;
  sc.n_vocab = 16;
  sc.ocr_error_rate = 0.0;
  sc.bias_strength = 0.5;
  return sc;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("dataset jsonl round trips byte-identically") {
  const SynthConfig sc = small_synth();
  const ModelConfig mc = toy_model_preset();
  const WordVectorTable table = build_synth_word_table(sc, mc.d_ft);
  const auto insts = generate_dataset(sc, mc, table, 0, 4);

  const auto p1 = (test_dir() / "round1.jsonl").string();
  const auto p2 = (test_dir() / "round2.jsonl").string();
  save_dataset(p1, insts);
  const auto loaded = load_dataset(p1);
  REQUIRE(loaded.size() == insts.size());
  save_dataset(p2, loaded);
  CHECK(slurp(p1) == slurp(p2));
  CHECK(loaded[2].instance_id == insts[2].instance_id);
  CHECK(loaded[2].ocr.size() == insts[2].ocr.size());
  CHECK(loaded[2].ocr[0].appearance == insts[2].ocr[0].appearance);
  CHECK(loaded[2].ocr[0].box.xmin == insts[2].ocr[0].box.xmin);
}

TEST_CASE("schema errors name the line and field") {
  const auto path = (test_dir() / "bad.jsonl").string();
  {
    std::ofstream out(path);
    out << R"({"instance_id":"x","image_w":10,"image_h":10,)"
        << R"("question_tokens":["q"],"ocr":[],"objects":[],)"
        << R"("answers":"not-a-list"})" << "\n";
  }
  CHECK_THROWS_WITH_AS(load_dataset(path),
                       doctest::Contains("line 1"), IoError);
  CHECK_THROWS_WITH_AS(load_dataset(path),
                       doctest::Contains("answers"), IoError);

  {
    std::ofstream out(path);
    out << "{not json\n";
  }
  CHECK_THROWS_AS(load_dataset(path), IoError);
  CHECK_THROWS_AS(load_dataset((test_dir() / "missing.jsonl").string()),
                  IoError);
}

TEST_CASE("vocabulary takes top words by count then lexicographic") {
  const WordVectorTable table = tiny_table();
  const Vocabulary v = build_vocabulary({"a b", "a"}, 5, table);
  REQUIRE(v.size() == 5);
  CHECK(v.words[0] == "<pad>");
  CHECK(v.words[1] == "<begin>");
  CHECK(v.words[2] == "<end>");
  CHECK(v.words[3] == "a");
  CHECK(v.words[4] == "b");
  CHECK(v.index_of("a") == 3);
  CHECK(v.index_of("missing") == -1);

  // Frequency tie between "x" and "y": lexicographic order.
  const Vocabulary tied = build_vocabulary({"x y"}, 4, table);
  REQUIRE(tied.size() == 4);
  CHECK(tied.words[3] == "x");

  // Fewer unique words than requested shrinks the table with a warning flag.
  const Vocabulary small = build_vocabulary({"a"}, 50, table);
  CHECK(small.size() == 4);
  CHECK(small.truncated_warning);
}

TEST_CASE("vocabulary files round trip and validate specials") {
  const WordVectorTable table = tiny_table();
  const Vocabulary v = build_vocabulary({"a b", "a"}, 5, table);
  const auto path = (test_dir() / "vocab.txt").string();
  save_vocabulary(path, v);
  const Vocabulary loaded = load_vocabulary(path, table);
  CHECK(loaded.words == v.words);
  CHECK(loaded.embeddings == v.embeddings);

  {
    std::ofstream out(path);
    out << "<pad>\n<end>\n<begin>\na\n";
  }
  CHECK_THROWS_AS(load_vocabulary(path, table), IoError);
}

TEST_CASE("question vocab lowercases and falls back to unk") {
  VqaInstance inst;
  inst.instance_id = "q";
  inst.image_w = inst.image_h = 1;
  inst.question_tokens = {"What", "word"};
  inst.answers.assign(10, "a");
  const QuestionVocab qv = build_question_vocab({inst});
  CHECK(qv.id("what") == qv.id("WHAT"));
  CHECK(qv.id("never-seen") == kQUnkId);
  CHECK(qv.words[kQPadId] == "<pad>");
  CHECK(qv.words[kQClsId] == "<cls>");

  const auto path = (test_dir() / "qvocab.txt").string();
  save_question_vocab(path, qv);
  const QuestionVocab loaded = load_question_vocab(path);
  CHECK(loaded.words == qv.words);
}

TEST_CASE("generator is a pure function of seed and index") {
  const SynthConfig sc = small_synth();
  const ModelConfig mc = toy_model_preset();
  const WordVectorTable table = build_synth_word_table(sc, mc.d_ft);

  const auto [a1, n1] = generate_instance(sc, mc, table, 3);
  const auto [a2, n2] = generate_instance(sc, mc, table, 3);
  CHECK(a1.instance_id == a2.instance_id);
  CHECK(a1.question_tokens == a2.question_tokens);
  CHECK(a1.answers == a2.answers);
  REQUIRE(a1.ocr.size() == a2.ocr.size());
  for (size_t i = 0; i < a1.ocr.size(); ++i) {
    CHECK(a1.ocr[i].text == a2.ocr[i].text);
    CHECK(a1.ocr[i].appearance == a2.ocr[i].appearance);
  }
  CHECK(n1.true_answer == n2.true_answer);

  const auto [b1, bn1] = generate_instance(sc, mc, table, 4);
  CHECK((a1.instance_id != b1.instance_id));
}

TEST_CASE("generated instances are well-formed") {
  const SynthConfig sc = small_synth();
  const ModelConfig mc = toy_model_preset();
  const WordVectorTable table = build_synth_word_table(sc, mc.d_ft);
  std::vector<SynthAnnotations> notes;
  const auto insts = generate_dataset(sc, mc, table, 0, sc.n_instances, &notes);
  REQUIRE(insts.size() == static_cast<size_t>(sc.n_instances));
  REQUIRE(notes.size() == insts.size());
  for (size_t i = 0; i < insts.size(); ++i) {
    const auto& inst = insts[i];
    CHECK(inst.answers.size() == 10);
    for (const auto& a : inst.answers) CHECK(a == inst.answers[0]);
    CHECK(inst.ocr.size() <= static_cast<size_t>(mc.max_ocr));
    CHECK(inst.objects.size() <= static_cast<size_t>(mc.max_obj));
    CHECK(!inst.ocr.empty());
    REQUIRE(notes[i].answer_ocr_slot >= 0);
    REQUIRE(notes[i].answer_ocr_slot < static_cast<int>(inst.ocr.size()));
    CHECK(normalize_answer(inst.answers[0]) == notes[i].true_answer);
    for (const auto& tok : inst.ocr) {
      CHECK(tok.appearance.size() == static_cast<size_t>(mc.d_fr));
      CHECK(tok.fasttext.size() == static_cast<size_t>(mc.d_ft));
      CHECK(tok.phoc.size() == static_cast<size_t>(mc.phoc_dim));
      CHECK(tok.box.xmax > tok.box.xmin);
    }
  }
}

TEST_CASE("full corruption always alters the answer token text") {
  SynthConfig sc = small_synth();
  sc.ocr_error_rate = 1.0;
  const ModelConfig mc = toy_model_preset();
  const WordVectorTable table = build_synth_word_table(sc, mc.d_ft);
  std::vector<SynthAnnotations> notes;
  const auto insts = generate_dataset(sc, mc, table, 0, 8, &notes);
  for (size_t i = 0; i < insts.size(); ++i) {
    CHECK(notes[i].ocr_corrupted);
    const auto& recognized = insts[i].ocr[notes[i].answer_ocr_slot].text;
    CHECK(normalize_answer(recognized) != notes[i].true_answer);
    // The true word stays in the generator's word list even when every
    // recognized copy is corrupted.
    bool in_pool = false;
    for (const auto& w : synth_word_pool(sc)) {
      if (w == notes[i].true_answer) in_pool = true;
    }
    CHECK(in_pool);
  }
}

TEST_CASE("word table covers the pool and stays deterministic") {
  const SynthConfig sc = small_synth();
  const WordVectorTable t1 = build_synth_word_table(sc, 16);
  const WordVectorTable t2 = build_synth_word_table(sc, 16);
  CHECK(t1.vectors == t2.vectors);
  for (const auto& w : synth_word_pool(sc)) {
    REQUIRE(t1.vectors.count(w) == 1);
    // Stored vectors equal the subword-hash embedding, so corrupted
    // out-of-table words live in the same space.
    CHECK(t1.vectors.at(w) == hash_embed_word(w, 16));
  }
}

}  // TEST_SUITE
