#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>

#include "aba/data.hpp"
#include "aba/error.hpp"
#include "aba/metrics.hpp"
#include "doctest.h"

using namespace aba;

namespace {

const std::string kFixture = std::string(ABA_FIXTURE_DIR) + "/squad_mini.json";

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

const MrcExample& by_id(const std::vector<MrcExample>& examples, const std::string& id) {
    for (const auto& ex : examples)
        if (ex.id == id) return ex;
    throw std::runtime_error("missing example " + id);
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("aba_data_test_" + name);
}

}  // namespace

TEST_CASE("tokenize splits words and punctuation with exact offsets") {
    auto [tokens, offsets] = tokenize("Who?");
    CHECK(tokens == std::vector<std::string>{"who", "?"});
    CHECK(offsets == std::vector<TokenSpan>{{0, 3}, {3, 4}});

    auto [empty_tokens, empty_offsets] = tokenize("");
    CHECK(empty_tokens.empty());
    CHECK(empty_offsets.empty());

    auto [t2, o2] = tokenize("  spaced\tout ");
    CHECK(t2 == std::vector<std::string>{"spaced", "out"});
    CHECK(o2 == std::vector<TokenSpan>{{2, 8}, {9, 12}});
}

TEST_CASE("tokenize offsets reproduce the original substrings") {
    const std::vector<std::string> texts{
        "Michael Jordan played basketball for the Chicago Bulls.",
        "A-B (c) 42%, d.e.f!",
        "number   23  ,ok",
    };
    for (const auto& text : texts) {
        auto [tokens, offsets] = tokenize(text);
        REQUIRE(tokens.size() == offsets.size());
        std::size_t prev_end = 0;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            CHECK(offsets[i].start >= prev_end);  // ascending, non-overlapping
            CHECK(offsets[i].start < offsets[i].end);
            prev_end = offsets[i].end;
            CHECK(lower(text.substr(offsets[i].start, offsets[i].end - offsets[i].start)) ==
                  tokens[i]);
        }
    }
}

TEST_CASE("load_squad aligns answers to hand-checked token spans") {
    std::vector<std::string> warnings;
    auto examples = load_squad(kFixture, {}, &warnings);
    REQUIRE(examples.size() == 4);  // q-fox-2 is dropped

    const auto& jordan = by_id(examples, "q-jordan-1");
    CHECK(jordan.passage_tokens.size() == 17);
    CHECK(jordan.gold_spans == std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}});
    CHECK(jordan.span_text(0, 1) == "Michael Jordan");
    CHECK(jordan.question_tokens.front() == "who");

    const auto& number = by_id(examples, "q-jordan-2");
    CHECK(number.gold_spans == std::vector<std::pair<std::size_t, std::size_t>>{{12, 12}});
    CHECK(number.span_text(12, 12) == "23");

    const auto& fox = by_id(examples, "q-fox-1");
    REQUIRE(fox.gold_spans.size() == 2);
    CHECK(fox.gold_spans[0] == std::pair<std::size_t, std::size_t>{1, 3});
    CHECK(fox.gold_spans[1] == std::pair<std::size_t, std::size_t>{3, 3});

    // the unalignable answer produced warnings, not a crash
    CHECK(warnings.size() >= 2);
}

TEST_CASE("load_squad encodes impossible questions at the last token") {
    auto examples = load_squad(kFixture);
    const auto& impossible = by_id(examples, "q-jordan-3");
    CHECK(impossible.is_impossible);
    const std::size_t l = impossible.passage_tokens.size();
    CHECK(impossible.gold_spans ==
          std::vector<std::pair<std::size_t, std::size_t>>{{l - 1, l - 1}});
    CHECK(impossible.gold_texts() == std::vector<std::string>{""});
}

TEST_CASE("load_squad alignment soundness against the original answers") {
    auto examples = load_squad(kFixture);
    auto refs = load_references(kFixture);
    for (const auto& ex : examples) {
        if (ex.is_impossible) continue;
        const auto it = std::find_if(refs.begin(), refs.end(),
                                     [&](const auto& r) { return r.first == ex.id; });
        REQUIRE(it != refs.end());
        for (const auto& [b, e] : ex.gold_spans) {
            const std::string rebuilt = normalize_text(ex.span_text(b, e));
            const bool matches_any =
                std::any_of(it->second.begin(), it->second.end(),
                            [&](const std::string& g) { return normalize_text(g) == rebuilt; });
            CHECK(matches_any);
        }
    }
}

TEST_CASE("load_squad truncation keeps the reserved final position") {
    std::vector<std::string> warnings;
    auto examples = load_squad(kFixture, {5, 64}, &warnings);
    // q-jordan-2's span (12,12) no longer fits and the example drops
    for (const auto& ex : examples) CHECK(ex.id != "q-jordan-2");
    const auto& impossible = by_id(examples, "q-jordan-3");
    CHECK(impossible.passage_tokens.size() == 5);
    CHECK(impossible.gold_spans ==
          std::vector<std::pair<std::size_t, std::size_t>>{{4, 4}});
}

TEST_CASE("load_squad error paths: missing file, bad json, bad schema") {
    CHECK_THROWS_AS(load_squad("/nonexistent/p.json"), IoError);

    const auto bad_json = temp_file("bad.json");
    std::ofstream(bad_json) << "{not json";
    CHECK_THROWS_AS(load_squad(bad_json.string()), ParseError);

    const auto bad_schema = temp_file("schema.json");
    std::ofstream(bad_schema) << R"({"data": [{"paragraphs": [{"qas": []}]}]})";
    CHECK_THROWS_WITH_AS(load_squad(bad_schema.string()), doctest::Contains("context"),
                         SchemaError);

    const auto empty_data = temp_file("empty.json");
    std::ofstream(empty_data) << R"({"version": "v2.0", "data": []})";
    CHECK(load_squad(empty_data.string()).empty());
}

TEST_CASE("generate_synthetic: answerable structure and determinism") {
    SynthTaskSpec spec;
    spec.vocab_size = 30;
    spec.min_passage_len = 8;
    spec.max_passage_len = 20;
    spec.min_answer_len = 2;
    spec.max_answer_len = 2;
    spec.unanswerable_fraction = 0.0;
    spec.seed = 7;

    auto corpus = generate_synthetic(spec, 200);
    REQUIRE(corpus.size() == 200);
    for (const auto& ex : corpus) {
        CHECK_FALSE(ex.is_impossible);
        REQUIRE(ex.gold_spans.size() == 1);
        const auto [b, e] = ex.gold_spans.front();
        CHECK(e - b + 1 == 2);
        CHECK(b >= 1);
        CHECK(e < ex.passage_tokens.size() - 1);  // reserved final token
        // the gold span sits right behind the cue the question names
        CHECK(ex.passage_tokens[b - 1] == ex.question_tokens.back());
        CHECK(ex.passage_tokens[b - 1] == "cue");
    }

    auto again = generate_synthetic(spec, 200);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(corpus[i].passage_tokens == again[i].passage_tokens);
        CHECK(corpus[i].gold_spans == again[i].gold_spans);
    }
}

TEST_CASE("generate_synthetic corpora are solvable by cue search") {
    SynthTaskSpec spec;
    spec.vocab_size = 40;
    spec.min_passage_len = 10;
    spec.max_passage_len = 30;
    spec.min_answer_len = 2;
    spec.max_answer_len = 2;
    spec.unanswerable_fraction = 0.25;
    spec.cue_count = 4;
    spec.distractor_cues = 2;
    spec.seed = 13;

    auto corpus = generate_synthetic(spec, 300);
    std::size_t impossible = 0;
    std::vector<std::pair<std::string, std::string>> oracle_preds;
    std::vector<std::pair<std::string, std::vector<std::string>>> refs;
    for (const auto& ex : corpus) {
        const std::string cue = ex.question_tokens.back();
        const auto hit =
            std::find(ex.passage_tokens.begin(), ex.passage_tokens.end(), cue);
        if (ex.is_impossible) {
            ++impossible;
            CHECK(hit == ex.passage_tokens.end());  // named cue truly absent
            oracle_preds.emplace_back(ex.id, "");
        } else {
            REQUIRE(hit != ex.passage_tokens.end());
            const std::size_t pos =
                static_cast<std::size_t>(hit - ex.passage_tokens.begin());
            oracle_preds.emplace_back(ex.id,
                                      ex.span_text(pos + 1, pos + spec.min_answer_len));
        }
        refs.emplace_back(ex.id, ex.gold_texts());
    }
    CHECK(impossible > 30);
    CHECK(impossible < 150);

    const auto scored = evaluate(oracle_preds, refs);
    CHECK(scored.em == 1.0);
}

TEST_CASE("generate_synthetic validates its parameters") {
    SynthTaskSpec spec;
    spec.min_passage_len = 3;  // cannot hold cue + answer + final token
    CHECK_THROWS_AS(generate_synthetic(spec, 1), ParameterError);

    SynthTaskSpec bad_fraction;
    bad_fraction.unanswerable_fraction = 1.5;
    CHECK_THROWS_AS(generate_synthetic(bad_fraction, 1), ParameterError);

    SynthTaskSpec distractors_without_cues;
    distractors_without_cues.distractor_cues = 1;
    CHECK_THROWS_AS(generate_synthetic(distractors_without_cues, 1), ParameterError);
}

TEST_CASE("jsonl round trip preserves every field") {
    SynthTaskSpec spec;
    spec.unanswerable_fraction = 0.3;
    spec.seed = 3;
    auto corpus = generate_synthetic(spec, 50);

    const auto path = temp_file("roundtrip.jsonl");
    save_jsonl(corpus, path.string());
    auto loaded = load_jsonl(path.string());
    REQUIRE(loaded.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(loaded[i].id == corpus[i].id);
        CHECK(loaded[i].passage_tokens == corpus[i].passage_tokens);
        CHECK(loaded[i].question_tokens == corpus[i].question_tokens);
        CHECK(loaded[i].gold_spans == corpus[i].gold_spans);
        CHECK(loaded[i].is_impossible == corpus[i].is_impossible);
        CHECK(loaded[i].raw_context == corpus[i].raw_context);
        CHECK(loaded[i].token_char_offsets == corpus[i].token_char_offsets);
    }

    // content sniffing picks the right loader for both formats
    CHECK(load_corpus(path.string()).size() == corpus.size());
    CHECK(load_corpus(kFixture).size() == 4);
}
