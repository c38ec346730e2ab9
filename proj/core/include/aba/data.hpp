#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace aba {

// Character range [start, end) of one token in the original text.
struct TokenSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const TokenSpan&) const = default;
};

// Lowercased tokens split on whitespace and punctuation boundaries;
// punctuation characters become single-character tokens. Offsets index into
// the original string.
std::pair<std::vector<std::string>, std::vector<TokenSpan>> tokenize(const std::string& text);

// One passage/question pair with token-aligned gold spans. An impossible
// question carries the single span (l-1, l-1), the no-answer convention.
struct MrcExample {
    std::string id;
    std::vector<std::string> passage_tokens;
    std::vector<std::string> question_tokens;
    std::vector<std::pair<std::size_t, std::size_t>> gold_spans;
    bool is_impossible = false;
    std::string raw_context;
    std::vector<TokenSpan> token_char_offsets;

    std::size_t passage_len() const { return passage_tokens.size(); }

    // Original-text substring for a token span.
    std::string span_text(std::size_t begin, std::size_t end) const;

    // Reference answer strings: span texts, or [""] when impossible.
    std::vector<std::string> gold_texts() const;
};

struct LoadOptions {
    std::size_t max_passage_len = 384;
    std::size_t max_question_len = 64;
};

// Reads SQuAD 2.0 JSON (data[].paragraphs[].context, qas[].{id, question,
// answers[].{text, answer_start}, is_impossible}). Character offsets are
// mapped to token spans; answers that cannot be aligned are dropped with a
// warning, and an answerable question whose every answer drops is skipped.
std::vector<MrcExample> load_squad(const std::string& path, const LoadOptions& options = {},
                                   std::vector<std::string>* warnings = nullptr);

// id -> all reference answer texts in file order (impossible -> [""]), taken
// verbatim from the file rather than from aligned spans. Accepts SQuAD JSON
// or the JSONL corpus format.
std::vector<std::pair<std::string, std::vector<std::string>>> load_references(
    const std::string& path);

// Synthetic span-extraction task. Passages are filler tokens w0..; an
// answerable example plants one cue token followed by the answer tokens, and
// the question names that cue. Cues are cue0..cue{cue_count-1}; distractor
// occurrences of other cues can be planted to make the task harder.
struct SynthTaskSpec {
    std::size_t vocab_size = 50;  // filler vocabulary size, cues excluded
    std::size_t min_passage_len = 10;
    std::size_t max_passage_len = 40;
    std::string cue_token = "cue";
    std::size_t min_answer_len = 2;
    std::size_t max_answer_len = 2;
    double unanswerable_fraction = 0.0;
    std::size_t cue_count = 1;
    std::size_t distractor_cues = 0;  // per-passage occurrences of other cues
    std::uint64_t seed = 0;

    std::string cue_name(std::size_t index) const;
};

std::vector<MrcExample> generate_synthetic(const SynthTaskSpec& spec, std::size_t count);

// JSON-lines corpus, one MrcExample object per line.
std::string to_jsonl_line(const MrcExample& ex);
MrcExample from_jsonl_line(const std::string& line);
void save_jsonl(const std::vector<MrcExample>& examples, const std::string& path);
std::vector<MrcExample> load_jsonl(const std::string& path);

// Loads either format, detected by content: a first line that parses as an
// MrcExample object selects JSONL, anything else is read as SQuAD JSON.
std::vector<MrcExample> load_corpus(const std::string& path, const LoadOptions& options = {},
                                    std::vector<std::string>* warnings = nullptr);

}  // namespace aba
