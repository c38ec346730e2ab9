#include "aba/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "aba/error.hpp"
#include "aba/metrics.hpp"
#include "aba/tensor.hpp"
#include "json.hpp"

namespace aba {

using nlohmann::json;

namespace {

bool is_word_char(unsigned char c) { return !std::isspace(c) && !std::ispunct(c); }

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return in;
}

}  // namespace

std::pair<std::vector<std::string>, std::vector<TokenSpan>> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::vector<TokenSpan> offsets;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        if (std::ispunct(c)) {
            tokens.push_back(std::string(1, static_cast<char>(std::tolower(c))));
            offsets.push_back({i, i + 1});
            ++i;
            continue;
        }
        std::size_t start = i;
        std::string token;
        while (i < n && is_word_char(static_cast<unsigned char>(text[i]))) {
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
            ++i;
        }
        tokens.push_back(std::move(token));
        offsets.push_back({start, i});
    }
    return {std::move(tokens), std::move(offsets)};
}

std::string MrcExample::span_text(std::size_t begin, std::size_t end) const {
    const auto& b = token_char_offsets.at(begin);
    const auto& e = token_char_offsets.at(end);
    return raw_context.substr(b.start, e.end - b.start);
}

std::vector<std::string> MrcExample::gold_texts() const {
    if (is_impossible) return {""};
    std::vector<std::string> texts;
    texts.reserve(gold_spans.size());
    for (const auto& [b, e] : gold_spans) texts.push_back(span_text(b, e));
    return texts;
}

namespace {

// Token index whose character range contains pos, or the first token starting
// at or after pos when pos falls between tokens. Returns npos past the end.
std::size_t token_at(const std::vector<TokenSpan>& offsets, std::size_t pos) {
    for (std::size_t t = 0; t < offsets.size(); ++t) {
        if (pos < offsets[t].end) return t;
    }
    return std::string::npos;
}

struct AlignedAnswer {
    std::size_t begin, end;
};

// Maps a character-offset answer onto token indices and verifies the
// reconstruction. Alignment fails (nullopt-style flag) when the span leaves
// the tokenized range or reconstructs to a different normalized string.
bool align_answer(const std::string& context, const std::vector<TokenSpan>& offsets,
                  const std::string& text, std::size_t answer_start, AlignedAnswer& out) {
    if (text.empty()) return false;
    const std::size_t begin = token_at(offsets, answer_start);
    const std::size_t end = token_at(offsets, answer_start + text.size() - 1);
    if (begin == std::string::npos || end == std::string::npos || begin > end) return false;
    const std::string rebuilt =
        context.substr(offsets[begin].start, offsets[end].end - offsets[begin].start);
    if (normalize_text(rebuilt) != normalize_text(text)) return false;
    out = {begin, end};
    return true;
}

}  // namespace

std::vector<MrcExample> load_squad(const std::string& path, const LoadOptions& options,
                                   std::vector<std::string>* warnings) {
    auto in = open_or_throw(path);
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }

    auto warn = [&](const std::string& msg) {
        if (warnings) warnings->push_back(msg);
    };

    std::vector<MrcExample> examples;
    try {
        const auto& articles = root.at("data");
        for (const auto& article : articles) {
            for (const auto& paragraph : article.at("paragraphs")) {
                const std::string context = paragraph.at("context").get<std::string>();
                auto [tokens, offsets] = tokenize(context);
                if (tokens.empty()) {
                    warn("empty context skipped");
                    continue;
                }
                // Truncate; the final kept position doubles as the no-answer
                // slot, so answerable spans may not sit exactly on it.
                const std::size_t l = std::min(tokens.size(), options.max_passage_len);
                tokens.resize(l);
                offsets.resize(l);

                for (const auto& qa : paragraph.at("qas")) {
                    MrcExample ex;
                    ex.id = qa.at("id").get<std::string>();
                    ex.raw_context = context;
                    ex.passage_tokens = tokens;
                    ex.token_char_offsets = offsets;
                    ex.question_tokens = tokenize(qa.at("question").get<std::string>()).first;
                    if (ex.question_tokens.size() > options.max_question_len)
                        ex.question_tokens.resize(options.max_question_len);
                    ex.is_impossible = qa.value("is_impossible", false);

                    if (ex.is_impossible) {
                        ex.gold_spans = {{l - 1, l - 1}};
                        examples.push_back(std::move(ex));
                        continue;
                    }

                    for (const auto& answer : qa.at("answers")) {
                        const std::string text = answer.at("text").get<std::string>();
                        const std::size_t start = answer.at("answer_start").get<std::size_t>();
                        AlignedAnswer aligned{};
                        if (!align_answer(context, offsets, text, start, aligned)) {
                            warn(ex.id + ": answer '" + text + "' could not be aligned, dropped");
                            continue;
                        }
                        if (aligned.begin == l - 1 && aligned.end == l - 1) {
                            warn(ex.id + ": answer '" + text +
                                 "' occupies the reserved no-answer position, dropped");
                            continue;
                        }
                        ex.gold_spans.emplace_back(aligned.begin, aligned.end);
                    }
                    if (ex.gold_spans.empty()) {
                        warn(ex.id + ": no alignable answers, example skipped");
                        continue;
                    }
                    examples.push_back(std::move(ex));
                }
            }
        }
    } catch (const json::out_of_range& e) {
        throw SchemaError(path + ": " + e.what());
    } catch (const json::type_error& e) {
        throw SchemaError(path + ": " + e.what());
    }
    return examples;
}

std::vector<std::pair<std::string, std::vector<std::string>>> load_references(
    const std::string& path) {
    std::vector<std::pair<std::string, std::vector<std::string>>> refs;

    auto in = open_or_throw(path);
    std::string first_line;
    std::getline(in, first_line);
    json probe = json::parse(first_line, nullptr, false);
    if (probe.is_object() && probe.contains("passage_tokens")) {
        for (const auto& ex : load_jsonl(path)) refs.emplace_back(ex.id, ex.gold_texts());
        return refs;
    }

    in.clear();
    in.seekg(0);
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    try {
        for (const auto& article : root.at("data"))
            for (const auto& paragraph : article.at("paragraphs"))
                for (const auto& qa : paragraph.at("qas")) {
                    std::vector<std::string> golds;
                    if (qa.value("is_impossible", false)) {
                        golds.push_back("");
                    } else {
                        for (const auto& answer : qa.at("answers"))
                            golds.push_back(answer.at("text").get<std::string>());
                        if (golds.empty()) golds.push_back("");
                    }
                    refs.emplace_back(qa.at("id").get<std::string>(), std::move(golds));
                }
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    return refs;
}

std::string SynthTaskSpec::cue_name(std::size_t index) const {
    return cue_count == 1 ? cue_token : cue_token + std::to_string(index);
}

std::vector<MrcExample> generate_synthetic(const SynthTaskSpec& spec, std::size_t count) {
    if (count < 1) throw ParameterError("generate_synthetic: count must be >= 1");
    if (spec.unanswerable_fraction < 0.0 || spec.unanswerable_fraction > 1.0)
        throw ParameterError("generate_synthetic: unanswerable fraction outside [0, 1]");
    if (spec.min_answer_len < 1 || spec.min_answer_len > spec.max_answer_len)
        throw ParameterError("generate_synthetic: bad answer length range");
    if (spec.min_passage_len > spec.max_passage_len ||
        spec.min_passage_len < spec.max_answer_len + 3)
        throw ParameterError(
            "generate_synthetic: passages must fit cue + answer + reserved final token");
    if (spec.cue_count < 1 || spec.vocab_size < 1)
        throw ParameterError("generate_synthetic: cue_count and vocab_size must be >= 1");
    if (spec.distractor_cues > 0 && spec.cue_count < 2)
        throw ParameterError("generate_synthetic: distractors need at least two cue tokens");

    Rng rng(spec.seed);
    std::vector<MrcExample> examples;
    examples.reserve(count);

    for (std::size_t index = 0; index < count; ++index) {
        const std::size_t l =
            spec.min_passage_len + rng.uniform_int(spec.max_passage_len - spec.min_passage_len + 1);
        const std::size_t answer_len =
            spec.min_answer_len + rng.uniform_int(spec.max_answer_len - spec.min_answer_len + 1);
        const bool unanswerable = rng.uniform() < spec.unanswerable_fraction;
        const std::size_t cue_index = rng.uniform_int(spec.cue_count);

        MrcExample ex;
        ex.id = "synth-" + std::to_string(index);
        ex.is_impossible = unanswerable;
        ex.passage_tokens.reserve(l);
        for (std::size_t i = 0; i < l; ++i)
            ex.passage_tokens.push_back("w" + std::to_string(rng.uniform_int(spec.vocab_size)));

        std::size_t cue_pos = std::string::npos;
        if (!unanswerable) {
            // cue at cue_pos, answer right behind it, final token left free.
            cue_pos = rng.uniform_int(l - answer_len - 2);
            ex.passage_tokens[cue_pos] = spec.cue_name(cue_index);
            ex.gold_spans = {{cue_pos + 1, cue_pos + answer_len}};
        } else {
            ex.gold_spans = {{l - 1, l - 1}};
        }

        for (std::size_t k = 0; k < spec.distractor_cues; ++k) {
            std::size_t other = rng.uniform_int(spec.cue_count - 1);
            if (other >= cue_index) ++other;
            // Find a slot outside the cue+answer region and off the final token.
            for (std::size_t attempt = 0; attempt < 16; ++attempt) {
                const std::size_t pos = rng.uniform_int(l - 1);
                const bool in_answer = !unanswerable && pos >= cue_pos &&
                                       pos <= cue_pos + answer_len;
                if (in_answer) continue;
                ex.passage_tokens[pos] = spec.cue_name(other);
                break;
            }
        }

        ex.question_tokens = {"what", "follows", spec.cue_name(cue_index)};

        std::string context;
        for (std::size_t i = 0; i < l; ++i) {
            const std::size_t start = context.size();
            context += ex.passage_tokens[i];
            ex.token_char_offsets.push_back({start, context.size()});
            if (i + 1 < l) context.push_back(' ');
        }
        ex.raw_context = std::move(context);
        examples.push_back(std::move(ex));
    }
    return examples;
}

std::string to_jsonl_line(const MrcExample& ex) {
    json j;
    j["id"] = ex.id;
    j["passage_tokens"] = ex.passage_tokens;
    j["question_tokens"] = ex.question_tokens;
    json spans = json::array();
    for (const auto& [b, e] : ex.gold_spans) spans.push_back({b, e});
    j["gold_spans"] = spans;
    j["is_impossible"] = ex.is_impossible;
    j["raw_context"] = ex.raw_context;
    json offsets = json::array();
    for (const auto& o : ex.token_char_offsets) offsets.push_back({o.start, o.end});
    j["token_char_offsets"] = offsets;
    return j.dump();
}

MrcExample from_jsonl_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(std::string("jsonl: ") + e.what());
    }
    MrcExample ex;
    try {
        ex.id = j.at("id").get<std::string>();
        ex.passage_tokens = j.at("passage_tokens").get<std::vector<std::string>>();
        ex.question_tokens = j.at("question_tokens").get<std::vector<std::string>>();
        for (const auto& s : j.at("gold_spans"))
            ex.gold_spans.emplace_back(s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>());
        ex.is_impossible = j.at("is_impossible").get<bool>();
        ex.raw_context = j.at("raw_context").get<std::string>();
        for (const auto& o : j.at("token_char_offsets"))
            ex.token_char_offsets.push_back(
                {o.at(0).get<std::size_t>(), o.at(1).get<std::size_t>()});
    } catch (const json::exception& e) {
        throw SchemaError(std::string("jsonl: ") + e.what());
    }
    return ex;
}

void save_jsonl(const std::vector<MrcExample>& examples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& ex : examples) out << to_jsonl_line(ex) << "\n";
    if (!out) throw IoError("write failed for " + path);
}

std::vector<MrcExample> load_jsonl(const std::string& path) {
    auto in = open_or_throw(path);
    std::vector<MrcExample> examples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            examples.push_back(from_jsonl_line(line));
        } catch (const std::runtime_error& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return examples;
}

std::vector<MrcExample> load_corpus(const std::string& path, const LoadOptions& options,
                                    std::vector<std::string>* warnings) {
    auto in = open_or_throw(path);
    std::string first_line;
    std::getline(in, first_line);
    json probe = json::parse(first_line, nullptr, false);
    if (probe.is_object() && probe.contains("passage_tokens")) return load_jsonl(path);
    return load_squad(path, options, warnings);
}

}  // namespace aba
