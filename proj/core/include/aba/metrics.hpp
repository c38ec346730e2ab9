#pragma once

#include <string>
#include <utility>
#include <vector>

namespace aba {

// SQuAD-convention answer normalization: lowercase, strip punctuation,
// drop the articles a/an/the, collapse whitespace.
std::string normalize_text(const std::string& s);

// 1 when the normalized prediction equals any normalized gold, else 0.
// An empty-string gold encodes a correct abstention.
int exact_match(const std::string& pred, const std::vector<std::string>& golds);

// Max over golds of token-level F1 (multiset overlap of normalized
// whitespace tokens). Both sides empty -> 1; exactly one empty -> 0.
double f1_score(const std::string& pred, const std::vector<std::string>& golds);

struct QuestionScore {
    std::string id;
    double em = 0.0;
    double f1 = 0.0;
};

struct EvalResult {
    double em = 0.0;  // mean of per-question EM
    double f1 = 0.0;  // mean of per-question F1
    std::vector<QuestionScore> per_question;
    std::vector<std::string> warnings;  // one per reference id missing a prediction
};

// Scores predictions against multi-reference golds. Reference ids missing a
// prediction score 0/0 with a warning; duplicate ids on either side are an
// input error.
EvalResult evaluate(const std::vector<std::pair<std::string, std::string>>& predictions,
                    const std::vector<std::pair<std::string, std::vector<std::string>>>& references);

}  // namespace aba
