#include "aba/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "aba/error.hpp"

namespace aba {

namespace {

std::vector<std::string> whitespace_split(const std::string& s) {
    std::vector<std::string> tokens;
    std::istringstream in(s);
    std::string t;
    while (in >> t) tokens.push_back(t);
    return tokens;
}

double single_f1(const std::string& pred_norm, const std::string& gold_norm) {
    if (pred_norm.empty() || gold_norm.empty())
        return pred_norm == gold_norm ? 1.0 : 0.0;

    const auto pred_tokens = whitespace_split(pred_norm);
    const auto gold_tokens = whitespace_split(gold_norm);

    std::unordered_map<std::string, int> gold_counts;
    for (const auto& t : gold_tokens) ++gold_counts[t];
    int overlap = 0;
    for (const auto& t : pred_tokens) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double precision = static_cast<double>(overlap) / pred_tokens.size();
    const double recall = static_cast<double>(overlap) / gold_tokens.size();
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

std::string normalize_text(const std::string& s) {
    std::string lowered;
    lowered.reserve(s.size());
    for (char c : s) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::ispunct(uc)) continue;
        lowered.push_back(static_cast<char>(std::tolower(uc)));
    }

    std::string out;
    for (const auto& token : whitespace_split(lowered)) {
        if (token == "a" || token == "an" || token == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += token;
    }
    return out;
}

int exact_match(const std::string& pred, const std::vector<std::string>& golds) {
    if (golds.empty()) throw InputError("exact_match: empty gold list");
    const std::string p = normalize_text(pred);
    for (const auto& g : golds)
        if (p == normalize_text(g)) return 1;
    return 0;
}

double f1_score(const std::string& pred, const std::vector<std::string>& golds) {
    if (golds.empty()) throw InputError("f1_score: empty gold list");
    const std::string p = normalize_text(pred);
    double best = 0.0;
    for (const auto& g : golds) best = std::max(best, single_f1(p, normalize_text(g)));
    return best;
}

EvalResult evaluate(
    const std::vector<std::pair<std::string, std::string>>& predictions,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& references) {
    std::unordered_map<std::string, const std::string*> pred_by_id;
    for (const auto& [id, text] : predictions)
        if (!pred_by_id.emplace(id, &text).second)
            throw InputError("evaluate: duplicate prediction id '" + id + "'");

    EvalResult result;
    std::unordered_set<std::string> seen;
    for (const auto& [id, golds] : references) {
        if (!seen.insert(id).second)
            throw InputError("evaluate: duplicate reference id '" + id + "'");
        QuestionScore score;
        score.id = id;
        auto it = pred_by_id.find(id);
        if (it == pred_by_id.end()) {
            result.warnings.push_back("missing prediction for id '" + id + "', scored 0");
        } else {
            score.em = exact_match(*it->second, golds);
            score.f1 = f1_score(*it->second, golds);
        }
        result.per_question.push_back(std::move(score));
    }

    if (!result.per_question.empty()) {
        double em_sum = 0.0, f1_sum = 0.0;
        for (const auto& q : result.per_question) {
            em_sum += q.em;
            f1_sum += q.f1;
        }
        result.em = em_sum / result.per_question.size();
        result.f1 = f1_sum / result.per_question.size();
    }
    return result;
}

}  // namespace aba
