#include <cmath>

#include "aba/error.hpp"
#include "aba/metrics.hpp"
#include "doctest.h"

using namespace aba;

TEST_CASE("normalize_text applies the SQuAD conventions") {
    CHECK(normalize_text("The  Cat!") == "cat");
    CHECK(normalize_text("") == "");
    CHECK(normalize_text("an answer") == "answer");
    CHECK(normalize_text("A  B.C.  the d") == "bc d");
    CHECK(normalize_text("THE THE THE") == "");
}

TEST_CASE("exact_match on the contract cases") {
    CHECK(exact_match("Michael Jordan", {"Michael Jordan"}) == 1);
    CHECK(exact_match("Jordan", {"Michael Jordan"}) == 0);
    CHECK(exact_match("", {""}) == 1);  // correct abstention
    CHECK(exact_match("the cat", {"Cat!"}) == 1);
    CHECK(exact_match("cat", {"dog", "cat"}) == 1);
    CHECK_THROWS_AS(exact_match("x", {}), InputError);
}

TEST_CASE("f1_score on the contract cases") {
    CHECK(f1_score("Jordan", {"Michael Jordan"}) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(f1_score("same answer", {"same answer"}) == 1.0);
    CHECK(f1_score("", {"x"}) == 0.0);
    CHECK(f1_score("x", {""}) == 0.0);
    CHECK(f1_score("", {""}) == 1.0);
    // multiset overlap: repeated tokens only count while the gold has them
    CHECK(f1_score("a a b b", {"b b c c"}) == doctest::Approx(0.5).epsilon(1e-12));
    // best gold wins
    CHECK(f1_score("fox", {"quick brown fox", "fox"}) == 1.0);
}

TEST_CASE("exact match implies perfect f1") {
    const std::vector<std::pair<std::string, std::string>> pairs{
        {"The Cat", "cat"},
        {"42 dollars", "42  dollars!"},
        {"", ""},
        {"an apple a day", "apple day"},
    };
    for (const auto& [pred, gold] : pairs) {
        if (exact_match(pred, {gold}) == 1) CHECK(f1_score(pred, {gold}) == 1.0);
    }
}

TEST_CASE("f1 is symmetric for single references") {
    const std::vector<std::pair<std::string, std::string>> pairs{
        {"quick fox", "the quick brown fox"},
        {"a b c", "c b"},
        {"", "word"},
    };
    for (const auto& [x, y] : pairs)
        CHECK(f1_score(x, {y}) == doctest::Approx(f1_score(y, {x})).epsilon(1e-12));
}

TEST_CASE("evaluate: singleton, hand-averaged pair, degenerate inputs") {
    auto single = evaluate({{"q1", "42"}}, {{"q1", {"42"}}});
    CHECK(single.em == 1.0);
    CHECK(single.f1 == 1.0);

    auto pair = evaluate({{"q1", "exact"}, {"q2", "Jordan"}},
                         {{"q1", {"exact"}}, {"q2", {"Michael Jordan"}}});
    CHECK(pair.em == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(pair.f1 == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));

    auto empty_preds = evaluate({}, {{"q1", {"a"}}, {"q2", {"b"}}});
    CHECK(empty_preds.em == 0.0);
    CHECK(empty_preds.f1 == 0.0);
    CHECK(empty_preds.warnings.size() == 2);

    CHECK_THROWS_AS(evaluate({{"q1", "a"}, {"q1", "b"}}, {{"q1", {"a"}}}), InputError);
    CHECK_THROWS_AS(evaluate({{"q1", "a"}}, {{"q1", {"a"}}, {"q1", {"b"}}}), InputError);
}

TEST_CASE("evaluate means equal the arithmetic means of per-question scores") {
    std::vector<std::pair<std::string, std::string>> preds;
    std::vector<std::pair<std::string, std::vector<std::string>>> refs;
    const std::vector<std::pair<std::string, std::string>> cases{
        {"alpha beta", "alpha beta"}, {"alpha", "alpha beta"},   {"", ""},
        {"gamma", "delta"},           {"x y z", "z y x"},
    };
    for (std::size_t i = 0; i < cases.size(); ++i) {
        preds.emplace_back("q" + std::to_string(i), cases[i].first);
        refs.emplace_back("q" + std::to_string(i), std::vector<std::string>{cases[i].second});
    }
    auto result = evaluate(preds, refs);
    double em_sum = 0.0, f1_sum = 0.0;
    for (const auto& q : result.per_question) {
        em_sum += q.em;
        f1_sum += q.f1;
        CHECK(q.em <= q.f1);  // per-question em bounds f1 from below
    }
    CHECK(std::abs(result.em - em_sum / cases.size()) < 1e-12);
    CHECK(std::abs(result.f1 - f1_sum / cases.size()) < 1e-12);
    CHECK(result.em <= result.f1);
}
