#include <cmath>

#include "aba/error.hpp"
#include "aba/predictor.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace aba;

namespace {

// Exhaustive scoring over every admissible pair, for comparison.
SpanPrediction decode_by_enumeration(const std::vector<double>& begin,
                                     const std::vector<double>& end, std::size_t max_len) {
    SpanPrediction best;
    best.score = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < begin.size(); ++b)
        for (std::size_t e = b; e < end.size() && e - b + 1 <= max_len; ++e)
            if (begin[b] + end[e] > best.score) {
                best = {b, e, begin[b] + end[e], false};
            }
    best.is_unanswerable = best.begin == begin.size() - 1 && best.end == begin.size() - 1;
    return best;
}

}  // namespace

TEST_CASE("span_logits: zero head gives uniform distributions over real positions") {
    Rng rng(71);
    auto features = oracle::random_tensor({5, 8}, rng, false);
    SpanHead zero_head{Tensor::zeros({8, 1}), Tensor::zeros({8, 1})};
    std::vector<bool> mask{true, true, true, true, false};

    auto [begin, end] = span_logits(FusedRepresentation{features}, zero_head, mask);
    CHECK(begin->shape == std::vector<std::size_t>{5});
    CHECK(end->shape == std::vector<std::size_t>{5});

    auto probs = softmax_rows(reshape(begin, {1, 5}));
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(probs->data[j] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(probs->data[4] == doctest::Approx(0.0).epsilon(1e-15));  // masked tail
}

TEST_CASE("span_logits match an explicit dot-product oracle") {
    Rng rng(72);
    auto features = oracle::random_tensor({4, 6}, rng, false);
    auto head = SpanHead::init(6, rng);
    auto [begin, end] = span_logits(FusedRepresentation{features}, head,
                                    std::vector<bool>(4, true));
    for (std::size_t i = 0; i < 4; ++i) {
        double b = 0.0, e = 0.0;
        for (std::size_t c = 0; c < 6; ++c) {
            b += features->at(i, c) * head.begin_w->data[c];
            e += features->at(i, c) * head.end_w->data[c];
        }
        CHECK(begin->data[i] == doctest::Approx(b).epsilon(1e-12));
        CHECK(end->data[i] == doctest::Approx(e).epsilon(1e-12));
    }

    SpanHead narrow{Tensor::zeros({5, 1}), Tensor::zeros({5, 1})};
    CHECK_THROWS_AS(
        span_logits(FusedRepresentation{features}, narrow, std::vector<bool>(4, true)),
        DimensionError);
}

TEST_CASE("decode_span picks the unique maximum") {
    const auto span = decode_span({0, 9, 0}, {0, 0, 9}, 30);
    CHECK(span.begin == 1);
    CHECK(span.end == 2);
    CHECK(span.is_unanswerable == false);
}

TEST_CASE("decode_span maps a last-token peak to unanswerable") {
    const auto span = decode_span({0, 0, 9}, {0, 0, 9}, 30);
    CHECK(span.begin == 2);
    CHECK(span.end == 2);
    CHECK(span.is_unanswerable == true);
}

TEST_CASE("decode_span equals exhaustive enumeration on random instances") {
    Rng rng(73);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t l = 1 + rng.uniform_int(12);
        const std::size_t max_len = 1 + rng.uniform_int(l);
        std::vector<double> begin(l), end(l);
        for (auto& v : begin) v = rng.uniform(-5, 5);
        for (auto& v : end) v = rng.uniform(-5, 5);

        const auto fast = decode_span(begin, end, max_len);
        const auto slow = decode_by_enumeration(begin, end, max_len);
        CHECK(fast.begin == slow.begin);
        CHECK(fast.end == slow.end);
        CHECK(fast.begin <= fast.end);
        CHECK(fast.end - fast.begin + 1 <= max_len);
    }
}

TEST_CASE("decode_span breaks ties lexicographically") {
    // every pair scores the same; (0, 0) must win
    const auto span = decode_span({1, 1, 1}, {2, 2, 2}, 30);
    CHECK(span.begin == 0);
    CHECK(span.end == 0);

    CHECK_THROWS_AS(decode_span({}, {}, 30), DimensionError);
    CHECK_THROWS_AS(decode_span({1}, {1}, 0), ParameterError);
}

TEST_CASE("span_loss: peaked logits approach zero, uniform equals 2 ln l") {
    auto peaked_b = Tensor::from({4}, {40, 0, 0, 0});
    auto peaked_e = Tensor::from({4}, {0, 40, 0, 0});
    CHECK(span_loss(peaked_b, peaked_e, 0, 1)->data[0] ==
          doctest::Approx(0.0).epsilon(1e-12));

    auto flat_b = Tensor::zeros({4});
    auto flat_e = Tensor::zeros({4});
    CHECK(span_loss(flat_b, flat_e, 2, 2)->data[0] ==
          doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-12));
    CHECK(span_loss(flat_b, flat_e, 1, 3)->data[0] > 0.0);

    CHECK_THROWS_AS(span_loss(flat_b, flat_e, 4, 0), LabelError);
}

TEST_CASE("unanswerable round trip through encoding and decoding") {
    const std::size_t l = 6;
    std::vector<double> begin(l, 0.0), end(l, 0.0);
    begin[l - 1] = end[l - 1] = 50.0;  // model peaked on the no-answer slot
    const auto span = decode_span(begin, end, 30);
    CHECK(span.is_unanswerable);
    CHECK(span.begin == l - 1);
    CHECK(span.end == l - 1);
}

TEST_CASE("gradcheck: span_loss") {
    Rng rng(74);
    for (int c = 0; c < 10; ++c) {
        auto begin = oracle::random_tensor({6}, rng);
        auto end = oracle::random_tensor({6}, rng);
        auto r = oracle::check_gradients([&] { return span_loss(begin, end, 2, 4); },
                                         {begin, end});
        CHECK(r.max_rel_err < 1e-5);
    }
}
