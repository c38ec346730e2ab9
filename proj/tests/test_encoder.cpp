#include <cmath>

#include "aba/encoder.hpp"
#include "aba/error.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace aba;

namespace {

std::vector<bool> all_real(std::size_t n) { return std::vector<bool>(n, true); }

}  // namespace

TEST_CASE("vocabulary reserves PAD=0 and UNK=1 and is bijective") {
    Vocabulary v;
    CHECK(v.id_of("<pad>") == Vocabulary::kPad);
    CHECK(v.id_of("<unk>") == Vocabulary::kUnk);
    const int cat = v.add("cat");
    const int dog = v.add("dog");
    CHECK(v.add("cat") == cat);
    CHECK(cat != dog);
    CHECK(v.token_of(cat) == "cat");
    CHECK(v.id_of("missing") == Vocabulary::kUnk);
    CHECK_THROWS_AS(v.token_of(99), VocabularyError);

    const std::vector<std::string> a{"x", "y"}, b{"y", "z"};
    auto built = Vocabulary::build({&a, &b});
    CHECK(built.size() == 5);  // pad, unk, x, y, z
    CHECK(built.id_of("z") == 4);

    Vocabulary restored(built.tokens());
    CHECK(restored.id_of("z") == built.id_of("z"));
}

TEST_CASE("embed: PAD row is zero, lookups are deterministic") {
    Rng rng(31);
    auto table = EmbeddingTable::init(6, 4, rng);

    auto pad_row = embed({Vocabulary::kPad}, table);
    for (double v : pad_row->data) CHECK(v == 0.0);

    auto twice = embed({3, 3}, table);
    for (std::size_t j = 0; j < 4; ++j) CHECK(twice->at(0, j) == twice->at(1, j));

    CHECK_THROWS_AS(embed({6}, table), VocabularyError);
}

TEST_CASE("embed agrees with a direct row-gather oracle") {
    Rng rng(32);
    auto table = EmbeddingTable::init(8, 5, rng);
    const std::vector<int> ids{2, 7, 1, 2};
    auto out = embed(ids, table);
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(out->at(i, j) == table.weights->at(static_cast<std::size_t>(ids[i]), j));
}

TEST_CASE("encode_stack returns one output per block, in order") {
    Rng rng(33);
    auto x = oracle::random_tensor({5, 8}, rng, false);

    CHECK(encode_stack(x, {}, all_real(5)).empty());

    std::vector<EncoderBlock> blocks;
    blocks.push_back(EncoderBlock::init(8, 16, rng));
    blocks.push_back(EncoderBlock::init(8, 16, rng));
    auto outputs = encode_stack(x, blocks, all_real(5));
    REQUIRE(outputs.size() == 2);
    for (const auto& c : outputs) CHECK(c->shape == std::vector<std::size_t>{5, 8});

    // first stack output equals one manually applied block
    auto direct = blocks[0].forward(x, all_real(5));
    for (std::size_t i = 0; i < direct->size(); ++i)
        CHECK(outputs[0]->data[i] == doctest::Approx(direct->data[i]).epsilon(1e-12));
}

TEST_CASE("masked positions never influence unmasked outputs") {
    Rng rng(34);
    const std::size_t len = 6, d = 8;
    std::vector<bool> mask(len, true);
    mask[4] = mask[5] = false;

    auto block = EncoderBlock::init(d, 16, rng);
    auto x = oracle::random_tensor({len, d}, rng, false);
    auto x_perturbed = Tensor::from(x->shape, x->data);
    for (std::size_t j = 0; j < d; ++j) {
        x_perturbed->at(4, j) += 3.5;
        x_perturbed->at(5, j) -= 1.25;
    }

    auto out = block.forward(x, mask);
    auto out_perturbed = block.forward(x_perturbed, mask);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < d; ++j)
            CHECK(out->at(i, j) == doctest::Approx(out_perturbed->at(i, j)).epsilon(1e-12));
}

TEST_CASE("cross_attend with a single question position copies it everywhere") {
    Rng rng(35);
    auto c_p = oracle::random_tensor({4, 6}, rng, false);
    auto c_q = oracle::random_tensor({1, 6}, rng, false);
    auto out = cross_attend(c_p, c_q, all_real(4), all_real(1));
    CHECK(out.a_p->shape == std::vector<std::size_t>{4, 6});
    CHECK(out.a_q->shape == std::vector<std::size_t>{1, 6});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            CHECK(out.a_p->at(i, j) == doctest::Approx(c_q->at(0, j)).epsilon(1e-12));
}

TEST_CASE("cross_attend matches a brute-force attention oracle") {
    Rng rng(36);
    const std::size_t l = 5, m = 3, d = 7;
    auto c_p = oracle::random_tensor({l, d}, rng, false);
    auto c_q = oracle::random_tensor({m, d}, rng, false);
    auto out = cross_attend(c_p, c_q, all_real(l), all_real(m));

    for (std::size_t i = 0; i < l; ++i) {
        std::vector<double> scores(m, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t c = 0; c < d; ++c) scores[j] += c_p->at(i, c) * c_q->at(j, c);
            scores[j] /= std::sqrt(static_cast<double>(d));
        }
        double mx = scores[0];
        for (double s : scores) mx = std::max(mx, s);
        double z = 0.0;
        for (double& s : scores) {
            s = std::exp(s - mx);
            z += s;
        }
        for (std::size_t c = 0; c < d; ++c) {
            double expected = 0.0;
            for (std::size_t j = 0; j < m; ++j) expected += scores[j] / z * c_q->at(j, c);
            CHECK(out.a_p->at(i, c) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("every encoder parameter receives gradient on a generic batch") {
    Rng rng(37);
    const std::size_t len = 5, d = 6;
    auto block = EncoderBlock::init(d, 12, rng);
    auto x = oracle::random_tensor({len, d}, rng, true);

    auto out = block.forward(x, all_real(len));
    backward(sum_all(mul(out, out)));

    const std::vector<std::pair<const char*, TensorPtr>> params{
        {"wq", block.wq},       {"wk", block.wk},       {"wv", block.wv},
        {"ff1_w", block.ff1_w}, {"ff1_b", block.ff1_b}, {"ff2_w", block.ff2_w},
        {"ff2_b", block.ff2_b}, {"ln1_g", block.ln1_g}, {"ln1_b", block.ln1_b},
        {"ln2_g", block.ln2_g}, {"ln2_b", block.ln2_b}};
    for (const auto& [name, p] : params) {
        INFO("parameter ", name);
        REQUIRE(!p->grad.empty());
        double norm = 0.0;
        for (double g : p->grad) norm += g * g;
        CHECK(norm > 0.0);
    }
}

TEST_CASE("gradcheck: encoder block end to end") {
    Rng rng(38);
    auto block = EncoderBlock::init(4, 8, rng);
    auto x = oracle::random_tensor({3, 4}, rng, true);
    auto r = oracle::check_gradients(
        [&] { return sum_all(mul(block.forward(x, all_real(3)), x)); },
        {x, block.wq, block.wv, block.ff1_w, block.ln2_g});
    CHECK(r.max_rel_err < 1e-5);
}

TEST_CASE("position signal follows the sinusoidal recipe") {
    auto x = Tensor::zeros({3, 4});
    auto out = add_position_signal(x);
    CHECK(out->at(0, 0) == doctest::Approx(0.0));
    CHECK(out->at(0, 1) == doctest::Approx(1.0));
    CHECK(out->at(2, 0) == doctest::Approx(std::sin(2.0)).epsilon(1e-15));
    CHECK(out->at(2, 1) == doctest::Approx(std::cos(2.0)).epsilon(1e-15));
    CHECK(out->at(1, 2) == doctest::Approx(std::sin(1.0 / 100.0)).epsilon(1e-15));
}
