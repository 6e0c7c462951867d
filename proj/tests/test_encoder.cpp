#include <doctest.h>

#include <cmath>

#include "fed3d/common.hpp"
#include "fed3d/gradcheck.hpp"
#include "oracles.hpp"

using namespace fed3d;

namespace {

EncoderLayer test_layer(std::size_t d_model, std::size_t heads, std::size_t d_head,
                        std::uint64_t seed) {
    Rng rng(seed);
    return make_encoder_layer(d_model, heads, d_head, 2 * d_model, 0, rng);
}

std::vector<Tensor> prompt_values(const std::vector<HeadPromptPair>& prompts, bool key) {
    std::vector<Tensor> out;
    for (const auto& pair : prompts) out.push_back(key ? pair.key.value : pair.value.value);
    return out;
}

}  // namespace

TEST_CASE("single token attention reduces to the value projection") {
    EncoderLayer layer = test_layer(6, 2, 3, 42);
    Rng rng(7);
    Tensor f = Tensor::randn({1, 6}, rng, 1.0);

    Tape tape;
    AttentionCapture cap;
    Value out = mhsa_forward(tape, layer, tape.input(f), &cap);

    // softmax over a single key is exactly one
    for (const Tensor& rows : cap.rows) {
        REQUIRE(rows.rows() == 1);
        REQUIRE(rows.cols() == 1);
        CHECK(rows.at(0, 0) == 1.0);
    }
    CHECK(oracle::max_abs_diff(tape.value(out),
                               oracle::naive_prefix_block(layer, {}, {}, f)) < 1e-12);
}

TEST_CASE("zero output projection and zero second MLP layer give identity") {
    EncoderLayer layer = test_layer(8, 2, 4, 43);
    layer.w_o.value.fill(0.0);
    layer.mlp_w2.value.fill(0.0);
    layer.mlp_b2.value.fill(0.0);
    Rng rng(8);
    Tensor f = Tensor::randn({5, 8}, rng, 1.0);
    Tape tape;
    Value out = mhsa_forward(tape, layer, tape.input(f));
    CHECK(bitwise_equal(tape.value(out), f));
}

TEST_CASE("mhsa matches brute-force per-head loop, random 3x8 input") {
    EncoderLayer layer = test_layer(8, 2, 4, 44);
    Rng rng(9);
    Tensor f = Tensor::randn({3, 8}, rng, 1.0);
    Tape tape;
    Value out = mhsa_forward(tape, layer, tape.input(f));
    CHECK(oracle::max_abs_diff(tape.value(out),
                               oracle::naive_prefix_block(layer, {}, {}, f)) < 1e-12);
}

TEST_CASE("p=0 prefix forward is bitwise equal to plain mhsa") {
    EncoderLayer layer = test_layer(8, 2, 4, 45);
    PromptPool pool = init_prompt_pool(1, 2, 0, 4, 11);
    Rng rng(10);
    Tensor f = Tensor::randn({4, 8}, rng, 1.0);

    Tape t1;
    Value plain = mhsa_forward(t1, layer, t1.input(f));
    Tape t2;
    Value prefixed = prefix_mhsa_forward(t2, layer, &pool.layers[0], t2.input(f));
    CHECK(bitwise_equal(t1.value(plain), t2.value(prefixed)));
}

TEST_CASE("prefix attention keeps sequence length over a (T,p) grid") {
    for (std::size_t t_len : {1u, 2u, 4u, 16u}) {
        for (std::size_t p_len : {0u, 1u, 8u, 32u}) {
            EncoderLayer layer = test_layer(8, 2, 4, 46);
            PromptPool pool = init_prompt_pool(1, 2, p_len, 4, 13);
            Rng rng(t_len * 100 + p_len);
            Tensor f = Tensor::randn({t_len, 8}, rng, 1.0);
            Tape tape;
            AttentionCapture cap;
            Value out = prefix_mhsa_forward(tape, layer, &pool.layers[0], tape.input(f), &cap);
            CHECK(tape.value(out).rows() == t_len);
            CHECK(tape.value(out).cols() == 8);
            // rows over the extended key axis sum to one
            for (const Tensor& rows : cap.rows) {
                CHECK(rows.cols() == t_len + p_len);
                for (std::size_t i = 0; i < rows.rows(); ++i) {
                    double sum = 0.0;
                    for (std::size_t j = 0; j < rows.cols(); ++j) sum += rows.at(i, j);
                    CHECK(std::abs(sum - 1.0) <= 1e-12);
                }
            }
        }
    }
}

TEST_CASE("hand-sized prefix case matches brute-force extended attention") {
    // T=2, p=1, d_head=2, one head
    EncoderLayer layer = test_layer(4, 1, 2, 47);
    PromptPool pool = init_prompt_pool(1, 1, 1, 2, 17);
    Rng rng(12);
    Tensor f = Tensor::randn({2, 4}, rng, 1.0);
    Tape tape;
    Value out = prefix_mhsa_forward(tape, layer, &pool.layers[0], tape.input(f));
    Tensor expect = oracle::naive_prefix_block(layer, prompt_values(pool.layers[0], true),
                                               prompt_values(pool.layers[0], false), f);
    CHECK(oracle::max_abs_diff(tape.value(out), expect) < 1e-12);
}

TEST_CASE("random prefix cases match the naive oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed + 300);
        std::size_t heads = 1 + rng.below(3);
        std::size_t d_head = 2 + rng.below(3);
        std::size_t d_model = 4 + rng.below(5);
        std::size_t t_len = 1 + rng.below(5);
        std::size_t p_len = rng.below(4);
        EncoderLayer layer = test_layer(d_model, heads, d_head, seed + 900);
        PromptPool pool = init_prompt_pool(1, heads, p_len, d_head, seed + 31);
        Tensor f = Tensor::randn({t_len, d_model}, rng, 1.0);
        Tape tape;
        Value out = prefix_mhsa_forward(tape, layer, &pool.layers[0], tape.input(f));
        Tensor expect = oracle::naive_prefix_block(layer, prompt_values(pool.layers[0], true),
                                                   prompt_values(pool.layers[0], false), f);
        CHECK(oracle::max_abs_diff(tape.value(out), expect) < 1e-12);
    }
}

TEST_CASE("prompt head-count mismatch raises a configuration error") {
    EncoderLayer layer = test_layer(8, 2, 4, 48);
    PromptPool pool = init_prompt_pool(1, 3, 2, 4, 19);  // 3 heads vs layer's 2
    Rng rng(14);
    Tensor f = Tensor::randn({2, 8}, rng, 1.0);
    Tape tape;
    CHECK_THROWS_AS(prefix_mhsa_forward(tape, layer, &pool.layers[0], tape.input(f)),
                    ConfigError);
}

TEST_CASE("encoder with one layer equals a single prefix block") {
    std::vector<EncoderLayer> layers{test_layer(8, 2, 4, 49)};
    PromptPool pool = init_prompt_pool(1, 2, 3, 4, 23);
    Rng rng(15);
    Tensor f = Tensor::randn({3, 8}, rng, 1.0);
    Tape t1;
    Value a = encoder_forward(t1, layers, pool, t1.input(f));
    Tape t2;
    Value b = prefix_mhsa_forward(t2, layers[0], &pool.layers[0], t2.input(f));
    CHECK(bitwise_equal(t1.value(a), t2.value(b)));
}

TEST_CASE("encoder depth mismatch raises a configuration error") {
    std::vector<EncoderLayer> layers{test_layer(8, 2, 4, 50), test_layer(8, 2, 4, 51)};
    PromptPool pool = init_prompt_pool(1, 2, 3, 4, 29);
    Rng rng(16);
    Tensor f = Tensor::randn({3, 8}, rng, 1.0);
    Tape tape;
    CHECK_THROWS_AS(encoder_forward(tape, layers, pool, tape.input(f)), ConfigError);
}

TEST_CASE("frozen backbone receives exactly zero gradients") {
    std::vector<EncoderLayer> layers{test_layer(8, 2, 4, 52), test_layer(8, 2, 4, 53)};
    for (auto& layer : layers) layer.set_trainable(false);
    PromptPool pool = init_prompt_pool(2, 2, 3, 4, 37);
    Rng rng(17);
    Tensor f = Tensor::randn({3, 8}, rng, 1.0);

    Tape tape;
    Value out = encoder_forward(tape, layers, pool, tape.input(f));
    tape.backward(sum_all(out));

    for (auto& layer : layers)
        for (Parameter* p : layer.parameters())
            for (std::size_t i = 0; i < p->grad.numel(); ++i) CHECK(p->grad[i] == 0.0);
    // prompts, by contrast, move
    double prompt_grad_norm = 0.0;
    for (Parameter* p : pool.parameters())
        for (std::size_t i = 0; i < p->grad.numel(); ++i)
            prompt_grad_norm += std::abs(p->grad[i]);
    CHECK(prompt_grad_norm > 0.0);
}

TEST_CASE("prompt gradients pass finite differences through the encoder") {
    std::vector<EncoderLayer> layers{test_layer(6, 2, 3, 54), test_layer(6, 2, 3, 55)};
    for (auto& layer : layers) layer.set_trainable(false);
    PromptPool pool = init_prompt_pool(2, 2, 2, 3, 41);
    Rng rng(18);
    Tensor f = Tensor::randn({3, 6}, rng, 1.0);

    auto forward_loss = [&]() {
        Tape tape;
        Value out = encoder_forward(tape, layers, pool, tape.input(f));
        return tape.value(sum_all(gelu(out)))[0];
    };
    for (Parameter* p : pool.parameters()) {
        Tape tape;
        Value out = encoder_forward(tape, layers, pool, tape.input(f));
        tape.backward(sum_all(gelu(out)));
        Tensor analytic = p->grad;
        for (Parameter* q : pool.parameters()) q->zero_grad();
        double err = finite_diff_check_param(forward_loss, *p, analytic, 1e-5);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("init_prompt_pool determinism and counting") {
    PromptPool a = init_prompt_pool(2, 2, 8, 8, 123);
    PromptPool b = init_prompt_pool(2, 2, 8, 8, 123);
    PromptPool c = init_prompt_pool(2, 2, 8, 8, 124);

    CHECK(a.parameter_count() == 2 * 2 * 2 * 8 * 8);
    auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        all_equal = all_equal && bitwise_equal(pa[i]->value, pb[i]->value);
        any_diff = any_diff || !bitwise_equal(pa[i]->value, pc[i]->value);
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("unfrozen projection and MLP gradients also pass finite differences") {
    EncoderLayer layer = test_layer(6, 2, 3, 56);
    PromptPool pool = init_prompt_pool(1, 2, 2, 3, 43);
    Rng rng(19);
    Tensor f = Tensor::randn({3, 6}, rng, 1.0);
    std::vector<EncoderLayer> layers{layer};

    auto forward_loss = [&]() {
        Tape tape;
        Value out = encoder_forward(tape, layers, pool, tape.input(f));
        return tape.value(sum_all(gelu(out)))[0];
    };
    for (Parameter* p : layers[0].parameters()) {
        Tape tape;
        Value out = encoder_forward(tape, layers, pool, tape.input(f));
        tape.backward(sum_all(gelu(out)));
        Tensor analytic = p->grad;
        for (Parameter* q : layers[0].parameters()) q->zero_grad();
        for (Parameter* q : pool.parameters()) q->zero_grad();
        double err = finite_diff_check_param(forward_loss, *p, analytic, 1e-5);
        CHECK(err < 1e-4);
    }
}
