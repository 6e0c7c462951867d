#include "fed3d/encoder.hpp"

#include <cmath>
#include <string>

#include "fed3d/common.hpp"

namespace fed3d {

std::size_t PromptPool::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers)
        for (const auto& pair : layer) n += pair.key.value.numel() + pair.value.value.numel();
    return n;
}

std::vector<Parameter*> PromptPool::parameters() {
    std::vector<Parameter*> out;
    for (auto& layer : layers)
        for (auto& pair : layer) {
            out.push_back(&pair.key);
            out.push_back(&pair.value);
        }
    return out;
}

std::vector<const Parameter*> PromptPool::parameters() const {
    std::vector<const Parameter*> out;
    for (const auto& layer : layers)
        for (const auto& pair : layer) {
            out.push_back(&pair.key);
            out.push_back(&pair.value);
        }
    return out;
}

PromptPool init_prompt_pool(std::size_t num_layers, std::size_t num_heads,
                            std::size_t prompt_len, std::size_t d_head, std::uint64_t seed) {
    if (num_layers < 1 || num_heads < 1 || d_head < 1) {
        throw ConfigError("init_prompt_pool: extents must be >= 1 (got L=" +
                          std::to_string(num_layers) + ", H=" + std::to_string(num_heads) +
                          ", d_head=" + std::to_string(d_head) + ")");
    }
    PromptPool pool;
    pool.prompt_len = prompt_len;
    pool.d_head = d_head;
    pool.layers.resize(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) {
        pool.layers[l].reserve(num_heads);
        for (std::size_t h = 0; h < num_heads; ++h) {
            Rng rng = derive_rng(seed, {0x9909ULL, l, h});
            std::string base = "prompt.l" + std::to_string(l) + ".h" + std::to_string(h);
            Tensor k = Tensor::randn({prompt_len, d_head}, rng, 0.02);
            Tensor v = Tensor::randn({prompt_len, d_head}, rng, 0.02);
            pool.layers[l].push_back(HeadPromptPair{Parameter(base + ".k", std::move(k)),
                                                    Parameter(base + ".v", std::move(v))});
        }
    }
    return pool;
}

void EncoderLayer::set_trainable(bool trainable) {
    for (Parameter* p : parameters()) p->trainable = trainable;
}

std::vector<Parameter*> EncoderLayer::parameters() {
    std::vector<Parameter*> out;
    for (std::size_t h = 0; h < n_heads; ++h) {
        out.push_back(&w_q[h]);
        out.push_back(&w_k[h]);
        out.push_back(&w_v[h]);
    }
    out.push_back(&w_o);
    out.push_back(&mlp_w1);
    out.push_back(&mlp_b1);
    out.push_back(&mlp_w2);
    out.push_back(&mlp_b2);
    return out;
}

std::vector<const Parameter*> EncoderLayer::parameters() const {
    auto mut = const_cast<EncoderLayer*>(this)->parameters();
    return std::vector<const Parameter*>(mut.begin(), mut.end());
}

EncoderLayer make_encoder_layer(std::size_t d_model, std::size_t n_heads, std::size_t d_head,
                                std::size_t hidden, std::size_t layer_index, Rng& rng) {
    EncoderLayer layer;
    layer.d_model = d_model;
    layer.n_heads = n_heads;
    layer.d_head = d_head;
    std::string base = "encoder.l" + std::to_string(layer_index);
    auto glorot = [&rng](std::vector<std::size_t> shape) {
        double fan = static_cast<double>(shape[0] + shape[1]);
        return Tensor::randn(shape, rng, std::sqrt(2.0 / fan));
    };
    for (std::size_t h = 0; h < n_heads; ++h) {
        std::string hb = base + ".h" + std::to_string(h);
        layer.w_q.emplace_back(hb + ".wq", glorot({d_model, d_head}));
        layer.w_k.emplace_back(hb + ".wk", glorot({d_model, d_head}));
        layer.w_v.emplace_back(hb + ".wv", glorot({d_model, d_head}));
    }
    layer.w_o = Parameter(base + ".wo", glorot({n_heads * d_head, d_model}));
    layer.mlp_w1 = Parameter(base + ".mlp_w1", glorot({d_model, hidden}));
    layer.mlp_b1 = Parameter(base + ".mlp_b1", Tensor::zeros({hidden}));
    layer.mlp_w2 = Parameter(base + ".mlp_w2", glorot({hidden, d_model}));
    layer.mlp_b2 = Parameter(base + ".mlp_b2", Tensor::zeros({d_model}));
    return layer;
}

Value prefix_mhsa_forward(Tape& tape, EncoderLayer& layer,
                          std::vector<HeadPromptPair>* prompts, Value f_prev,
                          AttentionCapture* capture) {
    const Tensor& fv = tape.value(f_prev);
    if (fv.rank() != 2 || fv.cols() != layer.d_model) {
        throw ShapeError("mhsa: input " + shape_str(fv) + " does not match d_model=" +
                         std::to_string(layer.d_model));
    }
    if (prompts && prompts->size() != layer.n_heads) {
        throw ConfigError("prefix prompts for " + std::to_string(prompts->size()) +
                          " heads, layer has " + std::to_string(layer.n_heads));
    }
    bool use_prompts = prompts && !prompts->empty() && (*prompts)[0].key.value.rows() > 0;
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(layer.d_head));

    std::vector<Value> heads;
    heads.reserve(layer.n_heads);
    for (std::size_t h = 0; h < layer.n_heads; ++h) {
        Value q = matmul(f_prev, tape.param(layer.w_q[h]));
        Value k = matmul(f_prev, tape.param(layer.w_k[h]));
        Value v = matmul(f_prev, tape.param(layer.w_v[h]));
        if (use_prompts) {
            k = concat_rows(k, tape.param((*prompts)[h].key));
            v = concat_rows(v, tape.param((*prompts)[h].value));
        }
        Value attn = softmax_rows(scale(matmul_nt(q, k), inv_sqrt_d));
        if (capture) capture->rows.push_back(tape.value(attn));
        heads.push_back(matmul(attn, v));
    }
    Value merged = layer.n_heads == 1 ? heads[0] : concat_cols(heads);
    Value attended = add(f_prev, matmul(merged, tape.param(layer.w_o)));
    Value hidden = gelu(add_rowvec(matmul(attended, tape.param(layer.mlp_w1)),
                                   tape.param(layer.mlp_b1)));
    Value mlp_out = add_rowvec(matmul(hidden, tape.param(layer.mlp_w2)),
                               tape.param(layer.mlp_b2));
    return add(f_prev, mlp_out);
}

Value mhsa_forward(Tape& tape, EncoderLayer& layer, Value f_prev, AttentionCapture* capture) {
    return prefix_mhsa_forward(tape, layer, nullptr, f_prev, capture);
}

Value encoder_forward(Tape& tape, std::vector<EncoderLayer>& layers, PromptPool& pool,
                      Value f0, AttentionCapture* capture) {
    if (pool.num_layers() != layers.size()) {
        throw ConfigError("encoder_forward: prompt pool depth " +
                          std::to_string(pool.num_layers()) + " vs " +
                          std::to_string(layers.size()) + " layers");
    }
    Value f = f0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        f = prefix_mhsa_forward(tape, layers[l], &pool.layers[l], f, capture);
    }
    return f;
}

}  // namespace fed3d
