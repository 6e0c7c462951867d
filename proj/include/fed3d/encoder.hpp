#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fed3d/autodiff.hpp"

namespace fed3d {

// One (key, value) prefix pair for one attention head, each [p, d_head].
struct HeadPromptPair {
    Parameter key;
    Parameter value;
};

// Per-layer, per-head prefix prompts: the only backbone-adjacent state a
// client trains and communicates.
struct PromptPool {
    std::size_t prompt_len = 0;
    std::size_t d_head = 0;
    std::vector<std::vector<HeadPromptPair>> layers;  // [L][H]

    std::size_t num_layers() const { return layers.size(); }
    std::size_t num_heads() const { return layers.empty() ? 0 : layers[0].size(); }
    std::size_t parameter_count() const;

    // Flat view in canonical order: layer-major, head-major, K then V.
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
};

// Zero-mean init at scale 0.02, fully determined by the seed.
PromptPool init_prompt_pool(std::size_t num_layers, std::size_t num_heads,
                            std::size_t prompt_len, std::size_t d_head, std::uint64_t seed);

// Transformer encoder layer: per-head Q/K/V projections, output projection,
// and a two-layer MLP. No normalization layers; residuals only.
struct EncoderLayer {
    std::size_t d_model = 0;
    std::size_t n_heads = 0;
    std::size_t d_head = 0;
    std::vector<Parameter> w_q, w_k, w_v;  // per head, [d_model, d_head]
    Parameter w_o;                         // [H*d_head, d_model]
    Parameter mlp_w1, mlp_b1;              // [d_model, hidden], [hidden]
    Parameter mlp_w2, mlp_b2;              // [hidden, d_model], [d_model]

    void set_trainable(bool trainable);
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
};

EncoderLayer make_encoder_layer(std::size_t d_model, std::size_t n_heads, std::size_t d_head,
                                std::size_t hidden, std::size_t layer_index, Rng& rng);

// Per-head softmax attention matrices of the most recent forward, rows over
// the (possibly prompt-extended) key axis.
struct AttentionCapture {
    std::vector<Tensor> rows;
};

// Plain multi-head self-attention block on f_prev[T, d_model].
Value mhsa_forward(Tape& tape, EncoderLayer& layer, Value f_prev,
                   AttentionCapture* capture = nullptr);

// Prefix variant: keys/values per head are extended by p prompt rows in
// head space; queries and output sequence length stay untouched. With
// p == 0 the computation is bitwise identical to mhsa_forward.
Value prefix_mhsa_forward(Tape& tape, EncoderLayer& layer,
                          std::vector<HeadPromptPair>* prompts, Value f_prev,
                          AttentionCapture* capture = nullptr);

// Sequential prefix blocks; pool depth must equal the layer count.
Value encoder_forward(Tape& tape, std::vector<EncoderLayer>& layers, PromptPool& pool,
                      Value f0, AttentionCapture* capture = nullptr);

}  // namespace fed3d
