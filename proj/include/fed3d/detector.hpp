#pragma once

#include <cstdint>
#include <vector>

#include "fed3d/encoder.hpp"

namespace fed3d {

// One labelled point set.
struct PointSample {
    Tensor points;  // [N_pts, 3]
    int label = 0;
};

struct ModelConfig {
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t prompt_len = 8;
    std::size_t d_model = 16;
    std::size_t d_head = 8;
    std::size_t tokens = 8;
    std::size_t points = 32;
    std::size_t classes = 10;
    bool prompts_enabled = true;

    std::size_t mlp_hidden() const { return 2 * d_model; }
};

enum class ParamGroup { Backbone, Head, Prompt };

// The full classifier with its communication split: frozen backbone
// (point embedder + encoder stack), trainable head-side weights, and the
// prompt pool. Deep-copyable; clients work on private copies.
struct ModelSplit {
    ModelConfig cfg;

    // backbone
    Parameter embed_w, embed_b;        // [3, d_model], [d_model]
    std::vector<EncoderLayer> layers;
    // head-side trainables (communicated alongside prompts)
    Parameter proj_w, proj_b;          // embedder output projection
    Parameter pos;                     // learned positional table [T, d_model]
    Parameter head_w, head_b;          // classifier [d_model, O], [O]
    // prompts
    PromptPool prompts;

    std::vector<Parameter*> backbone_parameters();
    std::vector<Parameter*> head_parameters();
    std::vector<Parameter*> prompt_parameters();
    std::vector<Parameter*> all_parameters();
    std::vector<const Parameter*> backbone_parameters() const;
    std::vector<const Parameter*> head_parameters() const;
    std::vector<const Parameter*> prompt_parameters() const;

    void freeze_backbone(bool frozen);
    void zero_all_grads();
};

ModelSplit make_model(const ModelConfig& cfg, std::uint64_t seed);

// Groups points into T tokens: per-point affine + smooth nonlinearity,
// per-group max pool, output projection, learned positional table.
Value embed_points(Tape& tape, ModelSplit& model, const Tensor& points);
Value embed_points(Tape& tape, ModelSplit& model, Value pts);

// embed -> prefix encoder -> mean pool -> affine head; logits [1, O].
Value detector_forward(Tape& tape, ModelSplit& model, const PointSample& sample,
                       AttentionCapture* capture = nullptr);

struct Census {
    std::size_t total = 0;
    std::size_t frozen = 0;
    std::size_t communicated = 0;
};

// Exact parameter counts; communicated is the trainable (= payload) set.
Census parameter_census(const ModelSplit& model);

// One line per parameter tensor: name, shape, group. Keeps the census
// auditable from run output.
std::vector<std::string> census_listing(const ModelSplit& model);

}  // namespace fed3d
