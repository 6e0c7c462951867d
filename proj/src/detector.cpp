#include "fed3d/detector.hpp"

#include <cmath>
#include <string>

#include "fed3d/common.hpp"

namespace fed3d {

std::vector<Parameter*> ModelSplit::backbone_parameters() {
    std::vector<Parameter*> out{&embed_w, &embed_b};
    for (auto& layer : layers)
        for (Parameter* p : layer.parameters()) out.push_back(p);
    return out;
}

std::vector<Parameter*> ModelSplit::head_parameters() {
    return {&proj_w, &proj_b, &pos, &head_w, &head_b};
}

std::vector<Parameter*> ModelSplit::prompt_parameters() { return prompts.parameters(); }

std::vector<Parameter*> ModelSplit::all_parameters() {
    std::vector<Parameter*> out = backbone_parameters();
    for (Parameter* p : head_parameters()) out.push_back(p);
    for (Parameter* p : prompt_parameters()) out.push_back(p);
    return out;
}

std::vector<const Parameter*> ModelSplit::backbone_parameters() const {
    auto mut = const_cast<ModelSplit*>(this)->backbone_parameters();
    return std::vector<const Parameter*>(mut.begin(), mut.end());
}

std::vector<const Parameter*> ModelSplit::head_parameters() const {
    auto mut = const_cast<ModelSplit*>(this)->head_parameters();
    return std::vector<const Parameter*>(mut.begin(), mut.end());
}

std::vector<const Parameter*> ModelSplit::prompt_parameters() const {
    auto mut = const_cast<ModelSplit*>(this)->prompt_parameters();
    return std::vector<const Parameter*>(mut.begin(), mut.end());
}

void ModelSplit::freeze_backbone(bool frozen) {
    for (Parameter* p : backbone_parameters()) p->trainable = !frozen;
}

void ModelSplit::zero_all_grads() {
    for (Parameter* p : all_parameters()) p->zero_grad();
}

ModelSplit make_model(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.tokens == 0 || cfg.points % cfg.tokens != 0) {
        throw ConfigError("model: points=" + std::to_string(cfg.points) +
                          " not divisible by tokens=" + std::to_string(cfg.tokens));
    }
    ModelSplit m;
    m.cfg = cfg;
    Rng rng = derive_rng(seed, {0x30D31ULL});
    auto glorot = [&rng](std::vector<std::size_t> shape) {
        double fan = static_cast<double>(shape[0] + shape[1]);
        return Tensor::randn(shape, rng, std::sqrt(2.0 / fan));
    };
    m.embed_w = Parameter("embed.w", glorot({3, cfg.d_model}));
    m.embed_b = Parameter("embed.b", Tensor::zeros({cfg.d_model}));
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        m.layers.push_back(
            make_encoder_layer(cfg.d_model, cfg.heads, cfg.d_head, cfg.mlp_hidden(), l, rng));
    }
    m.proj_w = Parameter("proj.w", glorot({cfg.d_model, cfg.d_model}));
    m.proj_b = Parameter("proj.b", Tensor::zeros({cfg.d_model}));
    m.pos = Parameter("pos", Tensor::randn({cfg.tokens, cfg.d_model}, rng, 0.02));
    m.head_w = Parameter("head.w", glorot({cfg.d_model, cfg.classes}));
    m.head_b = Parameter("head.b", Tensor::zeros({cfg.classes}));
    std::size_t p = cfg.prompts_enabled ? cfg.prompt_len : 0;
    m.prompts = init_prompt_pool(cfg.layers, cfg.heads, p, cfg.d_head, seed);
    return m;
}

Value embed_points(Tape& tape, ModelSplit& model, Value pts) {
    const Tensor& points = tape.value(pts);
    if (points.rank() != 2 || points.cols() != 3) {
        throw ShapeError("embed_points: expected [N,3] points, got " + shape_str(points));
    }
    if (points.rows() % model.cfg.tokens != 0) {
        throw ConfigError("embed_points: " + std::to_string(points.rows()) +
                          " points not divisible into " + std::to_string(model.cfg.tokens) +
                          " tokens");
    }
    Value feat = gelu(add_rowvec(matmul(pts, tape.param(model.embed_w)),
                                 tape.param(model.embed_b)));
    Value tokens = group_maxpool(feat, model.cfg.tokens);
    Value projected = add_rowvec(matmul(tokens, tape.param(model.proj_w)),
                                 tape.param(model.proj_b));
    return add(projected, tape.param(model.pos));
}

Value embed_points(Tape& tape, ModelSplit& model, const Tensor& points) {
    return embed_points(tape, model, tape.input(points, false));
}

Value detector_forward(Tape& tape, ModelSplit& model, const PointSample& sample,
                       AttentionCapture* capture) {
    Value f = embed_points(tape, model, sample.points);
    f = encoder_forward(tape, model.layers, model.prompts, f, capture);
    Value pooled = mean_rows(f);
    return add_rowvec(matmul(pooled, tape.param(model.head_w)), tape.param(model.head_b));
}

Census parameter_census(const ModelSplit& model) {
    Census c;
    for (const Parameter* p : const_cast<ModelSplit&>(model).all_parameters()) {
        c.total += p->value.numel();
        if (p->trainable)
            c.communicated += p->value.numel();
        else
            c.frozen += p->value.numel();
    }
    return c;
}

std::vector<std::string> census_listing(const ModelSplit& model) {
    std::vector<std::string> out;
    auto& m = const_cast<ModelSplit&>(model);
    auto emit = [&out](Parameter* p, const char* group) {
        out.push_back(p->name + " " + shape_str(p->value) + " group=" + group +
                      " count=" + std::to_string(p->value.numel()) +
                      (p->trainable ? "" : " frozen"));
    };
    for (Parameter* p : m.backbone_parameters()) emit(p, "backbone");
    for (Parameter* p : m.head_parameters()) emit(p, "head");
    for (Parameter* p : m.prompt_parameters()) emit(p, "prompt");
    return out;
}

}  // namespace fed3d
