#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fed3d/federation.hpp"

namespace fed3d {

// Every experiment knob, resolvable from a key=value file plus overrides.
// The canonical echo (defaults included) is the reproducibility contract:
// echo + seed reproduce any run byte for byte.
struct ExperimentConfig {
    // federation
    std::size_t clients = 20;
    double alpha = 0.25;
    std::size_t rounds = 100;
    std::size_t local_epochs = 4;
    std::size_t batch_size = 8;
    double lr_prompts = 3.5e-4;
    double lr_head = 7.0e-4;
    double lr_backbone = 3.5e-4;
    std::string optimizer = "sgd";  // sgd | adamw
    double weight_decay = 0.0;
    RunMode mode = RunMode::Fed3d;
    CorrectionMode correction = CorrectionMode::LocalGlobal;
    std::size_t workers = 1;
    // model
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t prompt_len = 8;
    std::size_t d_model = 16;
    std::size_t d_head = 8;
    std::size_t tokens = 8;
    std::size_t points = 32;
    std::size_t classes = 10;
    // data
    std::size_t samples_per_class = 40;
    double imbalance_ratio = 1.0;
    std::vector<std::size_t> class_counts;  // optional explicit override
    double noise_scale = 0.05;
    double class_fraction = 0.7;
    double sample_fraction = 0.7;
    bool strict_disjoint = false;
    // pretrain
    std::size_t pretrain_epochs = 40;
    double pretrain_lr = 0.05;
    std::size_t pretrain_samples_per_class = 30;
    std::size_t pretrain_batch = 16;
    // io
    std::string checkpoint;  // backbone checkpoint path (run requires it)
    std::string out_dir = ".";
    std::uint64_t seed = 1;

    static ExperimentConfig from_file(const std::string& path);
    // Assign one key; unknown keys or malformed values raise ConfigError.
    void set(const std::string& key, const std::string& value);
    void validate() const;

    std::string echo() const;  // canonical key=value text, fixed order
    std::uint64_t config_hash() const;

    std::vector<std::size_t> resolved_class_counts() const;
    DatasetSpec dataset_spec(std::uint64_t variant) const;
    ModelConfig model_config() const;
    RunSettings run_settings() const;
};

RunMode parse_run_mode(const std::string& s);
CorrectionMode parse_correction_mode(const std::string& s);

}  // namespace fed3d
