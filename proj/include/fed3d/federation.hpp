#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fed3d/dataset.hpp"
#include "fed3d/wire.hpp"

namespace fed3d {

enum class RunMode { Fed3d, FedAvgFull, LocalOnly, Centralized };
enum class CorrectionMode { Off, Local, LocalGlobal };

std::string to_string(RunMode mode);
std::string to_string(CorrectionMode mode);

// Uniform selection of round(alpha * C) distinct clients, ascending,
// depending only on (seed, round).
std::vector<std::size_t> select_clients(std::uint64_t seed, std::size_t round,
                                        std::size_t num_clients, double alpha);

struct TrainOptions {
    std::size_t epochs = 4;
    std::size_t batch_size = 8;
    double lr_prompts = 3.5e-4;
    double lr_head = 7.0e-4;
    double lr_backbone = 3.5e-4;
    bool adamw = false;
    double weight_decay = 0.0;
    CorrectionMode correction = CorrectionMode::LocalGlobal;
    std::uint64_t rng_seed = 0;  // fully derived stream seed for batch order
};

struct LocalTrainResult {
    ClassStats stats;            // per-class measures from the final epoch
    bool stats_flagged = false;  // epochs == 0: nothing was measured
    std::size_t batches_skipped = 0;
};

// E epochs of mini-batch SGD (or AdamW when flagged) on the weighted loss
// with the current global coefficients. Only trainable parameters move.
LocalTrainResult local_train(ModelSplit& model, const Dataset& dataset,
                             const std::vector<std::size_t>& indices,
                             const std::vector<double>& global_coeffs,
                             const TrainOptions& opts);

struct AggregateEntry {
    std::size_t client_id = 0;
    Payload payload;
    std::size_t dataset_size = 0;
};

// Tensor-wise weighted average with weights |D_c| / sum |D_c|, reduced in
// ascending client-id order. Shape heterogeneity raises ProtocolError
// naming the offending client.
Payload aggregate(std::vector<AggregateEntry> entries);

struct EvalResult {
    double accuracy = 0.0;
    double macro_recall = 0.0;
    std::vector<double> per_class_recall;
};

EvalResult evaluate(ModelSplit& model, const Dataset& dataset,
                    const std::vector<std::size_t>& indices);

struct RoundMetrics {
    std::size_t round = 0;
    double accuracy = 0.0;
    double macro_recall = 0.0;
    std::vector<double> per_class_recall;
    std::uint64_t up_bytes = 0, down_bytes = 0;
    std::uint64_t up_params = 0, down_params = 0;
    std::vector<std::size_t> selected;
    double wall_seconds = 0.0;
};

struct RunSettings {
    std::size_t num_clients = 20;
    double alpha = 0.25;
    std::size_t rounds = 100;
    TrainOptions train;
    RunMode mode = RunMode::Fed3d;
    std::size_t workers = 1;
    std::uint64_t seed = 1;
};

struct RunResult {
    std::vector<RoundMetrics> rounds;
    Census census;
    std::uint64_t up_bytes_total = 0, down_bytes_total = 0;
    std::uint64_t up_params_total = 0, down_params_total = 0;
    std::vector<double> final_global_coeffs;
};

// Algorithm loop: select -> broadcast -> local train (parallel workers) ->
// aggregate -> refresh global coefficients -> evaluate. Deterministic for
// a given (settings, seed) at any worker count.
RunResult run_federation(const RunSettings& settings, const Dataset& dataset,
                         const PartitionPlan& plan, ModelSplit& global_model);

struct CommReport {
    std::uint64_t up_bytes = 0, down_bytes = 0;
    std::uint64_t up_params = 0, down_params = 0;
    std::size_t payload_params = 0;     // per-payload communicated parameters
    std::size_t full_model_params = 0;  // census total
    double ratio_vs_full = 1.0;         // communicated / total, exact
};

CommReport comm_report(const RunResult& result);

}  // namespace fed3d
