#include "fed3d/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "fed3d/common.hpp"

namespace fed3d {

std::string to_string(RunMode mode) {
    switch (mode) {
        case RunMode::Fed3d: return "fed3d";
        case RunMode::FedAvgFull: return "fedavg-full";
        case RunMode::LocalOnly: return "local-only";
        case RunMode::Centralized: return "centralized";
    }
    return "?";
}

std::string to_string(CorrectionMode mode) {
    switch (mode) {
        case CorrectionMode::Off: return "off";
        case CorrectionMode::Local: return "local";
        case CorrectionMode::LocalGlobal: return "local_global";
    }
    return "?";
}

std::vector<std::size_t> select_clients(std::uint64_t seed, std::size_t round,
                                        std::size_t num_clients, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw ConfigError("select_clients: alpha " + std::to_string(alpha) +
                          " outside (0,1]");
    }
    auto want = static_cast<std::size_t>(
        std::llround(alpha * static_cast<double>(num_clients)));
    want = std::max<std::size_t>(1, std::min(want, num_clients));
    Rng rng = derive_rng(seed, {0x5E1EC7ULL, round});
    return rng.sample_without_replacement(num_clients, want);
}

namespace {

// Group learning-rate lookup plus optional AdamW state, scoped to one
// local training call (clients are stateless across rounds).
class Optimizer {
  public:
    Optimizer(const TrainOptions& opts, ModelSplit& model) : opts_(opts) {
        for (Parameter* p : model.prompt_parameters()) lr_[p] = opts.lr_prompts;
        for (Parameter* p : model.head_parameters()) lr_[p] = opts.lr_head;
        for (Parameter* p : model.backbone_parameters()) lr_[p] = opts.lr_backbone;
    }

    void step(ModelSplit& model) {
        ++t_;
        for (Parameter* p : model.all_parameters()) {
            if (!p->trainable) continue;
            double lr = lr_.at(p);
            if (!opts_.adamw) {
                p->value.add_scaled(p->grad, -lr);
            } else {
                auto& [m, v] = state_[p];
                if (m.numel() == 0) {
                    m = Tensor::zeros(p->value.shape());
                    v = Tensor::zeros(p->value.shape());
                }
                double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
                double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
                for (std::size_t i = 0; i < p->value.numel(); ++i) {
                    double g = p->grad[i];
                    m[i] = b1 * m[i] + (1.0 - b1) * g;
                    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                    double mh = m[i] / bc1;
                    double vh = v[i] / bc2;
                    p->value[i] -=
                        lr * (mh / (std::sqrt(vh) + eps) + opts_.weight_decay * p->value[i]);
                }
            }
            p->zero_grad();
        }
    }

  private:
    const TrainOptions& opts_;
    std::unordered_map<Parameter*, double> lr_;
    std::unordered_map<Parameter*, std::pair<Tensor, Tensor>> state_;
    std::uint64_t t_ = 0;
};

}  // namespace

LocalTrainResult local_train(ModelSplit& model, const Dataset& dataset,
                             const std::vector<std::size_t>& indices,
                             const std::vector<double>& global_coeffs,
                             const TrainOptions& opts) {
    LocalTrainResult result;
    if (opts.epochs == 0) {
        result.stats_flagged = true;
        result.stats.per_class.resize(model.cfg.classes);
        log_warn("local_train: zero epochs, returning parameters unchanged");
        return result;
    }
    if (indices.empty()) throw ConfigError("local_train: empty client dataset");
    if (opts.batch_size == 0) throw ConfigError("local_train: batch size must be >= 1");

    Optimizer optimizer(opts, model);
    Rng order_rng(opts.rng_seed);
    Tape tape;
    std::vector<double> final_epoch_measures;
    std::vector<int> final_epoch_labels;

    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        std::vector<std::size_t> order = indices;
        order_rng.shuffle(order);
        bool last_epoch = epoch + 1 == opts.epochs;
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            std::size_t b = std::min(opts.batch_size, order.size() - start);
            if (b == 0) {
                ++result.batches_skipped;
                log_warn("local_train: empty batch skipped");
                continue;
            }
            tape.reset();
            std::vector<Value> losses;
            std::vector<double> measures(b);
            std::vector<int> labels(b);
            losses.reserve(b);
            for (std::size_t i = 0; i < b; ++i) {
                const PointSample& sample = dataset.samples[order[start + i]];
                Value logits = detector_forward(tape, model, sample);
                CrossEntropyOut ce = cross_entropy(logits, {sample.label});
                if (!std::isfinite(tape.value(ce.loss)[0])) {
                    throw DomainError(
                        "local_train: non-finite loss in epoch " + std::to_string(epoch + 1) +
                        " (training diverged; lower the learning rates)");
                }
                losses.push_back(ce.loss);
                measures[i] = grad_measure(ce.true_prob[0]);
                labels[i] = sample.label;
            }
            std::vector<double> rhat;
            switch (opts.correction) {
                case CorrectionMode::Off: rhat.assign(b, 1.0); break;
                case CorrectionMode::Local: rhat = local_coefficients(measures); break;
                case CorrectionMode::LocalGlobal:
                    rhat = corrected_coefficients(measures, labels, global_coeffs);
                    break;
            }
            Value loss = weighted_loss(losses, rhat);
            tape.backward(loss);
            optimizer.step(model);
            if (last_epoch) {
                final_epoch_measures.insert(final_epoch_measures.end(), measures.begin(),
                                            measures.end());
                final_epoch_labels.insert(final_epoch_labels.end(), labels.begin(),
                                          labels.end());
            }
        }
    }
    result.stats = class_distribution_stats(final_epoch_measures, final_epoch_labels,
                                            model.cfg.classes);
    return result;
}

Payload aggregate(std::vector<AggregateEntry> entries) {
    if (entries.empty()) throw ProtocolError("aggregate: no payloads");
    std::sort(entries.begin(), entries.end(),
              [](const AggregateEntry& a, const AggregateEntry& b) {
                  return a.client_id < b.client_id;
              });
    const Payload& ref = entries[0].payload;
    double total = 0.0;
    for (const AggregateEntry& e : entries) {
        const Payload& p = e.payload;
        bool shape_ok = p.prompt_tensors.size() == ref.prompt_tensors.size() &&
                        p.head_tensors.size() == ref.head_tensors.size();
        if (shape_ok) {
            for (std::size_t i = 0; i < p.prompt_tensors.size() && shape_ok; ++i)
                shape_ok = p.prompt_tensors[i].same_shape(ref.prompt_tensors[i]);
            for (std::size_t i = 0; i < p.head_tensors.size() && shape_ok; ++i)
                shape_ok = p.head_tensors[i].same_shape(ref.head_tensors[i]);
        }
        if (!shape_ok) {
            throw ProtocolError("aggregate: payload from client " +
                                std::to_string(e.client_id) +
                                " is not shape-homogeneous with the first payload");
        }
        if (e.dataset_size == 0) {
            throw ProtocolError("aggregate: client " + std::to_string(e.client_id) +
                                " reports zero dataset size");
        }
        total += static_cast<double>(e.dataset_size);
    }
    Payload out = ref;
    for (Tensor& t : out.prompt_tensors) t.fill(0.0);
    for (Tensor& t : out.head_tensors) t.fill(0.0);
    out.has_stats = false;
    out.class_stats.clear();
    for (const AggregateEntry& e : entries) {
        double w = static_cast<double>(e.dataset_size) / total;
        for (std::size_t i = 0; i < out.prompt_tensors.size(); ++i)
            out.prompt_tensors[i].add_scaled(e.payload.prompt_tensors[i], w);
        for (std::size_t i = 0; i < out.head_tensors.size(); ++i)
            out.head_tensors[i].add_scaled(e.payload.head_tensors[i], w);
    }
    return out;
}

EvalResult evaluate(ModelSplit& model, const Dataset& dataset,
                    const std::vector<std::size_t>& indices) {
    EvalResult res;
    std::size_t o_count = model.cfg.classes;
    std::vector<std::size_t> correct(o_count, 0), totals(o_count, 0);
    Tape tape;
    std::size_t hits = 0;
    for (std::size_t idx : indices) {
        const PointSample& s = dataset.samples[idx];
        tape.reset();
        Value logits = detector_forward(tape, model, s);
        const Tensor& lv = tape.value(logits);
        std::size_t best = 0;
        for (std::size_t j = 1; j < lv.cols(); ++j)
            if (lv.at(0, j) > lv.at(0, best)) best = j;
        totals[static_cast<std::size_t>(s.label)] += 1;
        if (best == static_cast<std::size_t>(s.label)) {
            correct[best] += 1;
            ++hits;
        }
    }
    res.accuracy = indices.empty()
                       ? 0.0
                       : static_cast<double>(hits) / static_cast<double>(indices.size());
    res.per_class_recall.assign(o_count, 0.0);
    double recall_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t o = 0; o < o_count; ++o) {
        if (totals[o] > 0) {
            res.per_class_recall[o] =
                static_cast<double>(correct[o]) / static_cast<double>(totals[o]);
            recall_sum += res.per_class_recall[o];
            ++present;
        }
    }
    res.macro_recall = present == 0 ? 0.0 : recall_sum / static_cast<double>(present);
    return res;
}

namespace {

struct ClientOutcome {
    std::size_t client_id = 0;
    Payload payload;
    std::vector<std::uint8_t> bytes;
    ClassStats stats;
    bool stats_flagged = false;
};

// Runs `fn(i)` for i in [0, n) over `workers` threads. Results must be
// written into position i only; order of execution is irrelevant to the
// outcome, which keeps parallel runs bitwise equal to serial ones.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, workers);
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    std::size_t spawn = std::min(workers, n);
    for (std::size_t w = 0; w < spawn; ++w) {
        threads.emplace_back([&]() {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

RunResult run_federation(const RunSettings& settings, const Dataset& dataset,
                         const PartitionPlan& plan, ModelSplit& global_model) {
    RunResult result;
    result.census = parameter_census(global_model);
    std::size_t o_count = global_model.cfg.classes;
    std::vector<double> global_coeffs(o_count, 1.0);

    bool communicating =
        settings.mode == RunMode::Fed3d || settings.mode == RunMode::FedAvgFull;

    // Persistent per-client models for local-only; single model for
    // centralized training (the global model itself).
    std::vector<ModelSplit> local_models;
    if (settings.mode == RunMode::LocalOnly) {
        local_models.assign(settings.num_clients, global_model);
    }

    for (std::size_t round = 1; round <= settings.rounds; ++round) {
        auto t0 = std::chrono::steady_clock::now();
        RoundMetrics metrics;
        metrics.round = round;

        if (communicating) {
            metrics.selected =
                select_clients(settings.seed, round, settings.num_clients, settings.alpha);
            std::size_t s_count = metrics.selected.size();

            Payload broadcast = make_payload(global_model, PayloadScope::Trainable);
            std::vector<std::uint8_t> broadcast_bytes = serialize_payload(broadcast);
            metrics.down_bytes = static_cast<std::uint64_t>(broadcast_bytes.size()) * s_count;
            metrics.down_params =
                static_cast<std::uint64_t>(broadcast.parameter_count()) * s_count;

            std::vector<ClientOutcome> outcomes(s_count);
            parallel_for(s_count, settings.workers, [&](std::size_t i) {
                std::size_t cid = metrics.selected[i];
                try {
                    ModelSplit client = global_model;
                    Payload rx = deserialize_payload(broadcast_bytes);
                    load_payload(client, rx, PayloadScope::Trainable,
                                 "client " + std::to_string(cid));
                    TrainOptions opts = settings.train;
                    opts.rng_seed = mix_seed(settings.seed, {0xC117ULL, round, cid});
                    LocalTrainResult lt = local_train(client, dataset,
                                                      plan.client_samples[cid],
                                                      global_coeffs, opts);
                    ClientOutcome& out = outcomes[i];
                    out.client_id = cid;
                    out.stats = lt.stats;
                    out.stats_flagged = lt.stats_flagged;
                    bool attach_stats =
                        settings.train.correction == CorrectionMode::LocalGlobal &&
                        !lt.stats_flagged;
                    out.payload = make_payload(client, PayloadScope::Trainable,
                                               attach_stats ? &lt.stats : nullptr);
                    out.bytes = serialize_payload(out.payload);
                } catch (const std::exception& e) {
                    // no partial aggregation: the whole round aborts
                    throw std::runtime_error("round " + std::to_string(round) + ", client " +
                                             std::to_string(cid) + ": " + e.what());
                }
            });

            std::vector<AggregateEntry> entries;
            std::vector<ClassStats> round_stats;
            entries.reserve(s_count);
            for (ClientOutcome& out : outcomes) {
                metrics.up_bytes += out.bytes.size();
                metrics.up_params += out.payload.parameter_count();
                // aggregation consumes what actually crossed the wire
                Payload wire_copy = deserialize_payload(out.bytes);
                entries.push_back(AggregateEntry{out.client_id, std::move(wire_copy),
                                                 plan.client_samples[out.client_id].size()});
                if (!out.stats_flagged) round_stats.push_back(out.stats);
            }
            Payload merged = aggregate(std::move(entries));
            load_payload(global_model, merged, PayloadScope::Trainable, "server");

            if (settings.train.correction == CorrectionMode::LocalGlobal &&
                !round_stats.empty()) {
                global_coeffs = global_coefficients(round_stats, o_count, global_coeffs);
            }
            EvalResult ev = evaluate(global_model, dataset, dataset.test_indices);
            metrics.accuracy = ev.accuracy;
            metrics.macro_recall = ev.macro_recall;
            metrics.per_class_recall = ev.per_class_recall;
        } else if (settings.mode == RunMode::Centralized) {
            TrainOptions opts = settings.train;
            opts.rng_seed = mix_seed(settings.seed, {0xC117ULL, round, 0xCE27ULL});
            LocalTrainResult lt = local_train(global_model, dataset, dataset.train_indices,
                                              global_coeffs, opts);
            // single-party analog of the server refresh (S = 1)
            if (settings.train.correction == CorrectionMode::LocalGlobal &&
                !lt.stats_flagged) {
                global_coeffs = global_coefficients({lt.stats}, o_count, global_coeffs);
            }
            EvalResult ev = evaluate(global_model, dataset, dataset.test_indices);
            metrics.accuracy = ev.accuracy;
            metrics.macro_recall = ev.macro_recall;
            metrics.per_class_recall = ev.per_class_recall;
        } else {  // LocalOnly: every client trains, no communication
            parallel_for(settings.num_clients, settings.workers, [&](std::size_t cid) {
                TrainOptions opts = settings.train;
                opts.rng_seed = mix_seed(settings.seed, {0xC117ULL, round, cid});
                local_train(local_models[cid], dataset, plan.client_samples[cid],
                            global_coeffs, opts);
            });
            double acc = 0.0, mrec = 0.0;
            std::vector<double> rec(o_count, 0.0);
            for (std::size_t cid = 0; cid < settings.num_clients; ++cid) {
                EvalResult ev = evaluate(local_models[cid], dataset, dataset.test_indices);
                acc += ev.accuracy;
                mrec += ev.macro_recall;
                for (std::size_t o = 0; o < o_count; ++o) rec[o] += ev.per_class_recall[o];
            }
            double inv = 1.0 / static_cast<double>(settings.num_clients);
            metrics.accuracy = acc * inv;
            metrics.macro_recall = mrec * inv;
            for (double& r : rec) r *= inv;
            metrics.per_class_recall = rec;
        }

        result.up_bytes_total += metrics.up_bytes;
        result.down_bytes_total += metrics.down_bytes;
        result.up_params_total += metrics.up_params;
        result.down_params_total += metrics.down_params;
        metrics.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.rounds.push_back(std::move(metrics));
    }
    result.final_global_coeffs = global_coeffs;
    return result;
}

CommReport comm_report(const RunResult& result) {
    CommReport rep;
    rep.up_bytes = result.up_bytes_total;
    rep.down_bytes = result.down_bytes_total;
    rep.up_params = result.up_params_total;
    rep.down_params = result.down_params_total;
    rep.payload_params = result.census.communicated;
    rep.full_model_params = result.census.total;
    rep.ratio_vs_full = static_cast<double>(result.census.communicated) /
                        static_cast<double>(result.census.total);
    return rep;
}

}  // namespace fed3d
