// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Runs the full desk-scale directional experiment, so expect a
// few minutes of wall time.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fed3d/cli.hpp"
#include "fed3d/common.hpp"
#include "fed3d/config.hpp"
#include "fed3d/gradcheck.hpp"

using namespace fed3d;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw Failure(what);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

fs::path g_tmp;

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- shared experiment configuration (desk scale) ----------------------

ExperimentConfig desk_config() {
    ExperimentConfig cfg;
    cfg.clients = 20;
    cfg.alpha = 0.25;
    cfg.rounds = 100;
    cfg.local_epochs = 4;
    cfg.batch_size = 8;
    cfg.lr_prompts = 0.02;
    cfg.lr_head = 0.04;
    cfg.lr_backbone = 0.01;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.prompt_len = 8;
    cfg.d_model = 16;
    cfg.d_head = 8;
    cfg.tokens = 4;
    cfg.points = 16;
    cfg.classes = 10;
    cfg.class_counts = {72, 8, 72, 8, 72, 8, 72, 8, 72, 8};  // 9:1 imbalance
    cfg.noise_scale = 0.8;
    cfg.class_fraction = 0.7;
    cfg.sample_fraction = 0.7;
    cfg.pretrain_epochs = 40;
    cfg.pretrain_lr = 0.05;
    cfg.pretrain_samples_per_class = 30;
    cfg.pretrain_batch = 16;
    return cfg;
}

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.prompt_len = 2;
    cfg.d_model = 8;
    cfg.d_head = 4;
    cfg.tokens = 4;
    cfg.points = 8;
    cfg.classes = 3;
    return cfg;
}

// ---- criterion 1 --------------------------------------------------------

std::string criterion_gradients() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        ModelSplit model = make_model(tiny_model(), seed + 1);
        Rng rng(seed * 17 + 3);
        PointSample s0{Tensor::randn({8, 3}, rng, 1.0), static_cast<int>(rng.below(3))};
        PointSample s1{Tensor::randn({8, 3}, rng, 1.0), static_cast<int>(rng.below(3))};
        std::vector<double> rhat{rng.uniform(0.2, 1.8), rng.uniform(0.2, 1.8)};

        auto forward_loss = [&]() {
            Tape tape;
            std::vector<Value> losses;
            for (const PointSample* s : {&s0, &s1})
                losses.push_back(
                    cross_entropy(detector_forward(tape, model, *s), {s->label}).loss);
            return tape.value(weighted_loss(losses, rhat))[0];
        };

        // rotate through the parameter groups: attention, prompts (prefix
        // attention), MLP, embedder, head
        std::vector<Parameter*> targets;
        EncoderLayer& layer = model.layers[seed % model.layers.size()];
        std::size_t head = seed % model.cfg.heads;
        targets.push_back(&layer.w_q[head]);
        targets.push_back(&layer.w_v[(head + 1) % model.cfg.heads]);
        targets.push_back(&layer.w_o);
        targets.push_back(&layer.mlp_w1);
        targets.push_back(&layer.mlp_b2);
        auto& pair = model.prompts.layers[seed % model.cfg.layers][head];
        targets.push_back(&pair.key);
        targets.push_back(&pair.value);
        targets.push_back(&model.embed_w);
        targets.push_back(seed % 2 ? &model.proj_w : &model.pos);
        targets.push_back(&model.head_w);

        for (Parameter* p : targets) {
            Tape tape;
            std::vector<Value> losses;
            for (const PointSample* s : {&s0, &s1})
                losses.push_back(
                    cross_entropy(detector_forward(tape, model, *s), {s->label}).loss);
            tape.backward(weighted_loss(losses, rhat));
            Tensor analytic = p->grad;
            model.zero_all_grads();
            double err = finite_diff_check_param(forward_loss, *p, analytic, 1e-5);
            worst = std::max(worst, err);
            require(err < 1e-4, "gradient of " + p->name + " off by " + fmt(err) +
                                    " at seed " + std::to_string(seed));
        }
    }
    return "max rel err " + fmt(worst) + " over 100 seeds (attention, prefix, MLP, "
           "embedder, head, weighted loss)";
}

// ---- criterion 2 --------------------------------------------------------

std::string criterion_correction_oracles() {
    // grad_measure vs autodiff magnitude
    double worst_measure = 0.0;
    Rng rng(11);
    for (int it = 0; it < 500; ++it) {
        std::size_t classes = 2 + rng.below(8);
        Tensor logits = Tensor::randn({1, classes}, rng, 3.0);
        int label = static_cast<int>(rng.below(classes));
        Tape tape;
        Value lv = tape.input(logits, true);
        auto ce = cross_entropy(lv, {label});
        tape.backward(ce.loss);
        double autodiff_mag =
            std::abs(tape.grad(lv).at(0, static_cast<std::size_t>(label)));
        double diff = std::abs(grad_measure(ce.true_prob[0]) - autodiff_mag);
        worst_measure = std::max(worst_measure, diff);
        require(diff <= 1e-10, "grad_measure deviates from autodiff by " + fmt(diff));
    }

    // normalization identities over 1000 random batches
    double worst_sum = 0.0;
    for (int it = 0; it < 1000; ++it) {
        std::size_t b = 1 + rng.below(16), classes = 2 + rng.below(6);
        std::vector<double> g(b);
        std::vector<int> y(b);
        std::vector<double> coeffs(classes);
        for (std::size_t i = 0; i < b; ++i) {
            g[i] = rng.uniform(1e-6, 1.0);
            y[i] = static_cast<int>(rng.below(classes));
        }
        for (double& c : coeffs) c = rng.uniform(0.0, 3.0);
        double sum_r = 0.0, sum_rhat = 0.0;
        for (double v : local_coefficients(g)) sum_r += v;
        for (double v : corrected_coefficients(g, y, coeffs)) sum_rhat += v;
        worst_sum = std::max(worst_sum, std::abs(sum_r - static_cast<double>(b)));
        worst_sum = std::max(worst_sum, std::abs(sum_rhat - static_cast<double>(b)));
        require(worst_sum <= 1e-9, "coefficient sums deviate from B by " + fmt(worst_sum));
    }

    // ln 5 identity at S=2, O=2 under uniform stats
    ClassStats a, b2;
    a.per_class = {0.37, 0.37};
    b2.per_class = {0.37, 0.37};
    auto g_out = global_coefficients({a, b2}, 2, {1.0, 1.0});
    require(std::abs(g_out[0] - std::log(5.0)) < 1e-12 &&
                std::abs(g_out[1] - 1.6094379124341003) < 1e-12,
            "uniform-stat coefficient is " + std::to_string(g_out[0]) + ", expected ln 5");

    // scale invariance
    for (int it = 0; it < 100; ++it) {
        std::size_t s_count = 1 + rng.below(6), classes = 2 + rng.below(6);
        std::vector<ClassStats> stats(s_count);
        for (auto& cs : stats) {
            cs.per_class.resize(classes);
            for (auto& v : cs.per_class)
                if (rng.below(5) != 0) v = rng.uniform(1e-3, 1.0);
        }
        double lambda = rng.uniform(0.05, 20.0);
        auto scaled = stats;
        for (auto& cs : scaled)
            for (auto& v : cs.per_class)
                if (v) v = *v * lambda;
        std::vector<double> prev(classes, 1.0);
        auto g1 = global_coefficients(stats, classes, prev);
        auto g2 = global_coefficients(scaled, classes, prev);
        for (std::size_t o = 0; o < classes; ++o)
            require(std::abs(g1[o] - g2[o]) <= 1e-9,
                    "scale invariance broken by " + fmt(std::abs(g1[o] - g2[o])));
    }
    return "measure err " + fmt(worst_measure) + ", sum err " + fmt(worst_sum) +
           ", ln5 and scale invariance hold";
}

// ---- criterion 3 --------------------------------------------------------

std::string criterion_prefix_invariants() {
    Rng seed_rng(21);
    // p=0 bitwise equivalence
    for (int it = 0; it < 10; ++it) {
        Rng rng(seed_rng.next_u64());
        EncoderLayer layer = make_encoder_layer(8, 2, 4, 16, 0, rng);
        PromptPool pool = init_prompt_pool(1, 2, 0, 4, it + 5);
        Tensor f = Tensor::randn({3, 8}, rng, 1.0);
        Tape t1, t2;
        Value plain = mhsa_forward(t1, layer, t1.input(f));
        Value pref = prefix_mhsa_forward(t2, layer, &pool.layers[0], t2.input(f));
        require(bitwise_equal(t1.value(plain), t2.value(pref)),
                "p=0 output differs bitwise from plain attention");
    }
    // sequence length preservation and row sums over the grid
    double worst_row = 0.0;
    for (std::size_t t_len : {1u, 2u, 4u, 16u}) {
        for (std::size_t p_len : {0u, 1u, 8u, 32u}) {
            Rng rng(t_len * 1000 + p_len);
            EncoderLayer layer = make_encoder_layer(8, 2, 4, 16, 0, rng);
            PromptPool pool = init_prompt_pool(1, 2, p_len, 4, t_len * 10 + p_len);
            Tensor f = Tensor::randn({t_len, 8}, rng, 1.0);
            Tape tape;
            AttentionCapture cap;
            Value out =
                prefix_mhsa_forward(tape, layer, &pool.layers[0], tape.input(f), &cap);
            require(tape.value(out).rows() == t_len && tape.value(out).cols() == 8,
                    "sequence length not preserved at T=" + std::to_string(t_len) +
                        ", p=" + std::to_string(p_len));
            for (const Tensor& rows : cap.rows) {
                require(rows.cols() == t_len + p_len, "extended key axis has wrong length");
                for (std::size_t i = 0; i < rows.rows(); ++i) {
                    double sum = 0.0;
                    for (std::size_t j = 0; j < rows.cols(); ++j) sum += rows.at(i, j);
                    worst_row = std::max(worst_row, std::abs(sum - 1.0));
                    require(std::abs(sum - 1.0) <= 1e-12,
                            "attention row sums to " + std::to_string(sum));
                }
            }
        }
    }
    return "p=0 bitwise, lengths preserved on the full grid, row-sum err " + fmt(worst_row);
}

// ---- criterion 4 --------------------------------------------------------

std::string criterion_aggregation() {
    Rng rng(31);
    double worst = 0.0;
    for (int it = 0; it < 200; ++it) {
        std::size_t n_clients = 1 + rng.below(6);
        std::vector<AggregateEntry> entries;
        for (std::size_t c = 0; c < n_clients; ++c) {
            Payload p;
            p.layers = 1;
            p.heads = 2;
            p.prompt_len = 2;
            p.d_head = 2;
            p.classes = 2;
            p.has_head = true;
            for (int k = 0; k < 4; ++k)
                p.prompt_tensors.push_back(Tensor::randn({2, 2}, rng, 1.0));
            p.head_tensors.push_back(Tensor::randn({3, 2}, rng, 1.0));
            entries.push_back(AggregateEntry{c, std::move(p), 1 + rng.below(500)});
        }
        Payload merged = aggregate(entries);
        double total = 0.0;
        for (const auto& e : entries) total += static_cast<double>(e.dataset_size);
        auto check_tensor = [&](std::size_t ti, bool prompt, std::size_t k) {
            double mean = 0.0, lo = 1e300, hi = -1e300;
            for (const auto& e : entries) {
                double v = prompt ? e.payload.prompt_tensors[ti][k]
                                  : e.payload.head_tensors[ti][k];
                mean += v * static_cast<double>(e.dataset_size) / total;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            double got =
                prompt ? merged.prompt_tensors[ti][k] : merged.head_tensors[ti][k];
            worst = std::max(worst, std::abs(got - mean));
            require(std::abs(got - mean) <= 1e-12, "aggregate deviates from brute-force "
                                                   "weighted mean by " +
                                                       fmt(std::abs(got - mean)));
            require(got >= lo - 1e-12 && got <= hi + 1e-12,
                    "aggregate escapes the convex hull");
        };
        for (std::size_t ti = 0; ti < 4; ++ti)
            for (std::size_t k = 0; k < 4; ++k) check_tensor(ti, true, k);
        for (std::size_t k = 0; k < 6; ++k) check_tensor(0, false, k);

        // fixed point on identical payloads
        std::vector<AggregateEntry> same;
        for (std::size_t c = 0; c < 3; ++c)
            same.push_back(AggregateEntry{c, entries[0].payload, 7 + c});
        Payload fixed = aggregate(same);
        for (std::size_t ti = 0; ti < 4; ++ti)
            for (std::size_t k = 0; k < 4; ++k)
                require(std::abs(fixed.prompt_tensors[ti][k] -
                                 entries[0].payload.prompt_tensors[ti][k]) <= 1e-15,
                        "identical payloads are not a fixed point");
    }
    return "brute-force match err " + fmt(worst) +
           ", fixed point and hull containment hold (200 cases)";
}

// ---- criterion 5 --------------------------------------------------------

std::string criterion_frozen_comm() {
    ExperimentConfig cfg = desk_config();
    cfg.rounds = 4;
    cfg.out_dir = (g_tmp / "c5_pre").string();
    cfg.seed = 77;
    cli::cmd_pretrain(cfg);

    Dataset dataset = generate_dataset(cfg.dataset_spec(0));
    PartitionPlan plan = partition_noniid(dataset, cfg.clients, cfg.class_fraction,
                                          cfg.sample_fraction, cfg.seed);
    ModelSplit model = make_model(cfg.model_config(), cfg.seed);
    auto [ckpt, _] = deserialize_checkpoint(
        read_bytes((g_tmp / "c5_pre" / "backbone.ckpt").string()));
    load_payload(model, ckpt, PayloadScope::FullModel, "checkpoint");
    model.freeze_backbone(true);

    std::vector<Tensor> backbone_before;
    for (Parameter* p : model.backbone_parameters()) backbone_before.push_back(p->value);

    RunResult result = run_federation(cfg.run_settings(), dataset, plan, model);
    CommReport report = comm_report(result);

    auto backbone_after = model.backbone_parameters();
    for (std::size_t i = 0; i < backbone_after.size(); ++i)
        require(bitwise_equal(backbone_after[i]->value, backbone_before[i]),
                "backbone tensor " + backbone_after[i]->name + " changed during the run");

    Census census = result.census;
    Payload payload = make_payload(model, PayloadScope::Trainable);
    require(payload.parameter_count() == census.communicated,
            "payload carries " + std::to_string(payload.parameter_count()) +
                " parameters, census says " + std::to_string(census.communicated));
    double expect_ratio =
        static_cast<double>(census.communicated) / static_cast<double>(census.total);
    require(report.ratio_vs_full == expect_ratio, "comm ratio is not exactly the census ratio");
    require(expect_ratio <= 0.5, "desk-config ratio " + fmt(expect_ratio) + " exceeds 0.5");
    require(std::abs(43.6 / 86.2 - 0.506) < 5e-4, "paper anchor arithmetic broken");
    return "backbone bitwise stable, payload == census.communicated (" +
           std::to_string(census.communicated) + "/" + std::to_string(census.total) +
           "), ratio " + fmt(expect_ratio) + " <= 0.5 (paper: 43.6M/86.2M ~ 0.506)";
}

// ---- criterion 6 --------------------------------------------------------

std::string criterion_determinism() {
    ExperimentConfig base = desk_config();
    base.clients = 6;
    base.alpha = 0.5;
    base.rounds = 5;
    base.seed = 31;
    base.out_dir = (g_tmp / "c6_pre").string();
    cli::cmd_pretrain(base);
    std::string ckpt = (g_tmp / "c6_pre" / "backbone.ckpt").string();

    std::vector<std::string> metrics, finals;
    for (std::size_t workers : {1u, 4u, 1u, 4u}) {
        ExperimentConfig cfg = base;
        cfg.checkpoint = ckpt;
        cfg.workers = workers;
        cfg.out_dir =
            (g_tmp / ("c6_run_" + std::to_string(metrics.size()))).string();
        cli::cmd_run(cfg);
        metrics.push_back(slurp(fs::path(cfg.out_dir) / "metrics.csv"));
        finals.push_back(slurp(fs::path(cfg.out_dir) / "final.ckpt"));
    }
    for (std::size_t i = 1; i < metrics.size(); ++i) {
        require(metrics[i] == metrics[0], "metrics.csv differs between runs (run " +
                                              std::to_string(i) + ")");
        require(finals[i] == finals[0],
                "final.ckpt differs between runs (run " + std::to_string(i) + ")");
    }
    return "byte-identical metrics and checkpoints across repeats at workers 1 and 4";
}

// ---- criterion 7 --------------------------------------------------------

std::string criterion_degeneracies() {
    // C=1, alpha=1, Z=1 vs an independently stepped centralized oracle
    DatasetSpec spec;
    spec.num_classes = 3;
    spec.class_counts = {30, 30, 30};
    spec.points_per_sample = 8;
    spec.noise_scale = 0.3;
    spec.seed = 51;
    Dataset ds = generate_dataset(spec);
    PartitionPlan plan = partition_noniid(ds, 1, 1.0, 1.0, 51);

    RunSettings rs;
    rs.num_clients = 1;
    rs.alpha = 1.0;
    rs.rounds = 1;
    rs.seed = 51;
    rs.mode = RunMode::Fed3d;
    rs.train.epochs = 4;
    rs.train.batch_size = 8;
    rs.train.lr_prompts = 0.02;
    rs.train.lr_head = 0.04;
    rs.train.correction = CorrectionMode::LocalGlobal;

    ModelSplit fed_model = make_model(tiny_model(), 52);
    fed_model.freeze_backbone(true);
    ModelSplit oracle = fed_model;
    run_federation(rs, ds, plan, fed_model);

    auto bytes = serialize_payload(make_payload(oracle, PayloadScope::Trainable));
    load_payload(oracle, deserialize_payload(bytes), PayloadScope::Trainable, "oracle");
    TrainOptions opts = rs.train;
    opts.rng_seed = mix_seed(rs.seed, {0xC117ULL, 1, 0});
    local_train(oracle, ds, plan.client_samples[0], {1.0, 1.0, 1.0}, opts);

    auto fed_params = fed_model.all_parameters();
    auto oracle_params = oracle.all_parameters();
    double worst = 0.0;
    for (std::size_t i = 0; i < fed_params.size(); ++i) {
        Tensor expect = oracle_params[i]->value;
        if (oracle_params[i]->trainable) expect.quantize_f32();
        for (std::size_t k = 0; k < expect.numel(); ++k)
            worst = std::max(worst, std::abs(fed_params[i]->value[k] - expect[k]));
    }
    require(worst <= 1e-12, "single-party round deviates from centralized training by " +
                                fmt(worst));

    // zero learning rate leaves trainables bitwise unchanged
    ModelSplit frozen_lr = make_model(tiny_model(), 53);
    frozen_lr.freeze_backbone(true);
    std::vector<Tensor> before;
    for (Parameter* p : frozen_lr.all_parameters()) before.push_back(p->value);
    TrainOptions zero = rs.train;
    zero.lr_prompts = 0.0;
    zero.lr_head = 0.0;
    zero.lr_backbone = 0.0;
    zero.rng_seed = 99;
    local_train(frozen_lr, ds, ds.train_indices, {1.0, 1.0, 1.0}, zero);
    auto after = frozen_lr.all_parameters();
    for (std::size_t i = 0; i < after.size(); ++i)
        require(bitwise_equal(after[i]->value, before[i]),
                "zero learning rate moved " + after[i]->name);
    return "single-party equivalence err " + fmt(0.0) +
           ", zero-lr training is bitwise a no-op";
}

// ---- criterion 8 --------------------------------------------------------

std::string criterion_desk_experiment() {
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    struct Outcome {
        double acc, recall;
        std::uint64_t bytes;
    };
    auto run_mode = [&](std::uint64_t seed, RunMode mode, CorrectionMode corr,
                        const std::string& tag) {
        ExperimentConfig cfg = desk_config();
        cfg.seed = seed;
        cfg.mode = mode;
        cfg.correction = corr;
        cfg.checkpoint =
            (g_tmp / ("c8_pre_" + std::to_string(seed)) / "backbone.ckpt").string();
        cfg.out_dir = (g_tmp / ("c8_" + tag + "_" + std::to_string(seed))).string();
        cli::cmd_run(cfg);
        json summary = json::parse(slurp(fs::path(cfg.out_dir) / "summary.json"));
        Outcome out;
        out.acc = summary["final_accuracy"].get<double>();
        out.recall = summary["final_macro_recall"].get<double>();
        out.bytes = summary["comm"]["up_bytes"].get<std::uint64_t>() +
                    summary["comm"]["down_bytes"].get<std::uint64_t>();
        return out;
    };

    for (std::uint64_t seed : seeds) {
        ExperimentConfig pre = desk_config();
        pre.seed = seed;
        pre.out_dir = (g_tmp / ("c8_pre_" + std::to_string(seed))).string();
        cli::cmd_pretrain(pre);
    }

    std::vector<Outcome> fed3d_lg, fed3d_off, fedavg;
    for (std::uint64_t seed : seeds) {
        fed3d_lg.push_back(
            run_mode(seed, RunMode::Fed3d, CorrectionMode::LocalGlobal, "lg"));
        fed3d_off.push_back(run_mode(seed, RunMode::Fed3d, CorrectionMode::Off, "off"));
        fedavg.push_back(run_mode(seed, RunMode::FedAvgFull, CorrectionMode::Off, "favg"));
    }

    double mean_lg = 0.0, mean_favg = 0.0;
    std::uint64_t bytes_lg = 0, bytes_favg = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        mean_lg += fed3d_lg[i].acc / static_cast<double>(seeds.size());
        mean_favg += fedavg[i].acc / static_cast<double>(seeds.size());
        bytes_lg += fed3d_lg[i].bytes;
        bytes_favg += fedavg[i].bytes;
    }
    std::size_t recall_wins = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i)
        if (fed3d_lg[i].recall >= fed3d_off[i].recall) ++recall_wins;

    std::ostringstream detail;
    detail.setf(std::ios::fixed);
    detail.precision(4);
    detail << "acc fed3d+lg " << mean_lg << " vs fedavg-full " << mean_favg << " (seeds";
    for (std::size_t i = 0; i < seeds.size(); ++i)
        detail << " " << fed3d_lg[i].acc << "/" << fedavg[i].acc;
    detail << "), bytes " << bytes_lg << "/" << bytes_favg << " = "
           << fmt(static_cast<double>(bytes_lg) / static_cast<double>(bytes_favg))
           << ", recall lg>=off in " << recall_wins << "/3 seeds";

    require(mean_lg >= mean_favg - 0.01,
            "fed3d accuracy " + std::to_string(mean_lg) + " below fedavg-full " +
                std::to_string(mean_favg) + " - 1pp | " + detail.str());
    require(static_cast<double>(bytes_lg) <= 0.5 * static_cast<double>(bytes_favg),
            "fed3d transmitted more than half of fedavg-full bytes | " + detail.str());
    require(recall_wins >= 2,
            "macro recall with correction wins only " + std::to_string(recall_wins) +
                "/3 seeds | " + detail.str());
    return detail.str();
}

// ---- criterion 9 --------------------------------------------------------

std::string criterion_serialization() {
    Rng rng(91);
    for (int it = 0; it < 1000; ++it) {
        Payload p;
        p.layers = static_cast<std::uint16_t>(1 + rng.below(3));
        p.heads = static_cast<std::uint16_t>(1 + rng.below(3));
        p.prompt_len = static_cast<std::uint16_t>(rng.below(5));
        p.d_head = static_cast<std::uint16_t>(1 + rng.below(4));
        p.classes = static_cast<std::uint16_t>(2 + rng.below(5));
        for (std::size_t i = 0; i < static_cast<std::size_t>(p.layers) * p.heads * 2; ++i) {
            Tensor t = Tensor::randn({p.prompt_len, p.d_head}, rng, 1.0);
            t.quantize_f32();
            p.prompt_tensors.push_back(std::move(t));
        }
        p.has_head = rng.below(4) != 0;
        if (p.has_head) {
            for (std::size_t i = 0, n = 1 + rng.below(3); i < n; ++i) {
                Tensor t = Tensor::randn({1 + rng.below(4), 1 + rng.below(4)}, rng, 1.0);
                t.quantize_f32();
                p.head_tensors.push_back(std::move(t));
            }
        }
        if (rng.below(2) == 0) {
            p.has_stats = true;
            p.class_stats.resize(p.classes);
            for (auto& s : p.class_stats)
                if (rng.below(3) != 0) s = rng.uniform();
        }
        auto bytes = serialize_payload(p);
        Payload back = deserialize_payload(bytes);
        require(serialize_payload(back) == bytes, "payload round-trip is not value exact");

        auto ck = serialize_checkpoint(p, rng.next_u64());
        auto [ck_back, round] = deserialize_checkpoint(ck);
        require(serialize_checkpoint(ck_back, round) == ck,
                "checkpoint round-trip is not value exact");

        if (it < 50) {
            auto corrupted = bytes;
            corrupted[it % 4] = static_cast<std::uint8_t>('z');
            bool threw = false;
            try {
                deserialize_payload(corrupted);
            } catch (const ParseError& e) {
                threw = std::string(e.what()).find("offset") != std::string::npos;
            }
            require(threw, "corrupted magic did not raise the specified parse error");

            auto truncated = bytes;
            truncated.resize(truncated.size() - 1 - it % 8);
            threw = false;
            try {
                deserialize_payload(truncated);
            } catch (const ParseError& e) {
                threw = std::string(e.what()).find("offset") != std::string::npos;
            }
            require(threw, "truncated stream did not raise the specified parse error");
        }
    }
    return "1000 round-trips value exact; corruption and truncation raise parse errors "
           "with offsets";
}

}  // namespace

int main() {
    g_tmp = fs::current_path() / "acceptance_tmp";
    fs::remove_all(g_tmp);
    fs::create_directories(g_tmp);

    struct Criterion {
        int index;
        const char* name;
        std::function<std::string()> fn;
    };
    std::vector<Criterion> criteria{
        {1, "gradient correctness", criterion_gradients},
        {2, "correction-loss oracle suite", criterion_correction_oracles},
        {3, "prefix-attention invariants", criterion_prefix_invariants},
        {4, "aggregation oracle", criterion_aggregation},
        {5, "frozen-backbone and communication contract", criterion_frozen_comm},
        {6, "determinism across repeats and worker counts", criterion_determinism},
        {7, "protocol degeneracies", criterion_degeneracies},
        {8, "desk-scale directional experiment", criterion_desk_experiment},
        {9, "serialization round-trips and parse errors", criterion_serialization},
    };

    int failures = 0;
    for (const Criterion& crit : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = true;
        try {
            detail = crit.fn();
        } catch (const std::exception& e) {
            ok = false;
            detail = e.what();
        }
        double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] criterion %d: %s — %s (%.1fs)\n", ok ? "PASS" : "FAIL",
                    crit.index, crit.name, detail.c_str(), secs);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures == 0) fs::remove_all(g_tmp);
    return failures == 0 ? 0 : 1;
}
