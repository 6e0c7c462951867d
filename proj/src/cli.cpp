#include "fed3d/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "fed3d/common.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fed3d::cli {

namespace {

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setfill('0') << std::setw(16) << v;
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

void write_resolved_config(const ExperimentConfig& cfg, const ModelSplit& model,
                           const std::string& path) {
    std::ostringstream os;
    os << cfg.echo();
    os << "# --- parameter census (audit) ---\n";
    Census census = parameter_census(model);
    os << "# total=" << census.total << " frozen=" << census.frozen
       << " communicated=" << census.communicated << "\n";
    for (const std::string& line : census_listing(model)) os << "# " << line << "\n";
    write_text(path, os.str());
}

ModelSplit build_pretrain_model(const ExperimentConfig& cfg) {
    ModelConfig mc = cfg.model_config();
    mc.prompts_enabled = false;
    return make_model(mc, cfg.seed);
}

void write_metrics_csv(const RunResult& result, std::size_t num_classes,
                       const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "round,accuracy,macro_recall";
    for (std::size_t o = 0; o < num_classes; ++o) out << ",recall_" << o;
    out << ",up_bytes,down_bytes,up_params,down_params\n";
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return std::string(buf);
    };
    for (const RoundMetrics& m : result.rounds) {
        out << m.round << "," << fmt(m.accuracy) << "," << fmt(m.macro_recall);
        for (std::size_t o = 0; o < num_classes; ++o) out << "," << fmt(m.per_class_recall[o]);
        out << "," << m.up_bytes << "," << m.down_bytes << "," << m.up_params << ","
            << m.down_params << "\n";
    }
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace

int cmd_pretrain(ExperimentConfig cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);

    DatasetSpec spec = cfg.dataset_spec(1);  // pretext variant
    spec.class_counts.assign(cfg.classes, cfg.pretrain_samples_per_class);
    Dataset pretext = generate_dataset(spec);

    ModelSplit model = build_pretrain_model(cfg);
    TrainOptions opts;
    opts.epochs = cfg.pretrain_epochs;
    opts.batch_size = cfg.pretrain_batch;
    opts.lr_prompts = cfg.pretrain_lr;
    opts.lr_head = cfg.pretrain_lr;
    opts.lr_backbone = cfg.pretrain_lr;
    opts.correction = CorrectionMode::Off;
    opts.rng_seed = mix_seed(cfg.seed, {0x93E7ULL});
    std::vector<double> ones(cfg.classes, 1.0);
    local_train(model, pretext, pretext.train_indices, ones, opts);

    EvalResult train_eval = evaluate(model, pretext, pretext.train_indices);
    EvalResult test_eval = evaluate(model, pretext, pretext.test_indices);
    log_info("pretrain: pretext train acc " + std::to_string(train_eval.accuracy) +
             ", test acc " + std::to_string(test_eval.accuracy));

    Payload full = make_payload(model, PayloadScope::FullModel);
    std::string ckpt_path = (fs::path(cfg.out_dir) / "backbone.ckpt").string();
    write_bytes(ckpt_path, serialize_checkpoint(full, 0));
    write_resolved_config(cfg, model,
                          (fs::path(cfg.out_dir) / "config_resolved.txt").string());
    log_info("pretrain: wrote " + ckpt_path);
    return 0;
}

int cmd_run(ExperimentConfig cfg) {
    cfg.validate();
    if (cfg.checkpoint.empty()) {
        throw ConfigError("run: config must name a backbone checkpoint (checkpoint = PATH)");
    }
    auto wall_start = std::chrono::steady_clock::now();
    fs::create_directories(cfg.out_dir);

    Dataset dataset = generate_dataset(cfg.dataset_spec(0));
    PartitionPlan plan = partition_noniid(dataset, cfg.clients, cfg.class_fraction,
                                          cfg.sample_fraction, cfg.seed, cfg.strict_disjoint);

    ModelSplit model = make_model(cfg.model_config(), cfg.seed);
    auto [ckpt, ckpt_round] = deserialize_checkpoint(read_bytes(cfg.checkpoint));
    (void)ckpt_round;
    try {
        load_payload(model, ckpt, PayloadScope::FullModel, "checkpoint " + cfg.checkpoint);
    } catch (const ProtocolError& e) {
        throw ConfigError(std::string("run: checkpoint does not match config: ") + e.what());
    }
    bool frozen = cfg.mode == RunMode::Fed3d || cfg.mode == RunMode::LocalOnly;
    model.freeze_backbone(frozen);

    RunResult result = run_federation(cfg.run_settings(), dataset, plan, model);
    CommReport comm = comm_report(result);
    double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

    write_metrics_csv(result, cfg.classes, (fs::path(cfg.out_dir) / "metrics.csv").string());
    write_partition_csv(plan, dataset, (fs::path(cfg.out_dir) / "partition.csv").string());
    write_resolved_config(cfg, model,
                          (fs::path(cfg.out_dir) / "config_resolved.txt").string());
    Payload final_state = make_payload(model, PayloadScope::FullModel);
    write_bytes((fs::path(cfg.out_dir) / "final.ckpt").string(),
                serialize_checkpoint(final_state, cfg.rounds));

    const RoundMetrics& last = result.rounds.back();
    json summary;
    summary["schema"] = "fed3d-summary-v1";
    summary["mode"] = to_string(cfg.mode);
    summary["correction"] = to_string(cfg.correction);
    summary["seed"] = cfg.seed;
    summary["rounds"] = cfg.rounds;
    summary["clients"] = cfg.clients;
    summary["alpha"] = cfg.alpha;
    summary["config_hash"] = hex64(cfg.config_hash());
    summary["dataset_hash"] = hex64(dataset.content_hash());
    summary["final_accuracy"] = last.accuracy;
    summary["final_macro_recall"] = last.macro_recall;
    summary["per_class_recall"] = last.per_class_recall;
    summary["census"] = {{"total", result.census.total},
                         {"frozen", result.census.frozen},
                         {"communicated", result.census.communicated}};
    summary["comm"] = {{"up_bytes", comm.up_bytes},
                       {"down_bytes", comm.down_bytes},
                       {"up_params", comm.up_params},
                       {"down_params", comm.down_params},
                       {"payload_params", comm.payload_params},
                       {"full_model_params", comm.full_model_params},
                       {"ratio_vs_full", comm.ratio_vs_full}};
    summary["global_coeffs"] = result.final_global_coeffs;
    summary["wall_seconds"] = wall;
    write_text((fs::path(cfg.out_dir) / "summary.json").string(), summary.dump(2) + "\n");

    std::printf("run %s correction=%s seed=%llu: accuracy %.4f, macro recall %.4f, "
                "comm ratio %.4f (up %llu B, down %llu B)\n",
                to_string(cfg.mode).c_str(), to_string(cfg.correction).c_str(),
                static_cast<unsigned long long>(cfg.seed), last.accuracy, last.macro_recall,
                comm.ratio_vs_full, static_cast<unsigned long long>(comm.up_bytes),
                static_cast<unsigned long long>(comm.down_bytes));
    return 0;
}

int cmd_compare(const std::vector<std::string>& summaries, const std::string& out_dir) {
    if (summaries.size() < 2) {
        throw ConfigError("compare: need at least two summary files");
    }
    std::vector<json> loaded;
    for (const std::string& path : summaries) {
        std::ifstream in(path);
        if (!in) throw ConfigError("compare: cannot open " + path);
        try {
            loaded.push_back(json::parse(in));
        } catch (const json::parse_error& e) {
            throw ConfigError("compare: " + path + " is not valid JSON: " + e.what());
        }
    }
    std::string dataset_hash = loaded[0].value("dataset_hash", "");
    for (std::size_t i = 1; i < loaded.size(); ++i) {
        std::string h = loaded[i].value("dataset_hash", "");
        if (h != dataset_hash) {
            throw ConfigError("compare: dataset hash mismatch between " + summaries[0] +
                              " (" + dataset_hash + ") and " + summaries[i] + " (" + h + ")");
        }
    }

    struct Row {
        std::string name;
        double acc, recall, ratio;
        std::uint64_t up, down;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        const json& s = loaded[i];
        Row r;
        r.name = fs::path(summaries[i]).parent_path().filename().string();
        if (r.name.empty()) r.name = fs::path(summaries[i]).filename().string();
        r.acc = s.value("final_accuracy", 0.0);
        r.recall = s.value("final_macro_recall", 0.0);
        r.ratio = s["comm"].value("ratio_vs_full", 1.0);
        r.up = s["comm"].value("up_bytes", std::uint64_t{0});
        r.down = s["comm"].value("down_bytes", std::uint64_t{0});
        rows.push_back(r);
    }

    std::printf("%-24s %9s %9s %8s %12s %12s %9s %9s\n", "run", "accuracy", "m.recall",
                "ratio", "up_bytes", "down_bytes", "d_acc", "d_recall");
    for (const Row& r : rows) {
        std::printf("%-24s %9.4f %9.4f %8.4f %12llu %12llu %+9.4f %+9.4f\n", r.name.c_str(),
                    r.acc, r.recall, r.ratio, static_cast<unsigned long long>(r.up),
                    static_cast<unsigned long long>(r.down), r.acc - rows[0].acc,
                    r.recall - rows[0].recall);
    }

    fs::create_directories(out_dir);
    std::string csv_path = (fs::path(out_dir) / "compare.csv").string();
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw IoError("compare: cannot open " + csv_path);
    csv << "run,accuracy,macro_recall,ratio_vs_full,up_bytes,down_bytes,delta_accuracy,"
           "delta_macro_recall\n";
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return std::string(buf);
    };
    for (const Row& r : rows) {
        csv << r.name << "," << fmt(r.acc) << "," << fmt(r.recall) << "," << fmt(r.ratio)
            << "," << r.up << "," << r.down << "," << fmt(r.acc - rows[0].acc) << ","
            << fmt(r.recall - rows[0].recall) << "\n";
    }
    return 0;
}

}  // namespace fed3d::cli
