#include "fed3d/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fed3d/common.hpp"

namespace fed3d {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        long long n = std::stoll(v);
        if (n < 0) throw std::out_of_range("negative");
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v +
                          "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a real number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config: " + key + " expects a boolean, got '" + v + "'");
}

std::string fmt_double(double d) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", d);
    return buf;
}

}  // namespace

RunMode parse_run_mode(const std::string& s) {
    if (s == "fed3d") return RunMode::Fed3d;
    if (s == "fedavg-full") return RunMode::FedAvgFull;
    if (s == "local-only") return RunMode::LocalOnly;
    if (s == "centralized") return RunMode::Centralized;
    throw ConfigError("config: unknown mode '" + s +
                      "' (expected fed3d|fedavg-full|local-only|centralized)");
}

CorrectionMode parse_correction_mode(const std::string& s) {
    if (s == "off") return CorrectionMode::Off;
    if (s == "local") return CorrectionMode::Local;
    if (s == "local_global") return CorrectionMode::LocalGlobal;
    throw ConfigError("config: unknown correction '" + s +
                      "' (expected off|local|local_global)");
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    ExperimentConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + t + "'");
        }
        cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (key == "clients") clients = parse_size(key, value);
    else if (key == "alpha") alpha = parse_double(key, value);
    else if (key == "rounds") rounds = parse_size(key, value);
    else if (key == "local_epochs") local_epochs = parse_size(key, value);
    else if (key == "batch_size") batch_size = parse_size(key, value);
    else if (key == "lr_prompts") lr_prompts = parse_double(key, value);
    else if (key == "lr_head") lr_head = parse_double(key, value);
    else if (key == "lr_backbone") lr_backbone = parse_double(key, value);
    else if (key == "optimizer") {
        if (value != "sgd" && value != "adamw")
            throw ConfigError("config: optimizer expects sgd|adamw, got '" + value + "'");
        optimizer = value;
    } else if (key == "weight_decay") weight_decay = parse_double(key, value);
    else if (key == "mode") mode = parse_run_mode(value);
    else if (key == "correction") correction = parse_correction_mode(value);
    else if (key == "workers") workers = parse_size(key, value);
    else if (key == "layers") layers = parse_size(key, value);
    else if (key == "heads") heads = parse_size(key, value);
    else if (key == "prompt_len") prompt_len = parse_size(key, value);
    else if (key == "d_model") d_model = parse_size(key, value);
    else if (key == "d_head") d_head = parse_size(key, value);
    else if (key == "tokens") tokens = parse_size(key, value);
    else if (key == "points") points = parse_size(key, value);
    else if (key == "classes") classes = parse_size(key, value);
    else if (key == "samples_per_class") samples_per_class = parse_size(key, value);
    else if (key == "imbalance_ratio") imbalance_ratio = parse_double(key, value);
    else if (key == "class_counts") {
        class_counts.clear();
        if (!value.empty()) {
            std::stringstream ss(value);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                class_counts.push_back(parse_size(key, trim(tok)));
            }
        }
    } else if (key == "noise_scale") noise_scale = parse_double(key, value);
    else if (key == "class_fraction") class_fraction = parse_double(key, value);
    else if (key == "sample_fraction") sample_fraction = parse_double(key, value);
    else if (key == "strict_disjoint") strict_disjoint = parse_bool(key, value);
    else if (key == "pretrain_epochs") pretrain_epochs = parse_size(key, value);
    else if (key == "pretrain_lr") pretrain_lr = parse_double(key, value);
    else if (key == "pretrain_samples_per_class")
        pretrain_samples_per_class = parse_size(key, value);
    else if (key == "pretrain_batch") pretrain_batch = parse_size(key, value);
    else if (key == "checkpoint") checkpoint = value;
    else if (key == "out_dir") out_dir = value;
    else if (key == "seed") {
        try {
            seed = std::stoull(value);
        } catch (const std::exception&) {
            throw ConfigError("config: seed expects an unsigned integer, got '" + value + "'");
        }
    } else {
        throw ConfigError("config: unknown key '" + key + "'");
    }
}

void ExperimentConfig::validate() const {
    if (clients < 1) throw ConfigError("config: clients must be >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("config: alpha must be in (0,1]");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (layers < 1 || heads < 1 || d_model < 1 || d_head < 1 || tokens < 1)
        throw ConfigError("config: model extents must be >= 1");
    if (classes < 2) throw ConfigError("config: classes must be >= 2");
    if (points % tokens != 0)
        throw ConfigError("config: points (" + std::to_string(points) +
                          ") must be divisible by tokens (" + std::to_string(tokens) + ")");
    if (!(class_fraction > 0.0 && class_fraction <= 1.0) ||
        !(sample_fraction > 0.0 && sample_fraction <= 1.0))
        throw ConfigError("config: fractions must lie in (0,1]");
    if (noise_scale < 0.0) throw ConfigError("config: noise_scale must be >= 0");
    if (imbalance_ratio < 1.0) throw ConfigError("config: imbalance_ratio must be >= 1");
    if (!class_counts.empty() && class_counts.size() != classes)
        throw ConfigError("config: class_counts lists " +
                          std::to_string(class_counts.size()) + " entries for " +
                          std::to_string(classes) + " classes");
    if (samples_per_class < 1) throw ConfigError("config: samples_per_class must be >= 1");
    for (std::size_t c : class_counts)
        if (c < 1) throw ConfigError("config: class_counts entries must be >= 1");
    if (pretrain_batch < 1 || pretrain_samples_per_class < 1)
        throw ConfigError("config: pretrain sizes must be >= 1");
}

std::vector<std::size_t> ExperimentConfig::resolved_class_counts() const {
    if (!class_counts.empty()) return class_counts;
    std::vector<std::size_t> counts(classes, samples_per_class);
    if (imbalance_ratio > 1.0) {
        // odd classes become minority at the requested ratio
        std::size_t minority = static_cast<std::size_t>(std::llround(
            static_cast<double>(samples_per_class) / imbalance_ratio));
        minority = std::max<std::size_t>(1, minority);
        for (std::size_t o = 1; o < classes; o += 2) counts[o] = minority;
    }
    return counts;
}

DatasetSpec ExperimentConfig::dataset_spec(std::uint64_t variant) const {
    DatasetSpec spec;
    spec.num_classes = classes;
    spec.class_counts = resolved_class_counts();
    spec.points_per_sample = points;
    spec.noise_scale = noise_scale;
    spec.seed = seed;
    spec.variant = variant;
    return spec;
}

ModelConfig ExperimentConfig::model_config() const {
    ModelConfig mc;
    mc.layers = layers;
    mc.heads = heads;
    mc.prompt_len = prompt_len;
    mc.d_model = d_model;
    mc.d_head = d_head;
    mc.tokens = tokens;
    mc.points = points;
    mc.classes = classes;
    // prompts exist only under the prompt-tuning protocol
    mc.prompts_enabled = mode == RunMode::Fed3d || mode == RunMode::LocalOnly;
    return mc;
}

RunSettings ExperimentConfig::run_settings() const {
    RunSettings rs;
    rs.num_clients = clients;
    rs.alpha = alpha;
    rs.rounds = rounds;
    rs.mode = mode;
    rs.workers = workers;
    rs.seed = seed;
    rs.train.epochs = local_epochs;
    rs.train.batch_size = batch_size;
    rs.train.lr_prompts = lr_prompts;
    rs.train.lr_head = lr_head;
    rs.train.lr_backbone = lr_backbone;
    rs.train.adamw = optimizer == "adamw";
    rs.train.weight_decay = weight_decay;
    rs.train.correction = correction;
    return rs;
}

std::string ExperimentConfig::echo() const {
    std::ostringstream os;
    os << "clients = " << clients << "\n";
    os << "alpha = " << fmt_double(alpha) << "\n";
    os << "rounds = " << rounds << "\n";
    os << "local_epochs = " << local_epochs << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "lr_prompts = " << fmt_double(lr_prompts) << "\n";
    os << "lr_head = " << fmt_double(lr_head) << "\n";
    os << "lr_backbone = " << fmt_double(lr_backbone) << "\n";
    os << "optimizer = " << optimizer << "\n";
    os << "weight_decay = " << fmt_double(weight_decay) << "\n";
    os << "mode = " << to_string(mode) << "\n";
    os << "correction = " << to_string(correction) << "\n";
    os << "workers = " << workers << "\n";
    os << "layers = " << layers << "\n";
    os << "heads = " << heads << "\n";
    os << "prompt_len = " << prompt_len << "\n";
    os << "d_model = " << d_model << "\n";
    os << "d_head = " << d_head << "\n";
    os << "tokens = " << tokens << "\n";
    os << "points = " << points << "\n";
    os << "classes = " << classes << "\n";
    os << "samples_per_class = " << samples_per_class << "\n";
    os << "imbalance_ratio = " << fmt_double(imbalance_ratio) << "\n";
    os << "class_counts = ";
    {
        auto counts = resolved_class_counts();
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if (i) os << ",";
            os << counts[i];
        }
    }
    os << "\n";
    os << "noise_scale = " << fmt_double(noise_scale) << "\n";
    os << "class_fraction = " << fmt_double(class_fraction) << "\n";
    os << "sample_fraction = " << fmt_double(sample_fraction) << "\n";
    os << "strict_disjoint = " << (strict_disjoint ? "true" : "false") << "\n";
    os << "pretrain_epochs = " << pretrain_epochs << "\n";
    os << "pretrain_lr = " << fmt_double(pretrain_lr) << "\n";
    os << "pretrain_samples_per_class = " << pretrain_samples_per_class << "\n";
    os << "pretrain_batch = " << pretrain_batch << "\n";
    os << "checkpoint = " << checkpoint << "\n";
    os << "seed = " << seed << "\n";
    return os.str();
}

std::uint64_t ExperimentConfig::config_hash() const {
    std::string text = echo();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace fed3d
