#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fed3d/detector.hpp"

namespace fed3d {

// Synthetic point-set corpus description. Every class gets a fixed
// geometric template (box / sphere / plane scatter with class-specific
// placement); samples are the template plus seeded Gaussian jitter.
struct DatasetSpec {
    std::size_t num_classes = 10;
    std::vector<std::size_t> class_counts;  // size num_classes, each >= 1
    std::size_t points_per_sample = 32;
    double noise_scale = 0.05;
    std::uint64_t seed = 1;
    // Jitter substream selector: different variants share class geometry
    // but draw disjoint sample noise (0 = federated corpus, 1 = pretext).
    std::uint64_t variant = 0;
};

struct Dataset {
    std::size_t num_classes = 0;
    std::size_t points_per_sample = 0;
    std::vector<PointSample> samples;
    std::vector<std::size_t> train_indices;  // stratified 80/20 split
    std::vector<std::size_t> test_indices;

    std::uint64_t content_hash() const;
    std::vector<std::size_t> class_histogram(const std::vector<std::size_t>& indices) const;
};

Dataset generate_dataset(const DatasetSpec& spec);

// Non-IID assignment: each client receives ceil(class_fraction * O)
// classes and ceil(sample_fraction * n) train samples from each. Shared
// mode draws per client with replacement across clients; strict mode
// deals disjoint shards and errors when a class pool runs dry.
struct PartitionPlan {
    double class_fraction = 0.7;
    double sample_fraction = 0.7;
    std::vector<std::vector<std::size_t>> client_classes;  // ascending per client
    std::vector<std::vector<std::size_t>> client_samples;  // indices into Dataset::samples
};

PartitionPlan partition_noniid(const Dataset& dataset, std::size_t num_clients,
                               double class_fraction, double sample_fraction,
                               std::uint64_t seed, bool strict_disjoint = false);

struct ImbalanceProfile {
    std::vector<std::vector<std::size_t>> per_client;  // [C][O] counts
    std::vector<std::size_t> global_counts;            // per-class totals across clients
    std::vector<double> local_ratios;                  // max/min over classes present
    double global_ratio = 1.0;
};

ImbalanceProfile imbalance_profile(const PartitionPlan& plan, const Dataset& dataset);

// Flat binary dataset file ("F3DD") and the partition manifest CSV.
void export_dataset(const Dataset& dataset, const std::string& path);
Dataset import_dataset(const std::string& path);
void write_partition_csv(const PartitionPlan& plan, const Dataset& dataset,
                         const std::string& path);

}  // namespace fed3d
