#include "fed3d/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fed3d/common.hpp"

namespace fed3d {

namespace {

constexpr std::uint64_t kGeometryTag = 0xDA7A01ULL;
constexpr std::uint64_t kJitterTag = 0xDA7A02ULL;
constexpr std::uint64_t kPartitionTag = 0x9A27ULL;

// Well-separated anchor for each class: cube corners first, then axis
// midpoints, nudged by a small class-specific offset.
void class_anchor(std::size_t cls, Rng& rng, double out[3]) {
    static const double lattice[][3] = {
        {-1, -1, -1}, {1, 1, 1},  {-1, 1, -1}, {1, -1, 1},  {-1, -1, 1},
        {1, 1, -1},   {-1, 1, 1}, {1, -1, -1}, {0, 0, 1.4}, {0, 0, -1.4},
        {0, 1.4, 0},  {0, -1.4, 0}, {1.4, 0, 0}, {-1.4, 0, 0},
    };
    constexpr std::size_t n_lattice = sizeof(lattice) / sizeof(lattice[0]);
    for (int d = 0; d < 3; ++d) {
        double base = lattice[cls % n_lattice][d] * 0.7;
        // wrap-around classes shift outward so anchors stay distinct
        base *= 1.0 + 0.35 * static_cast<double>(cls / n_lattice);
        out[d] = base + rng.uniform(-0.08, 0.08);
    }
}

// Fixed template point set for one class: a scatter on a box surface,
// sphere, or plane patch at the class anchor.
Tensor class_template(std::size_t cls, std::size_t n_points, std::uint64_t seed) {
    Rng rng = derive_rng(seed, {kGeometryTag, cls});
    double anchor[3];
    class_anchor(cls, rng, anchor);
    double size = rng.uniform(0.25, 0.45);
    Tensor pts({n_points, 3});
    std::size_t kind = cls % 3;
    // plane orientation, drawn once per class
    double ax = rng.uniform(0.0, 6.283185307179586);
    double ay = rng.uniform(0.0, 6.283185307179586);
    for (std::size_t i = 0; i < n_points; ++i) {
        double p[3] = {0, 0, 0};
        if (kind == 0) {
            // box surface: pick a face, scatter on it
            std::size_t face = static_cast<std::size_t>(rng.below(6));
            double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
            double s = (face % 2 == 0) ? 1.0 : -1.0;
            if (face / 2 == 0) {
                p[0] = s;
                p[1] = u;
                p[2] = v;
            } else if (face / 2 == 1) {
                p[0] = u;
                p[1] = s;
                p[2] = v;
            } else {
                p[0] = u;
                p[1] = v;
                p[2] = s;
            }
        } else if (kind == 1) {
            // sphere surface via normalized gaussian
            double x = rng.normal(), y = rng.normal(), z = rng.normal();
            double norm = std::sqrt(x * x + y * y + z * z) + 1e-12;
            p[0] = x / norm;
            p[1] = y / norm;
            p[2] = z / norm;
        } else {
            // tilted plane patch
            double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
            p[0] = u * std::cos(ax) - v * std::sin(ax) * std::cos(ay);
            p[1] = u * std::sin(ax) + v * std::cos(ax) * std::cos(ay);
            p[2] = v * std::sin(ay);
        }
        for (int d = 0; d < 3; ++d) pts.at(i, d) = anchor[d] + size * p[d];
    }
    return pts;
}

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec) {
    if (spec.num_classes < 2) {
        throw ConfigError("dataset: need at least 2 classes, got " +
                          std::to_string(spec.num_classes));
    }
    if (spec.class_counts.size() != spec.num_classes) {
        throw ConfigError("dataset: class_counts size " +
                          std::to_string(spec.class_counts.size()) + " vs num_classes " +
                          std::to_string(spec.num_classes));
    }
    for (std::size_t o = 0; o < spec.num_classes; ++o) {
        if (spec.class_counts[o] < 1) {
            throw ConfigError("dataset: class " + std::to_string(o) + " has zero samples");
        }
    }
    Dataset ds;
    ds.num_classes = spec.num_classes;
    ds.points_per_sample = spec.points_per_sample;
    for (std::size_t cls = 0; cls < spec.num_classes; ++cls) {
        Tensor tmpl = class_template(cls, spec.points_per_sample, spec.seed);
        Rng jitter = derive_rng(spec.seed, {kJitterTag, cls, spec.variant});
        std::size_t count = spec.class_counts[cls];
        std::size_t first = ds.samples.size();
        for (std::size_t i = 0; i < count; ++i) {
            Tensor pts = tmpl;
            for (std::size_t k = 0; k < pts.numel(); ++k)
                pts[k] += jitter.normal(spec.noise_scale);
            pts.quantize_f32();  // keeps export/import value-exact
            ds.samples.push_back(PointSample{std::move(pts), static_cast<int>(cls)});
        }
        // stratified 80/20: the trailing fifth of each class is test
        std::size_t n_test = count / 5;
        for (std::size_t i = 0; i < count; ++i) {
            if (i < count - n_test)
                ds.train_indices.push_back(first + i);
            else
                ds.test_indices.push_back(first + i);
        }
    }
    return ds;
}

std::uint64_t Dataset::content_hash() const {
    // FNV-1a over dims, labels and coordinate bit patterns
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xFF;
            h *= 0x100000001b3ULL;
        }
    };
    feed(num_classes);
    feed(points_per_sample);
    feed(samples.size());
    for (const PointSample& s : samples) {
        feed(static_cast<std::uint64_t>(s.label));
        for (double d : s.points.data()) {
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(d));
            std::memcpy(&bits, &d, sizeof(bits));
            feed(bits);
        }
    }
    return h;
}

std::vector<std::size_t> Dataset::class_histogram(
    const std::vector<std::size_t>& indices) const {
    std::vector<std::size_t> hist(num_classes, 0);
    for (std::size_t i : indices) hist[static_cast<std::size_t>(samples[i].label)] += 1;
    return hist;
}

PartitionPlan partition_noniid(const Dataset& dataset, std::size_t num_clients,
                               double class_fraction, double sample_fraction,
                               std::uint64_t seed, bool strict_disjoint) {
    if (num_clients < 1) throw ConfigError("partition: need at least one client");
    if (!(class_fraction > 0.0 && class_fraction <= 1.0) ||
        !(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
        throw ConfigError("partition: fractions must lie in (0,1]");
    }
    std::size_t o_count = dataset.num_classes;
    std::size_t classes_per_client =
        static_cast<std::size_t>(std::ceil(class_fraction * static_cast<double>(o_count)));
    classes_per_client = std::min(classes_per_client, o_count);

    // train pool per class
    std::vector<std::vector<std::size_t>> pools(o_count);
    for (std::size_t idx : dataset.train_indices)
        pools[static_cast<std::size_t>(dataset.samples[idx].label)].push_back(idx);
    for (std::size_t o = 0; o < o_count; ++o) {
        if (pools[o].empty()) {
            throw ConfigError("partition: class " + std::to_string(o) +
                              " has no train samples");
        }
    }

    PartitionPlan plan;
    plan.class_fraction = class_fraction;
    plan.sample_fraction = sample_fraction;

    // class assignment, reshuffled (bounded) until every class is covered
    for (std::uint64_t salt = 0;; ++salt) {
        if (salt == 100) {
            throw ConfigError("partition: could not cover all classes after 100 reshuffles");
        }
        plan.client_classes.assign(num_clients, {});
        std::vector<bool> covered(o_count, false);
        for (std::size_t c = 0; c < num_clients; ++c) {
            Rng rng = derive_rng(seed, {kPartitionTag, salt, c});
            plan.client_classes[c] = rng.sample_without_replacement(o_count, classes_per_client);
            for (std::size_t o : plan.client_classes[c]) covered[o] = true;
        }
        bool all = classes_per_client == o_count ||
                   std::all_of(covered.begin(), covered.end(), [](bool b) { return b; });
        if (all) break;
        log_warn("partition: class coverage incomplete, reshuffling (salt " +
                 std::to_string(salt + 1) + ")");
    }

    plan.client_samples.assign(num_clients, {});
    if (!strict_disjoint) {
        for (std::size_t c = 0; c < num_clients; ++c) {
            for (std::size_t o : plan.client_classes[c]) {
                const auto& pool = pools[o];
                std::size_t take = static_cast<std::size_t>(
                    std::ceil(sample_fraction * static_cast<double>(pool.size())));
                take = std::max<std::size_t>(1, std::min(take, pool.size()));
                Rng rng = derive_rng(seed, {kPartitionTag, 0x5A3DULL, c, o});
                for (std::size_t k : rng.sample_without_replacement(pool.size(), take))
                    plan.client_samples[c].push_back(pool[k]);
            }
            std::sort(plan.client_samples[c].begin(), plan.client_samples[c].end());
        }
    } else {
        // shuffle each pool once, then deal disjoint chunks in client order
        std::vector<std::vector<std::size_t>> shuffled = pools;
        std::vector<std::size_t> cursor(o_count, 0);
        for (std::size_t o = 0; o < o_count; ++o) {
            Rng rng = derive_rng(seed, {kPartitionTag, 0xD15CULL, o});
            rng.shuffle(shuffled[o]);
        }
        for (std::size_t c = 0; c < num_clients; ++c) {
            for (std::size_t o : plan.client_classes[c]) {
                std::size_t want = static_cast<std::size_t>(
                    std::ceil(sample_fraction * static_cast<double>(pools[o].size())));
                want = std::max<std::size_t>(1, want);
                if (cursor[o] >= shuffled[o].size()) {
                    throw ConfigError("partition: strict-disjoint pool for class " +
                                      std::to_string(o) + " exhausted at client " +
                                      std::to_string(c));
                }
                std::size_t take = std::min(want, shuffled[o].size() - cursor[o]);
                for (std::size_t k = 0; k < take; ++k)
                    plan.client_samples[c].push_back(shuffled[o][cursor[o] + k]);
                cursor[o] += take;
            }
            std::sort(plan.client_samples[c].begin(), plan.client_samples[c].end());
        }
    }
    for (std::size_t c = 0; c < num_clients; ++c) {
        if (plan.client_samples[c].empty()) {
            throw ConfigError("partition: client " + std::to_string(c) +
                              " received an empty shard");
        }
    }
    return plan;
}

ImbalanceProfile imbalance_profile(const PartitionPlan& plan, const Dataset& dataset) {
    ImbalanceProfile prof;
    std::size_t o_count = dataset.num_classes;
    prof.global_counts.assign(o_count, 0);
    for (const auto& samples : plan.client_samples) {
        auto hist = dataset.class_histogram(samples);
        for (std::size_t o = 0; o < o_count; ++o) prof.global_counts[o] += hist[o];
        std::size_t mx = 0, mn = 0;
        bool first = true;
        for (std::size_t o = 0; o < o_count; ++o) {
            if (hist[o] == 0) continue;
            if (first) {
                mx = mn = hist[o];
                first = false;
            } else {
                mx = std::max(mx, hist[o]);
                mn = std::min(mn, hist[o]);
            }
        }
        prof.local_ratios.push_back(first ? 1.0
                                          : static_cast<double>(mx) / static_cast<double>(mn));
        prof.per_client.push_back(std::move(hist));
    }
    std::size_t gmx = 0, gmn = 0;
    bool first = true;
    for (std::size_t o = 0; o < o_count; ++o) {
        if (prof.global_counts[o] == 0) continue;
        if (first) {
            gmx = gmn = prof.global_counts[o];
            first = false;
        } else {
            gmx = std::max(gmx, prof.global_counts[o]);
            gmn = std::min(gmn, prof.global_counts[o]);
        }
    }
    prof.global_ratio = first ? 1.0 : static_cast<double>(gmx) / static_cast<double>(gmn);
    return prof;
}

// ---- file I/O ----------------------------------------------------------

namespace {
void put_u16(std::vector<std::uint8_t>& buf, std::uint16_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xFF));
    buf.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_f32(std::vector<std::uint8_t>& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}
}  // namespace

void export_dataset(const Dataset& dataset, const std::string& path) {
    std::vector<std::uint8_t> buf;
    buf.push_back('F');
    buf.push_back('3');
    buf.push_back('D');
    buf.push_back('D');
    put_u16(buf, 1);  // version
    put_u16(buf, static_cast<std::uint16_t>(dataset.num_classes));
    put_u32(buf, static_cast<std::uint32_t>(dataset.points_per_sample));
    put_u64(buf, dataset.samples.size());
    for (const PointSample& s : dataset.samples) {
        put_u16(buf, static_cast<std::uint16_t>(s.label));
        for (double d : s.points.data()) put_f32(buf, static_cast<float>(d));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("export_dataset: cannot open " + path);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("export_dataset: write failed for " + path);
}

Dataset import_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("import_dataset: cannot open " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    std::size_t off = 0;
    auto need = [&](std::size_t n) {
        if (off + n > buf.size()) {
            throw ParseError("dataset file truncated at offset " + std::to_string(off));
        }
    };
    need(4);
    if (buf[0] != 'F' || buf[1] != '3' || buf[2] != 'D' || buf[3] != 'D') {
        throw ParseError("dataset file: bad magic at offset 0");
    }
    off = 4;
    auto get_u16 = [&]() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(buf[off] | (buf[off + 1] << 8));
        off += 2;
        return v;
    };
    auto get_u32 = [&]() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[off + i]) << (8 * i);
        off += 4;
        return v;
    };
    auto get_u64 = [&]() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[off + i]) << (8 * i);
        off += 8;
        return v;
    };
    std::uint16_t version = get_u16();
    if (version != 1) {
        throw ParseError("dataset file: unsupported version " + std::to_string(version) +
                         " at offset 4");
    }
    Dataset ds;
    ds.num_classes = get_u16();
    ds.points_per_sample = get_u32();
    std::uint64_t count = get_u64();
    std::vector<std::size_t> per_class(ds.num_classes, 0);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint16_t label = get_u16();
        Tensor pts({ds.points_per_sample, 3});
        for (std::size_t k = 0; k < pts.numel(); ++k) {
            std::uint32_t bits = get_u32();
            float f;
            std::memcpy(&f, &bits, 4);
            pts[k] = static_cast<double>(f);
        }
        ds.samples.push_back(PointSample{std::move(pts), static_cast<int>(label)});
    }
    if (off != buf.size()) {
        throw ParseError("dataset file: " + std::to_string(buf.size() - off) +
                         " trailing bytes at offset " + std::to_string(off));
    }
    // re-derive the stratified split: per class, trailing fifth is test
    for (std::size_t o = 0; o < ds.num_classes; ++o) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.samples.size(); ++i)
            if (static_cast<std::size_t>(ds.samples[i].label) == o) idx.push_back(i);
        std::size_t n_test = idx.size() / 5;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (i < idx.size() - n_test)
                ds.train_indices.push_back(idx[i]);
            else
                ds.test_indices.push_back(idx[i]);
        }
    }
    std::sort(ds.train_indices.begin(), ds.train_indices.end());
    std::sort(ds.test_indices.begin(), ds.test_indices.end());
    return ds;
}

void write_partition_csv(const PartitionPlan& plan, const Dataset& dataset,
                         const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("write_partition_csv: cannot open " + path);
    out << "client_id,class,sample_index\n";
    for (std::size_t c = 0; c < plan.client_samples.size(); ++c) {
        for (std::size_t idx : plan.client_samples[c]) {
            out << c << "," << dataset.samples[idx].label << "," << idx << "\n";
        }
    }
}

}  // namespace fed3d
