#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fed3d/correction.hpp"
#include "fed3d/detector.hpp"

namespace fed3d {

// Communicated state: prompt tensors (layer-major, head-major, K then V),
// a generic length-prefixed tensor list for everything else, and optional
// per-class gradient statistics.
//
// Wire layout (little-endian):
//   magic "F3DP", version u16 = 1, flags u16 (bit0 head tensors present,
//   bit1 class stats present), L u16, H u16, p u16, d_head u16, O u16,
//   prompt data as f32 row-major, u16 head-tensor count, per tensor
//   u16 rank + u32 extents + f32 data, then O class stats as f64 with
//   absent classes encoded as -1. Checkpoints append a u64 round counter.
struct Payload {
    std::uint16_t layers = 0;
    std::uint16_t heads = 0;
    std::uint16_t prompt_len = 0;
    std::uint16_t d_head = 0;
    std::uint16_t classes = 0;
    std::vector<Tensor> prompt_tensors;  // layers*heads*2 entries of [p, d_head]
    std::vector<Tensor> head_tensors;
    bool has_head = false;
    bool has_stats = false;
    std::vector<std::optional<double>> class_stats;  // size O when has_stats

    std::size_t parameter_count() const;
};

std::vector<std::uint8_t> serialize_payload(const Payload& payload);
Payload deserialize_payload(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> serialize_checkpoint(const Payload& payload, std::uint64_t round);
std::pair<Payload, std::uint64_t> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

// Which model tensors ride in the head-tensor section.
enum class PayloadScope {
    Trainable,  // the communicated set: prompts + trainable non-prompt tensors
    FullModel,  // every tensor (checkpoints)
};

// Builds a payload from the model's current values (f32-rounded on the
// wire). Stats are attached when provided.
Payload make_payload(const ModelSplit& model, PayloadScope scope,
                     const ClassStats* stats = nullptr);

// Writes payload values into the model. Shapes and tensor counts must
// match; mismatches raise ProtocolError mentioning `who`.
void load_payload(ModelSplit& model, const Payload& payload, PayloadScope scope,
                  const std::string& who);

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_bytes(const std::string& path);

}  // namespace fed3d
