#include "fed3d/wire.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "fed3d/common.hpp"

namespace fed3d {

namespace {

constexpr char kMagic[4] = {'F', '3', 'D', 'P'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kFlagHead = 1u << 0;
constexpr std::uint16_t kFlagStats = 1u << 1;
constexpr double kAbsentStat = -1.0;

class Writer {
  public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) {
        buf_.push_back(static_cast<std::uint8_t>(v & 0xFF));
        buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i)
            buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i)
            buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

  private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
  public:
    explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

    std::size_t offset() const { return off_; }
    bool at_end() const { return off_ == buf_.size(); }

    void need(std::size_t n) {
        if (off_ + n > buf_.size()) {
            throw ParseError("payload truncated at offset " + std::to_string(off_) +
                             " (need " + std::to_string(n) + " more bytes, have " +
                             std::to_string(buf_.size() - off_) + ")");
        }
    }
    std::uint8_t u8() {
        need(1);
        return buf_[off_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(buf_[off_] | (buf_[off_ + 1] << 8));
        off_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[off_ + i]) << (8 * i);
        off_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[off_ + i]) << (8 * i);
        off_ += 8;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

  private:
    const std::vector<std::uint8_t>& buf_;
    std::size_t off_ = 0;
};

void write_tensor_f32(Writer& w, const Tensor& t) {
    for (double d : t.data()) w.f32(static_cast<float>(d));
}

void write_shaped_tensor(Writer& w, const Tensor& t) {
    w.u16(static_cast<std::uint16_t>(t.rank()));
    for (std::size_t e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    write_tensor_f32(w, t);
}

Tensor read_shaped_tensor(Reader& r) {
    std::uint16_t rank = r.u16();
    if (rank > 4) {
        throw ParseError("payload: implausible tensor rank " + std::to_string(rank) +
                         " at offset " + std::to_string(r.offset() - 2));
    }
    std::vector<std::size_t> shape(rank);
    for (std::uint16_t i = 0; i < rank; ++i) shape[i] = r.u32();
    Tensor t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(r.f32());
    return t;
}

void serialize_body(Writer& w, const Payload& p) {
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u16(kVersion);
    std::uint16_t flags = 0;
    if (p.has_head) flags |= kFlagHead;
    if (p.has_stats) flags |= kFlagStats;
    w.u16(flags);
    w.u16(p.layers);
    w.u16(p.heads);
    w.u16(p.prompt_len);
    w.u16(p.d_head);
    w.u16(p.classes);
    std::size_t expect = static_cast<std::size_t>(p.layers) * p.heads * 2;
    if (p.prompt_tensors.size() != expect) {
        throw ProtocolError("serialize: " + std::to_string(p.prompt_tensors.size()) +
                            " prompt tensors, header implies " + std::to_string(expect));
    }
    for (const Tensor& t : p.prompt_tensors) {
        if (t.rank() != 2 || t.rows() != p.prompt_len || t.cols() != p.d_head) {
            throw ProtocolError("serialize: prompt tensor " + shape_str(t) +
                                " does not match header [" + std::to_string(p.prompt_len) +
                                "x" + std::to_string(p.d_head) + "]");
        }
        write_tensor_f32(w, t);
    }
    if (p.has_head) {
        w.u16(static_cast<std::uint16_t>(p.head_tensors.size()));
        for (const Tensor& t : p.head_tensors) write_shaped_tensor(w, t);
    }
    if (p.has_stats) {
        if (p.class_stats.size() != p.classes) {
            throw ProtocolError("serialize: " + std::to_string(p.class_stats.size()) +
                                " class stats, header says O=" + std::to_string(p.classes));
        }
        for (const auto& s : p.class_stats) w.f64(s ? *s : kAbsentStat);
    }
}

Payload parse_body(Reader& r) {
    for (int i = 0; i < 4; ++i) {
        std::size_t at = r.offset();
        std::uint8_t b = r.u8();
        if (b != static_cast<std::uint8_t>(kMagic[i])) {
            throw ParseError("payload: bad magic byte at offset " + std::to_string(at));
        }
    }
    std::uint16_t version = r.u16();
    if (version != kVersion) {
        throw ParseError("payload: unsupported version " + std::to_string(version) +
                         " at offset 4");
    }
    std::uint16_t flags = r.u16();
    Payload p;
    p.has_head = (flags & kFlagHead) != 0;
    p.has_stats = (flags & kFlagStats) != 0;
    p.layers = r.u16();
    p.heads = r.u16();
    p.prompt_len = r.u16();
    p.d_head = r.u16();
    p.classes = r.u16();
    std::size_t n_prompts = static_cast<std::size_t>(p.layers) * p.heads * 2;
    p.prompt_tensors.reserve(n_prompts);
    for (std::size_t i = 0; i < n_prompts; ++i) {
        Tensor t({p.prompt_len, p.d_head});
        for (std::size_t k = 0; k < t.numel(); ++k) t[k] = static_cast<double>(r.f32());
        p.prompt_tensors.push_back(std::move(t));
    }
    if (p.has_head) {
        std::uint16_t count = r.u16();
        p.head_tensors.reserve(count);
        for (std::uint16_t i = 0; i < count; ++i) p.head_tensors.push_back(read_shaped_tensor(r));
    }
    if (p.has_stats) {
        p.class_stats.resize(p.classes);
        for (std::size_t o = 0; o < p.classes; ++o) {
            double v = r.f64();
            if (v != kAbsentStat) p.class_stats[o] = v;
        }
    }
    return p;
}

}  // namespace

std::size_t Payload::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& t : prompt_tensors) n += t.numel();
    for (const Tensor& t : head_tensors) n += t.numel();
    return n;
}

std::vector<std::uint8_t> serialize_payload(const Payload& payload) {
    Writer w;
    serialize_body(w, payload);
    return w.take();
}

Payload deserialize_payload(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    Payload p = parse_body(r);
    if (!r.at_end()) {
        throw ParseError("payload: " + std::to_string(bytes.size() - r.offset()) +
                         " trailing bytes at offset " + std::to_string(r.offset()));
    }
    return p;
}

std::vector<std::uint8_t> serialize_checkpoint(const Payload& payload, std::uint64_t round) {
    Writer w;
    serialize_body(w, payload);
    w.u64(round);
    return w.take();
}

std::pair<Payload, std::uint64_t> deserialize_checkpoint(
    const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    Payload p = parse_body(r);
    std::uint64_t round = r.u64();
    if (!r.at_end()) {
        throw ParseError("checkpoint: " + std::to_string(bytes.size() - r.offset()) +
                         " trailing bytes at offset " + std::to_string(r.offset()));
    }
    return {std::move(p), round};
}

Payload make_payload(const ModelSplit& model, PayloadScope scope, const ClassStats* stats) {
    auto& m = const_cast<ModelSplit&>(model);
    Payload p;
    p.layers = static_cast<std::uint16_t>(model.cfg.layers);
    p.heads = static_cast<std::uint16_t>(model.cfg.heads);
    p.prompt_len = static_cast<std::uint16_t>(model.prompts.prompt_len);
    p.d_head = static_cast<std::uint16_t>(model.cfg.d_head);
    p.classes = static_cast<std::uint16_t>(model.cfg.classes);
    for (Parameter* prm : m.prompt_parameters()) p.prompt_tensors.push_back(prm->value);
    p.has_head = true;
    if (scope == PayloadScope::FullModel) {
        for (Parameter* prm : m.backbone_parameters()) p.head_tensors.push_back(prm->value);
        for (Parameter* prm : m.head_parameters()) p.head_tensors.push_back(prm->value);
    } else {
        for (Parameter* prm : m.backbone_parameters())
            if (prm->trainable) p.head_tensors.push_back(prm->value);
        for (Parameter* prm : m.head_parameters())
            if (prm->trainable) p.head_tensors.push_back(prm->value);
    }
    if (stats) {
        p.has_stats = true;
        p.class_stats = stats->per_class;
        if (p.class_stats.size() != model.cfg.classes) {
            throw ProtocolError("make_payload: stats for " +
                                std::to_string(p.class_stats.size()) + " classes, model has " +
                                std::to_string(model.cfg.classes));
        }
    }
    return p;
}

void load_payload(ModelSplit& model, const Payload& payload, PayloadScope scope,
                  const std::string& who) {
    // A prompt-free payload (p == 0, e.g. a pretrain checkpoint) may load
    // into a prompt-carrying model; the model's prompts are left as they
    // are. Any other geometry difference is a mismatch.
    bool skip_prompts = payload.prompt_len == 0 && model.prompts.prompt_len > 0;
    if (payload.layers != model.cfg.layers || payload.heads != model.cfg.heads ||
        payload.d_head != model.cfg.d_head || payload.classes != model.cfg.classes ||
        (!skip_prompts && payload.prompt_len != model.prompts.prompt_len)) {
        throw ProtocolError("load_payload(" + who + "): header L=" +
                            std::to_string(payload.layers) + " H=" +
                            std::to_string(payload.heads) + " p=" +
                            std::to_string(payload.prompt_len) + " d_head=" +
                            std::to_string(payload.d_head) + " O=" +
                            std::to_string(payload.classes) + " does not match model");
    }
    std::vector<Parameter*> targets;
    auto prompt_params = model.prompt_parameters();
    if (!skip_prompts && payload.prompt_tensors.size() != prompt_params.size()) {
        throw ProtocolError("load_payload(" + who + "): " +
                            std::to_string(payload.prompt_tensors.size()) +
                            " prompt tensors, model expects " +
                            std::to_string(prompt_params.size()));
    }
    if (scope == PayloadScope::FullModel) {
        for (Parameter* prm : model.backbone_parameters()) targets.push_back(prm);
        for (Parameter* prm : model.head_parameters()) targets.push_back(prm);
    } else {
        for (Parameter* prm : model.backbone_parameters())
            if (prm->trainable) targets.push_back(prm);
        for (Parameter* prm : model.head_parameters())
            if (prm->trainable) targets.push_back(prm);
    }
    if (payload.head_tensors.size() != targets.size()) {
        throw ProtocolError("load_payload(" + who + "): " +
                            std::to_string(payload.head_tensors.size()) +
                            " head tensors, model expects " + std::to_string(targets.size()));
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (!targets[i]->value.same_shape(payload.head_tensors[i])) {
            throw ProtocolError("load_payload(" + who + "): tensor " + targets[i]->name +
                                " expects " + shape_str(targets[i]->value) + ", payload has " +
                                shape_str(payload.head_tensors[i]));
        }
    }
    if (!skip_prompts) {
        for (std::size_t i = 0; i < prompt_params.size(); ++i)
            prompt_params[i]->value = payload.prompt_tensors[i];
    }
    for (std::size_t i = 0; i < targets.size(); ++i)
        targets[i]->value = payload.head_tensors[i];
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path);
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
}

}  // namespace fed3d
