#include "tabgpt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace tabgpt {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'B', 'G', 'P', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// ---- little-endian primitive serialization ----

struct Writer {
    std::string out;

    void u8(std::uint8_t v) { out.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void raw(const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out.append(s);
    }
};

struct Reader {
    const std::string& in;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > in.size()) throw Error("corrupt checkpoint: truncated data");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(in[pos++]);
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, 8);
        return v;
    }
    float f32() {
        float v;
        raw(&v, 4);
        return v;
    }
    double f64() {
        double v;
        raw(&v, 8);
        return v;
    }
    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, in.data() + pos, n);
        pos += n;
    }
    std::string str() {
        std::uint32_t n = u32();
        need(n);
        std::string s = in.substr(pos, n);
        pos += n;
        return s;
    }
};

void write_tuple(Writer& w, const NoteTuple& t) {
    w.u8(static_cast<std::uint8_t>(t.pitch.variant()));
    w.u8(t.pitch.is_fret() ? static_cast<std::uint8_t>(t.pitch.fret_index()) : 0);
    w.u8(static_cast<std::uint8_t>(t.duration.denominator()));
    w.u8(static_cast<std::uint8_t>(t.chord));
    w.u8(static_cast<std::uint8_t>((t.dotted ? 1 : 0) | (t.muted ? 2 : 0)));
}

NoteTuple read_tuple(Reader& r) {
    const auto variant = r.u8();
    const int fret = r.u8();
    const int den = r.u8();
    const auto chord = r.u8();
    const auto flags = r.u8();
    if (variant > 3 || chord > 3 || flags > 3) throw Error("corrupt checkpoint: bad tuple encoding");
    PitchClass pitch = variant == 0   ? PitchClass::fret(fret)
                       : variant == 1 ? PitchClass::rest()
                       : variant == 2 ? PitchClass::dead()
                                      : PitchClass::tied();
    return NoteTuple(pitch, Duration::of(den), static_cast<ChordKind>(chord), flags & 1, flags & 2);
}

void write_tensor(Writer& w, const Tensor<float>& t) {
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    w.raw(t.data.data(), t.data.size() * sizeof(float));
}

Tensor<float> read_tensor(Reader& r) {
    const std::uint32_t rank = r.u32();
    if (rank > 4) throw Error("corrupt checkpoint: implausible tensor rank");
    std::vector<int> shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(r.u32()));
    Tensor<float> t = Tensor<float>::zeros(shape);
    r.raw(t.data.data(), t.data.size() * sizeof(float));
    return t;
}

void write_config(Writer& w, const TrainConfig& c) {
    std::map<std::string, double> kv = {
        {"n", double(c.n)},           {"batch_size", double(c.batch_size)},
        {"lr", double(c.lr)},         {"beta1", double(c.beta1)},
        {"beta2", double(c.beta2)},   {"eps", double(c.eps)},
        {"dropout", double(c.dropout)}, {"blocks", double(c.blocks)},
        {"heads", double(c.heads)},   {"head_dim", double(c.head_dim)},
        {"ffn_dim", double(c.ffn_dim)}, {"max_epochs", double(c.max_epochs)},
        {"patience", double(c.patience)}, {"stride", double(c.stride)},
        {"split_ratio", double(c.split_ratio)},
    };
    w.u32(static_cast<std::uint32_t>(kv.size()));
    for (const auto& [k, v] : kv) {
        w.str(k);
        w.f64(v);
    }
    w.u64(c.seed);
}

TrainConfig read_config(Reader& r) {
    const std::uint32_t count = r.u32();
    std::map<std::string, double> kv;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string k = r.str();
        kv[k] = r.f64();
    }
    auto get = [&kv](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw Error(std::string("corrupt checkpoint: missing config key ") + key);
        return it->second;
    };
    TrainConfig c;
    c.n = int(get("n"));
    c.batch_size = int(get("batch_size"));
    c.lr = float(get("lr"));
    c.beta1 = float(get("beta1"));
    c.beta2 = float(get("beta2"));
    c.eps = float(get("eps"));
    c.dropout = float(get("dropout"));
    c.blocks = int(get("blocks"));
    c.heads = int(get("heads"));
    c.head_dim = int(get("head_dim"));
    c.ffn_dim = int(get("ffn_dim"));
    c.max_epochs = int(get("max_epochs"));
    c.patience = int(get("patience"));
    c.stride = int(get("stride"));
    c.split_ratio = float(get("split_ratio"));
    c.seed = r.u64();
    return c;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    Writer payload;

    // vocabulary section
    payload.u32(static_cast<std::uint32_t>(ckpt.vocab.size()));
    for (const auto& t : ckpt.vocab.tuples()) write_tuple(payload, t);

    // config section
    write_config(payload, ckpt.config);

    // parameter section
    const auto params = ckpt.params.parameters();
    payload.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto* t : params) write_tensor(payload, *t);

    // best-epoch metrics + rng seed
    payload.u32(static_cast<std::uint32_t>(ckpt.best.epoch));
    payload.f64(ckpt.best.train_loss);
    payload.f64(ckpt.best.train_accuracy);
    payload.f64(ckpt.best.val_loss);
    payload.f64(ckpt.best.val_accuracy);
    payload.u64(ckpt.seed);

    Writer file;
    file.raw(kMagic, sizeof kMagic);
    file.u32(kVersion);
    file.u64(fnv1a(payload.out));
    file.u64(static_cast<std::uint64_t>(payload.out.size()));
    file.out += payload.out;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint to " + path.string());
    out.write(file.out.data(), static_cast<std::streamsize>(file.out.size()));
    if (!out) throw Error("write failure while saving checkpoint to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < sizeof(kMagic) + 4 + 8 + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw Error("corrupt checkpoint: bad magic in " + path.string());
    Reader header{bytes, sizeof kMagic};
    const std::uint32_t version = header.u32();
    if (version != kVersion)
        throw Error("checkpoint version mismatch: file has " + std::to_string(version) + ", supported is " +
                    std::to_string(kVersion));
    const std::uint64_t checksum = header.u64();
    const std::uint64_t payload_len = header.u64();
    if (header.pos + payload_len != bytes.size()) throw Error("corrupt checkpoint: truncated file");
    const std::string payload = bytes.substr(header.pos);
    if (fnv1a(payload) != checksum) throw Error("corrupt checkpoint: checksum mismatch");

    Reader r{payload, 0};

    const std::uint32_t vocab_size = r.u32();
    if (vocab_size == 0) throw Error("corrupt checkpoint: missing vocabulary");
    std::vector<NoteTuple> tuples;
    tuples.reserve(vocab_size);
    for (std::uint32_t i = 0; i < vocab_size; ++i) tuples.push_back(read_tuple(r));

    Checkpoint ckpt;
    ckpt.version = version;
    ckpt.vocab = Vocabulary::from_ordered(std::move(tuples));
    ckpt.config = read_config(r);

    ModelConfig mc;
    mc.vocab = static_cast<int>(vocab_size);
    mc.max_context = ckpt.config.n;
    mc.blocks = ckpt.config.blocks;
    mc.heads = ckpt.config.heads;
    mc.head_dim = ckpt.config.head_dim;
    mc.ffn_dim = ckpt.config.ffn_dim;
    mc.dropout = ckpt.config.dropout;
    ckpt.params = ModelParams<float>::init(mc, 0, nullptr);

    const std::uint32_t tensor_count = r.u32();
    auto slots = ckpt.params.parameters();
    if (tensor_count != slots.size())
        throw Error("corrupt checkpoint: expected " + std::to_string(slots.size()) + " tensors, found " +
                    std::to_string(tensor_count));
    for (auto* slot : slots) {
        Tensor<float> t = read_tensor(r);
        if (!t.same_shape(*slot))
            throw Error("corrupt checkpoint: tensor shape " + t.shape_str() + " does not match model " +
                        slot->shape_str());
        *slot = std::move(t);
    }

    ckpt.best.epoch = static_cast<int>(r.u32());
    ckpt.best.train_loss = r.f64();
    ckpt.best.train_accuracy = r.f64();
    ckpt.best.val_loss = r.f64();
    ckpt.best.val_accuracy = r.f64();
    ckpt.seed = r.u64();
    return ckpt;
}

} // namespace tabgpt
