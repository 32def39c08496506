#include "atnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <zlib.h>

namespace atnet {

namespace {

constexpr char kMagic[8] = {'A', 'T', 'N', 'E', 'T', 'C', 'K', 'P'};

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_ += s;
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }
    std::string& bytes() { return out_; }

private:
    std::string out_;
};

class Reader {
public:
    Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }
    bool done() const { return pos_ == end_; }

private:
    void need(std::size_t n) const {
        if (end_ - pos_ < n) throw CheckpointError("checkpoint truncated");
    }
    const std::string& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& bytes, std::size_t n) {
    return static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    check_parameters(ckpt.spec, ckpt.params);
    Writer w;
    w.raw(kMagic, sizeof(kMagic));
    w.u32(kCheckpointVersion);
    w.str(ckpt.spec.descriptor());
    w.u64(ckpt.step);
    w.u32(static_cast<std::uint32_t>(ckpt.meta.size()));
    for (const auto& [k, v] : ckpt.meta) {
        w.str(k);
        w.str(v);
    }
    const auto& tensors = ckpt.params.tensors();
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        w.str(t.name);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) w.u32(static_cast<std::uint32_t>(d));
        for (float v : t.values) w.f32(v);
    }
    w.u8(ckpt.optimizer ? 1 : 0);
    if (ckpt.optimizer) {
        const OptimizerState& s = *ckpt.optimizer;
        if (s.m.size() != tensors.size() || s.v.size() != tensors.size())
            throw InvalidArgument("optimizer state does not match parameters");
        w.f64(s.config.lr);
        w.f64(s.config.beta1);
        w.f64(s.config.beta2);
        w.f64(s.config.eps);
        w.u64(s.step);
        w.u64(s.rejected_steps);
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            if (s.m[i].size() != tensors[i].values.size() || s.v[i].size() != tensors[i].values.size())
                throw InvalidArgument("optimizer state size mismatch for " + tensors[i].name);
            for (double v : s.m[i]) w.f64(v);
            for (double v : s.v[i]) w.f64(v);
        }
    }
    const std::uint32_t crc = crc_of(w.bytes(), w.bytes().size());
    w.u32(crc);
    return std::move(w.bytes());
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError("not a checkpoint (bad magic)");
    const std::size_t body = bytes.size() - 4;
    Reader tail(bytes, bytes.size());
    tail.skip(body);
    if (tail.u32() != crc_of(bytes, body)) throw CheckpointError("checkpoint checksum mismatch (file corrupted)");

    Reader r(bytes, body);
    r.skip(sizeof(kMagic));
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    Checkpoint ckpt;
    ckpt.spec = NetworkSpec::from_descriptor(r.str());
    ckpt.step = r.u64();
    const std::uint32_t n_meta = r.u32();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = r.str();
        ckpt.meta[k] = r.str();
    }
    const std::uint32_t n_params = r.u32();
    for (std::uint32_t i = 0; i < n_params; ++i) {
        std::string name = r.str();
        const std::uint32_t ndim = r.u32();
        std::vector<int> shape(ndim);
        std::size_t count = 1;
        for (auto& d : shape) {
            d = static_cast<int>(r.u32());
            count *= static_cast<std::size_t>(d);
        }
        if (count > bytes.size()) throw CheckpointError("checkpoint tensor " + name + " larger than file");
        std::vector<float> values(count);
        for (float& v : values) v = r.f32();
        ckpt.params.add(std::move(name), std::move(shape), std::move(values));
    }
    check_parameters(ckpt.spec, ckpt.params);
    if (r.u8()) {
        OptimizerState s;
        s.config.lr = r.f64();
        s.config.beta1 = r.f64();
        s.config.beta2 = r.f64();
        s.config.eps = r.f64();
        s.step = r.u64();
        s.rejected_steps = r.u64();
        for (const auto& t : ckpt.params.tensors()) {
            std::vector<double> m(t.values.size()), v(t.values.size());
            for (double& x : m) x = r.f64();
            for (double& x : v) x = r.f64();
            s.m.push_back(std::move(m));
            s.v.push_back(std::move(v));
        }
        ckpt.optimizer = std::move(s);
    }
    if (!r.done()) throw CheckpointError("trailing bytes in checkpoint");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const std::string bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("error writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("missing checkpoint: " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkSpec& expected) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.spec.descriptor() != expected.descriptor())
        throw CheckpointError(path.string() + ": network mismatch, checkpoint holds '" + ckpt.spec.descriptor() +
                              "' but '" + expected.descriptor() + "' was expected");
    return ckpt;
}

}  // namespace atnet
