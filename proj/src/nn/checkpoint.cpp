#include "dvsnet/nn/checkpoint.hpp"

#include <cstring>
#include <map>

#include "dvsnet/error.hpp"
#include "dvsnet/ingest.hpp"

namespace dvsnet::nn {
namespace {

constexpr char kMagic[5] = {'C', 'K', 'P', 'T', '1'};

void put_u(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
    std::uint64_t u(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    float f32() {
        const auto bits = static_cast<std::uint32_t>(u(4));
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
    bool done() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError("CKPT1: truncated at byte " + std::to_string(pos_));
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_records(const std::vector<CheckpointRecord>& records) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u(out, records.size(), 4);
    for (const auto& r : records) {
        if (r.name.size() > 0xffff) throw DataError("CKPT1: tensor name too long");
        if (r.shape.size() > 0xff) throw DataError("CKPT1: rank too large");
        if (static_cast<std::int64_t>(r.data.size()) != numel(r.shape))
            throw ShapeError("CKPT1: data length does not match shape for " + r.name);
        put_u(out, r.name.size(), 2);
        out.insert(out.end(), r.name.begin(), r.name.end());
        put_u(out, r.shape.size(), 1);
        for (int d : r.shape) put_u(out, static_cast<std::uint32_t>(d), 4);
        for (float f : r.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u(out, bits, 4);
        }
    }
    return out;
}

std::vector<CheckpointRecord> parse_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw DataError("CKPT1: bad magic");
    Reader r(bytes.subspan(sizeof(kMagic)));
    const auto count = r.u(4);
    std::vector<CheckpointRecord> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        CheckpointRecord rec;
        rec.name = r.str(static_cast<std::size_t>(r.u(2)));
        const auto rank = r.u(1);
        for (std::uint64_t d = 0; d < rank; ++d) rec.shape.push_back(static_cast<int>(r.u(4)));
        const auto n = numel(rec.shape);
        rec.data.resize(static_cast<std::size_t>(n));
        for (auto& f : rec.data) f = r.f32();
        out.push_back(std::move(rec));
    }
    if (!r.done()) throw DataError("CKPT1: trailing bytes after " + std::to_string(count) + " tensors");
    return out;
}

template <typename S>
std::vector<std::uint8_t> encode_checkpoint(const TensorList<S>& tensors) {
    std::vector<CheckpointRecord> records;
    records.reserve(tensors.size());
    for (const auto& t : tensors) {
        CheckpointRecord r;
        r.name = t.name;
        r.shape = t.tensor.shape();
        r.data.resize(static_cast<std::size_t>(t.tensor.size()));
        for (Eigen::Index i = 0; i < t.tensor.size(); ++i) r.data[static_cast<std::size_t>(i)] = static_cast<float>(t.tensor.value()[i]);
        records.push_back(std::move(r));
    }
    return encode_records(records);
}

template <typename S>
void decode_checkpoint(std::span<const std::uint8_t> bytes, TensorList<S>& targets) {
    const auto records = parse_checkpoint(bytes);
    std::map<std::string, const CheckpointRecord*> by_name;
    for (const auto& r : records)
        if (!by_name.emplace(r.name, &r).second) throw DataError("CKPT1: duplicate tensor " + r.name);
    for (const auto& t : targets) {
        auto it = by_name.find(t.name);
        if (it == by_name.end()) throw DataError("CKPT1: tensor " + t.name + " missing from checkpoint");
        if (it->second->shape != t.tensor.shape())
            throw DataError("CKPT1: tensor " + t.name + " has shape " + shape_str(it->second->shape) +
                            ", model expects " + shape_str(t.tensor.shape()));
    }
    if (records.size() != targets.size()) {
        std::map<std::string, bool> wanted;
        for (const auto& t : targets) wanted[t.name] = true;
        for (const auto& r : records)
            if (!wanted.count(r.name)) throw DataError("CKPT1: unexpected tensor " + r.name);
    }
    for (auto& t : targets) {
        const auto& data = by_name.at(t.name)->data;
        auto& v = t.tensor.node()->value;
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(data[static_cast<std::size_t>(i)]);
    }
}

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const TensorList<S>& tensors) {
    write_file_bytes(path, encode_checkpoint(tensors));
}

template <typename S>
void load_checkpoint(const std::filesystem::path& path, TensorList<S>& targets) {
    decode_checkpoint(read_file_bytes(path), targets);
}

template std::vector<std::uint8_t> encode_checkpoint(const TensorList<float>&);
template std::vector<std::uint8_t> encode_checkpoint(const TensorList<double>&);
template void decode_checkpoint(std::span<const std::uint8_t>, TensorList<float>&);
template void decode_checkpoint(std::span<const std::uint8_t>, TensorList<double>&);
template void save_checkpoint(const std::filesystem::path&, const TensorList<float>&);
template void save_checkpoint(const std::filesystem::path&, const TensorList<double>&);
template void load_checkpoint(const std::filesystem::path&, TensorList<float>&);
template void load_checkpoint(const std::filesystem::path&, TensorList<double>&);

}  // namespace dvsnet::nn
