#include "chunkpool/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "chunkpool/errors.hpp"

namespace chunkpool {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'C', 'H', 'N', 'K', 'P', 'O', 'O', 'L'};
constexpr std::uint32_t kVersion = 1;

void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

void put_u64le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

std::uint32_t get_u32le(const std::string& in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
        v = (v << 8) | static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]);
    return v;
}

std::uint64_t get_u64le(const std::string& in, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
        v = (v << 8) | static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]);
    return v;
}

void put_f64le(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    put_u64le(out, bits);
}

double get_f64le(const std::string& in, std::size_t at) {
    const std::uint64_t bits = get_u64le(in, at);
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    json meta;
    meta["config"] = model.config().to_json();
    meta["init_seed"] = model.init_seed();
    meta["vocab"] = model.vocabulary().words();

    json index = json::array();
    std::uint64_t offset = 0;
    for (const Parameter& p : model.params().all()) {
        json entry;
        entry["name"] = p.name;
        entry["shape"] = p.tensor.shape();
        entry["offset"] = offset;
        entry["count"] = p.tensor.numel();
        index.push_back(std::move(entry));
        offset += p.tensor.numel() * 8;
    }
    meta["tensors"] = std::move(index);
    const std::string meta_bytes = meta.dump();

    std::string out;
    out.reserve(20 + meta_bytes.size() + offset);
    out.append(kMagic, sizeof kMagic);
    put_u32le(out, kVersion);
    put_u64le(out, meta_bytes.size());
    out += meta_bytes;
    for (const Parameter& p : model.params().all())
        for (double d : p.tensor.values()) put_f64le(out, d);

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw CheckpointError("cannot open " + path + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw CheckpointError("failed writing checkpoint to " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw CheckpointError("cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(file)),
                      std::istreambuf_iterator<char>());

    if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw CheckpointError(path + " is not a checkpoint (bad magic)");
    const std::uint32_t version = get_u32le(bytes, 8);
    if (version != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t meta_len = get_u64le(bytes, 12);
    if (20 + meta_len > bytes.size())
        throw CheckpointError("checkpoint metadata truncated in " + path);

    json meta;
    try {
        meta = json::parse(bytes.substr(20, meta_len));
    } catch (const json::exception& e) {
        throw CheckpointError("checkpoint metadata is not valid JSON: " + std::string(e.what()));
    }

    Model model(ModelConfig::from_json(meta.at("config")),
                Vocabulary::from_ordered(meta.at("vocab").get<std::vector<std::string>>()),
                meta.at("init_seed").get<std::uint64_t>());

    const std::size_t payload_at = 20 + meta_len;
    const std::size_t payload_len = bytes.size() - payload_at;
    std::uint64_t expected_offset = 0;
    for (const json& entry : meta.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        if (!model.params().contains(name))
            throw CheckpointError("checkpoint names unknown parameter \"" + name + "\"");
        Parameter& p = model.params().at(name);
        const Shape shape = entry.at("shape").get<Shape>();
        const std::uint64_t count = entry.at("count").get<std::uint64_t>();
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        if (shape != p.tensor.shape() || count != p.tensor.numel())
            throw CheckpointError("checkpoint shape mismatch for \"" + name + "\"");
        if (offset != expected_offset)
            throw CheckpointError("checkpoint index offsets out of order at \"" + name + "\"");
        if (offset + count * 8 > payload_len)
            throw CheckpointError("checkpoint payload truncated at \"" + name + "\"");
        std::vector<double>& buf = p.tensor.values();
        for (std::uint64_t i = 0; i < count; ++i)
            buf[i] = get_f64le(bytes, payload_at + offset + i * 8);
        expected_offset = offset + count * 8;
    }
    if (expected_offset != payload_len)
        throw CheckpointError("checkpoint payload length mismatch in " + path);
    if (meta.at("tensors").size() != model.params().size())
        throw CheckpointError("checkpoint tensor index incomplete in " + path);
    return model;
}

}  // namespace chunkpool
