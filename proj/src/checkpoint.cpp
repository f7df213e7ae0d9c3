#include "owd/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "owd/errors.hpp"

using nlohmann::json;

namespace owd {

namespace {

constexpr char kMagic[8] = {'O', 'W', 'D', 'C', 'K', 'P', 'T', '1'};

void write_u32(std::ofstream& f, std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ofstream& f, std::uint64_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::ifstream& f) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::uint64_t read_u64(std::ifstream& f) {
    std::uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

void write_array(std::ofstream& f, const std::string& name, const Tensor& t) {
    write_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(f, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u64(f, static_cast<std::uint64_t>(d));
    f.write(reinterpret_cast<const char*>(t.ptr()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}

std::pair<std::string, Tensor> read_array(std::ifstream& f, const std::string& path) {
    const std::uint32_t name_len = read_u32(f);
    if (!f || name_len > 4096) throw SchemaError("bad array name in " + path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const std::uint32_t ndim = read_u32(f);
    if (!f || ndim > 8) throw SchemaError("bad array rank in " + path);
    std::vector<int> shape;
    for (std::uint32_t i = 0; i < ndim; ++i)
        shape.push_back(static_cast<int>(read_u64(f)));
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.ptr()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw SchemaError("truncated array data in " + path);
    return {name, std::move(t)};
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    f.write(kMagic, sizeof(kMagic));
    write_u32(f, 1);  // format version

    json header;
    header["detector"] = {{"num_known", ckpt.detector.num_known},
                          {"embed_dim", ckpt.detector.embed_dim},
                          {"trunk_channels", ckpt.detector.trunk_channels},
                          {"score_thresh", ckpt.detector.score_thresh},
                          {"nms_thresh", ckpt.detector.nms_thresh},
                          {"topk", ckpt.detector.topk},
                          {"unknown_margin", ckpt.detector.unknown_margin},
                          {"center_sampling", ckpt.detector.center_sampling}};
    header["epoch"] = ckpt.epoch;
    header["has_momentum"] = ckpt.has_momentum;
    header["meta"] = ckpt.meta;
    const std::string hs = header.dump();
    write_u64(f, hs.size());
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));

    const std::uint32_t n = static_cast<std::uint32_t>(
        ckpt.params.items.size() + (ckpt.has_momentum ? ckpt.momentum.items.size() : 0));
    write_u32(f, n);
    for (const auto& [name, t] : ckpt.params.items) write_array(f, name, t);
    if (ckpt.has_momentum)
        for (const auto& [name, t] : ckpt.momentum.items) write_array(f, "m:" + name, t);
    if (!f) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw SchemaError("not a checkpoint file: " + path);
    const std::uint32_t version = read_u32(f);
    if (version != 1) throw SchemaError("unsupported checkpoint version in " + path);

    const std::uint64_t hlen = read_u64(f);
    if (!f || hlen > (64u << 20)) throw SchemaError("bad header length in " + path);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw SchemaError("bad checkpoint header: " + std::string(e.what()));
    }

    Checkpoint ckpt;
    const json& d = header.at("detector");
    ckpt.detector.num_known = d.at("num_known").get<int>();
    ckpt.detector.embed_dim = d.at("embed_dim").get<int>();
    ckpt.detector.trunk_channels = d.at("trunk_channels").get<std::vector<int>>();
    ckpt.detector.score_thresh = d.at("score_thresh").get<double>();
    ckpt.detector.nms_thresh = d.at("nms_thresh").get<double>();
    ckpt.detector.topk = d.at("topk").get<int>();
    ckpt.detector.unknown_margin = d.at("unknown_margin").get<double>();
    ckpt.detector.center_sampling = d.at("center_sampling").get<double>();
    ckpt.epoch = header.value("epoch", 0);
    ckpt.has_momentum = header.value("has_momentum", false);
    ckpt.meta = header.value("meta", json::object());

    const std::uint32_t n = read_u32(f);
    for (std::uint32_t i = 0; i < n; ++i) {
        auto [name, t] = read_array(f, path);
        if (name.rfind("m:", 0) == 0)
            ckpt.momentum.add(name.substr(2), std::move(t));
        else
            ckpt.params.add(name, std::move(t));
    }
    return ckpt;
}

}  // namespace owd
