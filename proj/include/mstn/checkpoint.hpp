#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "mstn/model.hpp"

namespace mstn {

inline std::uint64_t fnv1a_hash(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace ckpt_detail {

constexpr char kMagic[4] = {'M', 'S', 'T', 'N'};
constexpr std::uint32_t kVersion = 1;

inline void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

inline void write_array(std::ostream& out, const RealArray& a) {
    write_u32(out, static_cast<std::uint32_t>(a.rows()));
    write_u32(out, static_cast<std::uint32_t>(a.cols()));
    out.write(reinterpret_cast<const char*>(a.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(a.size())));
}

inline RealArray read_array(std::istream& in) {
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    RealArray a(rows, cols);
    in.read(reinterpret_cast<char*>(a.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(a.size())));
    return a;
}

}  // namespace ckpt_detail

// Checkpoint: magic + version, JSON metadata (model config, step, epoch,
// config hash, caller extras such as vocab and template names), then the
// named parameters with their Adam moments.
inline void save_checkpoint(const std::string& path, const Model& model,
                            const nlohmann::json& extras, std::int64_t step, int epoch) {
    using namespace ckpt_detail;
    nlohmann::json meta;
    meta["model"] = model.config().to_json();
    meta["step"] = step;
    meta["epoch"] = epoch;
    meta["n_templates"] = model.n_templates();
    meta["adam_step"] = model.store().step();
    meta["config_hash"] = fnv1a_hash(model.config().to_json().dump());
    meta["extras"] = extras;
    const std::string meta_str = meta.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u64(out, meta_str.size());
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    write_u64(out, model.store().size());
    for (const auto& [name, p] : model.store()) {
        check_finite(p.value, "checkpoint parameter " + name);
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_array(out, p.value);
        write_array(out, p.m);
        write_array(out, p.v);
    }
    if (!out) throw Error("short write on checkpoint: " + path);
}

inline Model load_checkpoint(const std::string& path, nlohmann::json* meta_out = nullptr) {
    using namespace ckpt_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(kMagic, 4)) {
        throw MalformedInput("not a checkpoint file: " + path);
    }
    if (read_u32(in) != kVersion) throw MalformedInput("unsupported checkpoint version");
    const std::uint64_t meta_len = read_u64(in);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    const nlohmann::json meta = nlohmann::json::parse(meta_str);

    Model model(ModelConfig::from_json(meta.at("model")), meta.at("n_templates").get<int>());
    model.store().set_step(meta.at("adam_step").get<std::int64_t>());
    const std::uint64_t n_params = read_u64(in);
    if (n_params != model.store().size()) {
        throw MalformedInput("checkpoint parameter count does not match the config");
    }
    for (std::uint64_t i = 0; i < n_params; ++i) {
        const std::uint32_t name_len = read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        Param& p = model.store().at(name);
        const RealArray value = read_array(in);
        const RealArray m = read_array(in);
        const RealArray v = read_array(in);
        if (value.rows() != p.value.rows() || value.cols() != p.value.cols()) {
            throw MalformedInput("checkpoint shape mismatch for " + name);
        }
        check_finite(value, "checkpoint parameter " + name);
        p.value = value;
        p.m = m;
        p.v = v;
    }
    if (!in) throw MalformedInput("truncated checkpoint: " + path);
    if (meta_out) *meta_out = meta;
    return model;
}

}  // namespace mstn
