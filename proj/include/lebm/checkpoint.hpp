#pragma once

#include <bit>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lebm/adam.hpp"
#include "lebm/config.hpp"
#include "lebm/model.hpp"
#include "lebm/util.hpp"

namespace lebm {

// Checkpoint binary format (version 1), fully bit-specified so identical
// training runs produce identical files:
//
//   magic "LEBM" | u32 version | record* | u64 fnv1a-64 of all prior bytes
//   record := u32 name_len | name | u8 kind | payload
//     kind 0 (tensor): u32 ndim | u64 dim* | f64 data (row major)
//     kind 1 (i64):    i64 value
//     kind 2 (bytes):  u64 len | bytes
//
// All integers and doubles little-endian. Records: iteration counter, rng
// seed (the base of the per-phase stream derivation), both Adam step
// counters and moment tensors, every model tensor, and the canonical config
// echo the model structure is rebuilt from.
struct Checkpoint {
    std::uint32_t version = 1;
    TrainConfig cfg;
    std::string config_text;
    std::int64_t iter = 0;
    std::uint64_t seed = 0;
    ModelParams params;
    AdamState opt_alpha;
    AdamState opt_beta;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

    bool done() const { return pos_ >= end_; }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string raw(std::size_t len) {
        need(len);
        std::string s = bytes_.substr(pos_, len);
        pos_ += len;
        return s;
    }

private:
    void need(std::size_t n) {
        if (pos_ + n > end_) throw std::runtime_error("checkpoint: truncated file");
    }

    const std::string& bytes_;
    std::size_t end_;
    std::size_t pos_ = 8;  // past magic + version
};

struct Record {
    std::uint8_t kind;
    Tensor tensor;
    std::int64_t i64 = 0;
    std::string bytes;
};

inline void add_tensor(std::string& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    out.push_back(0);
    put_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t dim : t.shape()) put_u64(out, dim);
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
}

inline void add_i64(std::string& out, const std::string& name, std::int64_t v) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    out.push_back(1);
    put_u64(out, static_cast<std::uint64_t>(v));
}

inline void add_bytes(std::string& out, const std::string& name, const std::string& payload) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    out.push_back(2);
    put_u64(out, payload.size());
    out.append(payload);
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
    std::string out = "LEBM";
    detail::put_u32(out, ck.version);
    detail::add_i64(out, "iter", ck.iter);
    detail::add_i64(out, "seed", static_cast<std::int64_t>(ck.seed));
    detail::add_bytes(out, "config", ck.config_text);

    for (const ConstParamRef& p : mlp_params(ck.params.alpha.net, "alpha")) {
        detail::add_tensor(out, p.name, *p.tensor);
    }
    for (const ConstParamRef& p : mlp_params(ck.params.beta.net, "beta")) {
        detail::add_tensor(out, p.name, *p.tensor);
    }
    detail::add_i64(out, "adam_alpha.t", ck.opt_alpha.t());
    for (std::size_t k = 0; k < ck.opt_alpha.slots(); ++k) {
        detail::add_tensor(out, "adam_alpha.m." + ck.opt_alpha.name(k), ck.opt_alpha.first_moment(k));
        detail::add_tensor(out, "adam_alpha.v." + ck.opt_alpha.name(k), ck.opt_alpha.second_moment(k));
    }
    detail::add_i64(out, "adam_beta.t", ck.opt_beta.t());
    for (std::size_t k = 0; k < ck.opt_beta.slots(); ++k) {
        detail::add_tensor(out, "adam_beta.m." + ck.opt_beta.name(k), ck.opt_beta.first_moment(k));
        detail::add_tensor(out, "adam_beta.v." + ck.opt_beta.name(k), ck.opt_beta.second_moment(k));
    }

    detail::put_u64(out, fnv1a64(out.data(), out.size()));
    return out;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < 20) throw std::runtime_error("checkpoint: truncated file");
    if (bytes.compare(0, 4, "LEBM") != 0) throw std::runtime_error("checkpoint: bad magic");

    const std::size_t body = bytes.size() - 8;
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i)
        stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[body + i])) << (8 * i);
    if (stored != fnv1a64(bytes.data(), body)) {
        throw std::runtime_error("checkpoint: checksum mismatch");
    }

    detail::Reader in(bytes, body);
    const std::uint32_t version =
        (std::uint32_t(static_cast<unsigned char>(bytes[4]))) |
        (std::uint32_t(static_cast<unsigned char>(bytes[5])) << 8) |
        (std::uint32_t(static_cast<unsigned char>(bytes[6])) << 16) |
        (std::uint32_t(static_cast<unsigned char>(bytes[7])) << 24);
    if (version != 1) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }

    std::map<std::string, detail::Record> records;
    while (!in.done()) {
        const std::uint32_t name_len = in.u32();
        const std::string name = in.raw(name_len);
        detail::Record rec;
        rec.kind = static_cast<std::uint8_t>(in.raw(1)[0]);
        if (rec.kind == 0) {
            const std::uint32_t ndim = in.u32();
            std::vector<std::size_t> shape;
            for (std::uint32_t i = 0; i < ndim; ++i) shape.push_back(in.u64());
            Tensor t(shape);
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = in.f64();
            rec.tensor = std::move(t);
        } else if (rec.kind == 1) {
            rec.i64 = static_cast<std::int64_t>(in.u64());
        } else if (rec.kind == 2) {
            rec.bytes = in.raw(in.u64());
        } else {
            throw std::runtime_error("checkpoint: unknown record kind for '" + name + "'");
        }
        records.emplace(name, std::move(rec));
    }

    auto fetch = [&](const std::string& name) -> detail::Record& {
        auto it = records.find(name);
        if (it == records.end()) {
            throw std::runtime_error("checkpoint: missing record '" + name + "'");
        }
        return it->second;
    };
    auto load_tensor = [&](const std::string& name, Tensor& dst) {
        Tensor& src = fetch(name).tensor;
        if (!src.same_shape(dst)) {
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        }
        dst = std::move(src);
    };

    Checkpoint ck;
    ck.version = version;
    ck.iter = fetch("iter").i64;
    ck.seed = static_cast<std::uint64_t>(fetch("seed").i64);
    ck.config_text = fetch("config").bytes;
    ck.cfg = parse_config_text(ck.config_text, "checkpoint-config");

    // Rebuild structure from config, then overwrite every tensor. The data
    // dimension comes from the recorded final generator weight.
    const std::size_t gen_layer_count =
        ck.cfg.gen_identity ? 1 : static_cast<std::size_t>(ck.cfg.gen_layers) + 1;
    const std::size_t data_dim =
        fetch("beta.W" + std::to_string(gen_layer_count - 1)).tensor.cols();
    ck.params = make_model(ck.cfg, data_dim);

    for (const ParamRef& p : alpha_params(ck.params.alpha)) load_tensor(p.name, *p.tensor);
    for (const ParamRef& p : beta_params(ck.params.beta)) load_tensor(p.name, *p.tensor);

    ck.opt_alpha = AdamState(alpha_params(ck.params.alpha),
                             {ck.cfg.eta0, ck.cfg.adam_beta1, ck.cfg.adam_beta2, 1e-8});
    ck.opt_beta = AdamState(beta_params(ck.params.beta),
                            {ck.cfg.eta1, ck.cfg.adam_beta1, ck.cfg.adam_beta2, 1e-8});
    ck.opt_alpha.set_t(fetch("adam_alpha.t").i64);
    ck.opt_beta.set_t(fetch("adam_beta.t").i64);
    for (std::size_t k = 0; k < ck.opt_alpha.slots(); ++k) {
        load_tensor("adam_alpha.m." + ck.opt_alpha.name(k), ck.opt_alpha.first_moment(k));
        load_tensor("adam_alpha.v." + ck.opt_alpha.name(k), ck.opt_alpha.second_moment(k));
    }
    for (std::size_t k = 0; k < ck.opt_beta.slots(); ++k) {
        load_tensor("adam_beta.m." + ck.opt_beta.name(k), ck.opt_beta.first_moment(k));
        load_tensor("adam_beta.v." + ck.opt_beta.name(k), ck.opt_beta.second_moment(k));
    }
    return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(read_file(path));
}

}  // namespace lebm
