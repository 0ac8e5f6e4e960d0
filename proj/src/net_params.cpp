#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mebm/errors.hpp"
#include "mebm/net.hpp"

namespace mebm {

void validate(const ModelConfig& cfg) {
    if (cfg.c_in < 1 || cfg.d < 1 || cfg.lstm_hidden < 1)
        throw ConfigError("model dimensions must be >= 1");
    if (cfg.ms_kernel_sizes.empty()) throw ConfigError("need at least one multi-scale kernel size");
    for (size_t k : cfg.ms_kernel_sizes)
        if (k < 1 || k % 2 == 0) throw ConfigError("multi-scale kernel sizes must be odd and >= 1");
    if (!(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0))
        throw ConfigError("dropout must lie in [0, 1)");
    if (cfg.pool_window < 1 || cfg.pool_stride < 1 || cfg.pool_stride > cfg.pool_window)
        throw ConfigError("pooling requires 1 <= stride <= window");
    if (!cfg.bm_on && !cfg.ms_on && !cfg.lstm_on)
        throw ConfigError("at least one branch must be enabled");
}

Tensor& ModelParams::at(const std::string& name) {
    for (auto& t : tensors)
        if (t.name == name) return t;
    throw std::invalid_argument("no tensor named " + name);
}

const Tensor& ModelParams::at(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw std::invalid_argument("no tensor named " + name);
}

const Tensor* ModelParams::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

size_t ModelParams::total_size() const {
    size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

namespace {

enum class Init { glorot, zero, lstm_bias };

struct TensorSpec {
    std::string name;
    std::vector<size_t> shape;
    bool decay;
    Init init;
    size_t fan_in;
    size_t fan_out;
};

// Single source of truth for the tensor inventory; serialization order,
// init, count_params and the optimizer's decay policy all derive from it.
std::vector<TensorSpec> tensor_specs(const ModelConfig& cfg) {
    validate(cfg);
    std::vector<TensorSpec> specs;
    const size_t c = cfg.c_in;
    const size_t d = cfg.d;
    const size_t ha = cfg.attn_hidden();
    const size_t h = cfg.lstm_hidden;
    const size_t f = cfg.fused_dim();

    auto dense = [&](const std::string& name, size_t out, size_t in) {
        specs.push_back({name + ".w", {out, in}, true, Init::glorot, in, out});
        specs.push_back({name + ".b", {out}, false, Init::zero, 0, 0});
    };
    auto conv = [&](const std::string& name, size_t out, size_t in, size_t k) {
        specs.push_back({name + ".w", {out, in, k}, true, Init::glorot, in * k, out * k});
        specs.push_back({name + ".b", {out}, false, Init::zero, 0, 0});
    };

    dense("attn.gate1", ha, c);
    dense("attn.gate2", c, ha);
    dense("attn.proj", d, c);

    if (cfg.bm_on)
        for (size_t k = 0; k < cfg.n_bm; ++k) {
            const std::string base = "bm." + std::to_string(k);
            conv(base + ".conv1", d, d, 3);
            conv(base + ".conv2", d, d, 1);
        }

    if (cfg.ms_on)
        for (size_t j = 0; j < cfg.n_ms; ++j)
            conv("ms." + std::to_string(j) + ".conv", d, d, cfg.ms_kernel(j));

    if (cfg.lstm_on)
        for (const char* dir : {"fwd", "bwd"}) {
            const std::string base = std::string("lstm.") + dir;
            specs.push_back({base + ".w_ih", {4 * h, d}, true, Init::glorot, d, 4 * h});
            specs.push_back({base + ".w_hh", {4 * h, h}, true, Init::glorot, h, 4 * h});
            specs.push_back({base + ".b", {4 * h}, false, Init::lstm_bias, 0, 0});
        }

    // Depthwise filter: one kernel-7 tap row per fused channel.
    specs.push_back({"fusion.dw.w", {f, 7}, true, Init::glorot, 7, 7});
    specs.push_back({"fusion.dw.b", {f}, false, Init::zero, 0, 0});
    dense("fusion.pw", d, f);
    dense("head", 1, d);
    return specs;
}

}  // namespace

size_t count_params(const ModelConfig& cfg) {
    size_t n = 0;
    for (const auto& spec : tensor_specs(cfg)) {
        size_t e = 1;
        for (size_t s : spec.shape) e *= s;
        n += e;
    }
    return n;
}

ModelParams init_params(const ModelConfig& cfg, uint64_t seed) {
    ModelParams params;
    for (const auto& spec : tensor_specs(cfg)) {
        Tensor t;
        t.name = spec.name;
        t.shape = spec.shape;
        t.decay = spec.decay;
        size_t elems = 1;
        for (size_t s : spec.shape) elems *= s;
        t.values.assign(elems, 0.0);
        switch (spec.init) {
            case Init::glorot: {
                // Per-tensor stream keyed by name, so shared tensors match
                // across ablated configs.
                Rng rng(derive_seed(seed, spec.name));
                const double bound =
                    std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
                for (auto& v : t.values) v = rng.uniform(-bound, bound);
                break;
            }
            case Init::zero:
                break;
            case Init::lstm_bias: {
                // Gate order [i, f, g, o]; forget-gate block starts at H.
                const size_t h4 = t.values.size();
                for (size_t i = h4 / 4; i < h4 / 2; ++i) t.values[i] = 1.0;
                break;
            }
        }
        params.tensors.push_back(std::move(t));
    }
    return params;
}

ModelParams zeros_like(const ModelParams& params) {
    ModelParams out;
    out.tensors.reserve(params.tensors.size());
    for (const auto& t : params.tensors) {
        Tensor z;
        z.name = t.name;
        z.shape = t.shape;
        z.decay = t.decay;
        z.values.assign(t.values.size(), 0.0);
        out.tensors.push_back(std::move(z));
    }
    return out;
}

// --- Checkpoint file ---
//
// "MEBM" magic, version u32, field-tagged config (count, then
// {name u16+bytes, type u8, payload}), tensors (count, then
// {name u16+bytes, ndim u8, dims u64..., float32 data}), footer
// {epoch u32, validation_loss f64}. Little-endian throughout.

namespace {

constexpr char kCkptMagic[4] = {'M', 'E', 'B', 'M'};
constexpr uint32_t kCkptVersion = 1;
constexpr uint8_t kFieldU64 = 0;
constexpr uint8_t kFieldF64 = 1;
constexpr uint8_t kFieldU64List = 2;

template <typename T>
void put(std::ostream& out, T v) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw LengthError(std::string("checkpoint truncated at ") + what);
    return v;
}

void put_name(std::ostream& out, const std::string& name) {
    put<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
}

std::string get_name(std::istream& in) {
    const auto len = get<uint16_t>(in, "name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw LengthError("checkpoint truncated at name");
    return name;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    validate(ckpt.cfg);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);

    out.write(kCkptMagic, 4);
    put<uint32_t>(out, kCkptVersion);

    const auto& cfg = ckpt.cfg;
    const std::vector<std::pair<std::string, uint64_t>> u64_fields = {
        {"c_in", cfg.c_in},         {"d", cfg.d},
        {"n_bm", cfg.n_bm},         {"n_ms", cfg.n_ms},
        {"lstm_hidden", cfg.lstm_hidden}, {"pool_window", cfg.pool_window},
        {"pool_stride", cfg.pool_stride}, {"bm_on", cfg.bm_on ? 1u : 0u},
        {"ms_on", cfg.ms_on ? 1u : 0u},   {"lstm_on", cfg.lstm_on ? 1u : 0u},
    };
    put<uint32_t>(out, static_cast<uint32_t>(u64_fields.size() + 2));
    for (const auto& [name, value] : u64_fields) {
        put_name(out, name);
        put<uint8_t>(out, kFieldU64);
        put<uint64_t>(out, value);
    }
    put_name(out, "dropout_p");
    put<uint8_t>(out, kFieldF64);
    put<double>(out, cfg.dropout_p);
    put_name(out, "ms_kernel_sizes");
    put<uint8_t>(out, kFieldU64List);
    put<uint32_t>(out, static_cast<uint32_t>(cfg.ms_kernel_sizes.size()));
    for (size_t k : cfg.ms_kernel_sizes) put<uint64_t>(out, k);

    put<uint32_t>(out, static_cast<uint32_t>(ckpt.params.tensors.size()));
    for (const auto& t : ckpt.params.tensors) {
        put_name(out, t.name);
        put<uint8_t>(out, static_cast<uint8_t>(t.shape.size()));
        for (size_t s : t.shape) put<uint64_t>(out, s);
        for (double v : t.values) put<float>(out, static_cast<float>(v));
    }

    put<uint32_t>(out, ckpt.epoch);
    put<double>(out, ckpt.validation_loss);
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw FormatError("bad magic in checkpoint: " + path);
    if (get<uint32_t>(in, "version") != kCkptVersion)
        throw FormatError("unsupported checkpoint version");

    Checkpoint ckpt;
    auto& cfg = ckpt.cfg;
    const auto n_fields = get<uint32_t>(in, "field count");
    for (uint32_t i = 0; i < n_fields; ++i) {
        const std::string name = get_name(in);
        const auto type = get<uint8_t>(in, "field type");
        if (type == kFieldU64) {
            const auto v = get<uint64_t>(in, name.c_str());
            if (name == "c_in") cfg.c_in = v;
            else if (name == "d") cfg.d = v;
            else if (name == "n_bm") cfg.n_bm = v;
            else if (name == "n_ms") cfg.n_ms = v;
            else if (name == "lstm_hidden") cfg.lstm_hidden = v;
            else if (name == "pool_window") cfg.pool_window = v;
            else if (name == "pool_stride") cfg.pool_stride = v;
            else if (name == "bm_on") cfg.bm_on = v != 0;
            else if (name == "ms_on") cfg.ms_on = v != 0;
            else if (name == "lstm_on") cfg.lstm_on = v != 0;
            else throw FormatError("unknown checkpoint config field: " + name);
        } else if (type == kFieldF64) {
            const double v = get<double>(in, name.c_str());
            if (name == "dropout_p") cfg.dropout_p = v;
            else throw FormatError("unknown checkpoint config field: " + name);
        } else if (type == kFieldU64List) {
            if (name != "ms_kernel_sizes")
                throw FormatError("unknown checkpoint config field: " + name);
            const auto count = get<uint32_t>(in, "kernel list length");
            cfg.ms_kernel_sizes.clear();
            for (uint32_t k = 0; k < count; ++k)
                cfg.ms_kernel_sizes.push_back(get<uint64_t>(in, "kernel size"));
        } else {
            throw FormatError("unknown checkpoint field type");
        }
    }
    validate(cfg);

    const auto n_tensors = get<uint32_t>(in, "tensor count");
    for (uint32_t i = 0; i < n_tensors; ++i) {
        Tensor t;
        t.name = get_name(in);
        const auto ndim = get<uint8_t>(in, "tensor rank");
        size_t elems = 1;
        for (uint8_t k = 0; k < ndim; ++k) {
            t.shape.push_back(get<uint64_t>(in, "tensor dim"));
            elems *= t.shape.back();
        }
        t.values.resize(elems);
        for (auto& v : t.values) v = get<float>(in, "tensor data");
        t.decay = !t.name.ends_with(".b");
        ckpt.params.tensors.push_back(std::move(t));
    }

    ckpt.epoch = get<uint32_t>(in, "epoch");
    ckpt.validation_loss = get<double>(in, "validation loss");
    return ckpt;
}

}  // namespace mebm
