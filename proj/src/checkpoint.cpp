#include "cdn/checkpoint.hpp"

#include "cdn/errors.hpp"

#include <cstring>
#include <fstream>

namespace cdn {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'D', 'N', 'C', 'K', 'P', 'T', '\x01'};
constexpr std::uint8_t kDtypeF64 = 0;

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    throw ContractError("unknown activation");
}

Activation activation_from(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "identity") return Activation::identity;
    throw FormatError("unknown activation '" + s + "'");
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    std::string buf;
    std::size_t pos = 0;
    std::string path;

    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw FormatError(path + ": truncated at byte " + std::to_string(pos) +
                              " (need " + std::to_string(n) + " more bytes)");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= std::uint32_t(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<unsigned char>(buf[pos++]);
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

json arch_to_json(const Architecture& arch) {
    json j;
    j["layers"] = arch.layers;
    j["task"] = arch.task == Task::classification ? "classification" : "regression";
    j["output_dim"] = arch.output_dim;
    std::vector<std::string> acts;
    for (Activation a : arch.activations) acts.push_back(activation_name(a));
    j["activations"] = acts;
    j["hypernet_hidden"] = arch.hypernet_hidden;
    j["hypernet_activation"] = activation_name(arch.hypernet_activation);
    return j;
}

Architecture arch_from_json(const json& j) {
    Architecture a;
    a.layers = j.at("layers").get<std::vector<std::size_t>>();
    const std::string task = j.at("task").get<std::string>();
    if (task == "classification")
        a.task = Task::classification;
    else if (task == "regression")
        a.task = Task::regression;
    else
        throw FormatError("unknown task '" + task + "'");
    a.output_dim = j.at("output_dim").get<std::size_t>();
    a.activations.clear();
    for (const auto& s : j.at("activations")) a.activations.push_back(activation_from(s));
    a.hypernet_hidden = j.at("hypernet_hidden").get<std::vector<std::size_t>>();
    a.hypernet_activation = activation_from(j.at("hypernet_activation"));
    a.validate();
    return a;
}

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, Tensor>>& params) {
    json header;
    header["format_version"] = meta.format_version;
    header["kind"] = meta.kind;
    header["objective"] = meta.objective;
    header["seed"] = std::to_string(meta.seed); // string: u64 exceeds JSON ints
    header["architecture"] = arch_to_json(meta.arch);
    header["extra"] = meta.extra;
    const std::string hj = header.dump(); // nlohmann sorts keys: stable bytes

    std::string out;
    out.append(kMagic, sizeof kMagic);
    put_u32(out, static_cast<std::uint32_t>(hj.size()));
    out += hj;
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        const Matrix& v = t.value();
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        out.push_back(static_cast<char>(kDtypeF64));
        out.push_back(static_cast<char>(2)); // ndim
        put_u32(out, static_cast<std::uint32_t>(v.rows()));
        put_u32(out, static_cast<std::uint32_t>(v.cols()));
        const char* raw = reinterpret_cast<const char*>(v.data());
        out.append(raw, v.size() * sizeof(double));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("short write to " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    Reader r;
    r.path = path;
    r.buf.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());

    const std::string magic = r.bytes(sizeof kMagic);
    if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0)
        throw FormatError(path + ": bad magic bytes; not a checkpoint file");
    const std::uint32_t hlen = r.u32();
    json header;
    try {
        header = json::parse(r.bytes(hlen));
    } catch (const json::exception& e) {
        throw FormatError(path + ": unparseable header: " + e.what());
    }

    LoadedCheckpoint out;
    try {
        out.meta.format_version = header.at("format_version").get<int>();
        if (out.meta.format_version != 1)
            throw FormatError(path + ": unsupported format_version " +
                              std::to_string(out.meta.format_version));
        out.meta.kind = header.at("kind").get<std::string>();
        out.meta.objective = header.at("objective").get<std::string>();
        out.meta.seed = std::stoull(header.at("seed").get<std::string>());
        out.meta.arch = arch_from_json(header.at("architecture"));
        out.meta.extra = header.value("extra", json::object());
    } catch (const json::exception& e) {
        throw FormatError(path + ": malformed header: " + e.what());
    }

    const std::uint32_t n_blocks = r.u32();
    for (std::uint32_t i = 0; i < n_blocks; ++i) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.bytes(name_len);
        const std::uint8_t dtype = r.u8();
        if (dtype != kDtypeF64)
            throw FormatError(path + ": block '" + name + "' has unknown dtype tag " +
                              std::to_string(dtype));
        const std::uint8_t ndim = r.u8();
        if (ndim != 2)
            throw FormatError(path + ": block '" + name + "' has ndim " +
                              std::to_string(ndim));
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        const std::string payload =
            r.bytes(std::size_t(rows) * std::size_t(cols) * sizeof(double));
        Matrix m(rows, cols);
        std::memcpy(m.data(), payload.data(), payload.size());
        out.blocks.emplace_back(name, std::move(m));
    }
    return out;
}

const Matrix* LoadedCheckpoint::find(const std::string& name) const {
    for (const auto& [n, m] : blocks)
        if (n == name) return &m;
    return nullptr;
}

void restore_parameters(const LoadedCheckpoint& ckpt,
                        const std::vector<std::pair<std::string, Tensor>>& params) {
    for (const auto& [name, t] : params) {
        const Matrix* m = ckpt.find(name);
        if (!m) throw ShapeError("checkpoint is missing parameter block '" + name + "'");
        if (!m->same_shape(t.value()))
            throw ShapeError("checkpoint block '" + name + "' has shape " +
                             m->shape_str() + " but the model expects " +
                             t.value().shape_str());
        t.assign(*m);
    }
    if (ckpt.blocks.size() != params.size())
        throw ShapeError("checkpoint holds " + std::to_string(ckpt.blocks.size()) +
                         " blocks but the model has " + std::to_string(params.size()) +
                         " parameters");
}

} // namespace cdn
