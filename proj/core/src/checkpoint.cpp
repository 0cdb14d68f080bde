#include "memento/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"
#include "memento/errors.hpp"

namespace memento {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'M', 'C', 'K', 'P'};
constexpr uint32_t kFormat = 1;

uint64_t hash_bytes(uint64_t h, const char* data, size_t len) {
    for (size_t i = 0; i < len; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ULL;
    }
    return h;
}

json tensor_table(const TensorMap& params) {
    json table = json::array();
    for (const auto& kv : params.items()) {
        table.push_back({{"name", kv.first}, {"rows", kv.second.rows}, {"cols", kv.second.cols}});
    }
    return table;
}

void append_payload(std::string& payload, const TensorMap& params) {
    for (const auto& kv : params.items()) {
        const Mat& m = kv.second;
        payload.append(reinterpret_cast<const char*>(m.a.data()), m.a.size() * sizeof(double));
    }
}

TensorMap read_table(const json& table, const char* src, size_t& off, size_t payload_len,
                     const std::string& path) {
    TensorMap params;
    for (const auto& row : table) {
        const std::string name = row.at("name").get<std::string>();
        const int rows = row.at("rows").get<int>();
        const int cols = row.at("cols").get<int>();
        if (rows <= 0 || cols <= 0 || rows > (1 << 20) || cols > (1 << 20)) {
            throw IoError("implausible tensor shape in checkpoint: " + path);
        }
        Mat& m = params.emplace(name, rows, cols);
        const size_t bytes = m.a.size() * sizeof(double);
        if (off + bytes > payload_len) {
            throw IoError("checkpoint payload shorter than its tensor table: " + path);
        }
        std::memcpy(m.a.data(), src + off, bytes);
        off += bytes;
    }
    return params;
}

}  // namespace

uint64_t content_hash64(const std::string& text) {
    return hash_bytes(0xcbf29ce484222325ULL, text.data(), text.size());
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json header;
    header["format"] = kFormat;
    header["policy"] = {{"kind", kind_name(ckpt.policy.kind)}, {"dim", ckpt.policy.dim},
                        {"blocks", ckpt.policy.blocks},       {"heads", ckpt.policy.heads},
                        {"ff", ckpt.policy.ff},               {"clip", ckpt.policy.clip}};
    header["params"] = tensor_table(ckpt.params);
    header["params_version"] = ckpt.params.version;
    if (ckpt.has_memory_net) {
        header["memory_net"] = {{"subset", subset_name(ckpt.net_config.subset)},
                                {"hidden", ckpt.net_config.hidden},
                                {"params", tensor_table(ckpt.net_params)},
                                {"version", ckpt.net_params.version}};
    }
    header["seed"] = ckpt.seed;
    header["provenance"] = ckpt.provenance;

    const std::string head = header.dump();
    std::string payload;
    append_payload(payload, ckpt.params);
    if (ckpt.has_memory_net) append_payload(payload, ckpt.net_params);

    uint64_t hash = 1469598103934665603ULL;
    hash = hash_bytes(hash, head.data(), head.size());
    hash = hash_bytes(hash, payload.data(), payload.size());

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    const uint32_t fmt = kFormat;
    out.write(reinterpret_cast<const char*>(&fmt), sizeof(fmt));
    const uint64_t head_len = head.size();
    out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char*>(&hash), sizeof(hash));
    if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("not a checkpoint file: " + path);
    }
    uint32_t fmt = 0;
    in.read(reinterpret_cast<char*>(&fmt), sizeof(fmt));
    if (!in || fmt != kFormat) {
        throw IoError("unsupported checkpoint format version " + std::to_string(fmt) + ": " + path);
    }
    uint64_t head_len = 0;
    in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
    if (!in || head_len == 0 || head_len > (1ULL << 24)) {
        throw IoError("implausible checkpoint header length: " + path);
    }
    std::string head(head_len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head_len));
    if (!in) throw IoError("truncated checkpoint header: " + path);

    // The rest of the file is payload followed by the 8-byte hash.
    std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (rest.size() < sizeof(uint64_t)) throw IoError("truncated checkpoint: " + path);
    const size_t payload_len = rest.size() - sizeof(uint64_t);
    uint64_t stored_hash = 0;
    std::memcpy(&stored_hash, rest.data() + payload_len, sizeof(stored_hash));

    uint64_t hash = 1469598103934665603ULL;
    hash = hash_bytes(hash, head.data(), head.size());
    hash = hash_bytes(hash, rest.data(), payload_len);
    if (hash != stored_hash) {
        throw IoError("checkpoint hash mismatch (file corrupted): " + path);
    }

    json header;
    try {
        header = json::parse(head);
    } catch (const json::exception& e) {
        throw IoError("bad checkpoint header in " + path + ": " + e.what());
    }

    Checkpoint ckpt;
    try {
        const json& pol = header.at("policy");
        ckpt.policy.kind = kind_from_name(pol.at("kind").get<std::string>());
        ckpt.policy.dim = pol.at("dim").get<int>();
        ckpt.policy.blocks = pol.at("blocks").get<int>();
        ckpt.policy.heads = pol.at("heads").get<int>();
        ckpt.policy.ff = pol.at("ff").get<int>();
        ckpt.policy.clip = pol.at("clip").get<double>();
        ckpt.policy.validate();

        size_t off = 0;
        ckpt.params = read_table(header.at("params"), rest.data(), off, payload_len, path);
        ckpt.params.version = header.at("params_version").get<uint64_t>();
        if (header.contains("memory_net") && !header["memory_net"].is_null()) {
            const json& net = header["memory_net"];
            ckpt.has_memory_net = true;
            ckpt.net_config.subset = subset_from_name(net.at("subset").get<std::string>());
            ckpt.net_config.hidden = net.at("hidden").get<int>();
            ckpt.net_params = read_table(net.at("params"), rest.data(), off, payload_len, path);
            ckpt.net_params.version = net.at("version").get<uint64_t>();
        }
        if (off != payload_len) {
            throw IoError("checkpoint payload longer than its tensor table: " + path);
        }
        ckpt.seed = header.at("seed").get<uint64_t>();
        ckpt.provenance = header.at("provenance").get<std::string>();
    } catch (const json::exception& e) {
        throw IoError("bad checkpoint header in " + path + ": " + e.what());
    }
    return ckpt;
}

Checkpoint load_checkpoint(const std::string& path, const PolicyConfig& expected) {
    Checkpoint ckpt = load_checkpoint(path);
    if (!(ckpt.policy == expected)) {
        throw ValidationError("checkpoint architecture mismatch: " + path + " holds " +
                              kind_name(ckpt.policy.kind) + " d=" + std::to_string(ckpt.policy.dim) +
                              " blocks=" + std::to_string(ckpt.policy.blocks) +
                              " heads=" + std::to_string(ckpt.policy.heads) +
                              " ff=" + std::to_string(ckpt.policy.ff) + ", expected " +
                              kind_name(expected.kind) + " d=" + std::to_string(expected.dim) +
                              " blocks=" + std::to_string(expected.blocks) +
                              " heads=" + std::to_string(expected.heads) +
                              " ff=" + std::to_string(expected.ff));
    }
    return ckpt;
}

MemoryNet checkpoint_net(const Checkpoint& ckpt) {
    if (!ckpt.has_memory_net) throw ValidationError("checkpoint has no memory net");
    MemoryNet net(ckpt.net_config, ckpt.seed);
    if (!net.params().congruent(ckpt.net_params)) {
        throw IoError("memory net tensors in checkpoint do not match its declared shape");
    }
    net.params() = ckpt.net_params;
    return net;
}

}  // namespace memento
