#include "memento/dataset_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "memento/errors.hpp"

namespace memento {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'S', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw IoError("truncated dataset file: " + path);
    return v;
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write dataset file: " + path);
    out.write(kMagic, 4);
    put<uint32_t>(out, kVersion);
    put<uint8_t>(out, static_cast<uint8_t>(data.kind));
    put<int32_t>(out, data.n);
    put<uint64_t>(out, data.seed);
    put<int64_t>(out, data.count());
    for (const Instance& inst : data.instances) {
        put<uint64_t>(out, inst.id);
        for (const Point& p : inst.coords) {
            put<double>(out, p.x);
            put<double>(out, p.y);
        }
        if (data.kind == ProblemKind::Cvrp) {
            put<uint32_t>(out, inst.capacity);
            for (uint32_t d : inst.demands) put<uint32_t>(out, d);
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("not a dataset file: " + path);
    }
    const uint32_t version = get<uint32_t>(in, path);
    if (version != kVersion) {
        throw IoError("unsupported dataset version " + std::to_string(version) + ": " + path);
    }
    Dataset data;
    const uint8_t kind = get<uint8_t>(in, path);
    if (kind > 1) throw IoError("bad problem kind in dataset: " + path);
    data.kind = static_cast<ProblemKind>(kind);
    data.n = get<int32_t>(in, path);
    data.seed = get<uint64_t>(in, path);
    const int64_t count = get<int64_t>(in, path);
    if (data.n <= 0 || count < 0 || count > (1 << 24)) {
        throw IoError("implausible dataset header: " + path);
    }
    data.instances.resize(static_cast<size_t>(count));
    for (Instance& inst : data.instances) {
        inst.kind = data.kind;
        inst.id = get<uint64_t>(in, path);
        inst.coords.resize(static_cast<size_t>(data.n));
        for (Point& p : inst.coords) {
            p.x = get<double>(in, path);
            p.y = get<double>(in, path);
        }
        if (data.kind == ProblemKind::Cvrp) {
            inst.capacity = get<uint32_t>(in, path);
            inst.demands.resize(static_cast<size_t>(data.n));
            for (uint32_t& d : inst.demands) d = get<uint32_t>(in, path);
        }
        inst.validate();
    }
    return data;
}

void save_costs(const std::string& path, const std::vector<double>& costs) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write cost file: " + path);
    char buf[48];
    for (double c : costs) {
        std::snprintf(buf, sizeof(buf), "%.17g\n", c);
        out << buf;
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<double> load_costs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open cost file: " + path);
    std::vector<double> costs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        errno = 0;
        char* end = nullptr;
        const double v = std::strtod(line.c_str(), &end);
        if (end == line.c_str() || *end != '\0' || errno == ERANGE) {
            throw IoError(path + ":" + std::to_string(lineno) + ": bad cost value \"" + line + "\"");
        }
        costs.push_back(v);
    }
    return costs;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace memento
