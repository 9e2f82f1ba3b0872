#include "gatera/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace gatera {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts need byte swaps");

namespace {

constexpr char kMagic[4] = {'G', 'R', 'K', '1'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("checkpoint: truncated file " + path);
    return v;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot open " + path + " for writing");
    out.write(kMagic, 4);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw IoError("checkpoint: tensor name too long: " + name);
        }
        write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.shape().size()));
        for (Index d : tensor.shape()) write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(tensor.value().data()),
                  static_cast<std::streamsize>(sizeof(double) * tensor.numel()));
    }
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(config_echo.size()));
    out.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
    if (!out) throw IoError("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("checkpoint: bad magic in " + path);
    }
    Checkpoint ckpt;
    const std::uint32_t count = read_pod<std::uint32_t>(in, path);
    ckpt.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = read_pod<std::uint16_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw IoError("checkpoint: truncated file " + path);
        const std::uint8_t ndim = read_pod<std::uint8_t>(in, path);
        Shape shape(ndim);
        for (std::uint8_t d = 0; d < ndim; ++d) {
            shape[d] = static_cast<Index>(read_pod<std::uint32_t>(in, path));
        }
        Flat values(shape_numel(shape));
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(sizeof(double) * values.size()));
        if (!in) throw IoError("checkpoint: truncated tensor payload in " + path);
        ckpt.tensors.emplace_back(std::move(name), Tensor::from_flat(std::move(shape), std::move(values)));
    }
    const std::uint32_t echo_len = read_pod<std::uint32_t>(in, path);
    ckpt.config_echo.resize(echo_len);
    in.read(ckpt.config_echo.data(), echo_len);
    if (!in) throw IoError("checkpoint: truncated config echo in " + path);
    return ckpt;
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

std::uint64_t digest_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix_bytes = [&h](const void* data, std::size_t n) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001B3ULL;
        }
    };
    for (const auto& [name, tensor] : tensors) {
        mix_bytes(name.data(), name.size());
        mix_bytes(tensor.value().data(), sizeof(double) * static_cast<std::size_t>(tensor.numel()));
    }
    return h;
}

}  // namespace gatera
