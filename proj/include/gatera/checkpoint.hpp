#pragma once

// Named-tensor checkpoint file. Layout (all integers little-endian):
//   magic "GRK1"
//   u32 tensor count
//   per tensor: u16 name length | name bytes | u8 ndim | u32 dims... |
//               f64 little-endian payload (row-major)
//   u32 config echo length | config echo bytes (trailing block; readers that
//   stop after the tensor records stay compatible)
// Round trip is bitwise: load(save(x)) == x.

#include <string>
#include <vector>

#include "gatera/tensor.hpp"

namespace gatera {

struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::string config_echo;

    void save(const std::string& path) const;       // IoError on failure
    static Checkpoint load(const std::string& path);

    const Tensor* find(const std::string& name) const;
};

// FNV-1a over the raw f64 bytes of the named tensors, in order; used to
// assert frozen weights stayed bitwise unchanged.
std::uint64_t digest_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors);

}  // namespace gatera
