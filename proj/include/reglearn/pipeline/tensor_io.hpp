#pragma once

// Binary tensor files: magic "RGLN", u16 version, u8 dtype (0 = f64
// little-endian), u8 rank, rank x u64 shape, then the raw data. All integers
// are little-endian.

#include "reglearn/nnet/tensor.hpp"

#include <filesystem>
#include <stdexcept>

namespace reglearn {

inline constexpr std::uint16_t kTensorFileVersion = 1;

class TensorFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace reglearn
