#include "reglearn/pipeline/tensor_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace reglearn {

namespace {

constexpr std::array<char, 4> kMagic{'R', 'G', 'L', 'N'};
constexpr std::uint8_t kDtypeF64 = 0;

void put_le(std::ofstream& out, std::uint64_t v, int bytes) {
    char buf[8];
    for (int b = 0; b < bytes; ++b) buf[b] = static_cast<char>((v >> (8 * b)) & 0xff);
    out.write(buf, bytes);
}

std::uint64_t get_le(std::ifstream& in, int bytes, const std::filesystem::path& path) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), bytes)) throw TensorFileError(path.string() + ": truncated header");
    std::uint64_t v = 0;
    for (int b = 0; b < bytes; ++b) v |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
    return v;
}

}  // namespace

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
    if (t.rank() > 255) throw TensorFileError("tensor rank above 255");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw TensorFileError("cannot open " + path.string() + " for writing");
    out.write(kMagic.data(), kMagic.size());
    put_le(out, kTensorFileVersion, 2);
    put_le(out, kDtypeF64, 1);
    put_le(out, t.rank(), 1);
    for (std::size_t d : t.shape()) put_le(out, d, 8);
    for (double v : t.values()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_le(out, bits, 8);
    }
    if (!out) throw TensorFileError("write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TensorFileError("cannot open " + path.string());
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic)
        throw TensorFileError(path.string() + ": not an RGLN tensor file");
    const auto version = get_le(in, 2, path);
    if (version != kTensorFileVersion)
        throw TensorFileError(path.string() + ": unsupported version " + std::to_string(version));
    const auto dtype = get_le(in, 1, path);
    if (dtype != kDtypeF64) throw TensorFileError(path.string() + ": unsupported dtype " + std::to_string(dtype));
    const auto rank = get_le(in, 1, path);
    Shape shape(rank);
    for (auto& d : shape) d = get_le(in, 8, path);
    const std::size_t n = shape_size(shape);
    std::vector<unsigned char> raw(n * 8);
    if (n > 0 && !in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw TensorFileError(path.string() + ": truncated data");
    if (in.peek() != std::char_traits<char>::eof()) throw TensorFileError(path.string() + ": trailing bytes");
    Vector data(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(raw[i * 8 + b]) << (8 * b);
        std::memcpy(&data[i], &bits, 8);
    }
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace reglearn
