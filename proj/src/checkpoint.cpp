#include "uda/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "uda/errors.hpp"

namespace uda {

namespace {

constexpr char kMagic[4] = {'U', 'D', 'A', 'C'};
constexpr std::uint8_t kVersion = 1;

static_assert(sizeof(double) == 8);

void write_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_i32(std::ostream& out, std::int32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 4);
}

std::int32_t read_i32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return static_cast<std::int32_t>(v);
}

}  // namespace

void save_checkpoint(const ModelParameters& params, std::uint64_t vocab_hash,
                     const std::string& path) {
    // Write-then-rename so a rerun over an existing file is atomic.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write checkpoint: " + tmp);
        out.write(kMagic, 4);
        out.put(static_cast<char>(kVersion));
        write_u64(out, vocab_hash);
        write_i32(out, params.vocab_size);
        write_i32(out, params.dim);
        write_i32(out, params.num_classes);
        write_i32(out, params.num_tags);
        params.for_each_array([&](const std::vector<double>& arr) {
            for (double v : arr) {
                std::uint64_t bits;
                std::memcpy(&bits, &v, 8);
                write_u64(out, bits);
            }
        });
        if (!out) throw DataError("write failure on checkpoint: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot rename checkpoint into place: " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("bad checkpoint magic in " + path);
    }
    const int version = in.get();
    if (version != kVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.vocab_hash = read_u64(in);
    const std::int32_t vocab_size = read_i32(in);
    const std::int32_t dim = read_i32(in);
    const std::int32_t num_classes = read_i32(in);
    const std::int32_t num_tags = read_i32(in);
    if (!in || vocab_size <= 0 || dim <= 0 || num_classes < 0 || num_tags < 0) {
        throw DataError("corrupt checkpoint header in " + path);
    }
    ckpt.params = ModelParameters::zeros(vocab_size, dim, num_classes, num_tags);
    ckpt.params.for_each_array([&](std::vector<double>& arr) {
        for (double& v : arr) {
            const std::uint64_t bits = read_u64(in);
            std::memcpy(&v, &bits, 8);
        }
    });
    if (!in) throw DataError("truncated checkpoint: " + path);
    return ckpt;
}

}  // namespace uda
