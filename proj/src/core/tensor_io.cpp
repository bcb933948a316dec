#include "esi/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "esi/error.hpp"

namespace esi {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
    if (t.rank() > std::numeric_limits<std::uint8_t>::max()) throw ParameterError("tensor rank too large to encode");
    std::vector<std::uint8_t> out;
    out.reserve(6 + 4 * t.rank() + 4 * t.size());
    out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
    out.push_back(kTensorFormatVersion);
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.dims()) {
        if (d > std::numeric_limits<std::uint32_t>::max()) throw ParameterError("tensor dimension exceeds u32");
        put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (double v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    if (bytes.size() < 6 || std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
        throw FormatError(origin + ": bad magic (not an ESIT tensor)");
    }
    if (bytes[4] != kTensorFormatVersion) {
        throw FormatError(origin + ": unsupported format version " + std::to_string(bytes[4]));
    }
    const std::size_t rank = bytes[5];
    const std::size_t header = 6 + 4 * rank;
    if (bytes.size() < header) throw FormatError(origin + ": truncated header");
    Dims dims(rank);
    for (std::size_t i = 0; i < rank; ++i) dims[i] = get_u32(bytes.data() + 6 + 4 * i);
    const std::size_t count = dims_product(dims);
    const std::size_t payload = bytes.size() - header;
    if (payload < 4 * count) {
        throw FormatError(origin + ": truncated payload, header " + dims_to_string(dims) + " needs " +
                          std::to_string(count) + " values, found " + std::to_string(payload / 4));
    }
    if (payload > 4 * count) throw FormatError(origin + ": trailing bytes after payload");
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        values[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes.data() + header + 4 * i)));
    }
    return Tensor(std::move(dims), std::move(values));
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
    const auto bytes = encode_tensor(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open tensor file: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_tensor(bytes, path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace esi
