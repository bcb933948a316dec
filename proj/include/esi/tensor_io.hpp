#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "esi/tensor.hpp"

namespace esi {

// "ESIT" tensor container:
//   magic "ESIT" | version u8 (=1) | rank u8 | dims u32 LE x rank | payload f32 LE, row-major.
inline constexpr char kTensorMagic[4] = {'E', 'S', 'I', 'T'};
inline constexpr std::uint8_t kTensorFormatVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

// Value as it survives a save/load cycle.
inline double round_to_storage(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace esi
