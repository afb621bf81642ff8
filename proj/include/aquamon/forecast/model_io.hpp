#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "aquamon/forecast/model.hpp"

namespace aquamon::forecast {

// Weight file layout, all little-endian:
//   "AQMD" | u16 version
//   u32 H | u32 h | i64 step seconds | u8 C | C x u8 metric id | u8 target id
//   C x (f64 mean, f64 stddev)
//   u32 provenance length | provenance bytes
//   u16 layer count | per layer: u8 type, u32 out, u32 in, u32 kernel,
//                                out*in*kernel f64 weights, out f64 biases
//   u32 CRC-32 (zlib polynomial) of every preceding byte
std::vector<std::uint8_t> serialize_model(const CnnModel& model);

// Throws Errc::integrity (bad magic, checksum, truncation), Errc::version or
// Errc::shape (layer headers inconsistent with the window spec).
CnnModel deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const CnnModel& model, std::ostream& sink);
CnnModel load_model(std::istream& source);

void save_model_file(const CnnModel& model, const std::string& path);
CnnModel load_model_file(const std::string& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace aquamon::forecast
