#pragma once

// Lossless JSON serialization of scenarios and RAPS instances. Every double
// is written as a hex-float string, so a round trip reproduces the exact bits
// and equal objects serialize to identical bytes.

#include <cstdint>
#include <string>
#include <string_view>

#include "raps/selector.hpp"
#include "raps/sim.hpp"

namespace raps {

inline constexpr int kScenarioSchemaVersion = 1;
inline constexpr int kInstanceSchemaVersion = 1;

/// Hex-float text for one double ("-0x1.8p+1", "inf", "nan").
std::string encode_double(double v);
/// Inverse of encode_double. Throws IoError on malformed text.
double decode_double(std::string_view text);

std::string scenario_to_json(const Scenario& s);
/// Throws IoError on malformed JSON, a wrong schema version or inconsistent shapes.
Scenario scenario_from_json(std::string_view text);

std::string instance_to_json(const RapsInstance& inst);
RapsInstance instance_from_json(std::string_view text);

/// FNV-1a over the serialized measurement batches: equal hashes mean the
/// estimators consumed byte-identical measurement streams.
std::uint64_t batches_hash(const Scenario& s);

void write_text_file(const std::string& path, std::string_view text);
std::string read_text_file(const std::string& path);

}  // namespace raps
