#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "negguide/chains.hpp"
#include "negguide/world.hpp"

namespace negguide {

// 17 significant digits, so every double round-trips. Non-finite values are
// written as null.
std::string format_real(double x);

nlohmann::json guidance_to_json(const GuidanceConfig& config);
// Overlays the fields present in `doc` onto `base`. Errors name the field.
GuidanceConfig guidance_from_json(const nlohmann::json& doc, GuidanceConfig base = {});

// 64-bit FNV-1a, hex encoded. Used for config hashes embedded in outputs.
std::string fnv1a_hex(const std::string& bytes);

/// JSON-lines trace: a header object with the full config, then one object
/// per StepRecord in chain order.
void write_trace(std::ostream& out, const ChainTrace& trace, const ConceptWorld& world,
                 const std::string& config_hash);

struct ParsedTrace {
  nlohmann::json header;
  std::vector<StepRecord> records;
};
ParsedTrace read_trace(std::istream& in, const ConceptWorld& world);

}  // namespace negguide
