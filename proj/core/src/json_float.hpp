#pragma once

// JSON value type whose floating-point numbers are 32-bit. Dumping uses the
// shortest text that round-trips the float and parsing goes decimal -> float
// directly, so HFJ values survive save/load bit-exactly.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace halunet {

using FloatJson = nlohmann::basic_json<nlohmann::ordered_map, std::vector, std::string, bool,
                                       std::int64_t, std::uint64_t, float>;

}  // namespace halunet
