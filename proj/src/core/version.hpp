#pragma once

namespace dipm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dipm
