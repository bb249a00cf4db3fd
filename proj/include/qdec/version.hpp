#pragma once

namespace qdec {

inline constexpr const char* kVersion = "0.3.0";

}  // namespace qdec
