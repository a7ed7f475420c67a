#pragma once

namespace abelscale {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace abelscale
