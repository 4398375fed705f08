#pragma once

namespace pisentry {

inline constexpr const char* kVersion = "0.1.0";

} // namespace pisentry
