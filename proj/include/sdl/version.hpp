#pragma once

namespace sdl {

inline constexpr const char* kToolVersion = "sdl 0.3.0";

}  // namespace sdl
