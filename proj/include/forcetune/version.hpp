#pragma once

namespace forcetune {

inline constexpr const char* kEngineVersion = "0.1.0";

}  // namespace forcetune
