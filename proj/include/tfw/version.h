#pragma once
// Artifact version identifiers recorded in run metadata.

#include <cstdint>

namespace tfw {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr uint32_t kParamsFormatVersion = 1;  // params.bin container
inline constexpr uint32_t kConfigSchemaVersion = 1;  // run-config JSON schema

}  // namespace tfw
