#pragma once

namespace prepguard {

inline constexpr const char* kToolVersion = "prepguard 1.0.0";
inline constexpr int kReportVersion = 1;

}  // namespace prepguard
