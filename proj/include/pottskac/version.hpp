#pragma once
// Library version, recorded in every experiment provenance block and run
// manifest so artifacts can be traced to the code that produced them.

namespace pottskac {

inline constexpr const char* library_version = "0.1.0";

} // namespace pottskac
