#pragma once

// On-disk policy library: a root index plus one directory per focal point
// holding a text manifest and one parameter blob per subarray.

#include <iosfwd>
#include <string>

#include "sbf/transfer.hpp"

namespace sbf {

inline constexpr int kLibraryVersion = 1;

// Policy blob: short text header (fine-tune flag, step count, state size),
// the state as float32, then the six networks in the network format.
// Optimizer moments are not stored.
void write_policy(std::ostream& out, const Policy& policy);
Policy read_policy(std::istream& in);

void library_save(const PolicyLibrary& library, const std::string& path);
PolicyLibrary library_load(const std::string& path);

struct LibrarySummary {
  int version = 0;
  int entries = 0;
};

// Reads only the root index.
LibrarySummary library_summary(const std::string& path);

}  // namespace sbf
