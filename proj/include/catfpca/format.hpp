#ifndef CATFPCA_FORMAT_HPP
#define CATFPCA_FORMAT_HPP

#include <cstdio>
#include <string>

namespace catfpca {

// Fixed 17-significant-digit rendering used by every text export, so that
// repeated runs produce byte-identical files and values round-trip exactly.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x == 0.0 ? 0.0 : x);
  return buf;
}

}  // namespace catfpca

#endif  // CATFPCA_FORMAT_HPP
