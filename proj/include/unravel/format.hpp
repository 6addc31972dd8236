#pragma once

#include <cstdio>
#include <string>

namespace unravel {

/// Number rendering shared by every CSV/JSON writer: 17
/// significant digits, '.' decimal point, no grouping.
inline std::string fmt_num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace unravel
