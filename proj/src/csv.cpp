// SPDX-License-Identifier: Apache-2.0
#include "wlfreq/csv.hpp"

#include <charconv>
#include <cmath>

namespace wlfreq {

std::string format_double(double x)
{
  if (std::isnan(x))
    return "nan";
  if (std::isinf(x))
    return x > 0 ? "inf" : "-inf";
  if (x == 0.0)
    x = 0.0;   // drop the sign of -0
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 15);
  (void)ec;
  return std::string(buf, end);
}

}  // namespace wlfreq
