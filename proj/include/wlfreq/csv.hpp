// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>

namespace wlfreq {

/// Locale-independent shortest-form rendering with 15 significant digits.
/// NaN renders as "nan".
std::string format_double(double x);

}  // namespace wlfreq
