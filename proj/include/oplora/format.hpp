// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <charconv>
#include <string>

namespace oplora {

/// Shortest round-trip decimal representation. Locale-independent, so
/// repeated runs emit byte-identical reports.
inline std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

} // namespace oplora
