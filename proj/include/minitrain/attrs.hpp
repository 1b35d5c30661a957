// SPDX-License-Identifier: Apache-2.0
//
// Kind-specific operator attributes as a small ordered map.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "minitrain/types.hpp"

namespace minitrain {

using AttrValue = std::variant<int64_t, double, std::string, std::vector<int64_t>>;
using AttrMap = std::map<std::string, AttrValue>;

// Typed accessors. get_* with a default never throws; require_* raises a
// semantic Error naming the missing key.
int64_t attr_int(const AttrMap& attrs, const std::string& key, int64_t fallback);
double attr_double(const AttrMap& attrs, const std::string& key, double fallback);
std::vector<int64_t> attr_ints(const AttrMap& attrs, const std::string& key,
                               const std::vector<int64_t>& fallback);
std::string attr_string(const AttrMap& attrs, const std::string& key,
                        const std::string& fallback);

int64_t require_attr_int(const AttrMap& attrs, const std::string& key,
                         const std::string& node_id);
double require_attr_double(const AttrMap& attrs, const std::string& key,
                           const std::string& node_id);
std::vector<int64_t> require_attr_ints(const AttrMap& attrs, const std::string& key,
                                       const std::string& node_id);

bool has_attr(const AttrMap& attrs, const std::string& key);

} // namespace minitrain
