// SPDX-License-Identifier: Apache-2.0

#include "minitrain/attrs.hpp"

namespace minitrain {

namespace {

const AttrValue* find(const AttrMap& attrs, const std::string& key) {
    auto it = attrs.find(key);
    return it == attrs.end() ? nullptr : &it->second;
}

[[noreturn]] void missing(const std::string& key, const std::string& node_id) {
    throw Error(ErrorKind::semantic,
                "node '" + node_id + "': missing required attr '" + key + "'");
}

} // namespace

bool has_attr(const AttrMap& attrs, const std::string& key) {
    return attrs.count(key) != 0;
}

int64_t attr_int(const AttrMap& attrs, const std::string& key, int64_t fallback) {
    const AttrValue* v = find(attrs, key);
    if (!v) return fallback;
    if (auto* i = std::get_if<int64_t>(v)) return *i;
    if (auto* d = std::get_if<double>(v)) return static_cast<int64_t>(*d);
    return fallback;
}

double attr_double(const AttrMap& attrs, const std::string& key, double fallback) {
    const AttrValue* v = find(attrs, key);
    if (!v) return fallback;
    if (auto* d = std::get_if<double>(v)) return *d;
    if (auto* i = std::get_if<int64_t>(v)) return static_cast<double>(*i);
    return fallback;
}

std::vector<int64_t> attr_ints(const AttrMap& attrs, const std::string& key,
                               const std::vector<int64_t>& fallback) {
    const AttrValue* v = find(attrs, key);
    if (!v) return fallback;
    if (auto* vec = std::get_if<std::vector<int64_t>>(v)) return *vec;
    if (auto* i = std::get_if<int64_t>(v)) return {*i};
    return fallback;
}

std::string attr_string(const AttrMap& attrs, const std::string& key,
                        const std::string& fallback) {
    const AttrValue* v = find(attrs, key);
    if (!v) return fallback;
    if (auto* s = std::get_if<std::string>(v)) return *s;
    return fallback;
}

int64_t require_attr_int(const AttrMap& attrs, const std::string& key,
                         const std::string& node_id) {
    if (!has_attr(attrs, key)) missing(key, node_id);
    return attr_int(attrs, key, 0);
}

double require_attr_double(const AttrMap& attrs, const std::string& key,
                           const std::string& node_id) {
    if (!has_attr(attrs, key)) missing(key, node_id);
    return attr_double(attrs, key, 0.0);
}

std::vector<int64_t> require_attr_ints(const AttrMap& attrs, const std::string& key,
                                       const std::string& node_id) {
    if (!has_attr(attrs, key)) missing(key, node_id);
    return attr_ints(attrs, key, {});
}

} // namespace minitrain
