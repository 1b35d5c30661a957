// SPDX-License-Identifier: Apache-2.0

#include "minitrain/model_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace minitrain {

using nlohmann::json;

namespace {

AttrValue attr_from_json(const json& v, const std::string& node_id,
                         const std::string& key) {
    if (v.is_number_integer()) return v.get<int64_t>();
    if (v.is_number_float()) return v.get<double>();
    if (v.is_boolean()) return static_cast<int64_t>(v.get<bool>() ? 1 : 0);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array()) {
        std::vector<int64_t> vec;
        for (const auto& e : v) {
            if (!e.is_number_integer())
                throw Error(ErrorKind::semantic, "node '" + node_id + "': attr '" + key +
                                                     "' array must hold integers");
            vec.push_back(e.get<int64_t>());
        }
        return vec;
    }
    throw Error(ErrorKind::semantic,
                "node '" + node_id + "': attr '" + key + "' has unsupported type");
}

json attr_to_json(const AttrValue& v) {
    if (auto* i = std::get_if<int64_t>(&v)) return *i;
    if (auto* d = std::get_if<double>(&v)) return *d;
    if (auto* s = std::get_if<std::string>(&v)) return *s;
    return std::get<std::vector<int64_t>>(v);
}

std::vector<std::string> string_list(const json& j, const std::string& what) {
    std::vector<std::string> out;
    if (!j.is_array())
        throw Error(ErrorKind::semantic, what + " must be an array of ids");
    for (const auto& e : j) {
        if (!e.is_string())
            throw Error(ErrorKind::semantic, what + " must be an array of ids");
        out.push_back(e.get<std::string>());
    }
    return out;
}

TensorSpec tensor_from_json(const json& jt) {
    if (!jt.contains("id") || !jt["id"].is_string())
        throw Error(ErrorKind::semantic, "tensor entry without string id");
    TensorSpec t;
    t.id = jt["id"].get<std::string>();
    if (jt.contains("shape")) {
        for (const auto& d : jt["shape"]) t.shape.push_back(d.get<int64_t>());
    }
    if (jt.contains("dtype")) t.dtype = dtype_from_string(jt["dtype"].get<std::string>());
    if (jt.contains("role")) t.role = role_from_string(jt["role"].get<std::string>());
    if (jt.contains("layout")) t.layout = layout_from_string(jt["layout"].get<std::string>());
    if (jt.contains("data")) {
        for (const auto& v : jt["data"]) t.data.push_back(v.get<double>());
    }
    return t;
}

OpNode node_from_json(const json& jn) {
    if (!jn.contains("id") || !jn["id"].is_string())
        throw Error(ErrorKind::semantic, "node entry without string id");
    OpNode n;
    n.id = jn["id"].get<std::string>();
    if (!jn.contains("kind"))
        throw Error(ErrorKind::semantic, "node '" + n.id + "' without kind");
    n.kind = op_kind_from_string(jn["kind"].get<std::string>());
    if (jn.contains("attrs")) {
        for (const auto& [key, value] : jn["attrs"].items())
            n.attrs[key] = attr_from_json(value, n.id, key);
    }
    if (jn.contains("inputs")) n.inputs = string_list(jn["inputs"], "node '" + n.id + "' inputs");
    if (jn.contains("outputs")) n.outputs = string_list(jn["outputs"], "node '" + n.id + "' outputs");
    if (jn.contains("impl_binding"))
        n.impl = impl_binding_from_string(jn["impl_binding"].get<std::string>());
    if (jn.contains("fused_kinds")) {
        for (const auto& k : jn["fused_kinds"])
            n.fused_kinds.push_back(op_kind_from_string(k.get<std::string>()));
    }
    return n;
}

} // namespace

void assign_layer_index(Graph& g) {
    g.layer_index.clear();
    std::set<std::string> param_set(g.params.begin(), g.params.end());
    int next = 0;
    for (const auto& node : g.nodes) {
        int ordinal = -1;
        for (const auto& in : node.inputs) {
            if (!param_set.count(in)) continue;
            if (g.layer_index.count(in)) {
                ordinal = g.layer_index[in];  // param shared with an earlier node
                break;
            }
        }
        bool has_new_param = false;
        for (const auto& in : node.inputs) {
            if (param_set.count(in) && !g.layer_index.count(in)) has_new_param = true;
        }
        if (!has_new_param) continue;
        if (ordinal < 0) ordinal = next++;
        for (const auto& in : node.inputs) {
            if (param_set.count(in) && !g.layer_index.count(in))
                g.layer_index[in] = ordinal;
        }
    }
}

Graph import_model(const std::string& document) {
    json j;
    try {
        j = json::parse(document);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::parse, std::string("malformed model document: ") + e.what());
    }

    Graph g;
    if (j.contains("tensors")) {
        for (const auto& jt : j["tensors"]) g.tensors.push_back(tensor_from_json(jt));
    }
    if (j.contains("nodes")) {
        for (const auto& jn : j["nodes"]) g.nodes.push_back(node_from_json(jn));
    }
    if (j.contains("inputs")) g.inputs = string_list(j["inputs"], "inputs");
    if (j.contains("outputs")) g.outputs = string_list(j["outputs"], "outputs");
    if (j.contains("params")) g.params = string_list(j["params"], "params");
    if (j.contains("objective")) g.objective = j["objective"].get<std::string>();

    assign_layer_index(g);
    if (j.contains("layer_index")) {
        for (const auto& [id, ord] : j["layer_index"].items())
            g.layer_index[id] = ord.get<int>();
    }

    auto report = validate_graph(g);
    if (!report.empty()) {
        std::ostringstream os;
        os << "invalid model document:";
        for (const auto& line : report) os << "\n  " << line;
        throw Error(ErrorKind::semantic, os.str());
    }
    return shape_infer(g);
}

Graph import_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open model file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return import_model(buf.str());
}

std::string export_model(const Graph& g) {
    json j;
    j["tensors"] = json::array();
    for (const auto& t : g.tensors) {
        json jt;
        jt["id"] = t.id;
        jt["shape"] = t.shape;
        jt["dtype"] = std::string(to_string(t.dtype));
        jt["role"] = std::string(to_string(t.role));
        if (t.layout != Layout::none) jt["layout"] = std::string(to_string(t.layout));
        if (!t.data.empty()) jt["data"] = t.data;
        j["tensors"].push_back(jt);
    }
    j["nodes"] = json::array();
    for (const auto& n : g.nodes) {
        json jn;
        jn["id"] = n.id;
        jn["kind"] = std::string(to_string(n.kind));
        jn["attrs"] = json::object();
        for (const auto& [key, value] : n.attrs) jn["attrs"][key] = attr_to_json(value);
        jn["inputs"] = n.inputs;
        jn["outputs"] = n.outputs;
        if (n.impl != ImplBinding::direct)
            jn["impl_binding"] = std::string(to_string(n.impl));
        if (!n.fused_kinds.empty()) {
            jn["fused_kinds"] = json::array();
            for (OpKind k : n.fused_kinds)
                jn["fused_kinds"].push_back(std::string(to_string(k)));
        }
        j["nodes"].push_back(jn);
    }
    j["inputs"] = g.inputs;
    j["outputs"] = g.outputs;
    j["params"] = g.params;
    j["layer_index"] = json::object();
    for (const auto& [id, ord] : g.layer_index) j["layer_index"][id] = ord;
    if (!g.objective.empty()) j["objective"] = g.objective;
    return j.dump(2) + "\n";
}

} // namespace minitrain
