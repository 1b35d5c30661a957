// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>

#include "minitrain/graph.hpp"
#include "minitrain/model_io.hpp"

using namespace minitrain;

namespace {

TensorSpec make_tensor(std::string id, std::vector<int64_t> shape,
                       TensorRole role = TensorRole::activation) {
    TensorSpec t;
    t.id = std::move(id);
    t.shape = std::move(shape);
    t.dtype = DType::f32;
    t.role = role;
    return t;
}

OpNode make_node(std::string id, OpKind kind, std::vector<std::string> inputs,
                 std::vector<std::string> outputs, AttrMap attrs = {}) {
    OpNode n;
    n.id = std::move(id);
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.outputs = std::move(outputs);
    n.attrs = std::move(attrs);
    return n;
}

const char* kLinearModel = R"({
  "tensors": [
    {"id": "x", "shape": [1, 4], "dtype": "f32", "role": "input"},
    {"id": "W", "shape": [2, 4], "dtype": "f32", "role": "weight"},
    {"id": "b", "shape": [2], "dtype": "f32", "role": "bias"},
    {"id": "y", "shape": [], "dtype": "f32", "role": "activation"}
  ],
  "nodes": [
    {"id": "fc", "kind": "matmul", "attrs": {"transpose_b": 1},
     "inputs": ["x", "W", "b"], "outputs": ["y"]}
  ],
  "inputs": ["x"],
  "outputs": ["y"],
  "params": ["W", "b"]
})";

} // namespace

TEST_CASE("import of a one-layer linear model") {
    Graph g = import_model(kLinearModel);
    REQUIRE(g.nodes.size() == 1);
    CHECK(g.nodes[0].kind == OpKind::matmul);
    CHECK(g.params == std::vector<std::string>{"W", "b"});
    CHECK(g.layer_index.at("W") == 0);
    CHECK(g.layer_index.at("b") == 0);
    CHECK(g.tensor("y").shape == std::vector<int64_t>{1, 2});
}

TEST_CASE("import rejects a dangling tensor reference by name") {
    std::string doc = kLinearModel;
    doc.replace(doc.find("\"x\", \"W\""), 8, "\"t9\", \"W\"");
    try {
        import_model(doc);
        FAIL("expected semantic error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::semantic);
        CHECK(std::string(e.what()).find("t9") != std::string::npos);
    }
}

TEST_CASE("import rejects malformed JSON as a parse error") {
    try {
        import_model("{not json");
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::parse);
    }
}

TEST_CASE("validate reports a cycle") {
    Graph g;
    g.tensors = {make_tensor("t0", {2, 2}), make_tensor("t1", {2, 2})};
    g.nodes = {make_node("A", OpKind::relu, {"t1"}, {"t0"}),
               make_node("B", OpKind::relu, {"t0"}, {"t1"})};
    g.outputs = {"t1"};
    auto report = validate_graph(g);
    int cycles = 0;
    for (const auto& line : report) {
        if (line.find("cycle") != std::string::npos) ++cycles;
    }
    CHECK(cycles == 1);
}

TEST_CASE("validate accepts the empty graph") {
    Graph g;
    CHECK(validate_graph(g).empty());
}

TEST_CASE("validate reports one shape mismatch for inconsistent matmul") {
    Graph g;
    g.tensors = {make_tensor("x", {1, 3}, TensorRole::input),
                 make_tensor("W", {2, 4}, TensorRole::weight),
                 make_tensor("y", {}, TensorRole::activation)};
    g.nodes = {make_node("fc", OpKind::matmul, {"x", "W"}, {"y"},
                         {{"transpose_b", int64_t{1}}})};
    g.inputs = {"x"};
    g.outputs = {"y"};
    g.params = {"W"};
    auto report = validate_graph(g);
    REQUIRE(report.size() == 1);
    CHECK(report[0].find("shape") != std::string::npos);
}

TEST_CASE("topo sort orders a diamond with the source first and sink last") {
    Graph g;
    g.tensors = {make_tensor("x", {2, 2}, TensorRole::input), make_tensor("a", {2, 2}),
                 make_tensor("b", {2, 2}), make_tensor("c", {2, 2}),
                 make_tensor("d", {2, 2})};
    g.nodes = {make_node("nD", OpKind::add, {"b", "c"}, {"d"}),
               make_node("nB", OpKind::relu, {"a"}, {"b"}),
               make_node("nC", OpKind::relu, {"a"}, {"c"}),
               make_node("nA", OpKind::relu, {"x"}, {"a"})};
    g.inputs = {"x"};
    g.outputs = {"d"};
    auto order = topo_sort(g);
    REQUIRE(order.size() == 4);
    CHECK(order.front() == "nA");
    CHECK(order.back() == "nD");
    CHECK(order == topo_sort(g));  // rerun yields the identical order

    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<std::string>{"nA", "nB", "nC", "nD"});
}

TEST_CASE("topo sort of a single node and of a chain") {
    Graph g;
    g.tensors = {make_tensor("x", {2}, TensorRole::input)};
    g.nodes = {make_node("only", OpKind::relu, {"x"}, {"y"})};
    g.tensors.push_back(make_tensor("y", {2}));
    g.outputs = {"y"};
    g.inputs = {"x"};
    CHECK(topo_sort(g) == std::vector<std::string>{"only"});

    Graph chain;
    chain.tensors.push_back(make_tensor("t0", {2}, TensorRole::input));
    chain.inputs = {"t0"};
    for (int i = 0; i < 5; ++i) {
        std::string in = "t" + std::to_string(i);
        std::string out = "t" + std::to_string(i + 1);
        chain.tensors.push_back(make_tensor(out, {2}));
        chain.nodes.push_back(make_node("n" + std::to_string(i), OpKind::relu, {in}, {out}));
    }
    chain.outputs = {"t5"};
    CHECK(topo_sort(chain) ==
          std::vector<std::string>{"n0", "n1", "n2", "n3", "n4"});
}

TEST_CASE("shape inference: conv, matmul, global avgpool") {
    Graph g;
    g.tensors = {make_tensor("x", {1, 16, 32, 32}, TensorRole::input),
                 make_tensor("W", {32, 16, 3, 3}, TensorRole::weight),
                 make_tensor("y", {})};
    g.tensors[0].layout = Layout::nchw;
    g.nodes = {make_node("conv", OpKind::conv2d, {"x", "W"}, {"y"},
                         {{"stride", int64_t{1}}, {"pad", int64_t{1}}})};
    g.inputs = {"x"};
    g.outputs = {"y"};
    g.params = {"W"};
    Graph inferred = shape_infer(g);
    CHECK(inferred.tensor("y").shape == std::vector<int64_t>{1, 32, 32, 32});
    CHECK(inferred.tensor("y").layout == Layout::nchw);

    Graph mm;
    mm.tensors = {make_tensor("x", {8, 256}, TensorRole::input),
                  make_tensor("W", {256, 10}, TensorRole::weight),
                  make_tensor("y", {})};
    mm.nodes = {make_node("fc", OpKind::matmul, {"x", "W"}, {"y"})};
    mm.inputs = {"x"};
    mm.outputs = {"y"};
    mm.params = {"W"};
    CHECK(shape_infer(mm).tensor("y").shape == std::vector<int64_t>{8, 10});

    Graph pool;
    pool.tensors = {make_tensor("x", {1, 32, 7, 7}, TensorRole::input),
                    make_tensor("y", {})};
    pool.tensors[0].layout = Layout::nchw;
    pool.nodes = {make_node("gap", OpKind::avgpool2d, {"x"}, {"y"},
                            {{"global", int64_t{1}}})};
    pool.inputs = {"x"};
    pool.outputs = {"y"};
    CHECK(shape_infer(pool).tensor("y").shape == std::vector<int64_t>{1, 32, 1, 1});
}

TEST_CASE("shape inference is a fixpoint") {
    Graph g = import_model(kLinearModel);
    Graph once = shape_infer(g);
    Graph twice = shape_infer(once);
    REQUIRE(once.tensors.size() == twice.tensors.size());
    for (size_t i = 0; i < once.tensors.size(); ++i) {
        CHECK(once.tensors[i].shape == twice.tensors[i].shape);
        CHECK(once.tensors[i].layout == twice.tensors[i].layout);
    }
}

TEST_CASE("export/import round trip preserves the graph") {
    Graph g = import_model(kLinearModel);
    Graph h = import_model(export_model(g));
    CHECK(export_model(g) == export_model(h));
}
