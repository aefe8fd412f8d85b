#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nrmt/rng.hpp"
#include "nrmt/tensor.hpp"

namespace nrmt {

// Reverse-mode autodiff over a dynamically built graph. Nodes are created in
// topological order (an op only references existing ids) and values are
// computed eagerly at build time; forward(root) re-evaluates the graph, which
// is what finite-difference probing needs after mutating a leaf.
//
// Gradient semantics: backward(root) computes adjoints in scratch storage and
// adds them into each parameter leaf's grad. Calling backward twice without
// zero_grad() therefore accumulates exactly twice the gradient. Non-parameter
// leaves never receive gradients and subgraphs that do not lead to a parameter
// are skipped entirely in the backward pass.
class Graph {
 public:
  // Leaves. param() leaves receive gradients, input() leaves do not.
  int param(Tensor value);
  int input(Tensor value);

  // Primitives.
  int matmul(int a, int b, bool trans_a = false, bool trans_b = false);
  int add(int a, int b);        // numpy-style right-aligned broadcasting
  int mul(int a, int b);        // elementwise, same broadcasting as add
  int scale(int a, double c);
  int softmax(int a, int axis = -1);
  int layer_norm(int a, int axis = -1, double eps = 1e-5);  // pre-affine
  int relu(int a);
  int gelu(int a);
  int embedding(int table, const std::vector<int64_t>& ids, const Shape& ids_shape);
  int concat(const std::vector<int>& parts, int axis);
  int slice(int a, int axis, int64_t start, int64_t len);
  int masked_fill(int a, Tensor mask, double fill);  // mask broadcast over a
  int dropout(int a, double rate, Rng& rng);         // inverted; rate 0 is identity
  int cross_entropy_ls(int logits, const std::vector<int64_t>& targets,
                       double smoothing, int64_t ignore_id = -1);
  int mse(int a, int b);
  int sum(int a);
  int mean(int a);
  int reshape(int a, const Shape& shape);
  int permute(int a, const std::vector<int64_t>& perm);
  // out[b, :] = a[b, positions[b], :] for a of shape [B, T, D].
  int select_positions(int a, const std::vector<int64_t>& positions);

  // Re-evaluates every node up to root and returns the root value.
  const Tensor& forward(int root);
  // Accumulates gradients for parameter leaves. root must be scalar.
  void backward(int root);
  void zero_grad();

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  Tensor& leaf_value(int id);          // mutable leaf access (optimizers, FD probes)
  const Tensor& grad(int id) const;    // accumulated gradient of a parameter
  Tensor& grad_mut(int id);            // mutable access (tests, optimizers)
  bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].has_grad; }
  bool is_param(int id) const { return nodes_[static_cast<size_t>(id)].is_param; }
  size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    leaf, matmul, add, mul, scale, softmax, layer_norm, relu, gelu,
    embedding, concat, slice, masked_fill, dropout, cross_entropy_ls,
    mse, sum, mean, reshape, permute, select_positions,
  };

  struct Node {
    Op op = Op::leaf;
    std::vector<int> in;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool is_param = false;
    bool needs_grad = false;
    // op attributes
    int axis = -1;
    double c0 = 0.0;   // scale factor / eps / smoothing / fill value
    int64_t ignore_id = -1;
    bool trans_a = false, trans_b = false;
    std::vector<int64_t> idx;   // embedding ids / positions / permutation
    Shape attr_shape;           // reshape target or embedding id shape
    Tensor aux;                 // masked_fill mask or dropout keep-mask
  };

  static const char* op_name(Op op);
  int add_node(Node node);
  void compute(Node& n);
  void backprop(const Node& n, const Tensor& adj, std::vector<Tensor>& adjoints,
                std::vector<bool>& seen);
  void ensure_adjoint(int id, std::vector<Tensor>& adjoints, std::vector<bool>& seen);
  void check_finite(const Node& n) const;

  std::vector<Node> nodes_;
};

// Gradient verification against central finite differences evaluated by
// re-running the forward pass (the graph holds doubles, so h = 1e-3 probes
// resolve well below the 1e-4 tolerance).
struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = true;
  int64_t probes_checked = 0;
  int64_t probes_skipped = 0;  // probes excluded as non-smooth at scale h
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  bool pass = true;
  int64_t probes_checked = 0;
  int64_t probes_skipped = 0;
};

GradCheckReport check_gradients(Graph& g, int root,
                                const std::vector<std::pair<std::string, int>>& params,
                                double h = 1e-3, double tol = 1e-4,
                                int max_probes_per_param = -1,
                                uint64_t probe_seed = 0);

// Same comparison but against gradients already accumulated in the graph;
// the caller runs (or corrupts) the backward pass.
GradCheckReport check_gradients_against_current(
    Graph& g, int root, const std::vector<std::pair<std::string, int>>& params,
    double h = 1e-3, double tol = 1e-4, int max_probes_per_param = -1,
    uint64_t probe_seed = 0);

}  // namespace nrmt
