#include "nrmt/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>

#include "nrmt/error.hpp"

namespace nrmt {

namespace {

using EMat = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CMat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw Error(ErrorKind::data, std::string(op) + ": shape mismatch " + shape_str(a) +
                                   " vs " + shape_str(b));
}

// Right-aligned numpy-style broadcast of two shapes.
Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const size_t ra = a.size(), rb = b.size();
  const size_t r = std::max(ra, rb);
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    const int64_t da = i < ra ? a[ra - 1 - i] : 1;
    const int64_t db = i < rb ? b[rb - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) shape_error(op, a, b);
    out[r - 1 - i] = std::max(da, db);
  }
  return out;
}

// Strides of `shape` expanded to broadcast against `out_shape` (0 stride on
// broadcast dimensions).
std::vector<int64_t> broadcast_strides(const Shape& shape, const Shape& out_shape) {
  const auto st = row_major_strides(shape);
  const size_t r = out_shape.size(), rs = shape.size();
  std::vector<int64_t> out(r, 0);
  for (size_t i = 0; i < rs; ++i) {
    const size_t oi = r - rs + i;
    out[oi] = (shape[i] == out_shape[oi]) ? st[i] : 0;
  }
  return out;
}

// Applies fn(out_index, a_index, b_index) over a broadcast iteration space.
template <typename F>
void broadcast_iterate(const Shape& out_shape, const std::vector<int64_t>& sa,
                       const std::vector<int64_t>& sb, F&& fn) {
  const int64_t n = shape_numel(out_shape);
  const size_t r = out_shape.size();
  if (r == 0) {
    fn(0, 0, 0);
    return;
  }
  std::vector<int64_t> idx(r, 0);
  int64_t oa = 0, ob = 0;
  for (int64_t lin = 0; lin < n; ++lin) {
    fn(lin, oa, ob);
    for (int64_t d = static_cast<int64_t>(r) - 1; d >= 0; --d) {
      const size_t ud = static_cast<size_t>(d);
      idx[ud]++;
      oa += sa[ud];
      ob += sb[ud];
      if (idx[ud] < out_shape[ud]) break;
      oa -= sa[ud] * out_shape[ud];
      ob -= sb[ud] * out_shape[ud];
      idx[ud] = 0;
    }
  }
}

// Sum-reduces `t` back onto target_shape (inverse of a broadcast).
void reduce_into(const Tensor& t, const Shape& target_shape, Tensor& dst) {
  if (t.shape == target_shape) {
    for (size_t i = 0; i < t.data.size(); ++i) dst.data[i] += t.data[i];
    return;
  }
  const auto sd = broadcast_strides(target_shape, t.shape);
  const auto st = row_major_strides(t.shape);
  broadcast_iterate(t.shape, st, sd, [&](int64_t lin, int64_t, int64_t d) {
    dst.data[static_cast<size_t>(d)] += t.data[static_cast<size_t>(lin)];
  });
}

// Iterates lanes along `axis`; fn(base_offset, stride, len).
template <typename F>
void for_each_lane(const Shape& shape, int axis, F&& fn) {
  const auto st = row_major_strides(shape);
  const size_t ua = static_cast<size_t>(axis);
  const int64_t len = shape[ua];
  const int64_t stride = st[ua];
  const size_t r = shape.size();
  std::vector<int64_t> idx(r, 0);
  const int64_t lanes = shape_numel(shape) / len;
  int64_t base = 0;
  for (int64_t l = 0; l < lanes; ++l) {
    fn(base, stride, len);
    for (int64_t d = static_cast<int64_t>(r) - 1; d >= 0; --d) {
      const size_t ud = static_cast<size_t>(d);
      if (ud == ua) continue;
      idx[ud]++;
      base += st[ud];
      if (idx[ud] < shape[ud]) break;
      base -= st[ud] * shape[ud];
      idx[ud] = 0;
    }
  }
}

int normalize_axis(const char* op, int axis, const Shape& shape) {
  const int r = static_cast<int>(shape.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw Error(ErrorKind::data,
                std::string(op) + ": axis out of range for shape " + shape_str(shape));
  }
  return axis;
}

struct MatDims {
  int64_t batch;     // product of leading dims
  int64_t rows, cols;  // physical (stored) matrix dims per batch
};

MatDims mat_dims(const Shape& s) {
  MatDims d;
  const size_t r = s.size();
  d.rows = s[r - 2];
  d.cols = s[r - 1];
  d.batch = 1;
  for (size_t i = 0; i + 2 < r; ++i) d.batch *= s[i];
  return d;
}

}  // namespace

const char* Graph::op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::softmax: return "softmax";
    case Op::layer_norm: return "layer_norm";
    case Op::relu: return "relu";
    case Op::gelu: return "gelu";
    case Op::embedding: return "embedding";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::masked_fill: return "masked_fill";
    case Op::dropout: return "dropout";
    case Op::cross_entropy_ls: return "cross_entropy_ls";
    case Op::mse: return "mse";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::reshape: return "reshape";
    case Op::permute: return "permute";
    case Op::select_positions: return "select_positions";
  }
  return "?";
}

void Graph::check_finite(const Node& n) const {
  if (!n.value.all_finite()) {
    throw Error(ErrorKind::data,
                std::string("non-finite output of ") + op_name(n.op) + " with shape " +
                    shape_str(n.value.shape));
  }
}

int Graph::add_node(Node node) {
  bool needs = node.is_param;
  for (int i : node.in) needs = needs || nodes_[static_cast<size_t>(i)].needs_grad;
  node.needs_grad = needs;
  if (node.op != Op::leaf) {
    compute(node);
    check_finite(node);
  }
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::param(Tensor value) {
  Node n;
  n.is_param = true;
  n.value = std::move(value);
  return add_node(std::move(n));
}

int Graph::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  return add_node(std::move(n));
}

Tensor& Graph::leaf_value(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.op != Op::leaf) {
    throw Error(ErrorKind::internal, "leaf_value called on non-leaf node");
  }
  return n.value;
}

const Tensor& Graph::grad(int id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.has_grad) {
    throw Error(ErrorKind::internal, "gradient not computed; run backward first");
  }
  return n.grad;
}

Tensor& Graph::grad_mut(int id) {
  const_cast<const Graph*>(this)->grad(id);  // existence check
  return nodes_[static_cast<size_t>(id)].grad;
}

int Graph::matmul(int a, int b, bool trans_a, bool trans_b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() < 2 || B.rank() < 2) shape_error("matmul", A.shape, B.shape);
  const MatDims da = mat_dims(A.shape);
  const MatDims db = mat_dims(B.shape);
  const int64_t M = trans_a ? da.cols : da.rows;
  const int64_t Ka = trans_a ? da.rows : da.cols;
  const int64_t Kb = trans_b ? db.cols : db.rows;
  const int64_t N = trans_b ? db.rows : db.cols;
  if (Ka != Kb) shape_error("matmul", A.shape, B.shape);
  if (db.batch != 1 && db.batch != da.batch) shape_error("matmul", A.shape, B.shape);
  if (db.batch != 1) {
    // leading dims must agree elementwise
    Shape la(A.shape.begin(), A.shape.end() - 2);
    Shape lb(B.shape.begin(), B.shape.end() - 2);
    if (la != lb) shape_error("matmul", A.shape, B.shape);
  }
  Shape out_shape(A.shape.begin(), A.shape.end() - 2);
  out_shape.push_back(M);
  out_shape.push_back(N);

  Node n;
  n.op = Op::matmul;
  n.in = {a, b};
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  n.value = Tensor::zeros(out_shape);
  return add_node(std::move(n));
}

int Graph::add(int a, int b) {
  Node n;
  n.op = Op::add;
  n.in = {a, b};
  n.value = Tensor::zeros(broadcast_shape("add", value(a).shape, value(b).shape));
  return add_node(std::move(n));
}

int Graph::mul(int a, int b) {
  Node n;
  n.op = Op::mul;
  n.in = {a, b};
  n.value = Tensor::zeros(broadcast_shape("mul", value(a).shape, value(b).shape));
  return add_node(std::move(n));
}

int Graph::scale(int a, double c) {
  Node n;
  n.op = Op::scale;
  n.in = {a};
  n.c0 = c;
  n.value = Tensor::zeros(value(a).shape);
  return add_node(std::move(n));
}

int Graph::softmax(int a, int axis) {
  Node n;
  n.op = Op::softmax;
  n.in = {a};
  n.axis = normalize_axis("softmax", axis, value(a).shape);
  n.value = Tensor::zeros(value(a).shape);
  return add_node(std::move(n));
}

int Graph::layer_norm(int a, int axis, double eps) {
  Node n;
  n.op = Op::layer_norm;
  n.in = {a};
  n.axis = normalize_axis("layer_norm", axis, value(a).shape);
  n.c0 = eps;
  n.value = Tensor::zeros(value(a).shape);
  return add_node(std::move(n));
}

int Graph::relu(int a) {
  Node n;
  n.op = Op::relu;
  n.in = {a};
  n.value = Tensor::zeros(value(a).shape);
  return add_node(std::move(n));
}

int Graph::gelu(int a) {
  Node n;
  n.op = Op::gelu;
  n.in = {a};
  n.value = Tensor::zeros(value(a).shape);
  return add_node(std::move(n));
}

int Graph::embedding(int table, const std::vector<int64_t>& ids, const Shape& ids_shape) {
  const Tensor& T = value(table);
  if (T.rank() != 2) {
    throw Error(ErrorKind::data, "embedding: table must be rank 2, got " + shape_str(T.shape));
  }
  if (shape_numel(ids_shape) != static_cast<int64_t>(ids.size())) {
    throw Error(ErrorKind::data, "embedding: id count does not match id shape");
  }
  for (int64_t id : ids) {
    if (id < 0 || id >= T.shape[0]) {
      throw Error(ErrorKind::data, "embedding: unknown id " + std::to_string(id) +
                                       " for table " + shape_str(T.shape));
    }
  }
  Node n;
  n.op = Op::embedding;
  n.in = {table};
  n.idx = ids;
  n.attr_shape = ids_shape;
  Shape out = ids_shape;
  out.push_back(T.shape[1]);
  n.value = Tensor::zeros(out);
  return add_node(std::move(n));
}

int Graph::concat(const std::vector<int>& parts, int axis) {
  if (parts.empty()) throw Error(ErrorKind::data, "concat: no inputs");
  const Shape& first = value(parts[0]).shape;
  const int ax = normalize_axis("concat", axis, first);
  Shape out = first;
  int64_t total = 0;
  for (int p : parts) {
    const Shape& s = value(p).shape;
    if (s.size() != first.size()) shape_error("concat", first, s);
    for (size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int>(d) != ax && s[d] != first[d]) shape_error("concat", first, s);
    }
    total += s[static_cast<size_t>(ax)];
  }
  out[static_cast<size_t>(ax)] = total;
  Node n;
  n.op = Op::concat;
  n.in = parts;
  n.axis = ax;
  n.value = Tensor::zeros(out);
  return add_node(std::move(n));
}

int Graph::slice(int a, int axis, int64_t start, int64_t len) {
  const Shape& s = value(a).shape;
  const int ax = normalize_axis("slice", axis, s);
  if (start < 0 || len <= 0 || start + len > s[static_cast<size_t>(ax)]) {
    throw Error(ErrorKind::data, "slice: range [" + std::to_string(start) + ", " +
                                     std::to_string(start + len) + ") out of bounds for " +
                                     shape_str(s));
  }
  Shape out = s;
  out[static_cast<size_t>(ax)] = len;
  Node n;
  n.op = Op::slice;
  n.in = {a};
  n.axis = ax;
  n.idx = {start, len};
  n.value = Tensor::zeros(out);
  return add_node(std::move(n));
}

int Graph::masked_fill(int a, Tensor mask, double fill) {
  // result shape must equal the input's shape; the mask may broadcast onto it
  const Shape out = broadcast_shape("masked_fill", value(a).shape, mask.shape);
  if (out != value(a).shape) shape_error("masked_fill", value(a).shape, mask.shape);
  Node n;
  n.op = Op::masked_fill;
  n.in = {a};
  n.aux = std::move(mask);
  n.c0 = fill;
  n.value = Tensor::zeros(out);
  return add_node(std::move(n));
}

int Graph::dropout(int a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw Error(ErrorKind::data, "dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (rate == 0.0) return a;
  const Tensor& A = value(a);
  Tensor keep = Tensor::zeros(A.shape);
  const double inv = 1.0 / (1.0 - rate);
  for (auto& v : keep.data) v = (rng.uniform() < rate) ? 0.0 : inv;
  Node n;
  n.op = Op::dropout;
  n.in = {a};
  n.aux = std::move(keep);
  n.c0 = rate;
  n.value = Tensor::zeros(A.shape);
  return add_node(std::move(n));
}

int Graph::cross_entropy_ls(int logits, const std::vector<int64_t>& targets,
                            double smoothing, int64_t ignore_id) {
  const Tensor& L = value(logits);
  if (L.rank() < 1) shape_error("cross_entropy_ls", L.shape, {});
  const int64_t V = L.shape.back();
  const int64_t rows = L.numel() / V;
  if (rows != static_cast<int64_t>(targets.size())) {
    throw Error(ErrorKind::data, "cross_entropy_ls: " + std::to_string(targets.size()) +
                                     " targets for logits " + shape_str(L.shape));
  }
  for (int64_t t : targets) {
    if (t != ignore_id && (t < 0 || t >= V)) {
      throw Error(ErrorKind::data, "cross_entropy_ls: target id " + std::to_string(t) +
                                       " outside vocab of size " + std::to_string(V));
    }
  }
  Node n;
  n.op = Op::cross_entropy_ls;
  n.in = {logits};
  n.idx = targets;
  n.c0 = smoothing;
  n.ignore_id = ignore_id;
  n.value = Tensor::zeros({1});
  return add_node(std::move(n));
}

int Graph::mse(int a, int b) {
  if (value(a).shape != value(b).shape) shape_error("mse", value(a).shape, value(b).shape);
  Node n;
  n.op = Op::mse;
  n.in = {a, b};
  n.value = Tensor::zeros({1});
  return add_node(std::move(n));
}

int Graph::sum(int a) {
  Node n;
  n.op = Op::sum;
  n.in = {a};
  n.value = Tensor::zeros({1});
  return add_node(std::move(n));
}

int Graph::mean(int a) {
  Node n;
  n.op = Op::mean;
  n.in = {a};
  n.value = Tensor::zeros({1});
  return add_node(std::move(n));
}

int Graph::reshape(int a, const Shape& shape) {
  if (shape_numel(shape) != value(a).numel()) shape_error("reshape", value(a).shape, shape);
  Node n;
  n.op = Op::reshape;
  n.in = {a};
  n.attr_shape = shape;
  n.value = Tensor::zeros(shape);
  return add_node(std::move(n));
}

int Graph::permute(int a, const std::vector<int64_t>& perm) {
  const Shape& s = value(a).shape;
  if (perm.size() != s.size()) shape_error("permute", s, Shape(perm.begin(), perm.end()));
  std::vector<bool> used(perm.size(), false);
  Shape out(s.size());
  for (size_t i = 0; i < perm.size(); ++i) {
    const int64_t p = perm[i];
    if (p < 0 || p >= static_cast<int64_t>(s.size()) || used[static_cast<size_t>(p)]) {
      throw Error(ErrorKind::data, "permute: invalid permutation");
    }
    used[static_cast<size_t>(p)] = true;
    out[i] = s[static_cast<size_t>(p)];
  }
  Node n;
  n.op = Op::permute;
  n.in = {a};
  n.idx = perm;
  n.value = Tensor::zeros(out);
  return add_node(std::move(n));
}

int Graph::select_positions(int a, const std::vector<int64_t>& positions) {
  const Tensor& A = value(a);
  if (A.rank() != 3) {
    throw Error(ErrorKind::data, "select_positions: expected rank 3, got " + shape_str(A.shape));
  }
  if (static_cast<int64_t>(positions.size()) != A.shape[0]) {
    throw Error(ErrorKind::data, "select_positions: need one position per batch row");
  }
  for (int64_t p : positions) {
    if (p < 0 || p >= A.shape[1]) {
      throw Error(ErrorKind::data, "select_positions: position " + std::to_string(p) +
                                       " out of range for " + shape_str(A.shape));
    }
  }
  Node n;
  n.op = Op::select_positions;
  n.in = {a};
  n.idx = positions;
  n.value = Tensor::zeros({A.shape[0], A.shape[2]});
  return add_node(std::move(n));
}

void Graph::compute(Node& n) {
  switch (n.op) {
    case Op::leaf:
      return;
    case Op::matmul: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      const Tensor& B = nodes_[static_cast<size_t>(n.in[1])].value;
      const MatDims da = mat_dims(A.shape);
      const MatDims db = mat_dims(B.shape);
      const MatDims dc = mat_dims(n.value.shape);
      for (int64_t b = 0; b < da.batch; ++b) {
        CMat Am(A.data.data() + b * da.rows * da.cols, da.rows, da.cols);
        CMat Bm(B.data.data() + (db.batch == 1 ? 0 : b) * db.rows * db.cols, db.rows, db.cols);
        EMat Cm(n.value.data.data() + b * dc.rows * dc.cols, dc.rows, dc.cols);
        if (!n.trans_a && !n.trans_b) Cm.noalias() = Am * Bm;
        else if (n.trans_a && !n.trans_b) Cm.noalias() = Am.transpose() * Bm;
        else if (!n.trans_a && n.trans_b) Cm.noalias() = Am * Bm.transpose();
        else Cm.noalias() = Am.transpose() * Bm.transpose();
      }
      return;
    }
    case Op::add:
    case Op::mul: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      const Tensor& B = nodes_[static_cast<size_t>(n.in[1])].value;
      const bool is_add = n.op == Op::add;
      if (A.shape == B.shape && A.shape == n.value.shape) {
        const size_t m = A.data.size();
        if (is_add) {
          for (size_t i = 0; i < m; ++i) n.value.data[i] = A.data[i] + B.data[i];
        } else {
          for (size_t i = 0; i < m; ++i) n.value.data[i] = A.data[i] * B.data[i];
        }
        return;
      }
      const auto sa = broadcast_strides(A.shape, n.value.shape);
      const auto sb = broadcast_strides(B.shape, n.value.shape);
      broadcast_iterate(n.value.shape, sa, sb, [&](int64_t o, int64_t ia, int64_t ib) {
        const double x = A.data[static_cast<size_t>(ia)];
        const double y = B.data[static_cast<size_t>(ib)];
        n.value.data[static_cast<size_t>(o)] = is_add ? x + y : x * y;
      });
      return;
    }
    case Op::scale: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      for (size_t i = 0; i < A.data.size(); ++i) n.value.data[i] = n.c0 * A.data[i];
      return;
    }
    case Op::softmax: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      for_each_lane(A.shape, n.axis, [&](int64_t base, int64_t stride, int64_t len) {
        double mx = -1e300;
        for (int64_t i = 0; i < len; ++i) mx = std::max(mx, A.data[static_cast<size_t>(base + i * stride)]);
        double z = 0.0;
        for (int64_t i = 0; i < len; ++i) {
          const double e = std::exp(A.data[static_cast<size_t>(base + i * stride)] - mx);
          n.value.data[static_cast<size_t>(base + i * stride)] = e;
          z += e;
        }
        const double inv = 1.0 / z;
        for (int64_t i = 0; i < len; ++i) n.value.data[static_cast<size_t>(base + i * stride)] *= inv;
      });
      return;
    }
    case Op::layer_norm: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      const double eps = n.c0;
      for_each_lane(A.shape, n.axis, [&](int64_t base, int64_t stride, int64_t len) {
        double mu = 0.0;
        for (int64_t i = 0; i < len; ++i) mu += A.data[static_cast<size_t>(base + i * stride)];
        mu /= static_cast<double>(len);
        double var = 0.0;
        for (int64_t i = 0; i < len; ++i) {
          const double d = A.data[static_cast<size_t>(base + i * stride)] - mu;
          var += d * d;
        }
        var /= static_cast<double>(len);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int64_t i = 0; i < len; ++i) {
          const size_t o = static_cast<size_t>(base + i * stride);
          n.value.data[o] = (A.data[o] - mu) * inv;
        }
      });
      return;
    }
    case Op::relu: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      for (size_t i = 0; i < A.data.size(); ++i) n.value.data[i] = A.data[i] > 0.0 ? A.data[i] : 0.0;
      return;
    }
    case Op::gelu: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      for (size_t i = 0; i < A.data.size(); ++i) {
        const double x = A.data[i];
        n.value.data[i] = 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476));
      }
      return;
    }
    case Op::embedding: {
      const Tensor& T = nodes_[static_cast<size_t>(n.in[0])].value;
      const int64_t D = T.shape[1];
      for (size_t i = 0; i < n.idx.size(); ++i) {
        std::memcpy(n.value.data.data() + static_cast<int64_t>(i) * D,
                    T.data.data() + n.idx[i] * D, static_cast<size_t>(D) * sizeof(double));
      }
      return;
    }
    case Op::concat: {
      const auto st_out = row_major_strides(n.value.shape);
      const size_t ax = static_cast<size_t>(n.axis);
      int64_t offset = 0;
      for (int pid : n.in) {
        const Tensor& P = nodes_[static_cast<size_t>(pid)].value;
        const auto st_in = row_major_strides(P.shape);
        // copy lane blocks: everything after axis is contiguous
        const int64_t inner = st_in[ax];  // elements per step along axis
        const int64_t alen = P.shape[ax];
        const int64_t outer = P.numel() / (inner * alen);
        for (int64_t o = 0; o < outer; ++o) {
          const double* src = P.data.data() + o * alen * inner;
          double* dst = n.value.data.data() + o * n.value.shape[ax] * inner + offset * inner;
          std::memcpy(dst, src, static_cast<size_t>(alen * inner) * sizeof(double));
        }
        offset += alen;
      }
      return;
    }
    case Op::slice: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      const auto st_in = row_major_strides(A.shape);
      const size_t ax = static_cast<size_t>(n.axis);
      const int64_t inner = st_in[ax];
      const int64_t start = n.idx[0], len = n.idx[1];
      const int64_t outer = A.numel() / (inner * A.shape[ax]);
      for (int64_t o = 0; o < outer; ++o) {
        const double* src = A.data.data() + o * A.shape[ax] * inner + start * inner;
        double* dst = n.value.data.data() + o * len * inner;
        std::memcpy(dst, src, static_cast<size_t>(len * inner) * sizeof(double));
      }
      return;
    }
    case Op::masked_fill: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      const auto sa = broadcast_strides(A.shape, n.value.shape);
      const auto sm = broadcast_strides(n.aux.shape, n.value.shape);
      broadcast_iterate(n.value.shape, sa, sm, [&](int64_t o, int64_t ia, int64_t im) {
        n.value.data[static_cast<size_t>(o)] = (n.aux.data[static_cast<size_t>(im)] != 0.0)
                                                   ? n.c0
                                                   : A.data[static_cast<size_t>(ia)];
      });
      return;
    }
    case Op::dropout: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      for (size_t i = 0; i < A.data.size(); ++i) n.value.data[i] = A.data[i] * n.aux.data[i];
      return;
    }
    case Op::cross_entropy_ls: {
      const Tensor& L = nodes_[static_cast<size_t>(n.in[0])].value;
      const int64_t V = L.shape.back();
      const int64_t rows = L.numel() / V;
      const double eps = n.c0;
      double total = 0.0;
      int64_t kept = 0;
      for (int64_t r = 0; r < rows; ++r) {
        const int64_t t = n.idx[static_cast<size_t>(r)];
        if (t == n.ignore_id) continue;
        const double* row = L.data.data() + r * V;
        double mx = row[0];
        for (int64_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
        double z = 0.0, sum_logits = 0.0;
        for (int64_t j = 0; j < V; ++j) {
          z += std::exp(row[j] - mx);
          sum_logits += row[j];
        }
        const double lse = mx + std::log(z);
        // q = (1-eps)*onehot + eps/V; loss = sum_j q_j * (lse - logit_j)
        total += lse - (1.0 - eps) * row[t] - (eps / static_cast<double>(V)) * sum_logits;
        kept++;
      }
      n.value.data[0] = kept > 0 ? total / static_cast<double>(kept) : 0.0;
      return;
    }
    case Op::mse: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      const Tensor& B = nodes_[static_cast<size_t>(n.in[1])].value;
      double total = 0.0;
      for (size_t i = 0; i < A.data.size(); ++i) {
        const double d = A.data[i] - B.data[i];
        total += d * d;
      }
      n.value.data[0] = total / static_cast<double>(A.data.size());
      return;
    }
    case Op::sum: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      double total = 0.0;
      for (double v : A.data) total += v;
      n.value.data[0] = total;
      return;
    }
    case Op::mean: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      double total = 0.0;
      for (double v : A.data) total += v;
      n.value.data[0] = total / static_cast<double>(A.data.size());
      return;
    }
    case Op::reshape: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      std::memcpy(n.value.data.data(), A.data.data(), A.data.size() * sizeof(double));
      return;
    }
    case Op::permute: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      const auto st_in = row_major_strides(A.shape);
      const size_t r = A.shape.size();
      std::vector<int64_t> src_stride(r);
      for (size_t i = 0; i < r; ++i) src_stride[i] = st_in[static_cast<size_t>(n.idx[i])];
      std::vector<int64_t> idx(r, 0);
      int64_t src = 0;
      const int64_t total = A.numel();
      for (int64_t lin = 0; lin < total; ++lin) {
        n.value.data[static_cast<size_t>(lin)] = A.data[static_cast<size_t>(src)];
        for (int64_t d = static_cast<int64_t>(r) - 1; d >= 0; --d) {
          const size_t ud = static_cast<size_t>(d);
          idx[ud]++;
          src += src_stride[ud];
          if (idx[ud] < n.value.shape[ud]) break;
          src -= src_stride[ud] * n.value.shape[ud];
          idx[ud] = 0;
        }
      }
      return;
    }
    case Op::select_positions: {
      const Tensor& A = nodes_[static_cast<size_t>(n.in[0])].value;
      const int64_t T = A.shape[1], D = A.shape[2];
      for (size_t b = 0; b < n.idx.size(); ++b) {
        std::memcpy(n.value.data.data() + static_cast<int64_t>(b) * D,
                    A.data.data() + (static_cast<int64_t>(b) * T + n.idx[b]) * D,
                    static_cast<size_t>(D) * sizeof(double));
      }
      return;
    }
  }
}

const Tensor& Graph::forward(int root) {
  if (root < 0 || root >= static_cast<int>(nodes_.size())) {
    throw Error(ErrorKind::internal, "forward: bad node id");
  }
  for (int i = 0; i <= root; ++i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.op == Op::leaf) continue;
    compute(n);
    check_finite(n);
  }
  return nodes_[static_cast<size_t>(root)].value;
}

void Graph::ensure_adjoint(int id, std::vector<Tensor>& adjoints, std::vector<bool>& seen) {
  if (!seen[static_cast<size_t>(id)]) {
    adjoints[static_cast<size_t>(id)] = Tensor::zeros(nodes_[static_cast<size_t>(id)].value.shape);
    seen[static_cast<size_t>(id)] = true;
  }
}

void Graph::backprop(const Node& n, const Tensor& adj, std::vector<Tensor>& adjoints,
                     std::vector<bool>& seen) {
  auto in_node = [&](int k) -> const Node& { return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(k)])]; };
  auto want = [&](int k) { return in_node(k).needs_grad; };
  auto acc = [&](int k) -> Tensor& {
    const int id = n.in[static_cast<size_t>(k)];
    ensure_adjoint(id, adjoints, seen);
    return adjoints[static_cast<size_t>(id)];
  };

  switch (n.op) {
    case Op::leaf:
      return;
    case Op::matmul: {
      const Tensor& A = in_node(0).value;
      const Tensor& B = in_node(1).value;
      const MatDims da = mat_dims(A.shape);
      const MatDims db = mat_dims(B.shape);
      const MatDims dc = mat_dims(n.value.shape);
      const bool wa = want(0), wb = want(1);
      if (!wa && !wb) return;
      Tensor* dA = wa ? &acc(0) : nullptr;
      Tensor* dB = wb ? &acc(1) : nullptr;
      for (int64_t b = 0; b < da.batch; ++b) {
        CMat Am(A.data.data() + b * da.rows * da.cols, da.rows, da.cols);
        CMat Bm(B.data.data() + (db.batch == 1 ? 0 : b) * db.rows * db.cols, db.rows, db.cols);
        CMat Gm(adj.data.data() + b * dc.rows * dc.cols, dc.rows, dc.cols);
        if (wa) {
          EMat dAm(dA->data.data() + b * da.rows * da.cols, da.rows, da.cols);
          // dA' = G * B'^T; then undo trans_a
          if (!n.trans_a) {
            if (!n.trans_b) dAm.noalias() += Gm * Bm.transpose();
            else dAm.noalias() += Gm * Bm;
          } else {
            if (!n.trans_b) dAm.noalias() += Bm * Gm.transpose();
            else dAm.noalias() += Bm.transpose() * Gm.transpose();
          }
        }
        if (wb) {
          EMat dBm(dB->data.data() + (db.batch == 1 ? 0 : b) * db.rows * db.cols, db.rows, db.cols);
          // dB' = A'^T * G; then undo trans_b
          if (!n.trans_b) {
            if (!n.trans_a) dBm.noalias() += Am.transpose() * Gm;
            else dBm.noalias() += Am * Gm;
          } else {
            if (!n.trans_a) dBm.noalias() += Gm.transpose() * Am;
            else dBm.noalias() += Gm.transpose() * Am.transpose();
          }
        }
      }
      return;
    }
    case Op::add: {
      for (int k = 0; k < 2; ++k) {
        if (!want(k)) continue;
        reduce_into(adj, in_node(k).value.shape, acc(k));
      }
      return;
    }
    case Op::mul: {
      const Tensor& A = in_node(0).value;
      const Tensor& B = in_node(1).value;
      const auto sa = broadcast_strides(A.shape, n.value.shape);
      const auto sb = broadcast_strides(B.shape, n.value.shape);
      if (want(0)) {
        Tensor& dst = acc(0);
        broadcast_iterate(n.value.shape, sa, sb, [&](int64_t o, int64_t ia, int64_t ib) {
          dst.data[static_cast<size_t>(ia)] +=
              adj.data[static_cast<size_t>(o)] * B.data[static_cast<size_t>(ib)];
        });
      }
      if (want(1)) {
        Tensor& dst = acc(1);
        broadcast_iterate(n.value.shape, sa, sb, [&](int64_t o, int64_t ia, int64_t ib) {
          dst.data[static_cast<size_t>(ib)] +=
              adj.data[static_cast<size_t>(o)] * A.data[static_cast<size_t>(ia)];
        });
      }
      return;
    }
    case Op::scale: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      for (size_t i = 0; i < adj.data.size(); ++i) dst.data[i] += n.c0 * adj.data[i];
      return;
    }
    case Op::softmax: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      const Tensor& Y = n.value;
      for_each_lane(Y.shape, n.axis, [&](int64_t base, int64_t stride, int64_t len) {
        double dot = 0.0;
        for (int64_t i = 0; i < len; ++i) {
          const size_t o = static_cast<size_t>(base + i * stride);
          dot += adj.data[o] * Y.data[o];
        }
        for (int64_t i = 0; i < len; ++i) {
          const size_t o = static_cast<size_t>(base + i * stride);
          dst.data[o] += Y.data[o] * (adj.data[o] - dot);
        }
      });
      return;
    }
    case Op::layer_norm: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      const Tensor& A = in_node(0).value;
      const Tensor& Y = n.value;
      const double eps = n.c0;
      for_each_lane(A.shape, n.axis, [&](int64_t base, int64_t stride, int64_t len) {
        double mu = 0.0;
        for (int64_t i = 0; i < len; ++i) mu += A.data[static_cast<size_t>(base + i * stride)];
        mu /= static_cast<double>(len);
        double var = 0.0;
        for (int64_t i = 0; i < len; ++i) {
          const double d = A.data[static_cast<size_t>(base + i * stride)] - mu;
          var += d * d;
        }
        var /= static_cast<double>(len);
        const double inv = 1.0 / std::sqrt(var + eps);
        double mean_g = 0.0, mean_gy = 0.0;
        for (int64_t i = 0; i < len; ++i) {
          const size_t o = static_cast<size_t>(base + i * stride);
          mean_g += adj.data[o];
          mean_gy += adj.data[o] * Y.data[o];
        }
        mean_g /= static_cast<double>(len);
        mean_gy /= static_cast<double>(len);
        for (int64_t i = 0; i < len; ++i) {
          const size_t o = static_cast<size_t>(base + i * stride);
          dst.data[o] += inv * (adj.data[o] - mean_g - Y.data[o] * mean_gy);
        }
      });
      return;
    }
    case Op::relu: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      const Tensor& A = in_node(0).value;
      for (size_t i = 0; i < adj.data.size(); ++i) {
        if (A.data[i] > 0.0) dst.data[i] += adj.data[i];
      }
      return;
    }
    case Op::gelu: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      const Tensor& A = in_node(0).value;
      for (size_t i = 0; i < adj.data.size(); ++i) {
        const double x = A.data[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865476));
        const double pdf = 0.3989422804014327 * std::exp(-0.5 * x * x);
        dst.data[i] += adj.data[i] * (cdf + x * pdf);
      }
      return;
    }
    case Op::embedding: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      const int64_t D = in_node(0).value.shape[1];
      for (size_t i = 0; i < n.idx.size(); ++i) {
        const double* g = adj.data.data() + static_cast<int64_t>(i) * D;
        double* row = dst.data.data() + n.idx[i] * D;
        for (int64_t d = 0; d < D; ++d) row[d] += g[d];
      }
      return;
    }
    case Op::concat: {
      const size_t ax = static_cast<size_t>(n.axis);
      int64_t offset = 0;
      for (size_t k = 0; k < n.in.size(); ++k) {
        const Tensor& P = in_node(static_cast<int>(k)).value;
        const auto st_in = row_major_strides(P.shape);
        const int64_t inner = st_in[ax];
        const int64_t alen = P.shape[ax];
        if (want(static_cast<int>(k))) {
          Tensor& dst = acc(static_cast<int>(k));
          const int64_t outer = P.numel() / (inner * alen);
          for (int64_t o = 0; o < outer; ++o) {
            const double* g = adj.data.data() + o * n.value.shape[ax] * inner + offset * inner;
            double* d = dst.data.data() + o * alen * inner;
            for (int64_t i = 0; i < alen * inner; ++i) d[i] += g[i];
          }
        }
        offset += alen;
      }
      return;
    }
    case Op::slice: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      const Tensor& A = in_node(0).value;
      const auto st_in = row_major_strides(A.shape);
      const size_t ax = static_cast<size_t>(n.axis);
      const int64_t inner = st_in[ax];
      const int64_t start = n.idx[0], len = n.idx[1];
      const int64_t outer = A.numel() / (inner * A.shape[ax]);
      for (int64_t o = 0; o < outer; ++o) {
        const double* g = adj.data.data() + o * len * inner;
        double* d = dst.data.data() + o * A.shape[ax] * inner + start * inner;
        for (int64_t i = 0; i < len * inner; ++i) d[i] += g[i];
      }
      return;
    }
    case Op::masked_fill: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      const auto sa = broadcast_strides(in_node(0).value.shape, n.value.shape);
      const auto sm = broadcast_strides(n.aux.shape, n.value.shape);
      broadcast_iterate(n.value.shape, sa, sm, [&](int64_t o, int64_t ia, int64_t im) {
        if (n.aux.data[static_cast<size_t>(im)] == 0.0) {
          dst.data[static_cast<size_t>(ia)] += adj.data[static_cast<size_t>(o)];
        }
      });
      return;
    }
    case Op::dropout: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      for (size_t i = 0; i < adj.data.size(); ++i) dst.data[i] += adj.data[i] * n.aux.data[i];
      return;
    }
    case Op::cross_entropy_ls: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      const Tensor& L = in_node(0).value;
      const int64_t V = L.shape.back();
      const int64_t rows = L.numel() / V;
      const double eps = n.c0;
      int64_t kept = 0;
      for (int64_t t : n.idx) {
        if (t != n.ignore_id) kept++;
      }
      if (kept == 0) return;
      const double g = adj.data[0] / static_cast<double>(kept);
      for (int64_t r = 0; r < rows; ++r) {
        const int64_t t = n.idx[static_cast<size_t>(r)];
        if (t == n.ignore_id) continue;
        const double* row = L.data.data() + r * V;
        double* drow = dst.data.data() + r * V;
        double mx = row[0];
        for (int64_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int64_t j = 0; j < V; ++j) z += std::exp(row[j] - mx);
        const double invz = 1.0 / z;
        const double u = eps / static_cast<double>(V);
        for (int64_t j = 0; j < V; ++j) {
          const double p = std::exp(row[j] - mx) * invz;
          const double q = u + (j == t ? 1.0 - eps : 0.0);
          drow[j] += g * (p - q);
        }
      }
      return;
    }
    case Op::mse: {
      const Tensor& A = in_node(0).value;
      const Tensor& B = in_node(1).value;
      const double g = 2.0 * adj.data[0] / static_cast<double>(A.data.size());
      if (want(0)) {
        Tensor& dst = acc(0);
        for (size_t i = 0; i < A.data.size(); ++i) dst.data[i] += g * (A.data[i] - B.data[i]);
      }
      if (want(1)) {
        Tensor& dst = acc(1);
        for (size_t i = 0; i < A.data.size(); ++i) dst.data[i] -= g * (A.data[i] - B.data[i]);
      }
      return;
    }
    case Op::sum: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      for (auto& v : dst.data) v += adj.data[0];
      return;
    }
    case Op::mean: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      const double g = adj.data[0] / static_cast<double>(dst.data.size());
      for (auto& v : dst.data) v += g;
      return;
    }
    case Op::reshape: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      for (size_t i = 0; i < adj.data.size(); ++i) dst.data[i] += adj.data[i];
      return;
    }
    case Op::permute: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      const Tensor& A = in_node(0).value;
      const auto st_in = row_major_strides(A.shape);
      const size_t r = A.shape.size();
      std::vector<int64_t> src_stride(r);
      for (size_t i = 0; i < r; ++i) src_stride[i] = st_in[static_cast<size_t>(n.idx[i])];
      std::vector<int64_t> idx(r, 0);
      int64_t src = 0;
      const int64_t total = A.numel();
      for (int64_t lin = 0; lin < total; ++lin) {
        dst.data[static_cast<size_t>(src)] += adj.data[static_cast<size_t>(lin)];
        for (int64_t d = static_cast<int64_t>(r) - 1; d >= 0; --d) {
          const size_t ud = static_cast<size_t>(d);
          idx[ud]++;
          src += src_stride[ud];
          if (idx[ud] < n.value.shape[ud]) break;
          src -= src_stride[ud] * n.value.shape[ud];
          idx[ud] = 0;
        }
      }
      return;
    }
    case Op::select_positions: {
      if (!want(0)) return;
      Tensor& dst = acc(0);
      const Tensor& A = in_node(0).value;
      const int64_t T = A.shape[1], D = A.shape[2];
      for (size_t b = 0; b < n.idx.size(); ++b) {
        const double* g = adj.data.data() + static_cast<int64_t>(b) * D;
        double* d = dst.data.data() + (static_cast<int64_t>(b) * T + n.idx[b]) * D;
        for (int64_t i = 0; i < D; ++i) d[i] += g[i];
      }
      return;
    }
  }
}

void Graph::backward(int root) {
  if (root < 0 || root >= static_cast<int>(nodes_.size())) {
    throw Error(ErrorKind::internal, "backward: bad node id");
  }
  if (nodes_[static_cast<size_t>(root)].value.numel() != 1) {
    throw Error(ErrorKind::data, "backward: root must be scalar, got shape " +
                                     shape_str(nodes_[static_cast<size_t>(root)].value.shape));
  }
  std::vector<Tensor> adjoints(nodes_.size());
  std::vector<bool> seen(nodes_.size(), false);
  ensure_adjoint(root, adjoints, seen);
  adjoints[static_cast<size_t>(root)].data[0] = 1.0;

  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!seen[static_cast<size_t>(i)] || !n.needs_grad) continue;
    if (n.op == Op::leaf) {
      if (n.is_param) {
        if (!n.has_grad) {
          n.grad = Tensor::zeros(n.value.shape);
          n.has_grad = true;
        }
        const Tensor& a = adjoints[static_cast<size_t>(i)];
        for (size_t k = 0; k < a.data.size(); ++k) n.grad.data[k] += a.data[k];
        if (!n.grad.all_finite()) {
          throw Error(ErrorKind::data, "non-finite gradient for parameter leaf");
        }
      }
      continue;
    }
    backprop(n, adjoints[static_cast<size_t>(i)], adjoints, seen);
  }
}

void Graph::zero_grad() {
  for (Node& n : nodes_) {
    if (n.has_grad) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  }
}

namespace {

GradCheckReport run_checks(Graph& g, int root,
                           const std::vector<std::pair<std::string, int>>& params,
                           double h, double tol, int max_probes, uint64_t probe_seed,
                           bool run_backward) {
  if (run_backward) {
    g.zero_grad();
    g.forward(root);
    g.backward(root);
  }
  GradCheckReport report;
  Rng rng(derive_seed(probe_seed, 0x6fd));
  const double f0 = g.forward(root).data[0];
  for (const auto& [name, pid] : params) {
    GradCheckEntry entry;
    entry.name = name;
    // Unreached parameters have an all-zero gradient.
    const Tensor analytic =
        g.has_grad(pid) ? g.grad(pid) : Tensor::zeros(g.value(pid).shape);
    Tensor& v = g.leaf_value(pid);
    const int64_t n = v.numel();
    std::vector<int64_t> probes;
    if (max_probes > 0 && n > max_probes) {
      probes = rng.sample_without_replacement(n, max_probes);
    } else {
      probes.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) probes[static_cast<size_t>(i)] = i;
    }
    for (int64_t i : probes) {
      const size_t ui = static_cast<size_t>(i);
      const double orig = v.data[ui];
      auto eval_at = [&](double x) {
        v.data[ui] = x;
        return g.forward(root).data[0];
      };
      const double fp = eval_at(orig + h);
      const double fm = eval_at(orig - h);
      const double fp2 = eval_at(orig + 0.5 * h);
      const double fm2 = eval_at(orig - 0.5 * h);
      v.data[ui] = orig;
      // Central differences estimate the derivative only where the function
      // is smooth across [x-h, x+h]. A probe interval containing a relu kink
      // shows up as disagreeing one-sided slopes or as a step-size-dependent
      // central estimate (smooth truncation error shrinks as h^2, kink error
      // only as h), and such probes are excluded rather than misread as
      // gradient bugs.
      const double fd = (fp - fm) / (2.0 * h);
      const double fd_half = (fp2 - fm2) / h;
      const double fd_plus = (fp - f0) / h;
      const double fd_minus = (f0 - fm) / h;
      const double slope_scale = std::max(std::abs(fd_plus), std::abs(fd_minus));
      const double fd_scale = std::max({std::abs(fd), std::abs(fd_half), 1e-3});
      if (std::abs(fd_plus - fd_minus) > 1e-2 * slope_scale + 1e-6 ||
          std::abs(fd - fd_half) > 0.25 * tol * fd_scale) {
        entry.probes_skipped += 1;
        continue;
      }
      entry.probes_checked += 1;
      const double an = analytic.data[ui];
      const double rel = std::abs(fd - an) / std::max(std::abs(fd) + std::abs(an), 1e-3);
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    entry.pass = entry.max_rel_err < tol;
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.pass = report.pass && entry.pass;
    report.probes_checked += entry.probes_checked;
    report.probes_skipped += entry.probes_skipped;
    report.entries.push_back(std::move(entry));
  }
  g.forward(root);  // restore values
  return report;
}

}  // namespace

GradCheckReport check_gradients(Graph& g, int root,
                                const std::vector<std::pair<std::string, int>>& params,
                                double h, double tol, int max_probes_per_param,
                                uint64_t probe_seed) {
  return run_checks(g, root, params, h, tol, max_probes_per_param, probe_seed, true);
}

GradCheckReport check_gradients_against_current(
    Graph& g, int root, const std::vector<std::pair<std::string, int>>& params, double h,
    double tol, int max_probes_per_param, uint64_t probe_seed) {
  return run_checks(g, root, params, h, tol, max_probes_per_param, probe_seed, false);
}

}  // namespace nrmt
