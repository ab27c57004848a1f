#include "lexinmt/tape.hpp"

#include <cmath>

namespace lexinmt::nnet {

namespace {
constexpr double kNormFloor = 1e-300;
constexpr double kLayerNormEps = 1e-5;
}  // namespace

int Tape::push(Node n) {
  if (swept_) fail("tape: cannot extend after backward");
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tape::Node& Tape::node(Var v) {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) fail("tape: bad var");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) fail("tape: bad var");
  return nodes_[v.id];
}

const Matrix& Tape::val(Var v) const { return node(v).val; }

double Tape::scalar(Var v) const {
  const Matrix& m = node(v).val;
  if (m.rows != 1 || m.cols != 1) fail("tape: scalar() on non 1x1 value");
  return m.d[0];
}

const Matrix& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.needs_grad) fail("tape: grad() on non-differentiable node");
  return n.grad;
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.op = Op::kLeaf;
  n.val = std::move(value);
  return Var{push(std::move(n))};
}

Var Tape::input(Matrix value) {
  Node n;
  n.op = Op::kInput;
  n.val = std::move(value);
  n.needs_grad = true;
  return Var{push(std::move(n))};
}

Var Tape::param(ParamStore& store, const std::string& name) {
  auto it = param_nodes_.find(name);
  if (it != param_nodes_.end()) return Var{it->second};
  Node n;
  n.op = Op::kParam;
  n.val = store.get(name);
  n.needs_grad = true;
  n.pname = name;
  int id = push(std::move(n));
  param_nodes_.emplace(name, id);
  return Var{id};
}

Var Tape::matmul(Var a, Var b) {
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.val = nnet::matmul(val(a), val(b));
  n.needs_grad = needs(a.id) || needs(b.id);
  return Var{push(std::move(n))};
}

Var Tape::matmul_nt(Var a, Var b) {
  Node n;
  n.op = Op::kMatMulNT;
  n.a = a.id;
  n.b = b.id;
  n.val = nnet::matmul_nt(val(a), val(b));
  n.needs_grad = needs(a.id) || needs(b.id);
  return Var{push(std::move(n))};
}

Var Tape::add(Var a, Var b) { return add_scaled(a, b, 1.0); }

Var Tape::add_scaled(Var a, Var b, double alpha) {
  const Matrix& va = val(a);
  const Matrix& vb = val(b);
  if (!va.same_shape(vb)) fail("tape add: shape mismatch");
  Node n;
  n.op = Op::kAddScaled;
  n.a = a.id;
  n.b = b.id;
  n.alpha = alpha;
  n.val = va;
  axpy_inplace(n.val, alpha, vb);
  n.needs_grad = needs(a.id) || needs(b.id);
  return Var{push(std::move(n))};
}

Var Tape::add_row(Var a, Var b) {
  const Matrix& va = val(a);
  const Matrix& vb = val(b);
  if (vb.rows != 1 || vb.cols != va.cols) fail("tape add_row: shape mismatch");
  Node n;
  n.op = Op::kAddRow;
  n.a = a.id;
  n.b = b.id;
  n.val = va;
  for (int i = 0; i < n.val.rows; ++i) {
    double* r = n.val.row(i);
    for (int j = 0; j < n.val.cols; ++j) r[j] += vb.d[j];
  }
  n.needs_grad = needs(a.id) || needs(b.id);
  return Var{push(std::move(n))};
}

Var Tape::scale(Var a, double alpha) {
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.alpha = alpha;
  n.val = val(a);
  scale_inplace(n.val, alpha);
  n.needs_grad = needs(a.id);
  return Var{push(std::move(n))};
}

Var Tape::add_scalar(Var a, double alpha) {
  Node n;
  n.op = Op::kAddScalar;
  n.a = a.id;
  n.alpha = alpha;
  n.val = val(a);
  for (auto& x : n.val.d) x += alpha;
  n.needs_grad = needs(a.id);
  return Var{push(std::move(n))};
}

Var Tape::mul(Var a, Var b) {
  const Matrix& va = val(a);
  const Matrix& vb = val(b);
  if (!va.same_shape(vb)) fail("tape mul: shape mismatch");
  Node n;
  n.op = Op::kMul;
  n.a = a.id;
  n.b = b.id;
  n.val = va;
  for (size_t i = 0; i < n.val.d.size(); ++i) n.val.d[i] *= vb.d[i];
  n.needs_grad = needs(a.id) || needs(b.id);
  return Var{push(std::move(n))};
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a.id;
  n.val = val(a);
  for (auto& x : n.val.d) x = std::tanh(x);
  n.needs_grad = needs(a.id);
  return Var{push(std::move(n))};
}

Var Tape::relu(Var a) {
  Node n;
  n.op = Op::kRelu;
  n.a = a.id;
  n.val = val(a);
  for (auto& x : n.val.d) x = x > 0.0 ? x : 0.0;
  n.needs_grad = needs(a.id);
  return Var{push(std::move(n))};
}

Var Tape::log(Var a) {
  Node n;
  n.op = Op::kLog;
  n.a = a.id;
  n.val = val(a);
  for (auto& x : n.val.d) x = std::log(x);
  n.needs_grad = needs(a.id);
  return Var{push(std::move(n))};
}

Var Tape::softmax_rows(Var a) {
  Node n;
  n.op = Op::kSoftmaxRows;
  n.a = a.id;
  n.val = val(a);
  softmax_rows_inplace(n.val);
  n.needs_grad = needs(a.id);
  return Var{push(std::move(n))};
}

Var Tape::log_softmax_rows(Var a) {
  Node n;
  n.op = Op::kLogSoftmaxRows;
  n.a = a.id;
  n.val = val(a);
  for (int i = 0; i < n.val.rows; ++i) {
    double* r = n.val.row(i);
    double mx = r[0];
    for (int j = 1; j < n.val.cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (int j = 0; j < n.val.cols; ++j) sum += std::exp(r[j] - mx);
    double lse = mx + std::log(sum);
    for (int j = 0; j < n.val.cols; ++j) r[j] -= lse;
  }
  n.needs_grad = needs(a.id);
  return Var{push(std::move(n))};
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias) {
  const Matrix& vx = val(x);
  const Matrix& vg = val(gain);
  const Matrix& vb = val(bias);
  if (vg.rows != 1 || vb.rows != 1 || vg.cols != vx.cols || vb.cols != vx.cols)
    fail("layer_norm: shape mismatch");
  Node n;
  n.op = Op::kLayerNorm;
  n.a = x.id;
  n.b = gain.id;
  n.c = bias.id;
  n.val = Matrix(vx.rows, vx.cols);
  n.aux = Matrix(vx.rows, vx.cols);
  n.auxv.resize(vx.rows);
  const int d = vx.cols;
  for (int i = 0; i < vx.rows; ++i) {
    const double* r = vx.row(i);
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += r[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (r[j] - mean) * (r[j] - mean);
    var /= d;
    double inv_sigma = 1.0 / std::sqrt(var + kLayerNormEps);
    n.auxv[i] = inv_sigma;
    double* xh = n.aux.row(i);
    double* o = n.val.row(i);
    for (int j = 0; j < d; ++j) {
      xh[j] = (r[j] - mean) * inv_sigma;
      o[j] = xh[j] * vg.d[j] + vb.d[j];
    }
  }
  n.needs_grad = needs(x.id) || needs(gain.id) || needs(bias.id);
  return Var{push(std::move(n))};
}

Var Tape::gather_rows(Var table, std::vector<int> ids) {
  const Matrix& t = val(table);
  Node n;
  n.op = Op::kGatherRows;
  n.a = table.id;
  n.ids = std::move(ids);
  n.val = Matrix(static_cast<int>(n.ids.size()), t.cols);
  for (size_t i = 0; i < n.ids.size(); ++i) {
    int id = n.ids[i];
    if (id < 0 || id >= t.rows) fail("gather_rows: id out of range");
    const double* src = t.row(id);
    double* dst = n.val.row(static_cast<int>(i));
    for (int j = 0; j < t.cols; ++j) dst[j] = src[j];
  }
  n.needs_grad = needs(table.id);
  return Var{push(std::move(n))};
}

Var Tape::pick_entries(Var a, std::vector<int> col_ids) {
  const Matrix& va = val(a);
  if (static_cast<int>(col_ids.size()) != va.rows)
    fail("pick_entries: one index per row required");
  Node n;
  n.op = Op::kPickEntries;
  n.a = a.id;
  n.ids = std::move(col_ids);
  n.val = Matrix(va.rows, 1);
  for (int i = 0; i < va.rows; ++i) {
    int j = n.ids[i];
    if (j < 0 || j >= va.cols) fail("pick_entries: column out of range");
    n.val.at(i, 0) = va.at(i, j);
  }
  n.needs_grad = needs(a.id);
  return Var{push(std::move(n))};
}

Var Tape::slice_rows(Var a, int first, int count) {
  const Matrix& va = val(a);
  if (first < 0 || count < 0 || first + count > va.rows)
    fail("slice_rows: out of range");
  Node n;
  n.op = Op::kSliceRows;
  n.a = a.id;
  n.i0 = first;
  n.n0 = count;
  n.val = Matrix(count, va.cols);
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < va.cols; ++j) n.val.at(i, j) = va.at(first + i, j);
  n.needs_grad = needs(a.id);
  return Var{push(std::move(n))};
}

Var Tape::slice_cols(Var a, int first, int count) {
  const Matrix& va = val(a);
  if (first < 0 || count < 0 || first + count > va.cols)
    fail("slice_cols: out of range");
  Node n;
  n.op = Op::kSliceCols;
  n.a = a.id;
  n.i0 = first;
  n.n0 = count;
  n.val = Matrix(va.rows, count);
  for (int i = 0; i < va.rows; ++i)
    for (int j = 0; j < count; ++j) n.val.at(i, j) = va.at(i, first + j);
  n.needs_grad = needs(a.id);
  return Var{push(std::move(n))};
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) fail("concat_rows: empty");
  int cols = val(parts[0]).cols;
  int rows = 0;
  bool ng = false;
  for (Var p : parts) {
    if (val(p).cols != cols) fail("concat_rows: column mismatch");
    rows += val(p).rows;
    ng = ng || needs(p.id);
  }
  Node n;
  n.op = Op::kConcatRows;
  n.val = Matrix(rows, cols);
  int at = 0;
  for (Var p : parts) {
    const Matrix& v = val(p);
    for (int i = 0; i < v.rows; ++i)
      for (int j = 0; j < cols; ++j) n.val.at(at + i, j) = v.at(i, j);
    at += v.rows;
    n.many.push_back(p.id);
  }
  n.needs_grad = ng;
  return Var{push(std::move(n))};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) fail("concat_cols: empty");
  int rows = val(parts[0]).rows;
  int cols = 0;
  bool ng = false;
  for (Var p : parts) {
    if (val(p).rows != rows) fail("concat_cols: row mismatch");
    cols += val(p).cols;
    ng = ng || needs(p.id);
  }
  Node n;
  n.op = Op::kConcatCols;
  n.val = Matrix(rows, cols);
  int at = 0;
  for (Var p : parts) {
    const Matrix& v = val(p);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < v.cols; ++j) n.val.at(i, at + j) = v.at(i, j);
    at += v.cols;
    n.many.push_back(p.id);
  }
  n.needs_grad = ng;
  return Var{push(std::move(n))};
}

Var Tape::cosine_rows(Var a, Var b) {
  const Matrix& va = val(a);
  const Matrix& vb = val(b);
  if (va.cols != vb.cols) fail("cosine_rows: dimension mismatch");
  if (va.rows != vb.rows && va.rows != 1 && vb.rows != 1)
    fail("cosine_rows: row mismatch");
  int m = std::max(va.rows, vb.rows);
  Node n;
  n.op = Op::kCosineRows;
  n.a = a.id;
  n.b = b.id;
  n.val = Matrix(m, 1);
  const int d = va.cols;
  for (int i = 0; i < m; ++i) {
    const double* u = va.row(va.rows == 1 ? 0 : i);
    const double* v = vb.row(vb.rows == 1 ? 0 : i);
    double nu = norm2(u, d), nv = norm2(v, d);
    if (nu < kNormFloor || nv < kNormFloor)
      fail("cosine_rows: zero-norm vector (cosine undefined)");
    n.val.at(i, 0) = dot(u, v, d) / (nu * nv);
  }
  n.needs_grad = needs(a.id) || needs(b.id);
  return Var{push(std::move(n))};
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::kSum;
  n.a = a.id;
  double s = 0.0;
  for (double x : val(a).d) s += x;
  n.val = Matrix::scalar(s);
  n.needs_grad = needs(a.id);
  return Var{push(std::move(n))};
}

Var Tape::logsumexp(Var a) {
  const Matrix& va = val(a);
  if (va.size() == 0) fail("logsumexp: empty");
  Node n;
  n.op = Op::kLogSumExp;
  n.a = a.id;
  double mx = va.d[0];
  for (double x : va.d) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : va.d) s += std::exp(x - mx);
  n.val = Matrix::scalar(mx + std::log(s));
  n.needs_grad = needs(a.id);
  return Var{push(std::move(n))};
}

Var Tape::sigmoid(Var a) {
  // sigma(x) = (tanh(x/2) + 1) / 2
  return add_scalar(scale(tanh(scale(a, 0.5)), 0.5), 0.5);
}

void Tape::ensure_grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.rows == 0) n.grad = Matrix(n.val.rows, n.val.cols);
}

void Tape::accum(int id, const Matrix& g) {
  if (id < 0 || !nodes_[id].needs_grad) return;
  ensure_grad(id);
  add_inplace(nodes_[id].grad, g);
}

GradMap Tape::backward(Var loss) {
  Node& ln = node(loss);
  if (ln.val.rows != 1 || ln.val.cols != 1) fail("backward: loss must be 1x1");
  if (!std::isfinite(ln.val.d[0])) fail("backward: non-finite loss");
  if (swept_) fail("backward: tape already swept");
  swept_ = true;

  if (ln.needs_grad) {
    ensure_grad(loss.id);
    ln.grad.d[0] = 1.0;
  }

  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.rows == 0) continue;
    backward_node(i);
  }

  GradMap out;
  for (const auto& [name, id] : param_nodes_) {
    Node& n = nodes_[id];
    if (n.grad.rows == 0) continue;  // parameter never reached by the loss
    out.emplace(name, std::move(n.grad));
  }
  return out;
}

void Tape::backward_node(int i) {
  Node& n = nodes_[i];
  const Matrix& g = n.grad;
  switch (n.op) {
    case Op::kLeaf:
    case Op::kInput:
    case Op::kParam:
      break;
    case Op::kMatMul: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        matmul_nt_acc(g, nodes_[n.b].val, nodes_[n.a].grad);
      }
      if (needs(n.b)) {
        ensure_grad(n.b);
        matmul_tn_acc(nodes_[n.a].val, g, nodes_[n.b].grad);
      }
      break;
    }
    case Op::kMatMulNT: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        matmul_acc(g, nodes_[n.b].val, nodes_[n.a].grad);
      }
      if (needs(n.b)) {
        ensure_grad(n.b);
        matmul_tn_acc(g, nodes_[n.a].val, nodes_[n.b].grad);
      }
      break;
    }
    case Op::kAddScaled: {
      if (needs(n.a)) accum(n.a, g);
      if (needs(n.b)) {
        ensure_grad(n.b);
        axpy_inplace(nodes_[n.b].grad, n.alpha, g);
      }
      break;
    }
    case Op::kAddRow: {
      if (needs(n.a)) accum(n.a, g);
      if (needs(n.b)) {
        ensure_grad(n.b);
        Matrix& bg = nodes_[n.b].grad;
        for (int r = 0; r < g.rows; ++r) {
          const double* gr = g.row(r);
          for (int j = 0; j < g.cols; ++j) bg.d[j] += gr[j];
        }
      }
      break;
    }
    case Op::kScale: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        axpy_inplace(nodes_[n.a].grad, n.alpha, g);
      }
      break;
    }
    case Op::kAddScalar: {
      if (needs(n.a)) accum(n.a, g);
      break;
    }
    case Op::kMul: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        Matrix& ag = nodes_[n.a].grad;
        const Matrix& bv = nodes_[n.b].val;
        for (size_t k = 0; k < g.d.size(); ++k) ag.d[k] += g.d[k] * bv.d[k];
      }
      if (needs(n.b)) {
        ensure_grad(n.b);
        Matrix& bg = nodes_[n.b].grad;
        const Matrix& av = nodes_[n.a].val;
        for (size_t k = 0; k < g.d.size(); ++k) bg.d[k] += g.d[k] * av.d[k];
      }
      break;
    }
    case Op::kTanh: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        Matrix& ag = nodes_[n.a].grad;
        for (size_t k = 0; k < g.d.size(); ++k)
          ag.d[k] += g.d[k] * (1.0 - n.val.d[k] * n.val.d[k]);
      }
      break;
    }
    case Op::kRelu: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        Matrix& ag = nodes_[n.a].grad;
        const Matrix& av = nodes_[n.a].val;
        for (size_t k = 0; k < g.d.size(); ++k)
          if (av.d[k] > 0.0) ag.d[k] += g.d[k];
      }
      break;
    }
    case Op::kLog: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        Matrix& ag = nodes_[n.a].grad;
        const Matrix& av = nodes_[n.a].val;
        for (size_t k = 0; k < g.d.size(); ++k) ag.d[k] += g.d[k] / av.d[k];
      }
      break;
    }
    case Op::kSoftmaxRows: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        Matrix& ag = nodes_[n.a].grad;
        for (int r = 0; r < n.val.rows; ++r) {
          const double* s = n.val.row(r);
          const double* gr = g.row(r);
          double gs = dot(s, gr, n.val.cols);
          double* ar = ag.row(r);
          for (int j = 0; j < n.val.cols; ++j) ar[j] += s[j] * (gr[j] - gs);
        }
      }
      break;
    }
    case Op::kLogSoftmaxRows: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        Matrix& ag = nodes_[n.a].grad;
        for (int r = 0; r < n.val.rows; ++r) {
          const double* c = n.val.row(r);
          const double* gr = g.row(r);
          double gsum = 0.0;
          for (int j = 0; j < n.val.cols; ++j) gsum += gr[j];
          double* ar = ag.row(r);
          for (int j = 0; j < n.val.cols; ++j)
            ar[j] += gr[j] - std::exp(c[j]) * gsum;
        }
      }
      break;
    }
    case Op::kLayerNorm: {
      const int d = n.val.cols;
      if (needs(n.b)) {
        ensure_grad(n.b);
        Matrix& gg = nodes_[n.b].grad;
        for (int r = 0; r < n.val.rows; ++r) {
          const double* gr = g.row(r);
          const double* xh = n.aux.row(r);
          for (int j = 0; j < d; ++j) gg.d[j] += gr[j] * xh[j];
        }
      }
      if (needs(n.c)) {
        ensure_grad(n.c);
        Matrix& bg = nodes_[n.c].grad;
        for (int r = 0; r < n.val.rows; ++r) {
          const double* gr = g.row(r);
          for (int j = 0; j < d; ++j) bg.d[j] += gr[j];
        }
      }
      if (needs(n.a)) {
        ensure_grad(n.a);
        Matrix& xg = nodes_[n.a].grad;
        const Matrix& gain = nodes_[n.b].val;
        for (int r = 0; r < n.val.rows; ++r) {
          const double* gr = g.row(r);
          const double* xh = n.aux.row(r);
          double inv_sigma = n.auxv[r];
          double m1 = 0.0, m2 = 0.0;  // mean(dxh), mean(dxh * xh)
          for (int j = 0; j < d; ++j) {
            double dxh = gr[j] * gain.d[j];
            m1 += dxh;
            m2 += dxh * xh[j];
          }
          m1 /= d;
          m2 /= d;
          double* xr = xg.row(r);
          for (int j = 0; j < d; ++j) {
            double dxh = gr[j] * gain.d[j];
            xr[j] += (dxh - m1 - xh[j] * m2) * inv_sigma;
          }
        }
      }
      break;
    }
    case Op::kGatherRows: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        Matrix& tg = nodes_[n.a].grad;
        for (size_t r = 0; r < n.ids.size(); ++r) {
          const double* gr = g.row(static_cast<int>(r));
          double* tr = tg.row(n.ids[r]);
          for (int j = 0; j < g.cols; ++j) tr[j] += gr[j];
        }
      }
      break;
    }
    case Op::kPickEntries: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        Matrix& ag = nodes_[n.a].grad;
        for (int r = 0; r < n.val.rows; ++r) ag.at(r, n.ids[r]) += g.at(r, 0);
      }
      break;
    }
    case Op::kSliceRows: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        Matrix& ag = nodes_[n.a].grad;
        for (int r = 0; r < n.n0; ++r)
          for (int j = 0; j < g.cols; ++j) ag.at(n.i0 + r, j) += g.at(r, j);
      }
      break;
    }
    case Op::kSliceCols: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        Matrix& ag = nodes_[n.a].grad;
        for (int r = 0; r < g.rows; ++r)
          for (int j = 0; j < n.n0; ++j) ag.at(r, n.i0 + j) += g.at(r, j);
      }
      break;
    }
    case Op::kConcatRows: {
      int at = 0;
      for (int pid : n.many) {
        const Matrix& pv = nodes_[pid].val;
        if (needs(pid)) {
          ensure_grad(pid);
          Matrix& pg = nodes_[pid].grad;
          for (int r = 0; r < pv.rows; ++r)
            for (int j = 0; j < g.cols; ++j) pg.at(r, j) += g.at(at + r, j);
        }
        at += pv.rows;
      }
      break;
    }
    case Op::kConcatCols: {
      int at = 0;
      for (int pid : n.many) {
        const Matrix& pv = nodes_[pid].val;
        if (needs(pid)) {
          ensure_grad(pid);
          Matrix& pg = nodes_[pid].grad;
          for (int r = 0; r < g.rows; ++r)
            for (int j = 0; j < pv.cols; ++j) pg.at(r, j) += g.at(r, at + j);
        }
        at += pv.cols;
      }
      break;
    }
    case Op::kCosineRows: {
      const Matrix& va = nodes_[n.a].val;
      const Matrix& vb = nodes_[n.b].val;
      const int d = va.cols;
      for (int r = 0; r < n.val.rows; ++r) {
        double gr = g.at(r, 0);
        if (gr == 0.0) continue;
        int ra = va.rows == 1 ? 0 : r;
        int rb = vb.rows == 1 ? 0 : r;
        const double* u = va.row(ra);
        const double* v = vb.row(rb);
        double nu = norm2(u, d), nv = norm2(v, d);
        double c = n.val.at(r, 0);
        if (needs(n.a)) {
          ensure_grad(n.a);
          double* ug = nodes_[n.a].grad.row(ra);
          for (int j = 0; j < d; ++j)
            ug[j] += gr * (v[j] / (nu * nv) - c * u[j] / (nu * nu));
        }
        if (needs(n.b)) {
          ensure_grad(n.b);
          double* vg = nodes_[n.b].grad.row(rb);
          for (int j = 0; j < d; ++j)
            vg[j] += gr * (u[j] / (nu * nv) - c * v[j] / (nv * nv));
        }
      }
      break;
    }
    case Op::kSum: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        Matrix& ag = nodes_[n.a].grad;
        double gv = g.d[0];
        for (auto& x : ag.d) x += gv;
      }
      break;
    }
    case Op::kLogSumExp: {
      if (needs(n.a)) {
        ensure_grad(n.a);
        Matrix& ag = nodes_[n.a].grad;
        const Matrix& av = nodes_[n.a].val;
        double lse = n.val.d[0];
        double gv = g.d[0];
        for (size_t k = 0; k < av.d.size(); ++k)
          ag.d[k] += gv * std::exp(av.d[k] - lse);
      }
      break;
    }
  }
}

}  // namespace lexinmt::nnet
