#include "seqadv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "seqadv/errors.hpp"

namespace seqadv {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) {
  for (std::size_t e : shape)
    if (e == 0) throw ShapeError("tensor extent must be positive, got " + shape_str(shape));
  impl_ = std::make_shared<TensorImpl>();
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size())
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::vec(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() requires a scalar tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at2(std::size_t r, std::size_t c) const {
  return impl_->data[r * impl_->shape[1] + c];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (!on) impl_->grad.clear();
  return *this;
}

std::vector<double>& Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor out;
  out.impl_ = std::make_shared<TensorImpl>();
  out.impl_->shape = impl_->shape;
  out.impl_->data = impl_->data;
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

// ---- record ----------------------------------------------------------------

namespace {
thread_local ComputationRecord* g_active_record = nullptr;

using ImplPtr = std::shared_ptr<TensorImpl>;

// Four-lane dot product: a fixed summation order that still breaks the
// floating-point dependency chain, so -O3 can keep the FMA units busy.
inline double dot4(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return (s0 + s1) + (s2 + s3) + tail;
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

std::vector<double>& ensure_grad(const ImplPtr& t) {
  if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
  return t->grad;
}

// Output grad of a node, or nullptr when nothing ever flowed into it.
const std::vector<double>* out_grad(const ImplPtr& t) {
  if (t->grad.empty()) return nullptr;
  return &t->grad;
}
}  // namespace

ComputationRecord* ComputationRecord::active() { return g_active_record; }

int ComputationRecord::push(const char* op, std::vector<int> inputs, std::function<void()> pull) {
  nodes_.push_back(Node{op, std::move(inputs), std::move(pull)});
  return static_cast<int>(nodes_.size()) - 1;
}

void ComputationRecord::run_backward_from(int root_node) {
  for (int i = root_node; i >= 0; --i) nodes_[static_cast<std::size_t>(i)].pull();
}

RecordScope::RecordScope() : prev_(g_active_record) { g_active_record = &record_; }
RecordScope::~RecordScope() { g_active_record = prev_; }

namespace {

// Tracks an op result on the active record when any input participates.
void track(Tensor& out, const char* op, std::initializer_list<const Tensor*> inputs,
           std::function<void()> pull) {
  ComputationRecord* rec = ComputationRecord::active();
  if (!rec) return;
  bool any = false;
  std::vector<int> in_nodes;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) any = true;
    in_nodes.push_back(t->node());
  }
  if (!any) return;
  out.set_requires_grad(true);
  out.impl()->node = rec->push(op, std::move(in_nodes), std::move(pull));
}

enum class Bcast { same, a_scalar, b_scalar, a_row, b_row };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::same;
  if (a.size() == 1) return Bcast::a_scalar;
  if (b.size() == 1) return Bcast::b_scalar;
  if (a.rank() == 2 && b.rank() == 1 && a.extent(1) == b.extent(0)) return Bcast::b_row;
  if (b.rank() == 2 && a.rank() == 1 && b.extent(1) == a.extent(0)) return Bcast::a_row;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
}

// Element of the broadcast operand aligned with flat index i of the result.
inline std::size_t bidx(Bcast kind, bool is_a, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Bcast::same:
      return i;
    case Bcast::a_scalar:
      return is_a ? 0 : i;
    case Bcast::b_scalar:
      return is_a ? i : 0;
    case Bcast::a_row:
      return is_a ? i % cols : i;
    case Bcast::b_row:
      return is_a ? i : i % cols;
  }
  return i;
}

template <class Fwd, class DA, class DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  const Bcast kind = broadcast_kind(a, b, name);
  const Tensor& big = (kind == Bcast::a_scalar || kind == Bcast::a_row) ? b : a;
  const std::size_t n = big.size();
  const std::size_t cols = big.rank() == 2 ? big.extent(1) : big.size();

  Tensor out(big.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i)
    po[i] = fwd(pa[bidx(kind, true, i, cols)], pb[bidx(kind, false, i, cols)]);

  track(out, name, {&a, &b},
        [ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr(), kind, cols, n, da, db]() {
          const std::vector<double>* g = out_grad(oi);
          if (!g) return;
          if (ai->requires_grad) {
            auto& ga = ensure_grad(ai);
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t ia = bidx(kind, true, i, cols);
              ga[ia] += (*g)[i] * da(ai->data[ia], bi->data[bidx(kind, false, i, cols)]);
            }
          }
          if (bi->requires_grad) {
            auto& gb = ensure_grad(bi);
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t ib = bidx(kind, false, i, cols);
              gb[ib] += (*g)[i] * db(ai->data[bidx(kind, true, i, cols)], bi->data[ib]);
            }
          }
        });
  return out;
}

template <class Fwd, class Dx>
Tensor unary_op(const char* name, const Tensor& x, Fwd fwd, Dx dx_from_xy) {
  Tensor out(x.shape());
  const std::size_t n = x.size();
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(px[i]);

  track(out, name, {&x}, [xi = x.impl_ptr(), oi = out.impl_ptr(), n, dx_from_xy]() {
    const std::vector<double>* g = out_grad(oi);
    if (!g || !xi->requires_grad) return;
    auto& gx = ensure_grad(xi);
    for (std::size_t i = 0; i < n; ++i) gx[i] += (*g)[i] * dx_from_xy(xi->data[i], oi->data[i]);
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(const Tensor& x) {
  return unary_op(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor log_op(const Tensor& x) {
  return unary_op(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor sqrt_op(const Tensor& x) {
  return unary_op(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / (y > 1e-150 ? y : 1e-150); });
}

Tensor abs_op(const Tensor& x) {
  return unary_op(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary_op(
      "clamp", x, [lo, hi](double v) { return std::min(hi, std::max(lo, v)); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor scale(const Tensor& x, double c) {
  return unary_op(
      "scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor add_const(const Tensor& x, double c) {
  return unary_op(
      "add_const", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor reciprocal(const Tensor& x) {
  return unary_op(
      "reciprocal", x, [](double v) { return 1.0 / v; },
      [](double, double y) { return -y * y; });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " has " + std::to_string(x.size()) +
                     " elements, target " + shape_str(shape) + " wants " +
                     std::to_string(shape_numel(shape)));
  Tensor out(std::move(shape), x.values());
  track(out, "reshape", {&x}, [xi = x.impl_ptr(), oi = out.impl_ptr()]() {
    const std::vector<double>* g = out_grad(oi);
    if (!g || !xi->requires_grad) return;
    auto& gx = ensure_grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*g)[i];
  });
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  track(out, "sum", {&x}, [xi = x.impl_ptr(), oi = out.impl_ptr()]() {
    const std::vector<double>* g = out_grad(oi);
    if (!g || !xi->requires_grad) return;
    auto& gx = ensure_grad(xi);
    const double gv = (*g)[0];
    for (double& v : gx) v += gv;
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expected rank-2 operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k)
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));

  Tensor out(Shape{m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      const double* brow = pb + kk * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }

  track(out, "matmul", {&a, &b},
        [ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr(), m, k, n]() {
          const std::vector<double>* g = out_grad(oi);
          if (!g) return;
          if (ai->requires_grad) {  // dA += dC . B^T
            auto& ga = ensure_grad(ai);
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t kk = 0; kk < k; ++kk)
                ga[i * k + kk] += dot4(g->data() + i * n, bi->data.data() + kk * n, n);
          }
          if (bi->requires_grad) {  // dB += A^T . dC
            auto& gb = ensure_grad(bi);
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t kk = 0; kk < k; ++kk)
                axpy(ai->data[i * k + kk], g->data() + i * n, gb.data() + kk * n, n);
          }
        });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2) throw ShapeError("linear: weight must be rank-2, got " + shape_str(w.shape()));
  const std::size_t out_w = w.extent(0), in_w = w.extent(1);
  const bool batched = x.rank() == 2;
  const std::size_t batch = batched ? x.extent(0) : 1;
  const std::size_t xw = batched ? x.extent(1) : x.extent(0);
  if (x.rank() > 2 || xw != in_w)
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(w.shape()));
  const bool has_bias = b.defined();
  if (has_bias && (b.rank() != 1 || b.extent(0) != out_w))
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " does not match weight " +
                     shape_str(w.shape()));

  Tensor out(batched ? Shape{batch, out_w} : Shape{out_w});
  const double* px = x.data();
  const double* pw = w.data();
  double* po = out.data();
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xrow = px + r * in_w;
    double* orow = po + r * out_w;
    for (std::size_t o = 0; o < out_w; ++o) {
      const double base = has_bias ? b.data()[o] : 0.0;
      orow[o] = base + dot4(xrow, pw + o * in_w, in_w);
    }
  }

  std::function<void()> pull = [xi = x.impl_ptr(), wi = w.impl_ptr(),
                                bi = has_bias ? b.impl_ptr() : nullptr, oi = out.impl_ptr(), batch,
                                in_w, out_w]() {
    const std::vector<double>* g = out_grad(oi);
    if (!g) return;
    if (xi->requires_grad) {  // dX += dY . W
      auto& gx = ensure_grad(xi);
      for (std::size_t r = 0; r < batch; ++r) {
        const double* grow = g->data() + r * out_w;
        double* gxrow = gx.data() + r * in_w;
        for (std::size_t o = 0; o < out_w; ++o) {
          if (grow[o] == 0.0) continue;
          axpy(grow[o], wi->data.data() + o * in_w, gxrow, in_w);
        }
      }
    }
    if (wi->requires_grad) {  // dW += dY^T . X
      auto& gw = ensure_grad(wi);
      for (std::size_t r = 0; r < batch; ++r) {
        const double* grow = g->data() + r * out_w;
        const double* xrow = xi->data.data() + r * in_w;
        for (std::size_t o = 0; o < out_w; ++o) {
          if (grow[o] == 0.0) continue;
          axpy(grow[o], xrow, gw.data() + o * in_w, in_w);
        }
      }
    }
    if (bi && bi->requires_grad) {
      auto& gb = ensure_grad(bi);
      for (std::size_t r = 0; r < batch; ++r) {
        const double* grow = g->data() + r * out_w;
        for (std::size_t o = 0; o < out_w; ++o) gb[o] += grow[o];
      }
    }
  };

  if (has_bias)
    track(out, "linear", {&x, &w, &b}, std::move(pull));
  else
    track(out, "linear", {&x, &w}, std::move(pull));
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
  if (x.rank() != 3 || kernels.rank() != 4)
    throw ShapeError("conv2d: expected image [CxHxW] and kernels [FxCxkhxkw], got " +
                     shape_str(x.shape()) + " and " + shape_str(kernels.shape()));
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  const std::size_t f = kernels.extent(0), kc = kernels.extent(1), kh = kernels.extent(2),
                    kw = kernels.extent(3);
  if (kc != c)
    throw ShapeError("conv2d: channel mismatch, image " + shape_str(x.shape()) + " vs kernels " +
                     shape_str(kernels.shape()));
  if (kh > h || kw > w)
    throw ShapeError("conv2d: kernel " + shape_str(kernels.shape()) + " larger than image " +
                     shape_str(x.shape()));
  if (bias.defined() && bias.size() != f)
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match kernel count " +
                     std::to_string(f));

  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  Tensor out(Shape{f, oh, ow});
  const double* px = x.data();
  const double* pk = kernels.data();
  double* po = out.data();
  for (std::size_t fo = 0; fo < f; ++fo) {
    const double bv = bias.defined() ? bias.data()[fo] : 0.0;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = bv;
        for (std::size_t ci = 0; ci < c; ++ci)
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const double* xrow = px + (ci * h + oy + ky) * w + ox;
            const double* krow = pk + ((fo * c + ci) * kh + ky) * kw;
            for (std::size_t kx = 0; kx < kw; ++kx) acc += xrow[kx] * krow[kx];
          }
        po[(fo * oh + oy) * ow + ox] = acc;
      }
  }

  std::function<void()> pull = [xi = x.impl_ptr(), ki = kernels.impl_ptr(),
                                bi = bias.defined() ? bias.impl_ptr() : nullptr,
                                oi = out.impl_ptr(), c, h, w, f, kh, kw, oh, ow]() {
    const std::vector<double>* g = out_grad(oi);
    if (!g) return;
    for (std::size_t fo = 0; fo < f; ++fo)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double gv = (*g)[(fo * oh + oy) * ow + ox];
          if (gv == 0.0) continue;
          if (bi && bi->requires_grad) ensure_grad(bi)[fo] += gv;
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::size_t xoff = (ci * h + oy + ky) * w + ox + kx;
                const std::size_t koff = ((fo * c + ci) * kh + ky) * kw + kx;
                if (ki->requires_grad) ensure_grad(ki)[koff] += gv * xi->data[xoff];
                if (xi->requires_grad) ensure_grad(xi)[xoff] += gv * ki->data[koff];
              }
        }
  };

  if (bias.defined())
    track(out, "conv2d", {&x, &kernels, &bias}, std::move(pull));
  else
    track(out, "conv2d", {&x, &kernels}, std::move(pull));
  return out;
}

Tensor maxpool2d(const Tensor& x) {
  if (x.rank() != 3)
    throw ShapeError("maxpool2d: expected [CxHxW], got " + shape_str(x.shape()));
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw ShapeError("maxpool2d: extents must be even, got " + shape_str(x.shape()));

  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out(Shape{c, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = -1e300;
        std::size_t best_idx = 0;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (ci * h + 2 * oy + dy) * w + 2 * ox + dx;
            if (px[idx] > best) {  // strict: first cell in row-major order wins ties
              best = px[idx];
              best_idx = idx;
            }
          }
        const std::size_t o = (ci * oh + oy) * ow + ox;
        po[o] = best;
        argmax[o] = best_idx;
      }

  track(out, "maxpool2d", {&x},
        [xi = x.impl_ptr(), oi = out.impl_ptr(), argmax = std::move(argmax)]() {
          const std::vector<double>* g = out_grad(oi);
          if (!g || !xi->requires_grad) return;
          auto& gx = ensure_grad(xi);
          for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += (*g)[o];
        });
  return out;
}

void backward(const Tensor& root) {
  if (root.size() != 1)
    throw ShapeError("backward: root must be scalar, got " + shape_str(root.shape()));
  ComputationRecord* rec = ComputationRecord::active();
  if (!rec || root.node() < 0)
    throw ShapeError("backward: root is not on the active computation record");
  Tensor r = root;
  r.grad()[0] += 1.0;
  rec->run_backward_from(root.node());
}

namespace {
// Suspends recording so probe evaluations stay off any caller's record.
struct NoRecordScope {
  ComputationRecord* prev;
  NoRecordScope() : prev(g_active_record) { g_active_record = nullptr; }
  ~NoRecordScope() { g_active_record = prev; }
};
}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  // Analytic gradient on a private record.
  Tensor probe = x.clone();
  probe.set_requires_grad(true);
  std::vector<double> analytic;
  {
    RecordScope scope;
    Tensor y = f(probe);
    if (y.node() >= 0) backward(y);  // constant-valued f never reaches the record
    analytic = probe.grad();
  }

  // Central differences, evaluated off-record.
  NoRecordScope suspend;
  double worst = 0.0;
  Tensor plain = x.clone();
  plain.set_requires_grad(false);
  for (std::size_t i = 0; i < plain.size(); ++i) {
    const double keep = plain.data()[i];
    plain.data()[i] = keep + eps;
    const double up = f(plain).item();
    plain.data()[i] = keep - eps;
    const double dn = f(plain).item();
    plain.data()[i] = keep;
    const double numeric = (up - dn) / (2.0 * eps);
    const double err =
        std::fabs(analytic[i] - numeric) / std::max(1e-12, std::fabs(analytic[i]) + std::fabs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace seqadv
