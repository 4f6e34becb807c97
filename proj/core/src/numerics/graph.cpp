#include "bevworld/numerics/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace bevworld::num {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
}

Var make_node(const char* op, Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->value = std::move(value);
  bool req = false;
  for (const auto& p : parents) req = req || (p && p->requires_grad);
  n->requires_grad = req;
  if (req) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void accumulate(const Var& p, const Tensor& contribution) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  double* g = p->grad.data();
  const double* c = contribution.data();
  const int64_t n = contribution.numel();
  for (int64_t i = 0; i < n; ++i) g[i] += c[i];
}

// Elementwise unary helper: fwd(x) and dfdx(x, y) where y is the output.
template <class F, class D>
Var unary(const char* op, const Var& a, F fwd, D dfdx) {
  Tensor out = Tensor::zeros(a->value.shape());
  const double* x = a->value.data();
  double* y = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = fwd(x[i]);
  return make_node(op, std::move(out), {a}, [a, dfdx](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double* g = self.grad.data();
    const double* x = a->value.data();
    const double* y = self.value.data();
    double* ga = a->grad.data();
    const int64_t n = self.value.numel();
    for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
  });
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  double z = std::exp(x);
  return z / (1.0 + z);
}

}  // namespace

void Node::ensure_grad() {
  if (!has_grad()) grad = Tensor::zeros(value.shape());
}

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->op = "const";
  n->value = std::move(t);
  n->requires_grad = false;
  return n;
}

Var leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->op = "leaf";
  n->value = std::move(t);
  n->requires_grad = requires_grad;
  return n;
}

Var stopgrad(const Var& x) { return constant(x->value); }

Var add(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) shape_error("add", a->value, b->value);
  Tensor out = a->value;
  const double* pb = b->value.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] += pb[i];
  return make_node("add", std::move(out), {a, b}, [a, b](Node& self) {
    accumulate(a, self.grad);
    accumulate(b, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) shape_error("sub", a->value, b->value);
  Tensor out = a->value;
  const double* pb = b->value.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] -= pb[i];
  return make_node("sub", std::move(out), {a, b}, [a, b](Node& self) {
    accumulate(a, self.grad);
    if (!b->requires_grad) return;
    b->ensure_grad();
    const double* g = self.grad.data();
    double* gb = b->grad.data();
    for (int64_t i = 0; i < self.grad.numel(); ++i) gb[i] -= g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) shape_error("mul", a->value, b->value);
  Tensor out = a->value;
  const double* pb = b->value.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] *= pb[i];
  return make_node("mul", std::move(out), {a, b}, [a, b](Node& self) {
    const double* g = self.grad.data();
    const int64_t n = self.grad.numel();
    if (a->requires_grad) {
      a->ensure_grad();
      double* ga = a->grad.data();
      const double* pb = b->value.data();
      for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * pb[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      double* gb = b->grad.data();
      const double* pa = a->value.data();
      for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * pa[i];
    }
  });
}

Var div(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) shape_error("div", a->value, b->value);
  Tensor out = a->value;
  const double* pb = b->value.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] /= pb[i];
  return make_node("div", std::move(out), {a, b}, [a, b](Node& self) {
    const double* g = self.grad.data();
    const double* pb = b->value.data();
    const double* y = self.value.data();
    const int64_t n = self.grad.numel();
    if (a->requires_grad) {
      a->ensure_grad();
      double* ga = a->grad.data();
      for (int64_t i = 0; i < n; ++i) ga[i] += g[i] / pb[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      double* gb = b->grad.data();
      for (int64_t i = 0; i < n; ++i) gb[i] -= g[i] * y[i] / pb[i];
    }
  });
}

Var neg(const Var& a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var add_scalar(const Var& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; },
               [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, double s) {
  return unary("mul_scalar", a, [s](double x) { return x * s; },
               [s](double, double) { return s; });
}

Var reciprocal(const Var& a) {
  return unary("reciprocal", a, [](double x) { return 1.0 / x; },
               [](double, double y) { return -y * y; });
}

Var exp(const Var& a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
  return unary("sqrt", a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Var square(const Var& a) {
  return unary("square", a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Var tanh(const Var& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary("sigmoid", a, [](double x) { return stable_sigmoid(x); },
               [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(const Var& a) {
  return unary("softplus", a, [](double x) { return stable_softplus(x); },
               [](double x, double) { return stable_sigmoid(x); });
}

Var sum_all(const Var& a) {
  double s = 0.0;
  const double* x = a->value.data();
  for (int64_t i = 0; i < a->value.numel(); ++i) s += x[i];
  return make_node("sum_all", Tensor(s), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double g = self.grad[0];
    double* ga = a->grad.data();
    for (int64_t i = 0; i < a->value.numel(); ++i) ga[i] += g;
  });
}

Var mean_all(const Var& a) {
  const int64_t n = a->value.numel();
  if (n == 0) throw std::invalid_argument("mean_all: empty tensor");
  double s = 0.0;
  const double* x = a->value.data();
  for (int64_t i = 0; i < n; ++i) s += x[i];
  s /= static_cast<double>(n);
  return make_node("mean_all", Tensor(s), {a}, [a, n](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(n);
    double* ga = a->grad.data();
    for (int64_t i = 0; i < n; ++i) ga[i] += g;
  });
}

Var norm_l1(const Var& a) {
  double s = 0.0;
  const double* x = a->value.data();
  for (int64_t i = 0; i < a->value.numel(); ++i) s += std::abs(x[i]);
  return make_node("norm_l1", Tensor(s), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double g = self.grad[0];
    const double* x = a->value.data();
    double* ga = a->grad.data();
    for (int64_t i = 0; i < a->value.numel(); ++i) {
      ga[i] += g * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
    }
  });
}

Var norm_l2sq(const Var& a) {
  double s = 0.0;
  const double* x = a->value.data();
  for (int64_t i = 0; i < a->value.numel(); ++i) s += x[i] * x[i];
  return make_node("norm_l2sq", Tensor(s), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double g = self.grad[0];
    const double* x = a->value.data();
    double* ga = a->grad.data();
    for (int64_t i = 0; i < a->value.numel(); ++i) ga[i] += g * 2.0 * x[i];
  });
}

Var sum_lastdim(const Var& a) {
  if (a->value.rank() < 1) throw std::invalid_argument("sum_lastdim: rank-0 input");
  Shape out_shape = a->value.shape();
  const int64_t k = out_shape.back();
  out_shape.back() = 1;
  const int64_t rows = a->value.numel() / k;
  Tensor out = Tensor::zeros(out_shape);
  const double* x = a->value.data();
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int64_t j = 0; j < k; ++j) s += x[r * k + j];
    out[r] = s;
  }
  return make_node("sum_lastdim", std::move(out), {a}, [a, rows, k](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double* g = self.grad.data();
    double* ga = a->grad.data();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < k; ++j) ga[r * k + j] += g[r];
  });
}

Var sum_axis(const Var& a, int axis) {
  const Shape& s = a->value.shape();
  if (axis < 0 || axis >= a->value.rank()) {
    throw std::invalid_argument("sum_axis: axis " + std::to_string(axis) + " out of range for " +
                                shape_str(s));
  }
  Shape out_shape;
  for (int i = 0; i < a->value.rank(); ++i)
    if (i != axis) out_shape.push_back(s[static_cast<size_t>(i)]);
  int64_t outer = 1, mid = s[static_cast<size_t>(axis)], inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (int i = axis + 1; i < a->value.rank(); ++i) inner *= s[static_cast<size_t>(i)];
  Tensor out = Tensor::zeros(out_shape);
  const double* x = a->value.data();
  double* y = out.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t m = 0; m < mid; ++m)
      for (int64_t i = 0; i < inner; ++i) y[o * inner + i] += x[(o * mid + m) * inner + i];
  return make_node("sum_axis", std::move(out), {a}, [a, outer, mid, inner](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double* g = self.grad.data();
    double* ga = a->grad.data();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t m = 0; m < mid; ++m)
        for (int64_t i = 0; i < inner; ++i) ga[(o * mid + m) * inner + i] += g[o * inner + i];
  });
}

Var softmax_lastdim(const Var& a) {
  if (a->value.rank() < 1) throw std::invalid_argument("softmax_lastdim: rank-0 input");
  const int64_t k = a->value.shape().back();
  const int64_t rows = a->value.numel() / k;
  Tensor out = Tensor::zeros(a->value.shape());
  const double* x = a->value.data();
  double* y = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    double m = -1e300;
    for (int64_t j = 0; j < k; ++j) m = std::max(m, x[r * k + j]);
    double z = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      y[r * k + j] = std::exp(x[r * k + j] - m);
      z += y[r * k + j];
    }
    for (int64_t j = 0; j < k; ++j) y[r * k + j] /= z;
  }
  return make_node("softmax", std::move(out), {a}, [a, rows, k](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double* g = self.grad.data();
    const double* y = self.value.data();
    double* ga = a->grad.data();
    for (int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int64_t j = 0; j < k; ++j) dot += g[r * k + j] * y[r * k + j];
      for (int64_t j = 0; j < k; ++j) ga[r * k + j] += y[r * k + j] * (g[r * k + j] - dot);
    }
  });
}

Var cross_entropy_mean(const Var& logits, const std::vector<int>& targets) {
  if (logits->value.rank() != 2) {
    throw std::invalid_argument("cross_entropy_mean: logits must be [N,C], got " +
                                shape_str(logits->value.shape()));
  }
  const int64_t n = logits->value.dim(0);
  const int64_t c = logits->value.dim(1);
  if (static_cast<int64_t>(targets.size()) != n) {
    throw std::invalid_argument("cross_entropy_mean: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(n) + " rows");
  }
  if (n == 0) throw std::invalid_argument("cross_entropy_mean: empty batch");
  // Cache the softmax for the backward pass.
  auto probs = std::make_shared<Tensor>(Tensor::zeros(logits->value.shape()));
  const double* x = logits->value.data();
  double* p = probs->data();
  double loss = 0.0;
  for (int64_t r = 0; r < n; ++r) {
    const int t = targets[static_cast<size_t>(r)];
    if (t < 0 || t >= c) throw std::invalid_argument("cross_entropy_mean: target out of range");
    double m = -1e300;
    for (int64_t j = 0; j < c; ++j) m = std::max(m, x[r * c + j]);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      p[r * c + j] = std::exp(x[r * c + j] - m);
      z += p[r * c + j];
    }
    for (int64_t j = 0; j < c; ++j) p[r * c + j] /= z;
    loss += -(x[r * c + t] - m - std::log(z));
  }
  loss /= static_cast<double>(n);
  auto tg = std::make_shared<std::vector<int>>(targets);
  return make_node("cross_entropy", Tensor(loss), {logits}, [logits, probs, tg, n, c](Node& self) {
    if (!logits->requires_grad) return;
    logits->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(n);
    const double* p = probs->data();
    double* ga = logits->grad.data();
    for (int64_t r = 0; r < n; ++r) {
      const int t = (*tg)[static_cast<size_t>(r)];
      for (int64_t j = 0; j < c; ++j) {
        ga[r * c + j] += g * (p[r * c + j] - (j == t ? 1.0 : 0.0));
      }
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0)) {
    shape_error("matmul", a->value, b->value);
  }
  const int64_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor out = Tensor::zeros({static_cast<int>(m), static_cast<int>(n)});
  const double* pa = a->value.data();
  const double* pb = b->value.data();
  double* po = out.data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = pb + kk * n;
      double* orow = po + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return make_node("matmul", std::move(out), {a, b}, [a, b, m, k, n](Node& self) {
    const double* g = self.grad.data();
    if (a->requires_grad) {
      a->ensure_grad();
      double* ga = a->grad.data();
      const double* pb = b->value.data();
      // dA = G @ B^T
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
          const double gv = g[i * n + j];
          if (gv == 0.0) continue;
          for (int64_t kk = 0; kk < k; ++kk) ga[i * k + kk] += gv * pb[kk * n + j];
        }
    }
    if (b->requires_grad) {
      b->ensure_grad();
      double* gb = b->grad.data();
      const double* pa = a->value.data();
      // dB = A^T @ G
      for (int64_t i = 0; i < m; ++i)
        for (int64_t kk = 0; kk < k; ++kk) {
          const double av = pa[i * k + kk];
          if (av == 0.0) continue;
          const double* grow = g + i * n;
          double* brow = gb + kk * n;
          for (int64_t j = 0; j < n; ++j) brow[j] += av * grow[j];
        }
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  if (shape_numel(shape) != a->value.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a->value.shape()) + " as " +
                                shape_str(shape));
  }
  Tensor out(shape, a->value.vec());
  return make_node("reshape", std::move(out), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double* g = self.grad.data();
    double* ga = a->grad.data();
    for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += g[i];
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int rank = parts[0]->value.rank();
  if (axis < 0 || axis >= rank) throw std::invalid_argument("concat: bad axis");
  Shape out_shape = parts[0]->value.shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p->value.rank() != rank) shape_error("concat", parts[0]->value, p->value);
    for (int i = 0; i < rank; ++i) {
      if (i != axis && p->value.dim(i) != out_shape[static_cast<size_t>(i)]) {
        shape_error("concat", parts[0]->value, p->value);
      }
    }
    total += p->value.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= out_shape[static_cast<size_t>(i)];
  Tensor out = Tensor::zeros(out_shape);
  double* po = out.data();
  int64_t col_off = 0;
  for (const auto& p : parts) {
    const int64_t cols = p->value.dim(axis) * inner;
    const double* src = p->value.data();
    for (int64_t o = 0; o < outer; ++o) {
      std::copy(src + o * cols, src + (o + 1) * cols,
                po + o * (static_cast<int64_t>(total) * inner) + col_off);
    }
    col_off += cols;
  }
  auto ps = parts;
  return make_node("concat", std::move(out), parts, [ps, outer, inner, total](Node& self) {
    const double* g = self.grad.data();
    int64_t col_off = 0;
    for (const auto& p : ps) {
      const int64_t pcols = p->value.numel() / outer;
      if (p->requires_grad) {
        p->ensure_grad();
        double* gp = p->grad.data();
        for (int64_t o = 0; o < outer; ++o) {
          const double* src = g + o * (static_cast<int64_t>(total) * inner) + col_off;
          for (int64_t j = 0; j < pcols; ++j) gp[o * pcols + j] += src[j];
        }
      }
      col_off += pcols;
    }
  });
}

Var gather_rows(const Var& x, const std::vector<int64_t>& idx) {
  if (x->value.rank() < 1) throw std::invalid_argument("gather_rows: rank-0 input");
  const int64_t rows = x->value.dim(0);
  const int64_t cols = x->value.numel() / std::max<int64_t>(rows, 1);
  for (int64_t i : idx) {
    if (i < 0 || i >= rows) throw std::invalid_argument("gather_rows: index out of range");
  }
  Shape out_shape = x->value.shape();
  out_shape[0] = static_cast<int>(idx.size());
  Tensor out = Tensor::zeros(out_shape);
  const double* px = x->value.data();
  double* po = out.data();
  for (size_t m = 0; m < idx.size(); ++m) {
    std::copy(px + idx[m] * cols, px + (idx[m] + 1) * cols, po + static_cast<int64_t>(m) * cols);
  }
  auto ix = std::make_shared<std::vector<int64_t>>(idx);
  return make_node("gather_rows", std::move(out), {x}, [x, ix, cols](Node& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const double* g = self.grad.data();
    double* gx = x->grad.data();
    for (size_t m = 0; m < ix->size(); ++m) {
      const double* src = g + static_cast<int64_t>(m) * cols;
      double* dst = gx + (*ix)[m] * cols;
      for (int64_t j = 0; j < cols; ++j) dst[j] += src[j];
    }
  });
}

Var add_rowvec(const Var& x, const Var& v) {
  if (x->value.rank() != 2 || v->value.rank() != 1 || x->value.dim(1) != v->value.dim(0)) {
    shape_error("add_rowvec", x->value, v->value);
  }
  const int64_t n = x->value.dim(0), c = x->value.dim(1);
  Tensor out = x->value;
  const double* pv = v->value.data();
  double* po = out.data();
  for (int64_t r = 0; r < n; ++r)
    for (int64_t j = 0; j < c; ++j) po[r * c + j] += pv[j];
  return make_node("add_rowvec", std::move(out), {x, v}, [x, v, n, c](Node& self) {
    const double* g = self.grad.data();
    accumulate(x, self.grad);
    if (!v->requires_grad) return;
    v->ensure_grad();
    double* gv = v->grad.data();
    for (int64_t r = 0; r < n; ++r)
      for (int64_t j = 0; j < c; ++j) gv[j] += g[r * c + j];
  });
}

Var mul_colvec(const Var& x, const Var& c) {
  if (x->value.rank() != 2 || c->value.rank() != 2 || c->value.dim(1) != 1 ||
      x->value.dim(0) != c->value.dim(0)) {
    shape_error("mul_colvec", x->value, c->value);
  }
  const int64_t n = x->value.dim(0), k = x->value.dim(1);
  Tensor out = x->value;
  const double* pc = c->value.data();
  double* po = out.data();
  for (int64_t r = 0; r < n; ++r)
    for (int64_t j = 0; j < k; ++j) po[r * k + j] *= pc[r];
  return make_node("mul_colvec", std::move(out), {x, c}, [x, c, n, k](Node& self) {
    const double* g = self.grad.data();
    if (x->requires_grad) {
      x->ensure_grad();
      double* gx = x->grad.data();
      const double* pc = c->value.data();
      for (int64_t r = 0; r < n; ++r)
        for (int64_t j = 0; j < k; ++j) gx[r * k + j] += g[r * k + j] * pc[r];
    }
    if (c->requires_grad) {
      c->ensure_grad();
      double* gc = c->grad.data();
      const double* px = x->value.data();
      for (int64_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (int64_t j = 0; j < k; ++j) s += g[r * k + j] * px[r * k + j];
        gc[r] += s;
      }
    }
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  if (x->value.rank() != 3 || weight->value.rank() != 4 ||
      x->value.dim(2) != weight->value.dim(2)) {
    shape_error("conv2d", x->value, weight->value);
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  const int h = x->value.dim(0), w = x->value.dim(1), cin = x->value.dim(2);
  const int kh = weight->value.dim(0), kw = weight->value.dim(1), cout = weight->value.dim(3);
  if (bias && (bias->value.rank() != 1 || bias->value.dim(0) != cout)) {
    shape_error("conv2d(bias)", bias->value, weight->value);
  }
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (w + 2 * pad - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: empty output");
  Tensor out = Tensor::zeros({ho, wo, cout});
  const double* px = x->value.data();
  const double* pw = weight->value.data();
  double* po = out.data();
  for (int oi = 0; oi < ho; ++oi) {
    for (int oj = 0; oj < wo; ++oj) {
      double* ovec = po + (static_cast<int64_t>(oi) * wo + oj) * cout;
      if (bias) {
        const double* pb = bias->value.data();
        for (int c = 0; c < cout; ++c) ovec[c] = pb[c];
      }
      for (int ki = 0; ki < kh; ++ki) {
        const int ii = oi * stride + ki - pad;
        if (ii < 0 || ii >= h) continue;
        for (int kj = 0; kj < kw; ++kj) {
          const int jj = oj * stride + kj - pad;
          if (jj < 0 || jj >= w) continue;
          const double* xv = px + (static_cast<int64_t>(ii) * w + jj) * cin;
          const double* wv = pw + ((static_cast<int64_t>(ki) * kw + kj) * cin) * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const double xi = xv[ci];
            if (xi == 0.0) continue;
            const double* wrow = wv + static_cast<int64_t>(ci) * cout;
            for (int c = 0; c < cout; ++c) ovec[c] += xi * wrow[c];
          }
        }
      }
    }
  }
  std::vector<Var> parents = bias ? std::vector<Var>{x, weight, bias} : std::vector<Var>{x, weight};
  return make_node(
      "conv2d", std::move(out), std::move(parents),
      [x, weight, bias, stride, pad, h, w, cin, kh, kw, cout, ho, wo](Node& self) {
        const double* g = self.grad.data();
        const double* px = x->value.data();
        const double* pw = weight->value.data();
        double* gx = nullptr;
        double* gw = nullptr;
        if (x->requires_grad) {
          x->ensure_grad();
          gx = x->grad.data();
        }
        if (weight->requires_grad) {
          weight->ensure_grad();
          gw = weight->grad.data();
        }
        if (bias && bias->requires_grad) {
          bias->ensure_grad();
          double* gb = bias->grad.data();
          for (int oi = 0; oi < ho; ++oi)
            for (int oj = 0; oj < wo; ++oj) {
              const double* gv = g + (static_cast<int64_t>(oi) * wo + oj) * cout;
              for (int c = 0; c < cout; ++c) gb[c] += gv[c];
            }
        }
        if (!gx && !gw) return;
        for (int oi = 0; oi < ho; ++oi) {
          for (int oj = 0; oj < wo; ++oj) {
            const double* gv = g + (static_cast<int64_t>(oi) * wo + oj) * cout;
            for (int ki = 0; ki < kh; ++ki) {
              const int ii = oi * stride + ki - pad;
              if (ii < 0 || ii >= h) continue;
              for (int kj = 0; kj < kw; ++kj) {
                const int jj = oj * stride + kj - pad;
                if (jj < 0 || jj >= w) continue;
                const int64_t xoff = (static_cast<int64_t>(ii) * w + jj) * cin;
                const int64_t woff = (static_cast<int64_t>(ki) * kw + kj) * cin * cout;
                for (int ci = 0; ci < cin; ++ci) {
                  const double* wrow = pw + woff + static_cast<int64_t>(ci) * cout;
                  double dot = 0.0;
                  for (int c = 0; c < cout; ++c) dot += gv[c] * wrow[c];
                  if (gx) gx[xoff + ci] += dot;
                  if (gw) {
                    const double xi = px[xoff + ci];
                    if (xi != 0.0) {
                      double* wgrow = gw + woff + static_cast<int64_t>(ci) * cout;
                      for (int c = 0; c < cout; ++c) wgrow[c] += xi * gv[c];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Var bilinear_gather(const Var& map, const Tensor& pts) {
  if (map->value.rank() != 3 || pts.rank() != 2 || pts.dim(1) != 2) {
    throw std::invalid_argument("bilinear_gather: need map [H,W,C] and pts [N,2], got " +
                                shape_str(map->value.shape()) + " and " + shape_str(pts.shape()));
  }
  const int h = map->value.dim(0), w = map->value.dim(1), c = map->value.dim(2);
  const int n = pts.dim(0);
  Tensor out = Tensor::zeros({n, c});
  const double* pm = map->value.data();
  double* po = out.data();
  auto corner = [&](int i, int j) -> const double* {
    if (i < 0 || i >= h || j < 0 || j >= w) return nullptr;
    return pm + (static_cast<int64_t>(i) * w + j) * c;
  };
  for (int m = 0; m < n; ++m) {
    const double r = pts[m * 2 + 0], q = pts[m * 2 + 1];
    const int i0 = static_cast<int>(std::floor(r)), j0 = static_cast<int>(std::floor(q));
    const double fr = r - i0, fq = q - j0;
    const double wts[4] = {(1 - fr) * (1 - fq), (1 - fr) * fq, fr * (1 - fq), fr * fq};
    const double* corners[4] = {corner(i0, j0), corner(i0, j0 + 1), corner(i0 + 1, j0),
                                corner(i0 + 1, j0 + 1)};
    double* ov = po + static_cast<int64_t>(m) * c;
    for (int t = 0; t < 4; ++t) {
      if (!corners[t] || wts[t] == 0.0) continue;
      for (int ci = 0; ci < c; ++ci) ov[ci] += wts[t] * corners[t][ci];
    }
  }
  auto pp = std::make_shared<Tensor>(pts);
  return make_node("bilinear_gather", std::move(out), {map}, [map, pp, h, w, c, n](Node& self) {
    if (!map->requires_grad) return;
    map->ensure_grad();
    const double* g = self.grad.data();
    double* gm = map->grad.data();
    const Tensor& pts = *pp;
    for (int m = 0; m < n; ++m) {
      const double r = pts[m * 2 + 0], q = pts[m * 2 + 1];
      const int i0 = static_cast<int>(std::floor(r)), j0 = static_cast<int>(std::floor(q));
      const double fr = r - i0, fq = q - j0;
      const int is[4] = {i0, i0, i0 + 1, i0 + 1};
      const int js[4] = {j0, j0 + 1, j0, j0 + 1};
      const double wts[4] = {(1 - fr) * (1 - fq), (1 - fr) * fq, fr * (1 - fq), fr * fq};
      const double* gv = g + static_cast<int64_t>(m) * c;
      for (int t = 0; t < 4; ++t) {
        if (is[t] < 0 || is[t] >= h || js[t] < 0 || js[t] >= w || wts[t] == 0.0) continue;
        double* dst = gm + (static_cast<int64_t>(is[t]) * w + js[t]) * c;
        for (int ci = 0; ci < c; ++ci) dst[ci] += wts[t] * gv[ci];
      }
    }
  });
}

Var trilinear_gather(const Var& vol, const Tensor& pts) {
  if (vol->value.rank() != 4 || pts.rank() != 2 || pts.dim(1) != 3) {
    throw std::invalid_argument("trilinear_gather: need vol [D0,D1,D2,C] and pts [N,3], got " +
                                shape_str(vol->value.shape()) + " and " + shape_str(pts.shape()));
  }
  const int d0 = vol->value.dim(0), d1 = vol->value.dim(1), d2 = vol->value.dim(2),
            c = vol->value.dim(3);
  const int n = pts.dim(0);
  Tensor out = Tensor::zeros({n, c});
  const double* pv = vol->value.data();
  double* po = out.data();
  for (int m = 0; m < n; ++m) {
    const double a = pts[m * 3 + 0], b = pts[m * 3 + 1], e = pts[m * 3 + 2];
    const int a0 = static_cast<int>(std::floor(a)), b0 = static_cast<int>(std::floor(b)),
              e0 = static_cast<int>(std::floor(e));
    const double fa = a - a0, fb = b - b0, fe = e - e0;
    double* ov = po + static_cast<int64_t>(m) * c;
    for (int da = 0; da < 2; ++da)
      for (int db = 0; db < 2; ++db)
        for (int de = 0; de < 2; ++de) {
          const int ia = a0 + da, ib = b0 + db, ie = e0 + de;
          if (ia < 0 || ia >= d0 || ib < 0 || ib >= d1 || ie < 0 || ie >= d2) continue;
          const double wt = (da ? fa : 1 - fa) * (db ? fb : 1 - fb) * (de ? fe : 1 - fe);
          if (wt == 0.0) continue;
          const double* src = pv + ((static_cast<int64_t>(ia) * d1 + ib) * d2 + ie) * c;
          for (int ci = 0; ci < c; ++ci) ov[ci] += wt * src[ci];
        }
  }
  auto pp = std::make_shared<Tensor>(pts);
  return make_node("trilinear_gather", std::move(out), {vol},
                   [vol, pp, d0, d1, d2, c, n](Node& self) {
                     if (!vol->requires_grad) return;
                     vol->ensure_grad();
                     const double* g = self.grad.data();
                     double* gv = vol->grad.data();
                     const Tensor& pts = *pp;
                     for (int m = 0; m < n; ++m) {
                       const double a = pts[m * 3 + 0], b = pts[m * 3 + 1], e = pts[m * 3 + 2];
                       const int a0 = static_cast<int>(std::floor(a)),
                                 b0 = static_cast<int>(std::floor(b)),
                                 e0 = static_cast<int>(std::floor(e));
                       const double fa = a - a0, fb = b - b0, fe = e - e0;
                       const double* grow = g + static_cast<int64_t>(m) * c;
                       for (int da = 0; da < 2; ++da)
                         for (int db = 0; db < 2; ++db)
                           for (int de = 0; de < 2; ++de) {
                             const int ia = a0 + da, ib = b0 + db, ie = e0 + de;
                             if (ia < 0 || ia >= d0 || ib < 0 || ib >= d1 || ie < 0 || ie >= d2)
                               continue;
                             const double wt = (da ? fa : 1 - fa) * (db ? fb : 1 - fb) *
                                               (de ? fe : 1 - fe);
                             if (wt == 0.0) continue;
                             double* dst =
                                 gv + ((static_cast<int64_t>(ia) * d1 + ib) * d2 + ie) * c;
                             for (int ci = 0; ci < c; ++ci) dst[ci] += wt * grow[ci];
                           }
                     }
                   });
}

Var shift2d(const Var& x, int dy, int dx) {
  if (x->value.rank() != 3) {
    throw std::invalid_argument("shift2d: need [H,W,C], got " + shape_str(x->value.shape()));
  }
  const int h = x->value.dim(0), w = x->value.dim(1), c = x->value.dim(2);
  Tensor out = Tensor::zeros({h, w, c});
  const double* px = x->value.data();
  double* po = out.data();
  for (int i = 0; i < h; ++i) {
    const int si = i - dy;
    if (si < 0 || si >= h) continue;
    for (int j = 0; j < w; ++j) {
      const int sj = j - dx;
      if (sj < 0 || sj >= w) continue;
      const double* src = px + (static_cast<int64_t>(si) * w + sj) * c;
      double* dst = po + (static_cast<int64_t>(i) * w + j) * c;
      std::copy(src, src + c, dst);
    }
  }
  return make_node("shift2d", std::move(out), {x}, [x, dy, dx, h, w, c](Node& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const double* g = self.grad.data();
    double* gx = x->grad.data();
    for (int i = 0; i < h; ++i) {
      const int si = i - dy;
      if (si < 0 || si >= h) continue;
      for (int j = 0; j < w; ++j) {
        const int sj = j - dx;
        if (sj < 0 || sj >= w) continue;
        const double* src = g + (static_cast<int64_t>(i) * w + j) * c;
        double* dst = gx + (static_cast<int64_t>(si) * w + sj) * c;
        for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
      }
    }
  });
}

Var render_weights(const Var& sigma, const Tensor& delta) {
  if (sigma->value.rank() != 2 || delta.rank() != 1 || sigma->value.dim(1) != delta.dim(0)) {
    throw std::invalid_argument("render_weights: need sigma [N,n] and delta [n], got " +
                                shape_str(sigma->value.shape()) + " and " +
                                shape_str(delta.shape()));
  }
  const int64_t rows = sigma->value.dim(0);
  const int64_t n = sigma->value.dim(1);
  for (int64_t j = 0; j < n; ++j) {
    if (delta[j] <= 0.0) throw std::invalid_argument("render_weights: delta must be positive");
  }
  Tensor out = Tensor::zeros(sigma->value.shape());
  const double* s = sigma->value.data();
  double* w = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double sd = s[r * n + j] * delta[j];
      w[r * n + j] = std::exp(-acc) * (-std::expm1(-sd));
      acc += sd;
    }
  }
  auto dl = std::make_shared<Tensor>(delta);
  return make_node("render_weights", std::move(out), {sigma}, [sigma, dl, rows, n](Node& self) {
    if (!sigma->requires_grad) return;
    sigma->ensure_grad();
    const Tensor& delta = *dl;
    const double* s = sigma->value.data();
    const double* w = self.value.data();
    const double* g = self.grad.data();
    double* gs = sigma->grad.data();
    // dw_j/ds_m = -delta_m * w_j              for m < j
    //           = exp(-acc_j - s_j d_j) * d_j for m == j
    // Walk each row backward keeping the suffix sum of g_j * w_j.
    std::vector<double> acc(static_cast<size_t>(n));
    for (int64_t r = 0; r < rows; ++r) {
      double a = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        acc[static_cast<size_t>(j)] = a;
        a += s[r * n + j] * delta[j];
      }
      double suffix = 0.0;
      for (int64_t m = n - 1; m >= 0; --m) {
        const double sd = s[r * n + m] * delta[m];
        gs[r * n + m] += g[r * n + m] * std::exp(-acc[static_cast<size_t>(m)] - sd) * delta[m] -
                         delta[m] * suffix;
        suffix += g[r * n + m] * w[r * n + m];
      }
    }
  });
}

Tensor transmittance(const Tensor& sigma, const Tensor& delta) {
  const int64_t rows = sigma.dim(0);
  const int64_t n = sigma.dim(1);
  Tensor tau = Tensor::zeros({static_cast<int>(rows), static_cast<int>(n) + 1});
  for (int64_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (int64_t j = 0; j <= n; ++j) {
      tau[r * (n + 1) + j] = std::exp(-acc);
      if (j < n) acc += sigma[r * n + j] * delta[j];
    }
  }
  return tau;
}

Var linear(const Var& x, const Var& w, const Var& b) {
  Var y = matmul(x, w);
  return b ? add_rowvec(y, b) : y;
}

Var mse(const Var& a, const Var& b) { return mean_all(square(sub(a, b))); }

void backward(const Var& loss) {
  if (!loss) throw std::invalid_argument("backward: null loss");
  if (loss->value.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss->value.shape()));
  }
  if (loss->backward_ran) {
    throw std::logic_error("backward: tape already consumed; rebuild the graph before rerunning");
  }
  loss->backward_ran = true;
  if (!loss->requires_grad) return;

  // Iterative post-order DFS; reverse finish order is a valid reverse
  // topological order for gradient propagation.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next].get();
      ++next;
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && node->has_grad()) node->backprop(*node);
  }
}

}  // namespace bevworld::num
