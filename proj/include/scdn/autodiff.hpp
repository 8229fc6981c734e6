#pragma once

#include <array>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "scdn/parallel.hpp"
#include "scdn/tensor.hpp"

namespace scdn {

// Reverse-mode autodiff over Tensor<T>. Graphs are built define-by-run;
// backward(root) zeroes the gradients of every node reachable from the
// root and runs one reverse sweep. Nodes whose requires_grad is false are
// never visited and never accumulate gradients, which is how frozen
// parameters and detached values are expressed.
template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backprop;
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> make_var(Tensor<T> value, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

template <class T>
Var<T> constant(Tensor<T> value) {
  return make_var(std::move(value), false);
}

// Leaf sharing no history with its source; gradients stop here.
template <class T>
Var<T> detach(const Var<T>& x) {
  return make_var(Tensor<T>(x->value), false);
}

namespace detail {

template <class T>
inline void ensure_grad(Node<T>& n) {
  if (!(n.grad.shape() == n.value.shape()))
    n.grad = Tensor<T>(n.value.shape());
  else
    n.grad.fill(T(0));
}

template <class T>
inline Var<T> make_op(Tensor<T> value,
                      std::vector<Var<T>> parents,
                      std::function<void(Node<T>&)> backprop) {
  auto out = std::make_shared<Node<T>>();
  out->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) out->requires_grad = true;
  if (out->requires_grad) {
    out->parents = std::move(parents);
    out->backprop = std::move(backprop);
  }
  return out;
}

}  // namespace detail

template <class T>
void backward(const Var<T>& root) {
  if (root->value.size() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  if (!root->requires_grad) return;

  // Reverse post-order over the requires_grad subgraph.
  std::vector<Node<T>*> topo;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  for (Node<T>* n : topo) detail::ensure_grad(*n);
  root->grad[0] = T(1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "add");
  Tensor<T> v(a->value.shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->value[i] + b->value[i];
  return detail::make_op<T>(std::move(v), {a, b},
      [a = a.get(), b = b.get()](Node<T>& self) {
        if (a->requires_grad)
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            a->grad[i] += self.grad[i];
        if (b->requires_grad)
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            b->grad[i] += self.grad[i];
      });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "sub");
  Tensor<T> v(a->value.shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->value[i] - b->value[i];
  return detail::make_op<T>(std::move(v), {a, b},
      [a = a.get(), b = b.get()](Node<T>& self) {
        if (a->requires_grad)
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            a->grad[i] += self.grad[i];
        if (b->requires_grad)
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            b->grad[i] -= self.grad[i];
      });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "mul");
  Tensor<T> v(a->value.shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->value[i] * b->value[i];
  return detail::make_op<T>(std::move(v), {a, b},
      [a = a.get(), b = b.get()](Node<T>& self) {
        if (a->requires_grad)
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            a->grad[i] += self.grad[i] * b->value[i];
        if (b->requires_grad)
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            b->grad[i] += self.grad[i] * a->value[i];
      });
}

template <class T>
Var<T> div_v(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "div");
  Tensor<T> v(a->value.shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a->value[i] / b->value[i];
  return detail::make_op<T>(std::move(v), {a, b},
      [a = a.get(), b = b.get()](Node<T>& self) {
        if (a->requires_grad)
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            a->grad[i] += self.grad[i] / b->value[i];
        if (b->requires_grad)
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            b->grad[i] -= self.grad[i] * self.value[i] / b->value[i];
      });
}

// alpha * a + beta, elementwise.
template <class T>
Var<T> affine(const Var<T>& a, T alpha, T beta) {
  Tensor<T> v(a->value.shape());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = alpha * a->value[i] + beta;
  return detail::make_op<T>(std::move(v), {a},
      [a = a.get(), alpha](Node<T>& self) {
        if (a->requires_grad)
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            a->grad[i] += alpha * self.grad[i];
      });
}

template <class T>
Var<T> mul_scalar(const Var<T>& a, T s) { return affine(a, s, T(0)); }
template <class T>
Var<T> add_scalar(const Var<T>& a, T s) { return affine(a, T(1), s); }

template <class T>
Var<T> abs_v(const Var<T>& a) {
  Tensor<T> v(a->value.shape());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a->value[i] < T(0) ? -a->value[i] : a->value[i];
  return detail::make_op<T>(std::move(v), {a},
      [a = a.get()](Node<T>& self) {
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const T x = a->value[i];
          a->grad[i] += self.grad[i] * (x > T(0) ? T(1)
                                                  : (x < T(0) ? T(-1) : T(0)));
        }
      });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> v(a->value.shape());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a->value[i] > T(0) ? a->value[i] : T(0);
  return detail::make_op<T>(std::move(v), {a},
      [a = a.get()](Node<T>& self) {
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          if (a->value[i] > T(0)) a->grad[i] += self.grad[i];
      });
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Tensor<T> v(a->value.shape());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a->value[i] > T(0) ? a->value[i] : slope * a->value[i];
  return detail::make_op<T>(std::move(v), {a},
      [a = a.get(), slope](Node<T>& self) {
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          a->grad[i] +=
              self.grad[i] * (a->value[i] > T(0) ? T(1) : slope);
      });
}

template <class T>
Var<T> tanh_v(const Var<T>& a) {
  Tensor<T> v(a->value.shape());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = std::tanh(a->value[i]);
  return detail::make_op<T>(std::move(v), {a},
      [a = a.get()](Node<T>& self) {
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          a->grad[i] +=
              self.grad[i] * (T(1) - self.value[i] * self.value[i]);
      });
}

// Clamp to [0,1]; gradient passes only strictly inside the interval.
template <class T>
Var<T> clamp01_v(const Var<T>& a) {
  Tensor<T> v(a->value.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const T x = a->value[i];
    v[i] = x < T(0) ? T(0) : (x > T(1) ? T(1) : x);
  }
  return detail::make_op<T>(std::move(v), {a},
      [a = a.get()](Node<T>& self) {
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          if (a->value[i] > T(0) && a->value[i] < T(1))
            a->grad[i] += self.grad[i];
      });
}

// 1 / sqrt(a + eps)
template <class T>
Var<T> rsqrt_eps(const Var<T>& a, T eps) {
  Tensor<T> v(a->value.shape());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = T(1) / std::sqrt(a->value[i] + eps);
  return detail::make_op<T>(std::move(v), {a},
      [a = a.get()](Node<T>& self) {
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const T r = self.value[i];
          a->grad[i] += self.grad[i] * T(-0.5) * r * r * r;
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class T>
Var<T> sum_all(const Var<T>& a) {
  Tensor<T> v(1, 1, 1, 1);
  T s = T(0);
  for (std::size_t i = 0; i < a->value.size(); ++i) s += a->value[i];
  v[0] = s;
  return detail::make_op<T>(std::move(v), {a},
      [a = a.get()](Node<T>& self) {
        if (!a->requires_grad) return;
        const T g = self.grad[0];
        for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
      });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  const T scale = T(1) / T(a->value.size());
  return mul_scalar(sum_all(a), scale);
}

// Mean over (c,h,w) for each sample: (n,c,h,w) -> (n,1,1,1).
template <class T>
Var<T> mean_per_sample(const Var<T>& a) {
  const Shape s = a->value.shape();
  const std::size_t per = std::size_t(s.c) * s.h * s.w;
  Tensor<T> v(s.n, 1, 1, 1);
  for (int n = 0; n < s.n; ++n) {
    T acc = T(0);
    const T* p = a->value.data() + std::size_t(n) * per;
    for (std::size_t i = 0; i < per; ++i) acc += p[i];
    v[std::size_t(n)] = acc / T(per);
  }
  return detail::make_op<T>(std::move(v), {a},
      [a = a.get(), per, nn = s.n](Node<T>& self) {
        if (!a->requires_grad) return;
        for (int n = 0; n < nn; ++n) {
          const T g = self.grad[std::size_t(n)] / T(per);
          T* p = a->grad.data() + std::size_t(n) * per;
          for (std::size_t i = 0; i < per; ++i) p[i] += g;
        }
      });
}

// Mean over (h,w) per (n,c): (n,c,h,w) -> (n,c,1,1).
template <class T>
Var<T> mean_hw(const Var<T>& a) {
  const Shape s = a->value.shape();
  const std::size_t per = std::size_t(s.h) * s.w;
  Tensor<T> v(s.n, s.c, 1, 1);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      T acc = T(0);
      const T* p = a->value.data() + (std::size_t(n) * s.c + c) * per;
      for (std::size_t i = 0; i < per; ++i) acc += p[i];
      v[std::size_t(n) * s.c + c] = acc / T(per);
    }
  return detail::make_op<T>(std::move(v), {a},
      [a = a.get(), per, s](Node<T>& self) {
        if (!a->requires_grad) return;
        for (int n = 0; n < s.n; ++n)
          for (int c = 0; c < s.c; ++c) {
            const T g = self.grad[std::size_t(n) * s.c + c] / T(per);
            T* p = a->grad.data() + (std::size_t(n) * s.c + c) * per;
            for (std::size_t i = 0; i < per; ++i) p[i] += g;
          }
      });
}

// ---------------------------------------------------------------------------
// Broadcast ops: x is (n,c,h,w), s is (n,c,1,1)
// ---------------------------------------------------------------------------

namespace detail {
template <class T>
void check_bcast(const Var<T>& x, const Var<T>& s, const char* where) {
  const Shape& xs = x->value.shape();
  const Shape& ss = s->value.shape();
  if (ss.n != xs.n || ss.c != xs.c || ss.h != 1 || ss.w != 1)
    throw std::invalid_argument(std::string(where) + ": bad broadcast " +
                                xs.str() + " vs " + ss.str());
}
}  // namespace detail

template <class T>
Var<T> bsub(const Var<T>& x, const Var<T>& s) {
  detail::check_bcast(x, s, "bsub");
  const Shape sh = x->value.shape();
  const std::size_t per = std::size_t(sh.h) * sh.w;
  Tensor<T> v(sh);
  for (std::size_t nc = 0; nc < std::size_t(sh.n) * sh.c; ++nc) {
    const T m = s->value[nc];
    const T* p = x->value.data() + nc * per;
    T* o = v.data() + nc * per;
    for (std::size_t i = 0; i < per; ++i) o[i] = p[i] - m;
  }
  return detail::make_op<T>(std::move(v), {x, s},
      [x = x.get(), s = s.get(), per, nc_total = std::size_t(sh.n) * sh.c](
          Node<T>& self) {
        if (x->requires_grad)
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            x->grad[i] += self.grad[i];
        if (s->requires_grad)
          for (std::size_t nc = 0; nc < nc_total; ++nc) {
            T acc = T(0);
            const T* g = self.grad.data() + nc * per;
            for (std::size_t i = 0; i < per; ++i) acc += g[i];
            s->grad[nc] -= acc;
          }
      });
}

template <class T>
Var<T> bmul(const Var<T>& x, const Var<T>& s) {
  detail::check_bcast(x, s, "bmul");
  const Shape sh = x->value.shape();
  const std::size_t per = std::size_t(sh.h) * sh.w;
  Tensor<T> v(sh);
  for (std::size_t nc = 0; nc < std::size_t(sh.n) * sh.c; ++nc) {
    const T m = s->value[nc];
    const T* p = x->value.data() + nc * per;
    T* o = v.data() + nc * per;
    for (std::size_t i = 0; i < per; ++i) o[i] = p[i] * m;
  }
  return detail::make_op<T>(std::move(v), {x, s},
      [x = x.get(), s = s.get(), per, nc_total = std::size_t(sh.n) * sh.c](
          Node<T>& self) {
        for (std::size_t nc = 0; nc < nc_total; ++nc) {
          const T* g = self.grad.data() + nc * per;
          if (x->requires_grad) {
            const T m = s->value[nc];
            T* gx = x->grad.data() + nc * per;
            for (std::size_t i = 0; i < per; ++i) gx[i] += g[i] * m;
          }
          if (s->requires_grad) {
            T acc = T(0);
            const T* p = x->value.data() + nc * per;
            for (std::size_t i = 0; i < per; ++i) acc += g[i] * p[i];
            s->grad[nc] += acc;
          }
        }
      });
}

// Per-channel affine x*gamma[c] + beta[c]; gamma/beta are (1,c,1,1).
template <class T>
Var<T> affine_channel(const Var<T>& x, const Var<T>& gamma,
                      const Var<T>& beta) {
  const Shape sh = x->value.shape();
  const Shape gs = gamma->value.shape();
  if (gs.n != 1 || gs.c != sh.c || gs.h != 1 || gs.w != 1 ||
      !(beta->value.shape() == gs))
    throw std::invalid_argument("affine_channel: bad parameter shape");
  const std::size_t per = std::size_t(sh.h) * sh.w;
  Tensor<T> v(sh);
  for (int n = 0; n < sh.n; ++n)
    for (int c = 0; c < sh.c; ++c) {
      const T g = gamma->value[std::size_t(c)];
      const T b = beta->value[std::size_t(c)];
      const std::size_t base = (std::size_t(n) * sh.c + c) * per;
      for (std::size_t i = 0; i < per; ++i)
        v[base + i] = x->value[base + i] * g + b;
    }
  return detail::make_op<T>(std::move(v), {x, gamma, beta},
      [x = x.get(), gamma = gamma.get(), beta = beta.get(), per, sh](
          Node<T>& self) {
        for (int n = 0; n < sh.n; ++n)
          for (int c = 0; c < sh.c; ++c) {
            const std::size_t base = (std::size_t(n) * sh.c + c) * per;
            const T* g = self.grad.data() + base;
            if (x->requires_grad) {
              const T ga = gamma->value[std::size_t(c)];
              for (std::size_t i = 0; i < per; ++i)
                x->grad[base + i] += g[i] * ga;
            }
            if (gamma->requires_grad) {
              T acc = T(0);
              for (std::size_t i = 0; i < per; ++i)
                acc += g[i] * x->value[base + i];
              gamma->grad[std::size_t(c)] += acc;
            }
            if (beta->requires_grad) {
              T acc = T(0);
              for (std::size_t i = 0; i < per; ++i) acc += g[i];
              beta->grad[std::size_t(c)] += acc;
            }
          }
      });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> concat_c(const Var<T>& a, const Var<T>& b) {
  const Shape as = a->value.shape(), bs = b->value.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w)
    throw std::invalid_argument("concat_c: spatial/batch mismatch " +
                                as.str() + " vs " + bs.str());
  Tensor<T> v(as.n, as.c + bs.c, as.h, as.w);
  const std::size_t plane = std::size_t(as.h) * as.w;
  for (int n = 0; n < as.n; ++n) {
    std::memcpy(v.data() + v.index(n, 0, 0, 0),
                a->value.data() + a->value.index(n, 0, 0, 0),
                std::size_t(as.c) * plane * sizeof(T));
    std::memcpy(v.data() + v.index(n, as.c, 0, 0),
                b->value.data() + b->value.index(n, 0, 0, 0),
                std::size_t(bs.c) * plane * sizeof(T));
  }
  return detail::make_op<T>(std::move(v), {a, b},
      [a = a.get(), b = b.get(), as, bs, plane](Node<T>& self) {
        for (int n = 0; n < as.n; ++n) {
          if (a->requires_grad) {
            const T* g = self.grad.data() + self.grad.index(n, 0, 0, 0);
            T* ga = a->grad.data() + a->grad.index(n, 0, 0, 0);
            for (std::size_t i = 0; i < std::size_t(as.c) * plane; ++i)
              ga[i] += g[i];
          }
          if (b->requires_grad) {
            const T* g = self.grad.data() + self.grad.index(n, as.c, 0, 0);
            T* gb = b->grad.data() + b->grad.index(n, 0, 0, 0);
            for (std::size_t i = 0; i < std::size_t(bs.c) * plane; ++i)
              gb[i] += g[i];
          }
        }
      });
}

template <class T>
Var<T> slice_c(const Var<T>& a, int c0, int len) {
  const Shape as = a->value.shape();
  if (c0 < 0 || len <= 0 || c0 + len > as.c)
    throw std::invalid_argument("slice_c: bad channel range");
  Tensor<T> v(as.n, len, as.h, as.w);
  const std::size_t plane = std::size_t(as.h) * as.w;
  for (int n = 0; n < as.n; ++n)
    std::memcpy(v.data() + v.index(n, 0, 0, 0),
                a->value.data() + a->value.index(n, c0, 0, 0),
                std::size_t(len) * plane * sizeof(T));
  return detail::make_op<T>(std::move(v), {a},
      [a = a.get(), as, c0, len, plane](Node<T>& self) {
        if (!a->requires_grad) return;
        for (int n = 0; n < as.n; ++n) {
          const T* g = self.grad.data() + self.grad.index(n, 0, 0, 0);
          T* ga = a->grad.data() + a->grad.index(n, c0, 0, 0);
          for (std::size_t i = 0; i < std::size_t(len) * plane; ++i)
            ga[i] += g[i];
        }
      });
}

template <class T>
Var<T> upsample_nearest2(const Var<T>& a) {
  const Shape s = a->value.shape();
  Tensor<T> v(s.n, s.c, s.h * 2, s.w * 2);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h * 2; ++y)
        for (int x = 0; x < s.w * 2; ++x)
          v.at(n, c, y, x) = a->value.at(n, c, y / 2, x / 2);
  return detail::make_op<T>(std::move(v), {a},
      [a = a.get(), s](Node<T>& self) {
        if (!a->requires_grad) return;
        for (int n = 0; n < s.n; ++n)
          for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h * 2; ++y)
              for (int x = 0; x < s.w * 2; ++x)
                a->grad.at(n, c, y / 2, x / 2) += self.grad.at(n, c, y, x);
      });
}

// ---------------------------------------------------------------------------
// Convolution (zero padding, square kernel, equal stride)
// ---------------------------------------------------------------------------

inline int conv_out_dim(int in, int k, int stride, int pad) {
  const int out = (in + 2 * pad - k) / stride + 1;
  if (out < 1)
    throw std::invalid_argument("conv2d: output dimension collapsed");
  return out;
}

// x: (n, ic, h, w); w: (oc, ic, k, k); b: (1, oc, 1, 1).
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride,
              int pad) {
  const Shape xs = x->value.shape(), ws = w->value.shape();
  if (ws.c != xs.c)
    throw std::invalid_argument("conv2d: channel mismatch " + xs.str() +
                                " vs weights " + ws.str());
  if (ws.h != ws.w) throw std::invalid_argument("conv2d: kernel not square");
  const int k = ws.h;
  const int oh = conv_out_dim(xs.h, k, stride, pad);
  const int ow = conv_out_dim(xs.w, k, stride, pad);
  const int oc = ws.n;
  Tensor<T> v(xs.n, oc, oh, ow);

  const Tensor<T>& xv = x->value;
  const Tensor<T>& wv = w->value;
  const Tensor<T>& bv = b->value;
  parallel_for(std::size_t(xs.n) * oc, [&](std::size_t job) {
    const int n = int(job) / oc;
    const int o = int(job) % oc;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        T acc = bv[std::size_t(o)];
        for (int ic = 0; ic < xs.c; ++ic)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= xs.h) continue;
            const T* xrow = &xv.at(n, ic, iy, 0);
            const T* wrow = &wv.at(o, ic, ky, 0);
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= xs.w) continue;
              acc += xrow[ix] * wrow[kx];
            }
          }
        v.at(n, o, oy, ox) = acc;
      }
  });

  return detail::make_op<T>(std::move(v),
      {x, w, b},
      [x = x.get(), w = w.get(), b = b.get(), xs, k, stride, pad, oc, oh,
       ow](Node<T>& self) {
        const Tensor<T>& g = self.grad;
        if (x->requires_grad) {
          parallel_for(std::size_t(xs.n), [&](std::size_t n_) {
            const int n = int(n_);
            for (int o = 0; o < oc; ++o)
              for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                  const T go = g.at(n, o, oy, ox);
                  if (go == T(0)) continue;
                  for (int ic = 0; ic < xs.c; ++ic)
                    for (int ky = 0; ky < k; ++ky) {
                      const int iy = oy * stride - pad + ky;
                      if (iy < 0 || iy >= xs.h) continue;
                      T* xrow = &x->grad.at(n, ic, iy, 0);
                      const T* wrow = &w->value.at(o, ic, ky, 0);
                      for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= xs.w) continue;
                        xrow[ix] += go * wrow[kx];
                      }
                    }
                }
          });
        }
        if (w->requires_grad) {
          parallel_for(std::size_t(oc), [&](std::size_t o_) {
            const int o = int(o_);
            for (int n = 0; n < xs.n; ++n)
              for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                  const T go = g.at(n, o, oy, ox);
                  if (go == T(0)) continue;
                  for (int ic = 0; ic < xs.c; ++ic)
                    for (int ky = 0; ky < k; ++ky) {
                      const int iy = oy * stride - pad + ky;
                      if (iy < 0 || iy >= xs.h) continue;
                      const T* xrow = &x->value.at(n, ic, iy, 0);
                      T* wrow = &w->grad.at(o, ic, ky, 0);
                      for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= xs.w) continue;
                        wrow[kx] += go * xrow[ix];
                      }
                    }
                }
          });
        }
        if (b->requires_grad) {
          for (int o = 0; o < oc; ++o) {
            T acc = T(0);
            for (int n = 0; n < xs.n; ++n)
              for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) acc += g.at(n, o, oy, ox);
            b->grad[std::size_t(o)] += acc;
          }
        }
      });
}

template <class T>
T scalar_value(const Var<T>& v) {
  if (v->value.size() != 1)
    throw std::invalid_argument("scalar_value: not a scalar");
  return v->value[0];
}

}  // namespace scdn
