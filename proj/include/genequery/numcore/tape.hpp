#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "genequery/numcore/ops.hpp"
#include "genequery/numcore/tensor.hpp"

namespace gq::num {

// Reverse-mode autodiff over a flat tape. Nodes are appended in topological
// order (an op can only reference existing nodes), so backward is a single
// reverse sweep. One tape per forward pass; gradients of leaf nodes are read
// back after backward().
template <typename T>
class Tape {
 public:
  using Ref = std::int32_t;

  Ref input(Tensor<T> value) { return push(std::move(value), nullptr); }

  const Tensor<T>& val(Ref r) const { return nodes_[static_cast<std::size_t>(r)].value; }
  const Tensor<T>& grad(Ref r) const { return nodes_[static_cast<std::size_t>(r)].grad; }
  std::size_t size() const { return nodes_.size(); }

  Ref add(Ref a, Ref b) {
    const auto& ta = val(a);
    const auto& tb = val(b);
    if (!ta.same_shape(tb)) fail(errc::shape, "add: shape mismatch");
    Tensor<T> out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
    return push(std::move(out), [a, b](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      auto& ga = t.gradref(a);
      auto& gb = t.gradref(b);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
    });
  }

  // m (n x c) + row broadcast to every row of m. `row` may be rank 1 or 1 x c.
  Ref add_row_broadcast(Ref m, Ref row) {
    const auto& tm = val(m);
    const auto& tr = val(row);
    if (tm.cols() != tr.size()) fail(errc::shape, "add_row_broadcast: width mismatch");
    Tensor<T> out = tm;
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += tr[c];
    return push(std::move(out), [m, row](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      auto& gm = t.gradref(m);
      auto& gr = t.gradref(row);
      for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
      std::size_t c = t.val(m).cols();
      for (std::size_t i = 0; i < g.size(); ++i) gr[i % c] += g[i];
    });
  }

  Ref matmul(Ref a, Ref b) {
    const auto& ta = val(a);
    const auto& tb = val(b);
    if (ta.cols() != tb.rows()) fail(errc::shape, "matmul: inner dimension mismatch");
    std::size_t n = ta.rows(), k = ta.cols(), m = tb.cols();
    Tensor<T> out({n, m});
    matmul_acc(ta.data(), tb.data(), out.data(), n, k, m);
    return push(std::move(out), [a, b, n, k, m](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      matmul_nt_acc(g.data(), t.val(b).data(), t.gradref(a).data(), n, m, k);
      matmul_tn_acc(t.val(a).data(), g.data(), t.gradref(b).data(), k, n, m);
    });
  }

  // a (n x k) * b(m x k)^T without materializing the transpose.
  Ref matmul_nt(Ref a, Ref b) {
    const auto& ta = val(a);
    const auto& tb = val(b);
    if (ta.cols() != tb.cols()) fail(errc::shape, "matmul_nt: inner dimension mismatch");
    std::size_t n = ta.rows(), k = ta.cols(), m = tb.rows();
    Tensor<T> out({n, m});
    matmul_nt_acc(ta.data(), tb.data(), out.data(), n, k, m);
    return push(std::move(out), [a, b, n, k, m](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      // dA += g * B ; dB += g^T * A
      matmul_acc(g.data(), t.val(b).data(), t.gradref(a).data(), n, m, k);
      matmul_tn_acc(g.data(), t.val(a).data(), t.gradref(b).data(), m, n, k);
    });
  }

  // x (n x k) * w (k x m) + b broadcast per row.
  Ref affine(Ref x, Ref w, Ref b) {
    const auto& tx = val(x);
    const auto& tw = val(w);
    const auto& tb = val(b);
    if (tx.cols() != tw.rows() || tw.cols() != tb.size())
      fail(errc::shape, "affine: dimension mismatch");
    std::size_t n = tx.rows(), k = tx.cols(), m = tw.cols();
    Tensor<T> out({n, m});
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) out.at(r, c) = tb[c];
    matmul_acc(tx.data(), tw.data(), out.data(), n, k, m);
    return push(std::move(out), [x, w, b, n, k, m](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      matmul_nt_acc(g.data(), t.val(w).data(), t.gradref(x).data(), n, m, k);
      matmul_tn_acc(t.val(x).data(), g.data(), t.gradref(w).data(), k, n, m);
      auto& gb = t.gradref(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % m] += g[i];
    });
  }

  Ref scale(Ref a, T s) {
    Tensor<T> out = val(a);
    for (auto& v : out) v *= s;
    return push(std::move(out), [a, s](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      auto& ga = t.gradref(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
  }

  Ref slice_cols(Ref a, std::size_t c0, std::size_t c1) {
    const auto& ta = val(a);
    if (c1 > ta.cols() || c0 >= c1) fail(errc::shape, "slice_cols: bad range");
    std::size_t n = ta.rows(), w = c1 - c0;
    Tensor<T> out({n, w});
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < w; ++c) out.at(r, c) = ta.at(r, c0 + c);
    return push(std::move(out), [a, c0, w](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      auto& ga = t.gradref(a);
      std::size_t n = g.rows();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < w; ++c) ga.at(r, c0 + c) += g.at(r, c);
    });
  }

  Ref concat_cols(const std::vector<Ref>& parts) {
    std::size_t n = val(parts.front()).rows();
    std::size_t total = 0;
    for (Ref p : parts) {
      if (val(p).rows() != n) fail(errc::shape, "concat_cols: row mismatch");
      total += val(p).cols();
    }
    Tensor<T> out({n, total});
    std::size_t off = 0;
    for (Ref p : parts) {
      const auto& tp = val(p);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < tp.cols(); ++c) out.at(r, off + c) = tp.at(r, c);
      off += tp.cols();
    }
    return push(std::move(out), [parts](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      std::size_t off = 0;
      for (Ref p : parts) {
        auto& gp = t.gradref(p);
        for (std::size_t r = 0; r < gp.rows(); ++r)
          for (std::size_t c = 0; c < gp.cols(); ++c) gp.at(r, c) += g.at(r, off + c);
        off += gp.cols();
      }
    });
  }

  // Stacks length-c (or 1 x c) nodes into an n x c matrix.
  Ref stack_rows(const std::vector<Ref>& rows) {
    std::size_t c = val(rows.front()).cols();
    Tensor<T> out({rows.size(), c});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& tr = val(rows[r]);
      if (tr.rows() != 1 || tr.cols() != c) fail(errc::shape, "stack_rows: row shape mismatch");
      for (std::size_t i = 0; i < c; ++i) out.at(r, i) = tr[i];
    }
    return push(std::move(out), [rows](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        auto& gr = t.gradref(rows[r]);
        for (std::size_t i = 0; i < g.cols(); ++i) gr[i] += g.at(r, i);
      }
    });
  }

  // Row-wise softmax over valid columns; invalid columns receive weight
  // exactly 0. `valid` empty means all columns valid.
  Ref softmax_rows(Ref a, std::vector<std::uint8_t> valid) {
    const auto& ta = val(a);
    std::size_t n = ta.rows(), m = ta.cols();
    if (!valid.empty() && valid.size() != m) fail(errc::shape, "softmax_rows: mask width mismatch");
    Tensor<T> out({n, m});
    for (std::size_t r = 0; r < n; ++r) {
      softmax_masked<T>({ta.data() + r * m, m}, valid, {out.data() + r * m, m});
    }
    return push(std::move(out), [a, valid](Tape& t, Ref self) {
      const auto& y = t.val(self);
      const auto& g = t.gradref(self);
      auto& ga = t.gradref(a);
      std::size_t n = y.rows(), m = y.cols();
      for (std::size_t r = 0; r < n; ++r) {
        T dot = T(0);
        for (std::size_t c = 0; c < m; ++c) dot += g.at(r, c) * y.at(r, c);
        for (std::size_t c = 0; c < m; ++c) {
          if (!valid.empty() && !valid[c]) continue;
          ga.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
        }
      }
    });
  }

  // Per-row layer norm with learnable gamma/beta (length = row width).
  Ref layer_norm_rows(Ref x, Ref gamma, Ref beta, T eps) {
    const auto& tx = val(x);
    const auto& tg = val(gamma);
    const auto& tb = val(beta);
    std::size_t n = tx.rows(), d = tx.cols();
    if (tg.size() != d || tb.size() != d) fail(errc::shape, "layer_norm_rows: gamma/beta width mismatch");
    if (!(eps > T(0))) fail(errc::argument, "layer_norm_rows: eps must be > 0");
    Tensor<T> out({n, d});
    for (std::size_t r = 0; r < n; ++r) {
      T mean = T(0);
      for (std::size_t c = 0; c < d; ++c) mean += tx.at(r, c);
      mean /= static_cast<T>(d);
      T var = T(0);
      for (std::size_t c = 0; c < d; ++c) {
        T v = tx.at(r, c) - mean;
        var += v * v;
      }
      var /= static_cast<T>(d);
      T inv = T(1) / std::sqrt(var + eps);
      for (std::size_t c = 0; c < d; ++c)
        out.at(r, c) = tg[c] * (tx.at(r, c) - mean) * inv + tb[c];
    }
    return push(std::move(out), [x, gamma, beta, eps](Tape& t, Ref self) {
      const auto& tx = t.val(x);
      const auto& tg = t.val(gamma);
      const auto& g = t.gradref(self);
      auto& gx = t.gradref(x);
      auto& gg = t.gradref(gamma);
      auto& gb = t.gradref(beta);
      std::size_t n = tx.rows(), d = tx.cols();
      for (std::size_t r = 0; r < n; ++r) {
        T mean = T(0);
        for (std::size_t c = 0; c < d; ++c) mean += tx.at(r, c);
        mean /= static_cast<T>(d);
        T var = T(0);
        for (std::size_t c = 0; c < d; ++c) {
          T v = tx.at(r, c) - mean;
          var += v * v;
        }
        var /= static_cast<T>(d);
        T inv = T(1) / std::sqrt(var + eps);
        T sum_h = T(0), sum_hx = T(0);
        for (std::size_t c = 0; c < d; ++c) {
          T xhat = (tx.at(r, c) - mean) * inv;
          T h = g.at(r, c) * tg[c];
          gg[c] += g.at(r, c) * xhat;
          gb[c] += g.at(r, c);
          sum_h += h;
          sum_hx += h * xhat;
        }
        T mh = sum_h / static_cast<T>(d);
        T mhx = sum_hx / static_cast<T>(d);
        for (std::size_t c = 0; c < d; ++c) {
          T xhat = (tx.at(r, c) - mean) * inv;
          T h = g.at(r, c) * tg[c];
          gx.at(r, c) += inv * (h - mh - xhat * mhx);
        }
      }
    });
  }

  Ref gelu(Ref a) {
    Tensor<T> out = val(a);
    for (auto& v : out) v = gelu_scalar(v);
    return push(std::move(out), [a](Tape& t, Ref self) {
      const auto& x = t.val(a);
      const auto& g = t.gradref(self);
      auto& ga = t.gradref(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gelu_grad_scalar(x[i]);
    });
  }

  Ref relu(Ref a) {
    Tensor<T> out = val(a);
    for (auto& v : out) v = v > T(0) ? v : T(0);
    return push(std::move(out), [a](Tape& t, Ref self) {
      const auto& x = t.val(a);
      const auto& g = t.gradref(self);
      auto& ga = t.gradref(a);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > T(0)) ga[i] += g[i];
    });
  }

  // out row r = table[idx[r]].
  Ref gather_rows(Ref table, std::vector<std::size_t> idx) {
    const auto& tt = val(table);
    std::size_t d = tt.cols();
    Tensor<T> out({idx.size(), d});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] >= tt.rows()) fail(errc::argument, "gather_rows: index out of range");
      for (std::size_t c = 0; c < d; ++c) out.at(r, c) = tt.at(idx[r], c);
    }
    return push(std::move(out), [table, idx](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      auto& gt = t.gradref(table);
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gt.at(idx[r], c) += g.at(r, c);
    });
  }

  // out row r = mean of table rows listed in lists[r]; empty list gives zeros.
  Ref embed_bag(Ref table, std::vector<std::vector<std::size_t>> lists) {
    const auto& tt = val(table);
    std::size_t d = tt.cols();
    Tensor<T> out({lists.size(), d});
    for (std::size_t r = 0; r < lists.size(); ++r) {
      if (lists[r].empty()) continue;
      for (std::size_t b : lists[r]) {
        if (b >= tt.rows()) fail(errc::argument, "embed_bag: bucket out of range");
        for (std::size_t c = 0; c < d; ++c) out.at(r, c) += tt.at(b, c);
      }
      T inv = T(1) / static_cast<T>(lists[r].size());
      for (std::size_t c = 0; c < d; ++c) out.at(r, c) *= inv;
    }
    return push(std::move(out), [table, lists](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      auto& gt = t.gradref(table);
      for (std::size_t r = 0; r < lists.size(); ++r) {
        if (lists[r].empty()) continue;
        T inv = T(1) / static_cast<T>(lists[r].size());
        for (std::size_t b : lists[r])
          for (std::size_t c = 0; c < g.cols(); ++c) gt.at(b, c) += g.at(r, c) * inv;
      }
    });
  }

  // x (C,H,W) convolved with w (O,C,KH,KW), bias b (O), zero padding.
  Ref conv2d(Ref x, Ref w, Ref b, std::size_t stride, std::size_t pad) {
    const auto& tx = val(x);
    const auto& tw = val(w);
    const auto& tb = val(b);
    if (tx.rank() != 3 || tw.rank() != 4 || tw.dim(1) != tx.dim(0) || tb.size() != tw.dim(0))
      fail(errc::shape, "conv2d: dimension mismatch");
    std::size_t C = tx.dim(0), H = tx.dim(1), W = tx.dim(2);
    std::size_t O = tw.dim(0), KH = tw.dim(2), KW = tw.dim(3);
    std::size_t HO = (H + 2 * pad - KH) / stride + 1;
    std::size_t WO = (W + 2 * pad - KW) / stride + 1;
    Tensor<T> out({O, HO, WO});
    auto xat = [&](std::size_t c, std::ptrdiff_t i, std::ptrdiff_t j) -> T {
      if (i < 0 || j < 0 || i >= static_cast<std::ptrdiff_t>(H) || j >= static_cast<std::ptrdiff_t>(W))
        return T(0);
      return tx[(c * H + static_cast<std::size_t>(i)) * W + static_cast<std::size_t>(j)];
    };
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < HO; ++i)
        for (std::size_t j = 0; j < WO; ++j) {
          T acc = tb[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < KH; ++u)
              for (std::size_t v = 0; v < KW; ++v)
                acc += tw[((o * C + c) * KH + u) * KW + v] *
                       xat(c, static_cast<std::ptrdiff_t>(i * stride + u) - static_cast<std::ptrdiff_t>(pad),
                           static_cast<std::ptrdiff_t>(j * stride + v) - static_cast<std::ptrdiff_t>(pad));
          out[(o * HO + i) * WO + j] = acc;
        }
    return push(std::move(out), [x, w, b, stride, pad](Tape& t, Ref self) {
      const auto& tx = t.val(x);
      const auto& tw = t.val(w);
      const auto& g = t.gradref(self);
      auto& gx = t.gradref(x);
      auto& gw = t.gradref(w);
      auto& gb = t.gradref(b);
      std::size_t C = tx.dim(0), H = tx.dim(1), W = tx.dim(2);
      std::size_t O = tw.dim(0), KH = tw.dim(2), KW = tw.dim(3);
      std::size_t HO = g.dim(1), WO = g.dim(2);
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t i = 0; i < HO; ++i)
          for (std::size_t j = 0; j < WO; ++j) {
            T go = g[(o * HO + i) * WO + j];
            gb[o] += go;
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t u = 0; u < KH; ++u)
                for (std::size_t v = 0; v < KW; ++v) {
                  std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(i * stride + u) - static_cast<std::ptrdiff_t>(pad);
                  std::ptrdiff_t xj = static_cast<std::ptrdiff_t>(j * stride + v) - static_cast<std::ptrdiff_t>(pad);
                  if (yi < 0 || xj < 0 || yi >= static_cast<std::ptrdiff_t>(H) ||
                      xj >= static_cast<std::ptrdiff_t>(W))
                    continue;
                  std::size_t xi = (c * H + static_cast<std::size_t>(yi)) * W + static_cast<std::size_t>(xj);
                  gw[((o * C + c) * KH + u) * KW + v] += go * tx[xi];
                  gx[xi] += go * tw[((o * C + c) * KH + u) * KW + v];
                }
          }
    });
  }

  // (C,H,W) -> length-C vector of spatial means.
  Ref global_mean_pool(Ref x) {
    const auto& tx = val(x);
    if (tx.rank() != 3) fail(errc::shape, "global_mean_pool: rank-3 input required");
    std::size_t C = tx.dim(0), HW = tx.dim(1) * tx.dim(2);
    Tensor<T> out({C});
    for (std::size_t c = 0; c < C; ++c) {
      T acc = T(0);
      for (std::size_t i = 0; i < HW; ++i) acc += tx[c * HW + i];
      out[c] = acc / static_cast<T>(HW);
    }
    return push(std::move(out), [x, C, HW](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      auto& gx = t.gradref(x);
      T inv = T(1) / static_cast<T>(HW);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < HW; ++i) gx[c * HW + i] += g[c] * inv;
    });
  }

  Ref sum(Ref a) {
    const auto& ta = val(a);
    T acc = T(0);
    for (T v : ta) acc += v;
    Tensor<T> out({1});
    out[0] = acc;
    return push(std::move(out), [a](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      auto& ga = t.gradref(a);
      for (auto& v : ga) v += g[0];
    });
  }

  // Sum of squared errors against a constant target over valid rows of a
  // (n x 1) or length-n prediction. `valid` empty means all rows count.
  Ref sq_err_sum(Ref pred, Tensor<T> truth, std::vector<std::uint8_t> valid = {}) {
    const auto& tp = val(pred);
    if (tp.size() != truth.size()) fail(errc::shape, "sq_err_sum: size mismatch");
    if (!valid.empty() && valid.size() != tp.size()) fail(errc::shape, "sq_err_sum: mask mismatch");
    T acc = T(0);
    for (std::size_t i = 0; i < tp.size(); ++i) {
      if (!valid.empty() && !valid[i]) continue;
      T d = tp[i] - truth[i];
      acc += d * d;
    }
    Tensor<T> out({1});
    out[0] = acc;
    return push(std::move(out), [pred, truth = std::move(truth), valid](Tape& t, Ref self) {
      const auto& g = t.gradref(self);
      const auto& tp = t.val(pred);
      auto& gp = t.gradref(pred);
      for (std::size_t i = 0; i < tp.size(); ++i) {
        if (!valid.empty() && !valid[i]) continue;
        gp[i] += T(2) * (tp[i] - truth[i]) * g[0];
      }
    });
  }

  // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse. Root must be a
  // scalar node.
  void backward(Ref root) {
    auto& r = nodes_[static_cast<std::size_t>(root)];
    if (r.value.size() != 1) fail(errc::argument, "backward: root must be scalar");
    r.grad[0] = T(1);
    for (std::int32_t i = root; i >= 0; --i) {
      if (nodes_[static_cast<std::size_t>(i)].back) nodes_[static_cast<std::size_t>(i)].back(*this, i);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&, Ref)> back;
  };

  Tensor<T>& gradref(Ref r) { return nodes_[static_cast<std::size_t>(r)].grad; }

  Ref push(Tensor<T> value, std::function<void(Tape&, Ref)> back) {
    Node n;
    n.grad = Tensor<T>(value.shape());
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Ref>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

}  // namespace gq::num
