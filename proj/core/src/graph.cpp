#include "dialoflow/graph.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace dialoflow::nn {

namespace {

std::atomic<int64_t> g_attn_peak{0};

void note_attention_entries(int64_t n) {
  int64_t cur = g_attn_peak.load(std::memory_order_relaxed);
  while (n > cur && !g_attn_peak.compare_exchange_weak(cur, n, std::memory_order_relaxed)) {
  }
}

// C += A * B, A: [m x k], B: [k x n]
void mm_nn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      double av = ai[kk];
      if (av == 0.0) continue;
      const double* bk = b + kk * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

// C += A * B^T, A: [m x k], B: [n x k]
void mm_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
      ci[j] += s;
    }
  }
}

// C += A^T * B, A: [k x m], B: [k x n]
void mm_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t kk = 0; kk < k; ++kk) {
    const double* ak = a + kk * m;
    const double* bk = b + kk * n;
    for (int64_t i = 0; i < m; ++i) {
      double av = ak[i];
      if (av == 0.0) continue;
      double* ci = c + i * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Val Tape::push(Tensor value, bool requires_grad, BackFn back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Val{static_cast<int32_t>(nodes_.size() - 1)};
}

Val Tape::leaf(Tensor value, bool requires_grad) {
  check_finite(value, "leaf");
  return push(std::move(value), requires_grad, nullptr);
}

const Tensor& Tape::grad(Val v) const {
  const Node& n = nodes_[static_cast<size_t>(v.idx)];
  if (n.grad.numel() != n.value.numel()) {
    throw std::logic_error("Tape::grad: backward() did not reach this node");
  }
  return n.grad;
}

bool Tape::has_grad(Val v) const {
  const Node& n = nodes_[static_cast<size_t>(v.idx)];
  return n.grad.numel() == n.value.numel() && n.value.numel() > 0;
}

Tensor& Tape::grad_buf(Val v) {
  Node& n = node(v);
  if (n.grad.numel() != n.value.numel()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

bool Tape::wants(Val v) const { return nodes_[static_cast<size_t>(v.idx)].requires_grad; }

Val Tape::add(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb),
          "add: shape mismatch " + shape_str(ta.shape()) + " vs " + shape_str(tb.shape()));
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.numel(); ++i) out.at(i) = ta.at(i) + tb.at(i);
  check_finite(out, "add");
  return push(std::move(out), wants(a) || wants(b), [a, b](Tape& t, Val self) {
    const Tensor& g = t.grad(self);
    if (t.wants(a)) {
      Tensor& da = t.grad_buf(a);
      for (int64_t i = 0; i < g.numel(); ++i) da.at(i) += g.at(i);
    }
    if (t.wants(b)) {
      Tensor& db = t.grad_buf(b);
      for (int64_t i = 0; i < g.numel(); ++i) db.at(i) += g.at(i);
    }
  });
}

Val Tape::sub(Val a, Val b) { return add(a, scale(b, -1.0)); }

Val Tape::mul(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb), "mul: shape mismatch");
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.numel(); ++i) out.at(i) = ta.at(i) * tb.at(i);
  check_finite(out, "mul");
  return push(std::move(out), wants(a) || wants(b), [a, b](Tape& t, Val self) {
    const Tensor& g = t.grad(self);
    const Tensor& ta = t.value(a);
    const Tensor& tb = t.value(b);
    if (t.wants(a)) {
      Tensor& da = t.grad_buf(a);
      for (int64_t i = 0; i < g.numel(); ++i) da.at(i) += g.at(i) * tb.at(i);
    }
    if (t.wants(b)) {
      Tensor& db = t.grad_buf(b);
      for (int64_t i = 0; i < g.numel(); ++i) db.at(i) += g.at(i) * ta.at(i);
    }
  });
}

Val Tape::scale(Val a, double s) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  for (int64_t i = 0; i < ta.numel(); ++i) out.at(i) = ta.at(i) * s;
  check_finite(out, "scale");
  return push(std::move(out), wants(a), [a, s](Tape& t, Val self) {
    if (!t.wants(a)) return;
    const Tensor& g = t.grad(self);
    Tensor& da = t.grad_buf(a);
    for (int64_t i = 0; i < g.numel(); ++i) da.at(i) += g.at(i) * s;
  });
}

Val Tape::add_rowvec(Val m, Val row) {
  const Tensor& tm = value(m);
  const Tensor& tr = value(row);
  require(tm.cols() == tr.cols() && tr.rows() == 1, "add_rowvec: incompatible shapes");
  Tensor out(tm.shape());
  for (int64_t r = 0; r < tm.rows(); ++r)
    for (int64_t c = 0; c < tm.cols(); ++c) out.at(r, c) = tm.at(r, c) + tr.at(0, c);
  check_finite(out, "add_rowvec");
  return push(std::move(out), wants(m) || wants(row), [m, row](Tape& t, Val self) {
    const Tensor& g = t.grad(self);
    if (t.wants(m)) {
      Tensor& dm = t.grad_buf(m);
      for (int64_t i = 0; i < g.numel(); ++i) dm.at(i) += g.at(i);
    }
    if (t.wants(row)) {
      Tensor& dr = t.grad_buf(row);
      for (int64_t r = 0; r < g.rows(); ++r)
        for (int64_t c = 0; c < g.cols(); ++c) dr.at(c) += g.at(r, c);
    }
  });
}

Val Tape::matmul(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.cols() == tb.rows(), "matmul: inner dimension mismatch");
  Tensor out({ta.rows(), tb.cols()});
  mm_nn_acc(ta.raw(), tb.raw(), out.raw(), ta.rows(), ta.cols(), tb.cols());
  check_finite(out, "matmul");
  return push(std::move(out), wants(a) || wants(b), [a, b](Tape& t, Val self) {
    const Tensor& g = t.grad(self);
    const Tensor& ta = t.value(a);
    const Tensor& tb = t.value(b);
    if (t.wants(a)) {
      // dA += g * B^T
      mm_nt_acc(g.raw(), tb.raw(), t.grad_buf(a).raw(), g.rows(), g.cols(), tb.rows());
    }
    if (t.wants(b)) {
      // dB += A^T * g
      mm_tn_acc(ta.raw(), g.raw(), t.grad_buf(b).raw(), ta.cols(), ta.rows(), g.cols());
    }
  });
}

Val Tape::matmul_nt(Val a, Val b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.cols() == tb.cols(), "matmul_nt: inner dimension mismatch");
  Tensor out({ta.rows(), tb.rows()});
  mm_nt_acc(ta.raw(), tb.raw(), out.raw(), ta.rows(), ta.cols(), tb.rows());
  check_finite(out, "matmul_nt");
  return push(std::move(out), wants(a) || wants(b), [a, b](Tape& t, Val self) {
    const Tensor& g = t.grad(self);
    const Tensor& ta = t.value(a);
    const Tensor& tb = t.value(b);
    if (t.wants(a)) {
      // dA += g * B
      mm_nn_acc(g.raw(), tb.raw(), t.grad_buf(a).raw(), g.rows(), g.cols(), tb.cols());
    }
    if (t.wants(b)) {
      // dB += g^T * A
      mm_tn_acc(g.raw(), ta.raw(), t.grad_buf(b).raw(), g.cols(), g.rows(), ta.cols());
    }
  });
}

Val Tape::slice_rows(Val a, int64_t r0, int64_t r1) {
  const Tensor& ta = value(a);
  require(0 <= r0 && r0 <= r1 && r1 <= ta.rows(), "slice_rows: range out of bounds");
  int64_t d = ta.cols();
  Tensor out({r1 - r0, d});
  for (int64_t r = r0; r < r1; ++r)
    for (int64_t c = 0; c < d; ++c) out.at(r - r0, c) = ta.at(r, c);
  return push(std::move(out), wants(a), [a, r0](Tape& t, Val self) {
    if (!t.wants(a)) return;
    const Tensor& g = t.grad(self);
    Tensor& da = t.grad_buf(a);
    for (int64_t r = 0; r < g.rows(); ++r)
      for (int64_t c = 0; c < g.cols(); ++c) da.at(r0 + r, c) += g.at(r, c);
  });
}

Val Tape::slice_cols(Val a, int64_t c0, int64_t c1) {
  const Tensor& ta = value(a);
  require(0 <= c0 && c0 <= c1 && c1 <= ta.cols(), "slice_cols: range out of bounds");
  Tensor out({ta.rows(), c1 - c0});
  for (int64_t r = 0; r < ta.rows(); ++r)
    for (int64_t c = c0; c < c1; ++c) out.at(r, c - c0) = ta.at(r, c);
  return push(std::move(out), wants(a), [a, c0](Tape& t, Val self) {
    if (!t.wants(a)) return;
    const Tensor& g = t.grad(self);
    Tensor& da = t.grad_buf(a);
    for (int64_t r = 0; r < g.rows(); ++r)
      for (int64_t c = 0; c < g.cols(); ++c) da.at(r, c0 + c) += g.at(r, c);
  });
}

Val Tape::concat_rows(std::span<const Val> parts) {
  require(!parts.empty(), "concat_rows: empty");
  int64_t d = value(parts[0]).cols();
  int64_t rows = 0;
  bool rg = false;
  for (Val p : parts) {
    require(value(p).cols() == d, "concat_rows: column mismatch");
    rows += value(p).rows();
    rg = rg || wants(p);
  }
  Tensor out({rows, d});
  int64_t r = 0;
  std::vector<Val> ps(parts.begin(), parts.end());
  for (Val p : parts) {
    const Tensor& tp = value(p);
    for (int64_t i = 0; i < tp.rows(); ++i, ++r)
      for (int64_t c = 0; c < d; ++c) out.at(r, c) = tp.at(i, c);
  }
  return push(std::move(out), rg, [ps](Tape& t, Val self) {
    const Tensor& g = t.grad(self);
    int64_t r0 = 0;
    for (Val p : ps) {
      int64_t pr = t.value(p).rows();
      if (t.wants(p)) {
        Tensor& dp = t.grad_buf(p);
        for (int64_t i = 0; i < pr; ++i)
          for (int64_t c = 0; c < g.cols(); ++c) dp.at(i, c) += g.at(r0 + i, c);
      }
      r0 += pr;
    }
  });
}

Val Tape::concat_cols(std::span<const Val> parts) {
  require(!parts.empty(), "concat_cols: empty");
  int64_t rows = value(parts[0]).rows();
  int64_t cols = 0;
  bool rg = false;
  for (Val p : parts) {
    require(value(p).rows() == rows, "concat_cols: row mismatch");
    cols += value(p).cols();
    rg = rg || wants(p);
  }
  Tensor out({rows, cols});
  int64_t c0 = 0;
  std::vector<Val> ps(parts.begin(), parts.end());
  for (Val p : parts) {
    const Tensor& tp = value(p);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < tp.cols(); ++c) out.at(r, c0 + c) = tp.at(r, c);
    c0 += tp.cols();
  }
  return push(std::move(out), rg, [ps](Tape& t, Val self) {
    const Tensor& g = t.grad(self);
    int64_t c0 = 0;
    for (Val p : ps) {
      int64_t pc = t.value(p).cols();
      if (t.wants(p)) {
        Tensor& dp = t.grad_buf(p);
        for (int64_t r = 0; r < g.rows(); ++r)
          for (int64_t c = 0; c < pc; ++c) dp.at(r, c) += g.at(r, c0 + c);
      }
      c0 += pc;
    }
  });
}

Val Tape::softmax_rows(Val a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  int64_t n = ta.rows(), d = ta.cols();
  for (int64_t r = 0; r < n; ++r) {
    double mx = ta.at(r, 0);
    for (int64_t c = 1; c < d; ++c) mx = std::max(mx, ta.at(r, c));
    double sum = 0.0;
    for (int64_t c = 0; c < d; ++c) {
      double e = std::exp(ta.at(r, c) - mx);
      out.at(r, c) = e;
      sum += e;
    }
    for (int64_t c = 0; c < d; ++c) out.at(r, c) /= sum;
  }
  check_finite(out, "softmax");
  return push(std::move(out), wants(a), [a](Tape& t, Val self) {
    if (!t.wants(a)) return;
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& da = t.grad_buf(a);
    for (int64_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (int64_t c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
      for (int64_t c = 0; c < y.cols(); ++c)
        da.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
    }
  });
}

Val Tape::gelu(Val a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape());
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (int64_t i = 0; i < ta.numel(); ++i) {
    double x = ta.at(i);
    out.at(i) = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  }
  check_finite(out, "gelu");
  return push(std::move(out), wants(a), [a](Tape& t, Val self) {
    if (!t.wants(a)) return;
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(a);
    Tensor& da = t.grad_buf(a);
    for (int64_t i = 0; i < g.numel(); ++i) {
      double xi = x.at(i);
      double cdf = 0.5 * (1.0 + std::erf(xi * inv_sqrt2));
      double pdf = inv_sqrt2pi * std::exp(-0.5 * xi * xi);
      da.at(i) += g.at(i) * (cdf + xi * pdf);
    }
  });
}

Val Tape::layernorm(Val x, Val gain, Val bias, double eps) {
  const Tensor& tx = value(x);
  const Tensor& tg = value(gain);
  const Tensor& tb = value(bias);
  int64_t n = tx.rows(), d = tx.cols();
  require(tg.numel() == d && tb.numel() == d, "layernorm: gain/bias size mismatch");
  Tensor out(tx.shape());
  std::vector<double> mus(static_cast<size_t>(n)), invs(static_cast<size_t>(n));
  for (int64_t r = 0; r < n; ++r) {
    double mu = 0.0;
    for (int64_t c = 0; c < d; ++c) mu += tx.at(r, c);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t c = 0; c < d; ++c) {
      double dv = tx.at(r, c) - mu;
      var += dv * dv;
    }
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + eps);
    mus[static_cast<size_t>(r)] = mu;
    invs[static_cast<size_t>(r)] = inv;
    for (int64_t c = 0; c < d; ++c)
      out.at(r, c) = (tx.at(r, c) - mu) * inv * tg.at(c) + tb.at(c);
  }
  check_finite(out, "layernorm");
  bool rg = wants(x) || wants(gain) || wants(bias);
  return push(std::move(out), rg,
              [x, gain, bias, mus = std::move(mus), invs = std::move(invs)](Tape& t, Val self) {
                const Tensor& g = t.grad(self);
                const Tensor& tx = t.value(x);
                const Tensor& tg = t.value(gain);
                int64_t n = tx.rows(), d = tx.cols();
                for (int64_t r = 0; r < n; ++r) {
                  double mu = mus[static_cast<size_t>(r)];
                  double inv = invs[static_cast<size_t>(r)];
                  if (t.wants(gain)) {
                    Tensor& dg = t.grad_buf(gain);
                    for (int64_t c = 0; c < d; ++c)
                      dg.at(c) += g.at(r, c) * (tx.at(r, c) - mu) * inv;
                  }
                  if (t.wants(bias)) {
                    Tensor& db = t.grad_buf(bias);
                    for (int64_t c = 0; c < d; ++c) db.at(c) += g.at(r, c);
                  }
                  if (t.wants(x)) {
                    Tensor& dx = t.grad_buf(x);
                    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                    for (int64_t c = 0; c < d; ++c) {
                      double xh = (tx.at(r, c) - mu) * inv;
                      double dxh = g.at(r, c) * tg.at(c);
                      sum_dxh += dxh;
                      sum_dxh_xh += dxh * xh;
                    }
                    double invd = 1.0 / static_cast<double>(d);
                    for (int64_t c = 0; c < d; ++c) {
                      double xh = (tx.at(r, c) - mu) * inv;
                      double dxh = g.at(r, c) * tg.at(c);
                      dx.at(r, c) += inv * (dxh - invd * sum_dxh - xh * invd * sum_dxh_xh);
                    }
                  }
                }
              });
}

Val Tape::mask_scores(Val scores, const BoolMatrix& mask) {
  const Tensor& ts = value(scores);
  require(ts.rows() == mask.rows && ts.cols() == mask.cols, "mask_scores: mask shape mismatch");
  note_attention_entries(ts.numel());
  Tensor out(ts.shape());
  for (int64_t r = 0; r < mask.rows; ++r) {
    bool any = false;
    for (int64_t c = 0; c < mask.cols; ++c) {
      if (mask.at(r, c)) {
        out.at(r, c) = ts.at(r, c);
        any = true;
      } else {
        out.at(r, c) = ts.at(r, c) + kMaskNeg;
      }
    }
    if (!any) throw std::invalid_argument("empty receptive field at row " + std::to_string(r));
  }
  return push(std::move(out), wants(scores), [scores](Tape& t, Val self) {
    if (!t.wants(scores)) return;
    const Tensor& g = t.grad(self);
    Tensor& da = t.grad_buf(scores);
    for (int64_t i = 0; i < g.numel(); ++i) da.at(i) += g.at(i);
  });
}

Val Tape::gather_rows(Val table, std::vector<int32_t> ids) {
  const Tensor& tt = value(table);
  int64_t d = tt.cols();
  Tensor out({static_cast<int64_t>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i) {
    int32_t id = ids[i];
    require(id >= 0 && id < tt.rows(), "gather_rows: id out of range: " + std::to_string(id));
    for (int64_t c = 0; c < d; ++c) out.at(static_cast<int64_t>(i), c) = tt.at(id, c);
  }
  return push(std::move(out), wants(table), [table, ids = std::move(ids)](Tape& t, Val self) {
    if (!t.wants(table)) return;
    const Tensor& g = t.grad(self);
    Tensor& dt = t.grad_buf(table);
    for (size_t i = 0; i < ids.size(); ++i)
      for (int64_t c = 0; c < g.cols(); ++c)
        dt.at(ids[i], c) += g.at(static_cast<int64_t>(i), c);
  });
}

Val Tape::cross_entropy(Val logits, std::vector<int32_t> targets, std::vector<uint8_t> active,
                        bool mean) {
  const Tensor& tl = value(logits);
  int64_t n = tl.rows(), v = tl.cols();
  require(static_cast<int64_t>(targets.size()) == n, "cross_entropy: target length mismatch");
  require(active.empty() || static_cast<int64_t>(active.size()) == n,
          "cross_entropy: active length mismatch");
  int64_t count = 0;
  double total = 0.0;
  for (int64_t r = 0; r < n; ++r) {
    if (!active.empty() && !active[static_cast<size_t>(r)]) continue;
    int32_t tgt = targets[static_cast<size_t>(r)];
    require(tgt >= 0 && tgt < v, "cross_entropy: target id out of range: " + std::to_string(tgt));
    double mx = tl.at(r, 0);
    for (int64_t c = 1; c < v; ++c) mx = std::max(mx, tl.at(r, c));
    double sum = 0.0;
    for (int64_t c = 0; c < v; ++c) sum += std::exp(tl.at(r, c) - mx);
    total += (mx + std::log(sum)) - tl.at(r, tgt);
    ++count;
  }
  require(count > 0, "cross_entropy: no active positions");
  if (mean) total /= static_cast<double>(count);
  Tensor out = Tensor::scalar(total);
  check_finite(out, "cross_entropy");
  return push(std::move(out), wants(logits),
              [logits, targets = std::move(targets), active = std::move(active), mean,
               count](Tape& t, Val self) {
                if (!t.wants(logits)) return;
                double go = t.grad(self).at(0);
                if (mean) go /= static_cast<double>(count);
                const Tensor& tl = t.value(logits);
                Tensor& dl = t.grad_buf(logits);
                int64_t n = tl.rows(), v = tl.cols();
                for (int64_t r = 0; r < n; ++r) {
                  if (!active.empty() && !active[static_cast<size_t>(r)]) continue;
                  double mx = tl.at(r, 0);
                  for (int64_t c = 1; c < v; ++c) mx = std::max(mx, tl.at(r, c));
                  double sum = 0.0;
                  for (int64_t c = 0; c < v; ++c) sum += std::exp(tl.at(r, c) - mx);
                  for (int64_t c = 0; c < v; ++c) {
                    double p = std::exp(tl.at(r, c) - mx) / sum;
                    double onehot = (c == targets[static_cast<size_t>(r)]) ? 1.0 : 0.0;
                    dl.at(r, c) += go * (p - onehot);
                  }
                }
              });
}

Val Tape::mse_rows(Val pred, const Tensor& target, std::vector<uint8_t> row_mask) {
  const Tensor& tp = value(pred);
  require(tp.same_shape(target), "mse_rows: shape mismatch");
  require(row_mask.empty() || static_cast<int64_t>(row_mask.size()) == tp.rows(),
          "mse_rows: mask length mismatch");
  int64_t count = 0;
  double total = 0.0;
  for (int64_t r = 0; r < tp.rows(); ++r) {
    if (!row_mask.empty() && !row_mask[static_cast<size_t>(r)]) continue;
    for (int64_t c = 0; c < tp.cols(); ++c) {
      double d = tp.at(r, c) - target.at(r, c);
      total += d * d;
    }
    ++count;
  }
  if (count == 0) throw std::invalid_argument("empty target region");
  int64_t denom = count * tp.cols();
  total /= static_cast<double>(denom);
  Tensor out = Tensor::scalar(total);
  check_finite(out, "mse_rows");
  return push(std::move(out), wants(pred),
              [pred, target, row_mask = std::move(row_mask), denom](Tape& t, Val self) {
                if (!t.wants(pred)) return;
                double go = t.grad(self).at(0);
                const Tensor& tp = t.value(pred);
                Tensor& dp = t.grad_buf(pred);
                double w = 2.0 * go / static_cast<double>(denom);
                for (int64_t r = 0; r < tp.rows(); ++r) {
                  if (!row_mask.empty() && !row_mask[static_cast<size_t>(r)]) continue;
                  for (int64_t c = 0; c < tp.cols(); ++c)
                    dp.at(r, c) += w * (tp.at(r, c) - target.at(r, c));
                }
              });
}

Val Tape::sum(Val a) {
  const Tensor& ta = value(a);
  double s = 0.0;
  for (int64_t i = 0; i < ta.numel(); ++i) s += ta.at(i);
  Tensor out = Tensor::scalar(s);
  check_finite(out, "sum");
  return push(std::move(out), wants(a), [a](Tape& t, Val self) {
    if (!t.wants(a)) return;
    double go = t.grad(self).at(0);
    Tensor& da = t.grad_buf(a);
    for (int64_t i = 0; i < da.numel(); ++i) da.at(i) += go;
  });
}

void Tape::backward(Val loss) {
  const Tensor& lv = value(loss);
  if (lv.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  grad_buf(loss).at(0) = 1.0;
  for (int64_t i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.back || !n.requires_grad) continue;
    if (n.grad.numel() != n.value.numel()) continue;  // no downstream contribution
    n.back(*this, Val{static_cast<int32_t>(i)});
  }
}

int64_t Tape::attention_entries_peak() { return g_attn_peak.load(std::memory_order_relaxed); }
void Tape::reset_attention_entries_peak() { g_attn_peak.store(0, std::memory_order_relaxed); }

Val attention(Tape& t, Val q, Val k, Val v, const BoolMatrix& mask) {
  int64_t d = t.value(q).cols();
  Val scores = t.matmul_nt(q, k);
  scores = t.scale(scores, 1.0 / std::sqrt(static_cast<double>(d)));
  scores = t.mask_scores(scores, mask);
  Val probs = t.softmax_rows(scores);
  return t.matmul(probs, v);
}

BoolMatrix full_mask(int64_t n) { return BoolMatrix(n, n, 1); }

BoolMatrix causal_mask(int64_t n) {
  BoolMatrix m(n, n, 0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j <= i; ++j) m.set(i, j, true);
  return m;
}

}  // namespace dialoflow::nn
