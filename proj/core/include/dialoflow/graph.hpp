#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dialoflow/tensor.hpp"

namespace dialoflow::nn {

// Additive pre-softmax penalty for masked attention positions. Large enough
// that exp underflows to exactly 0.0, which makes masked positions bitwise
// invisible to the softmax.
inline constexpr double kMaskNeg = -1e30;

// Boolean matrix used for attention masks inside the graph. Row-major.
struct BoolMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<uint8_t> data;

  BoolMatrix() = default;
  BoolMatrix(int64_t r, int64_t c, uint8_t fill = 0)
      : rows(r), cols(c), data(static_cast<size_t>(r * c), fill) {}

  uint8_t at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols + c)]; }
  void set(int64_t r, int64_t c, bool v) { data[static_cast<size_t>(r * cols + c)] = v ? 1 : 0; }
};

// Handle into a Tape. Valid only for the tape that created it.
struct Val {
  int32_t idx = -1;
  bool valid() const { return idx >= 0; }
};

// Define-by-run reverse-mode tape. Values are computed eagerly as ops are
// recorded; backward() replays the recorded closures in reverse order.
// Every op validates that its output is finite.
class Tape {
 public:
  using BackFn = std::function<void(Tape&, Val)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Val leaf(Tensor value, bool requires_grad = true);
  Val constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Val v) const { return nodes_[static_cast<size_t>(v.idx)].value; }
  const Tensor& grad(Val v) const;
  bool has_grad(Val v) const;
  bool wants(Val v) const;
  Tensor& grad_buf(Val v);

  size_t size() const { return nodes_.size(); }

  // --- elementwise / linear algebra ---
  Val add(Val a, Val b);                 // same shape
  Val sub(Val a, Val b);
  Val mul(Val a, Val b);                 // elementwise
  Val scale(Val a, double s);
  Val add_rowvec(Val m, Val row);        // [n x d] + [1 x d] (or rank-1 d)
  Val matmul(Val a, Val b);              // [m x k] * [k x n]
  Val matmul_nt(Val a, Val b);           // [m x k] * [n x k]^T -> [m x n]

  // --- shape plumbing ---
  Val slice_rows(Val a, int64_t r0, int64_t r1);
  Val slice_cols(Val a, int64_t c0, int64_t c1);
  Val concat_rows(std::span<const Val> parts);
  Val concat_cols(std::span<const Val> parts);

  // --- nonlinearities ---
  Val softmax_rows(Val a);
  Val gelu(Val a);
  Val layernorm(Val x, Val gain, Val bias, double eps = 1e-5);

  // Adds kMaskNeg wherever mask is 0. Throws "empty receptive field" if any
  // row of the mask is all zero.
  Val mask_scores(Val scores, const BoolMatrix& mask);

  // --- gathers ---
  Val gather_rows(Val table, std::vector<int32_t> ids);

  // --- losses (scalar outputs, shape {1}) ---
  // Sum (or mean) of -log softmax(logits)[t, target_t] over rows where
  // active[t] != 0 (all rows when active is empty). Throws if a target id is
  // out of range or no row is active.
  Val cross_entropy(Val logits, std::vector<int32_t> targets,
                    std::vector<uint8_t> active = {}, bool mean = false);
  // Mean of (pred - target)^2 over rows with row_mask != 0 (all entries of
  // those rows). Throws "empty target region" if no row is selected.
  Val mse_rows(Val pred, const Tensor& target, std::vector<uint8_t> row_mask);

  Val sum(Val a);  // sum of all entries -> {1}

  void backward(Val loss);

  // Peak size (entries) of any single materialized attention-score matrix
  // since the last reset. Used by chunked-decoding memory accounting.
  static int64_t attention_entries_peak();
  static void reset_attention_entries_peak();

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily in backward()
    bool requires_grad = false;
    BackFn back;  // empty for leaves/constants
  };

  Val push(Tensor value, bool requires_grad, BackFn back);
  Node& node(Val v) { return nodes_[static_cast<size_t>(v.idx)]; }

  std::vector<Node> nodes_;
};

// Scaled-dot-product attention with boolean mask: softmax(Q K^T / sqrt(d) +
// mask penalty) V. Mask must be [T x T] with at least one allowed position
// per row.
Val attention(Tape& t, Val q, Val k, Val v, const BoolMatrix& mask);

BoolMatrix full_mask(int64_t n);
BoolMatrix causal_mask(int64_t n);  // j <= i

}  // namespace dialoflow::nn
