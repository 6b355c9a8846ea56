#include "dialoflow/blockmask.hpp"

#include <stdexcept>

namespace dialoflow::blockmask {

void MaskSpec::validate() const {
  if (block < 1) throw std::invalid_argument("MaskSpec: block size must be >= 1");
  if (back < 0 || forward < 0) throw std::invalid_argument("MaskSpec: extents must be >= 0");
}

bool MaskSpec::allows(int64_t i, int64_t j) const {
  int64_t d = block_of(j, block) - block_of(i, block);
  return -back <= d && d <= forward;
}

int64_t block_of(int64_t i, int64_t b) {
  if (i < 0 || b < 1) throw std::invalid_argument("block_of: need i >= 0, b >= 1");
  return i / b;
}

BlockMask build_mask(int64_t n, const MaskSpec& spec) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("build_mask: n must be >= 1");
  BlockMask out;
  out.n = n;
  out.spec = spec;
  out.matrix = nn::BoolMatrix(n, n, 0);
  for (int64_t i = 0; i < n; ++i) {
    int64_t bi = i / spec.block;
    int64_t lo = std::max<int64_t>(0, (bi - spec.back) * spec.block);
    int64_t hi = std::min<int64_t>(n, (bi + spec.forward + 1) * spec.block);
    for (int64_t j = lo; j < hi; ++j) out.matrix.set(i, j, true);
  }
  return out;
}

ReceptiveField receptive_field(std::span<const MaskSpec> layers) {
  if (layers.empty()) return {};
  int64_t b = layers[0].block;
  ReceptiveField rf;
  for (const MaskSpec& s : layers) {
    s.validate();
    if (s.block != b) throw std::invalid_argument("receptive_field: mixed block sizes");
    rf.back += s.back;
    rf.forward += s.forward;
  }
  return rf;
}

BlockMask compose_reachability(std::span<const BlockMask> masks) {
  if (masks.empty()) throw std::invalid_argument("compose_reachability: empty stack");
  int64_t n = masks[0].n;
  for (const BlockMask& m : masks) {
    if (m.n != n) throw std::invalid_argument("compose_reachability: size mismatch");
  }
  // reach = M_L * ... * M_1 over booleans; start from M_1 and left-multiply.
  nn::BoolMatrix reach = masks[0].matrix;
  for (size_t l = 1; l < masks.size(); ++l) {
    const nn::BoolMatrix& m = masks[l].matrix;
    nn::BoolMatrix next(n, n, 0);
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t k = 0; k < n; ++k) {
        if (!m.at(i, k)) continue;
        for (int64_t j = 0; j < n; ++j) {
          if (reach.at(k, j)) next.set(i, j, true);
        }
      }
    }
    reach = std::move(next);
  }
  BlockMask out;
  out.n = n;
  out.spec = masks[0].spec;
  out.matrix = std::move(reach);
  return out;
}

}  // namespace dialoflow::blockmask
