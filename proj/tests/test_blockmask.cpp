#include "doctest.h"

#include "dialoflow/blockmask.hpp"
#include "dialoflow/rng.hpp"

using namespace dialoflow;
using blockmask::BlockMask;
using blockmask::MaskSpec;

namespace {

// Brute-force double loop straight from the definition.
nn::BoolMatrix oracle_mask(int64_t n, const MaskSpec& s) {
  nn::BoolMatrix m(n, n, 0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) {
      int64_t d = j / s.block - i / s.block;
      m.set(i, j, -s.back <= d && d <= s.forward);
    }
  return m;
}

bool equal(const nn::BoolMatrix& a, const nn::BoolMatrix& b) {
  return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

}  // namespace

TEST_CASE("block_of: floor division") {
  CHECK(blockmask::block_of(0, 1) == 0);
  CHECK(blockmask::block_of(0, 7) == 0);
  CHECK(blockmask::block_of(5, 3) == 1);
  CHECK(blockmask::block_of(9, 3) == 3);
  CHECK_THROWS_AS(blockmask::block_of(-1, 3), std::invalid_argument);
  CHECK_THROWS_AS(blockmask::block_of(1, 0), std::invalid_argument);
}

TEST_CASE("build_mask: isolation pattern is block-diagonal") {
  BlockMask m = blockmask::build_mask(4, {2, 0, 0});
  nn::BoolMatrix expect(4, 4, 0);
  for (int64_t i : {0, 1})
    for (int64_t j : {0, 1}) expect.set(i, j, true);
  for (int64_t i : {2, 3})
    for (int64_t j : {2, 3}) expect.set(i, j, true);
  CHECK(equal(m.matrix, expect));
}

TEST_CASE("build_mask: history pattern attends self + preceding block") {
  BlockMask m = blockmask::build_mask(6, {2, 1, 0});
  for (int64_t i = 0; i < 6; ++i)
    for (int64_t j = 0; j < 6; ++j) {
      int64_t bi = i / 2, bj = j / 2;
      bool want = bj == bi || bj == bi - 1;
      CHECK(m.matrix.at(i, j) == (want ? 1 : 0));
    }
}

TEST_CASE("build_mask: future pattern attends self + next block") {
  BlockMask m = blockmask::build_mask(6, {2, 0, 1});
  for (int64_t i = 0; i < 6; ++i)
    for (int64_t j = 0; j < 6; ++j) {
      int64_t bi = i / 2, bj = j / 2;
      bool want = bj == bi || bj == bi + 1;
      CHECK(m.matrix.at(i, j) == (want ? 1 : 0));
    }
}

TEST_CASE("build_mask: symmetric tau equals the double-loop oracle, ragged tail kept") {
  BlockMask m = blockmask::build_mask(10, {3, 1, 1});
  CHECK(equal(m.matrix, oracle_mask(10, {3, 1, 1})));
  // Every row has at least its own block.
  for (int64_t i = 0; i < 10; ++i) CHECK(m.matrix.at(i, i) == 1);
}

TEST_CASE("build_mask: randomized oracle equality") {
  nn::RngState rng(11);
  for (int c = 0; c < 120; ++c) {
    int64_t n = rng.next_range(1, 64);
    MaskSpec s{rng.next_range(1, 8), rng.next_range(0, 3), rng.next_range(0, 3)};
    BlockMask m = blockmask::build_mask(n, s);
    CHECK(equal(m.matrix, oracle_mask(n, s)));
    // predicate form agrees with the materialized matrix
    for (int64_t i = 0; i < std::min<int64_t>(n, 8); ++i)
      for (int64_t j = 0; j < n; ++j) CHECK(m.matrix.at(i, j) == (s.allows(i, j) ? 1 : 0));
  }
}

TEST_CASE("build_mask: symmetric extents give a symmetric matrix") {
  nn::RngState rng(12);
  for (int c = 0; c < 40; ++c) {
    int64_t n = rng.next_range(1, 40);
    int64_t tau = rng.next_range(0, 3);
    BlockMask m = blockmask::build_mask(n, {rng.next_range(1, 6), tau, tau});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) CHECK(m.matrix.at(i, j) == m.matrix.at(j, i));
  }
}

TEST_CASE("receptive_field: sums extents, rejects mixed block sizes") {
  std::vector<MaskSpec> iso{{2, 0, 0}};
  auto rf = blockmask::receptive_field(iso);
  CHECK(rf.back == 0);
  CHECK(rf.forward == 0);

  std::vector<MaskSpec> hist2{{2, 1, 0}, {2, 1, 0}};
  rf = blockmask::receptive_field(hist2);
  CHECK(rf.back == 2);
  CHECK(rf.forward == 0);

  std::vector<MaskSpec> mixed{{2, 1, 0}, {2, 0, 1}, {2, 1, 1}};
  rf = blockmask::receptive_field(mixed);
  CHECK(rf.back == 2);
  CHECK(rf.forward == 2);

  std::vector<MaskSpec> bad{{2, 1, 0}, {3, 0, 1}};
  CHECK_THROWS_AS(blockmask::receptive_field(bad), std::invalid_argument);
}

TEST_CASE("compose_reachability: self-only composes to self-only; full mask absorbs") {
  BlockMask iso = blockmask::build_mask(6, {1, 0, 0});
  std::vector<BlockMask> two{iso, iso};
  BlockMask r = blockmask::compose_reachability(two);
  CHECK(equal(r.matrix, iso.matrix));

  BlockMask full = blockmask::build_mask(6, {6, 1, 1});  // one block: everything visible
  std::vector<BlockMask> with_full{iso, full};
  r = blockmask::compose_reachability(with_full);
  CHECK(equal(r.matrix, full.matrix));
}

TEST_CASE("compose_reachability: history twice equals summed extents") {
  BlockMask h = blockmask::build_mask(8, {2, 1, 0});
  std::vector<BlockMask> two{h, h};
  BlockMask r = blockmask::compose_reachability(two);
  CHECK(equal(r.matrix, blockmask::build_mask(8, {2, 2, 0}).matrix));
}

TEST_CASE("compose_reachability: size mismatch is an error") {
  BlockMask a = blockmask::build_mask(4, {2, 0, 0});
  BlockMask b = blockmask::build_mask(6, {2, 0, 0});
  std::vector<BlockMask> bad{a, b};
  CHECK_THROWS_AS(blockmask::compose_reachability(bad), std::invalid_argument);
}

TEST_CASE("composition law: stacked reachability equals build_mask of summed extents") {
  nn::RngState rng(13);
  for (int c = 0; c < 60; ++c) {
    int64_t b = rng.next_range(1, 4);
    int64_t n = rng.next_range(1, 32);  // ragged tails included
    int64_t layers = rng.next_range(1, 3);
    std::vector<MaskSpec> specs;
    std::vector<BlockMask> masks;
    int64_t sum_b = 0, sum_f = 0;
    for (int64_t l = 0; l < layers; ++l) {
      MaskSpec s{b, rng.next_range(0, 2), rng.next_range(0, 2)};
      specs.push_back(s);
      masks.push_back(blockmask::build_mask(n, s));
      sum_b += s.back;
      sum_f += s.forward;
    }
    BlockMask composed = blockmask::compose_reachability(masks);
    BlockMask direct = blockmask::build_mask(n, {b, sum_b, sum_f});
    CHECK(equal(composed.matrix, direct.matrix));
  }
}
