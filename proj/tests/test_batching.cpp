#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>
#include <vector>

#include "nmtk/batching.hpp"
#include "nmtk/rng.hpp"

using namespace nmtk;

namespace {

EncodedPair ep(std::vector<int32_t> s, std::vector<int32_t> t) { return EncodedPair{std::move(s), std::move(t)}; }

std::vector<int32_t> ids(int64_t n, int32_t v = 4) { return std::vector<int32_t>(static_cast<size_t>(n), v); }

// Unpads a tgt row back to the raw id sequence: expects <sos> ... <eos> pad*.
std::vector<int32_t> strip_tgt_row(const IdMatrix& m, int64_t r) {
  std::vector<int32_t> out;
  REQUIRE(m.at(r, 0) == Vocab::sos_id);
  int64_t c = 1;
  while (c < m.cols && m.at(r, c) != Vocab::eos_id) {
    out.push_back(m.at(r, c));
    c++;
  }
  REQUIRE(c < m.cols);  // found the <eos>
  for (c++; c < m.cols; ++c) REQUIRE(m.at(r, c) == Vocab::pad_id);
  return out;
}

}  // namespace

TEST_CASE("ordering: ascending total tokens, then ascending target length") {
  // totals 4,4,6 with tgt lengths 2,1,3
  std::vector<EncodedPair> pairs{ep(ids(2, 10), ids(2, 20)), ep(ids(3, 11), ids(1, 21)),
                                 ep(ids(3, 12), ids(3, 22))};
  auto units = sort_and_batch(pairs, 4, 64);
  std::vector<int32_t> first_src_ids;
  for (const auto& u : units)
    for (int64_t r = 0; r < u.src.rows; ++r) first_src_ids.push_back(u.src.at(r, 0));
  CHECK(first_src_ids == std::vector<int32_t>{11, 10, 12});
}

TEST_CASE("identical pairs pack into one batch within budget") {
  std::vector<EncodedPair> pairs(5, ep(ids(3), ids(3)));
  auto units = sort_and_batch(pairs, 100, 64);
  REQUIRE(units.size() == 1);
  CHECK(units[0].src.rows == 5);
  CHECK(units[0].src.cols == 3);
  CHECK(units[0].tgt.cols == 5);  // sos + 3 + eos
}

TEST_CASE("no pair is lost and each batch respects the budget") {
  std::vector<EncodedPair> pairs;
  RngStream rng(7, 0);
  for (int i = 0; i < 200; ++i) {
    int64_t sl = 1 + static_cast<int64_t>(rng.next_below(12));
    int64_t tl = 1 + static_cast<int64_t>(rng.next_below(12));
    pairs.push_back(ep(ids(sl, static_cast<int32_t>(4 + i % 50)), ids(tl, 5)));
  }
  const int64_t budget = 48;
  auto units = sort_and_batch(pairs, budget, 64);
  int64_t rows = 0;
  for (const auto& u : units) {
    rows += u.src.rows;
    CHECK(u.src.rows * u.src.cols <= budget);
    CHECK(u.tgt.rows * u.tgt.cols <= budget);
    CHECK(u.src.rows == u.tgt.rows);
  }
  CHECK(rows == 200);
}

TEST_CASE("every target row is sos, tokens, one eos, then pad") {
  std::vector<EncodedPair> pairs{ep(ids(2), {7, 8, 9}), ep(ids(4), {6})};
  auto units = sort_and_batch(pairs, 20, 64);
  std::vector<std::vector<int32_t>> seen;
  for (const auto& u : units)
    for (int64_t r = 0; r < u.tgt.rows; ++r) seen.push_back(strip_tgt_row(u.tgt, r));
  REQUIRE(seen.size() == 2);
  std::set<std::vector<int32_t>> want{{7, 8, 9}, {6}};
  CHECK(std::set<std::vector<int32_t>>(seen.begin(), seen.end()) == want);
}

TEST_CASE("pairs over max_len on either side are dropped") {
  std::vector<EncodedPair> pairs{ep(ids(9), ids(2)), ep(ids(2), ids(9)), ep(ids(2), ids(2))};
  auto units = sort_and_batch(pairs, 100, 8);
  int64_t rows = 0;
  for (const auto& u : units) rows += u.src.rows;
  CHECK(rows == 1);
}

TEST_CASE("oversize single pair goes out alone with a warning") {
  std::vector<EncodedPair> pairs{ep(ids(10), ids(10)), ep(ids(1), ids(1))};
  std::ostringstream warn;
  auto units = sort_and_batch(pairs, 6, 64, &warn);
  REQUIRE(units.size() == 2);
  CHECK(warn.str().find("exceeds token budget") != std::string::npos);
  bool found_oversize = false;
  for (const auto& u : units)
    if (u.src.cols == 10) {
      CHECK(u.src.rows == 1);
      found_oversize = true;
    }
  CHECK(found_oversize);
}

TEST_CASE("empty sides are skipped") {
  std::vector<EncodedPair> pairs{ep({}, ids(2)), ep(ids(2), {}), ep(ids(2), ids(2))};
  auto units = sort_and_batch(pairs, 100, 64);
  int64_t rows = 0;
  for (const auto& u : units) rows += u.src.rows;
  CHECK(rows == 1);
}

TEST_CASE("epoch 1 is the identity order") {
  auto ord = epoch_order(1, 5, 99);
  CHECK(ord == std::vector<int64_t>{0, 1, 2, 3, 4});
}

TEST_CASE("later epochs shuffle deterministically per (seed, epoch)") {
  auto a = epoch_order(2, 50, 31);
  auto b = epoch_order(2, 50, 31);
  auto c = epoch_order(3, 50, 31);
  auto d = epoch_order(2, 50, 32);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a != d);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int64_t> want(50);
  for (int64_t i = 0; i < 50; ++i) want[static_cast<size_t>(i)] = i;
  CHECK(sorted == want);
  CHECK(a != want);
}
