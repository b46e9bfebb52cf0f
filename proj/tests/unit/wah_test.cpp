#include <gtest/gtest.h>

#include <random>

#include "pmuidx/errors.hpp"
#include "pmuidx/wah.hpp"

namespace pmuidx {
namespace {

std::vector<bool> random_bits(std::mt19937_64& rng, std::size_t n, double density) {
  std::bernoulli_distribution b(density);
  std::vector<bool> bits(n);
  for (std::size_t i = 0; i < n; ++i) bits[i] = b(rng);
  return bits;
}

// Long runs mixed with noise, to exercise fill/literal transitions.
std::vector<bool> runny_bits(std::mt19937_64& rng, std::size_t n) {
  std::vector<bool> bits;
  std::uniform_int_distribution<std::size_t> run(1, 200);
  std::bernoulli_distribution coin(0.5);
  while (bits.size() < n) {
    const bool v = coin(rng);
    const std::size_t len = std::min(run(rng), n - bits.size());
    if (coin(rng)) {
      bits.insert(bits.end(), len, v);
    } else {
      for (std::size_t i = 0; i < len; ++i) bits.push_back(coin(rng));
    }
  }
  return bits;
}

TEST(Wah, EmptyVector) {
  WahVector v;
  EXPECT_EQ(v.size(), 0u);
  EXPECT_EQ(v.count(), 0u);
  EXPECT_TRUE(v.to_bits().empty());
}

TEST(Wah, LiteralLayoutIsLsbFirst) {
  std::vector<bool> bits(31, false);
  bits[0] = true;
  bits[2] = true;
  const WahVector v = WahVector::from_bits(bits);
  ASSERT_EQ(v.words().size(), 1u);
  EXPECT_EQ(v.words()[0], 0b101u);
}

TEST(Wah, FillWordsEncodeGroupCount) {
  WahVector v;
  v.append_run(false, 31 * 5);
  v.append_run(true, 31 * 2);
  ASSERT_EQ(v.words().size(), 2u);
  EXPECT_EQ(v.words()[0], WahVector::kFillFlag | 5u);
  EXPECT_EQ(v.words()[1], WahVector::kFillFlag | WahVector::kFillValue | 2u);
  EXPECT_EQ(v.count(), 62u);
}

TEST(Wah, RoundTripAcrossDensities) {
  std::mt19937_64 rng(1);
  for (double d : {0.0, 1e-4, 0.01, 0.5, 1.0}) {
    for (std::size_t n : {1u, 30u, 31u, 32u, 62u, 63u, 1000u, 4099u, 100000u}) {
      const auto bits = random_bits(rng, n, d);
      const WahVector v = WahVector::from_bits(bits);
      ASSERT_EQ(v.to_bits(), bits) << "n=" << n << " d=" << d;
      ASSERT_EQ(v.size(), n);
      std::uint64_t ones = 0;
      for (bool b : bits) ones += b;
      ASSERT_EQ(v.count(), ones);
    }
  }
}

TEST(Wah, CanonicalFormIsUnique) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const auto bits = runny_bits(rng, 5000);
    WahVector a = WahVector::from_bits(bits);
    WahVector b;
    for (bool bit : bits) b.append(bit);
    EXPECT_EQ(a, b);
    for (std::size_t w = 0; w < a.words().size(); ++w) {
      const std::uint32_t word = a.words()[w];
      if (word & WahVector::kFillFlag) {
        EXPECT_GT(word & WahVector::kCountMask, 0u);
        if (w > 0 && (a.words()[w - 1] & WahVector::kFillFlag)) {
          EXPECT_NE(word & WahVector::kFillValue, a.words()[w - 1] & WahVector::kFillValue);
        }
      } else {
        EXPECT_NE(word, 0u);
        EXPECT_NE(word, WahVector::kLiteralMask);
      }
    }
  }
}

TEST(Wah, AndOrNotMatchUncompressedOracle) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 60; ++i) {
    const std::size_t n = 1 + rng() % 20000;
    const auto x = i % 2 ? runny_bits(rng, n) : random_bits(rng, n, 0.01 * (i % 7));
    const auto y = i % 3 ? runny_bits(rng, n) : random_bits(rng, n, 0.5);
    std::vector<bool> and_bits(n), or_bits(n), not_bits(n);
    for (std::size_t k = 0; k < n; ++k) {
      and_bits[k] = x[k] && y[k];
      or_bits[k] = x[k] || y[k];
      not_bits[k] = !x[k];
    }
    const WahVector a = WahVector::from_bits(x);
    const WahVector b = WahVector::from_bits(y);
    EXPECT_EQ(wah_and(a, b), WahVector::from_bits(and_bits));
    EXPECT_EQ(wah_or(a, b), WahVector::from_bits(or_bits));
    EXPECT_EQ(wah_not(a), WahVector::from_bits(not_bits));
  }
}

TEST(Wah, Idempotence) {
  std::mt19937_64 rng(4);
  const WahVector a = WahVector::from_bits(runny_bits(rng, 10000));
  EXPECT_EQ(wah_and(a, a), a);
  EXPECT_EQ(wah_or(a, a), a);
}

TEST(Wah, DisjointFillsAndToZeroFill) {
  WahVector a;
  a.append_run(true, 31 * 10);
  a.append_run(false, 31 * 10);
  WahVector b;
  b.append_run(false, 31 * 10);
  b.append_run(true, 31 * 10);
  const WahVector r = wah_and(a, b);
  ASSERT_EQ(r.words().size(), 1u);
  EXPECT_EQ(r.words()[0], WahVector::kFillFlag | 20u);
  EXPECT_EQ(r.count(), 0u);
}

TEST(Wah, LengthMismatchIsRejected) {
  const WahVector a = WahVector::from_bits(std::vector<bool>(40, true));
  const WahVector b = WahVector::from_bits(std::vector<bool>(41, true));
  EXPECT_THROW(wah_and(a, b), ValidationError);
  EXPECT_THROW(wah_or(a, b), ValidationError);
}

TEST(Wah, PadToAppendsZeros) {
  WahVector v = WahVector::from_bits({true, false, true});
  v.pad_to(1000);
  EXPECT_EQ(v.size(), 1000u);
  EXPECT_EQ(v.set_positions(), (std::vector<std::uint64_t>{0, 2}));
  v.pad_to(10);
  EXPECT_EQ(v.size(), 1000u);
}

TEST(Wah, ForEachSetAndTestAgree) {
  std::mt19937_64 rng(6);
  const auto bits = runny_bits(rng, 7777);
  const WahVector v = WahVector::from_bits(bits);
  std::vector<std::uint64_t> seen;
  v.for_each_set([&](std::uint64_t p) { seen.push_back(p); });
  std::vector<std::uint64_t> expect;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) expect.push_back(i);
    ASSERT_EQ(v.test(i), bits[i]);
  }
  EXPECT_EQ(seen, expect);
  EXPECT_EQ(v.set_positions(), expect);
}

TEST(Wah, FromPartsValidates) {
  const WahVector v = WahVector::from_bits(std::vector<bool>(100, true));
  EXPECT_EQ(WahVector::from_parts(v.words(), v.active_word(), v.active_bits()), v);
  EXPECT_THROW(WahVector::from_parts({0u}, 0, 0), FormatError);  // all-zero literal
  EXPECT_THROW(WahVector::from_parts({}, 0, 31), FormatError);
  EXPECT_THROW(WahVector::from_parts({}, 0b100, 2), FormatError);  // bit beyond active width
}

TEST(Wah, LongFillsCompress) {
  WahVector v;
  v.append_run(false, 4'000'000);
  v.append(true);
  EXPECT_LE(v.compressed_bytes(), 12u);
  EXPECT_EQ(v.set_positions(), (std::vector<std::uint64_t>{4'000'000}));
}

}  // namespace
}  // namespace pmuidx
