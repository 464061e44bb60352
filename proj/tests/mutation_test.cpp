#include <set>

#include "doctest.h"
#include "heatfuzz/mutation.hpp"

using namespace heatfuzz;

namespace {

TokenDictionary small_dict() {
  return TokenDictionary({{'X'}, {'A', 'B'}});
}

}  // namespace

TEST_SUITE_BEGIN("mutation");

TEST_CASE("mutator names match the record vocabulary") {
  CHECK(std::string(mutator_name(MutatorId::ArithPlus)) == "arth+");
  CHECK(std::string(mutator_name(MutatorId::ArithMinus)) == "arth-");
  CHECK(std::string(mutator_name(MutatorId::BitFlip1)) == "bitflip");
  CHECK(std::string(mutator_name(MutatorId::DictionaryReplace)) == "dictionary");
  for (int i = 0; i < kMutatorCount; ++i) {
    MutatorId id = static_cast<MutatorId>(i);
    CHECK(mutator_from_name(mutator_name(id)) == id);
  }
  CHECK_THROWS_AS(mutator_from_name("splice"), std::invalid_argument);
}

TEST_CASE("arith-plus on the first byte turns <0,5> into <5,5>") {
  TokenDictionary dict;
  Bytes seed = {0, 5};
  Bytes out = apply_mutation(seed, {MutatorId::ArithPlus, 0, 5}, dict);
  CHECK(out == Bytes{5, 5});
  CHECK(seed == Bytes{0, 5});  // input untouched
}

TEST_CASE("single-byte mutator semantics") {
  TokenDictionary dict;
  CHECK(apply_mutation({0x00}, {MutatorId::BitFlip1, 0, 0}, dict) == Bytes{0x01});
  CHECK(apply_mutation({0xff}, {MutatorId::ArithPlus, 0, 1}, dict) == Bytes{0x00});  // wraps
  CHECK(apply_mutation({0x00}, {MutatorId::ArithMinus, 0, 1}, dict) == Bytes{0xff});
  CHECK(apply_mutation({0x12}, {MutatorId::ByteFlip, 0, 0}, dict) == Bytes{0xed});
  CHECK(apply_mutation({0x00}, {MutatorId::InterestingReplace, 0, 1}, dict) == Bytes{0xff});
  CHECK(apply_mutation({0x00}, {MutatorId::InterestingReplace, 0, 0}, dict) == Bytes{0x80});
  CHECK(apply_mutation({0x00}, {MutatorId::RandomByte, 0, 88}, dict) == Bytes{88});
}

TEST_CASE("dictionary replacement writes whole tokens in place") {
  TokenDictionary dict = small_dict();
  CHECK(apply_mutation({1, 2, 3}, {MutatorId::DictionaryReplace, 1, 1}, dict) ==
        Bytes{1, 'A', 'B'});
  CHECK_THROWS_AS(apply_mutation({1, 2, 3}, {MutatorId::DictionaryReplace, 2, 1}, dict),
                  std::out_of_range);
}

TEST_CASE("invalid mutations are rejected") {
  TokenDictionary dict;
  CHECK_THROWS_AS(apply_mutation({1}, {MutatorId::BitFlip1, 1, 0}, dict), std::out_of_range);
  CHECK_THROWS_AS(apply_mutation({1}, {MutatorId::BitFlip1, 0, 8}, dict), std::out_of_range);
  CHECK_THROWS_AS(apply_mutation({1}, {MutatorId::ArithPlus, 0, 0}, dict), std::out_of_range);
  CHECK_THROWS_AS(apply_mutation({1}, {MutatorId::ArithPlus, 0, 36}, dict), std::out_of_range);
  CHECK_THROWS_AS(apply_mutation({1}, {MutatorId::RandomByte, 0, 256}, dict), std::out_of_range);
}

TEST_CASE("deterministic schedule counts match the parameter ranges") {
  TokenDictionary none;
  // 8 bitflips + 1 byteflip + 35 arith+ + 35 arith- + 9 interesting + 256 random
  CHECK(DeterministicSchedule::total_count(1, none) == 344);
  CHECK(collect_schedule(1, none).size() == 344);
  CHECK(DeterministicSchedule::total_count(0, none) == 0);
  CHECK(collect_schedule(0, none).empty());

  TokenDictionary dict = small_dict();
  // the two-byte token fits at 3 of 4 positions
  CHECK(DeterministicSchedule::total_count(4, dict) == 344 * 4 + 4 + 3);
  CHECK(collect_schedule(4, dict).size() == 344 * 4 + 4 + 3);
}

TEST_CASE("schedule is deterministic and ordered by catalog, position, parameter") {
  TokenDictionary dict = small_dict();
  auto a = collect_schedule(5, dict);
  auto b = collect_schedule(5, dict);
  CHECK(a == b);
  CHECK(a.front() == Mutation{MutatorId::BitFlip1, 0, 0});
  // catalog order is non-decreasing along the stream
  for (size_t i = 1; i < a.size(); ++i)
    CHECK(static_cast<int>(a[i].mutator) >= static_cast<int>(a[i - 1].mutator));
}

TEST_CASE("applying the whole schedule never errors and preserves length") {
  TokenDictionary dict = small_dict();
  Bytes seed = {9, 8, 7, 6, 5};
  for (const Mutation& m : collect_schedule(seed.size(), dict)) {
    Bytes out = apply_mutation(seed, m, dict);
    CHECK(out.size() == seed.size());
  }
}

TEST_CASE("mutations touch only their declared footprint") {
  TokenDictionary dict = small_dict();
  Bytes seed = {10, 20, 30, 40, 50, 60};
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    Mutation m = random_mutation(seed.size(), rng, dict);
    Bytes out = apply_mutation(seed, m, dict);
    int footprint = mutation_footprint(m, dict);
    for (size_t p = 0; p < seed.size(); ++p) {
      bool inside = p >= static_cast<size_t>(m.position) &&
                    p < static_cast<size_t>(m.position + footprint);
      if (!inside) CHECK(out[p] == seed[p]);
    }
  }
}

TEST_CASE("involutions: byteflip, bitflip and arith +/- undo themselves") {
  TokenDictionary dict;
  Rng rng(13);
  for (int i = 0; i < 500; ++i) {
    Bytes seed(1 + rng.below(8));
    for (auto& b : seed) b = static_cast<uint8_t>(rng.below(256));
    int pos = static_cast<int>(rng.below(static_cast<uint32_t>(seed.size())));

    Bytes twice = apply_mutation(apply_mutation(seed, {MutatorId::ByteFlip, pos, 0}, dict),
                                 {MutatorId::ByteFlip, pos, 0}, dict);
    CHECK(twice == seed);

    int bit = static_cast<int>(rng.below(8));
    twice = apply_mutation(apply_mutation(seed, {MutatorId::BitFlip1, pos, bit}, dict),
                           {MutatorId::BitFlip1, pos, bit}, dict);
    CHECK(twice == seed);

    int delta = 1 + static_cast<int>(rng.below(kArithMax));
    twice = apply_mutation(apply_mutation(seed, {MutatorId::ArithPlus, pos, delta}, dict),
                           {MutatorId::ArithMinus, pos, delta}, dict);
    CHECK(twice == seed);
  }
}

TEST_CASE("havoc is reproducible under a fixed rng seed and preserves length") {
  TokenDictionary dict = small_dict();
  Bytes seed = {1, 2, 3, 4, 5, 6, 7, 8};
  Rng a(42), b(42);
  auto [out_a, muts_a] = havoc_step(seed, a, dict);
  auto [out_b, muts_b] = havoc_step(seed, b, dict);
  CHECK(out_a == out_b);
  CHECK(muts_a == muts_b);
  CHECK(out_a.size() == seed.size());
  CHECK(muts_a.size() >= 1);
  CHECK(muts_a.size() <= 8);
}

TEST_CASE("havoc eventually mutates every position") {
  TokenDictionary dict;
  Bytes seed(16, 0xaa);
  Rng rng(7);
  std::set<int> touched;
  for (int i = 0; i < 10000 && touched.size() < 16; ++i) {
    auto [out, muts] = havoc_step(seed, rng, dict);
    for (const Mutation& m : muts) touched.insert(m.position);
  }
  CHECK(touched.size() == 16);
}

TEST_CASE("havoc rejects empty seeds") {
  TokenDictionary dict;
  Rng rng(1);
  CHECK_THROWS_AS(havoc_step({}, rng, dict), std::invalid_argument);
}

TEST_CASE("dictionary files support hex escapes and round-trip") {
  TokenDictionary dict = TokenDictionary::parse("X\n\\xffkey\\x00\n# comment\nAB\n");
  REQUIRE(dict.size() == 3);
  CHECK(dict.token(0) == Bytes{'X'});
  CHECK(dict.token(1) == Bytes{0xff, 'k', 'e', 'y', 0x00});
  CHECK(dict.token(2) == Bytes{'A', 'B'});
  TokenDictionary reparsed = TokenDictionary::parse(dict.serialize());
  REQUIRE(reparsed.size() == dict.size());
  for (size_t i = 0; i < dict.size(); ++i) CHECK(reparsed.token(i) == dict.token(i));
  CHECK_THROWS_AS(TokenDictionary::parse("bad\\xzz\n"), std::runtime_error);
}

TEST_SUITE_END();
