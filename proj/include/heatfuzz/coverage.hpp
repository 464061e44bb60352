#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "heatfuzz/rng.hpp"
#include "heatfuzz/target.hpp"

namespace heatfuzz {

// Dynamic bitset over block indices. Desk-scale programs stay small, so one
// or two words cover everything.
class BlockBitset {
 public:
  BlockBitset() = default;
  explicit BlockBitset(int block_count)
      : words_(static_cast<size_t>((block_count + 63) / 64), 0), bits_(block_count) {}

  void set(int i) { words_[static_cast<size_t>(i) >> 6] |= 1ULL << (i & 63); }
  bool test(int i) const { return (words_[static_cast<size_t>(i) >> 6] >> (i & 63)) & 1ULL; }
  int size() const { return bits_; }
  int count() const;
  bool any() const;
  bool intersects(const BlockBitset& other) const;
  int intersection_count(const BlockBitset& other) const;

  bool operator==(const BlockBitset& other) const = default;

  // Lowercase hex, lowest word first, fixed width for the block count.
  std::string to_hex() const;
  static BlockBitset from_hex(const std::string& hex, int block_count);

 private:
  std::vector<uint64_t> words_;
  int bits_ = 0;
};

// ---------------------------------------------------------------------------
// AFL-style bitmap and edge-hash dictionary
// ---------------------------------------------------------------------------

inline constexpr uint32_t kDefaultMapSize = 65536;

class CoverageBitmap {
 public:
  explicit CoverageBitmap(uint32_t map_size = kDefaultMapSize);

  uint32_t map_size() const { return map_size_; }
  bool test(uint32_t index) const { return (words_[index >> 6] >> (index & 63)) & 1ULL; }
  void set(uint32_t index) { words_[index >> 6] |= 1ULL << (index & 63); }
  void clear();
  uint32_t set_bit_count() const;

  // Raw little-endian byte dump (map_size / 8 bytes).
  std::vector<uint8_t> to_bytes() const;

 private:
  uint32_t map_size_;
  std::vector<uint64_t> words_;
};

class EdgeHashDict {
 public:
  // Assigns every block a uniformly random id in [0, map_size) and indexes
  // every CFG edge under its hash.
  EdgeHashDict(const Cfg& cfg, uint32_t map_size, Rng& rng);

  uint32_t map_size() const { return map_size_; }
  uint32_t block_rand_id(int block) const;

  // AFL's classic scheme: (rand(prev) >> 1) XOR rand(cur), mod map_size.
  uint32_t edge_hash_index(int prev, int cur) const;

  const std::vector<std::pair<int, int>>& edges_at(uint32_t index) const;
  bool has_collisions() const { return has_collisions_; }

 private:
  uint32_t map_size_;
  std::vector<uint32_t> rand_ids_;
  std::vector<std::vector<std::pair<int, int>>> index_to_edges_;
  bool has_collisions_ = false;
};

// Free-function form used by tests and tools; validates the block indices.
uint32_t edge_hash_index(int prev, int cur, const EdgeHashDict& dict);

// ---------------------------------------------------------------------------
// Global campaign coverage
// ---------------------------------------------------------------------------

class GlobalCoverage {
 public:
  explicit GlobalCoverage(int block_count);

  int block_count() const { return block_count_; }
  uint64_t block_hits(int block) const { return block_hits_[static_cast<size_t>(block)]; }
  uint64_t edge_taken(int from, int to) const;
  // Total outgoing transitions taken from `block` (the #b of the transition
  // probability estimate; row sums stay exact).
  uint64_t out_taken(int block) const { return out_taken_[static_cast<size_t>(block)]; }
  const BlockBitset& covered() const { return covered_; }
  int covered_block_count() const { return covered_.count(); }

  // Returns true iff some block or edge was seen for the first time.
  bool update_from_trace(const ExecutionTrace& trace, CoverageBitmap* bitmap,
                         const EdgeHashDict* dict);

  // Direct count injection (replaying exported statistics, worked examples).
  void add_edge_count(int from, int to, uint64_t count);
  void mark_covered(int block);

  size_t distinct_edge_count() const { return covered_edges_; }

  // Sorted distinct covered edges.
  std::vector<std::pair<int, int>> covered_edges() const;

 private:
  int block_count_;
  std::vector<uint64_t> block_hits_;
  std::vector<uint64_t> out_taken_;
  // edge_counts_[from] holds (to, count) pairs sorted by `to`.
  std::vector<std::vector<std::pair<int, uint64_t>>> edge_counts_;
  BlockBitset covered_;
  size_t covered_edges_ = 0;
};

// All blocks incident to a set bitmap index; ambiguous when any set index
// maps to two or more edges (hash collision).
std::pair<BlockBitset, bool> reconstruct_blocks(const CoverageBitmap& bitmap,
                                                const EdgeHashDict& dict, const Cfg& cfg);

// ---------------------------------------------------------------------------
// Execution records
// ---------------------------------------------------------------------------

struct ExecutionRecord {
  uint64_t exec_id = 0;
  int parent_seed = 0;
  int mutator = 0;       // MutatorId code
  int param = 0;
  int position = 0;      // -1 for multi-site mutations (havoc)
  int input_len = 0;
  BlockBitset covered_blocks;
  bool new_coverage = false;
  bool crashed = false;

  bool operator==(const ExecutionRecord& other) const = default;
};

std::string record_to_line(const ExecutionRecord& record);
// Throws std::runtime_error on malformed lines (message carries the context).
ExecutionRecord record_from_line(const std::string& line, int block_count);

// Append-only line log, one record per line:
//   exec_id,parent_seed,mutator,param,position,input_len,covered_hex,new_coverage,crashed
class RecordStore {
 public:
  explicit RecordStore(std::string path);
  ~RecordStore();

  void append(const ExecutionRecord& record);
  void flush();
  const std::string& path() const { return path_; }

  // tolerant=false: corrupt lines raise with their line number.
  // tolerant=true: corrupt lines are skipped and counted.
  static std::vector<ExecutionRecord> load(const std::string& path, int block_count,
                                           bool tolerant = false, int* skipped = nullptr);

 private:
  std::string path_;
  std::unique_ptr<std::ofstream> out_;
};

}  // namespace heatfuzz
