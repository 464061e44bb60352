#include "heatfuzz/coverage.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

#include "heatfuzz/mutation.hpp"

namespace heatfuzz {

int BlockBitset::count() const {
  int n = 0;
  for (uint64_t w : words_) n += std::popcount(w);
  return n;
}

bool BlockBitset::any() const {
  for (uint64_t w : words_)
    if (w) return true;
  return false;
}

bool BlockBitset::intersects(const BlockBitset& other) const {
  size_t n = std::min(words_.size(), other.words_.size());
  for (size_t i = 0; i < n; ++i)
    if (words_[i] & other.words_[i]) return true;
  return false;
}

int BlockBitset::intersection_count(const BlockBitset& other) const {
  size_t n = std::min(words_.size(), other.words_.size());
  int count = 0;
  for (size_t i = 0; i < n; ++i) count += std::popcount(words_[i] & other.words_[i]);
  return count;
}

std::string BlockBitset::to_hex() const {
  size_t nibbles = (static_cast<size_t>(bits_) + 3) / 4;
  if (nibbles == 0) nibbles = 1;
  std::string out(nibbles, '0');
  static const char* kHex = "0123456789abcdef";
  for (size_t i = 0; i < nibbles; ++i) {
    size_t word = i / 16;
    unsigned shift = static_cast<unsigned>((i % 16) * 4);
    uint64_t nib = word < words_.size() ? (words_[word] >> shift) & 0xf : 0;
    out[i] = kHex[nib];
  }
  return out;
}

BlockBitset BlockBitset::from_hex(const std::string& hex, int block_count) {
  BlockBitset out(block_count);
  for (size_t i = 0; i < hex.size(); ++i) {
    char c = hex[i];
    uint64_t nib;
    if (c >= '0' && c <= '9') nib = static_cast<uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') nib = static_cast<uint64_t>(c - 'a' + 10);
    else throw std::runtime_error("invalid hex digit in bitset");
    size_t word = i / 16;
    if (word >= out.words_.size()) {
      if (nib != 0) throw std::runtime_error("bitset wider than block count");
      continue;
    }
    out.words_[word] |= nib << ((i % 16) * 4);
  }
  return out;
}

// ---------------------------------------------------------------------------

CoverageBitmap::CoverageBitmap(uint32_t map_size) : map_size_(map_size) {
  if (map_size == 0 || (map_size & (map_size - 1)) != 0)
    throw std::invalid_argument("map_size must be a power of two");
  words_.assign(map_size / 64 + (map_size < 64 ? 1 : 0), 0);
}

void CoverageBitmap::clear() { std::fill(words_.begin(), words_.end(), 0); }

uint32_t CoverageBitmap::set_bit_count() const {
  uint32_t n = 0;
  for (uint64_t w : words_) n += static_cast<uint32_t>(std::popcount(w));
  return n;
}

std::vector<uint8_t> CoverageBitmap::to_bytes() const {
  std::vector<uint8_t> out;
  out.reserve(map_size_ / 8 + 1);
  for (uint32_t i = 0; i < map_size_; i += 8)
    out.push_back(static_cast<uint8_t>(words_[i >> 6] >> (i & 63)));
  return out;
}

EdgeHashDict::EdgeHashDict(const Cfg& cfg, uint32_t map_size, Rng& rng) : map_size_(map_size) {
  if (map_size == 0 || (map_size & (map_size - 1)) != 0)
    throw std::invalid_argument("map_size must be a power of two");
  rand_ids_.reserve(static_cast<size_t>(cfg.block_count));
  for (int i = 0; i < cfg.block_count; ++i) rand_ids_.push_back(rng.below(map_size));
  index_to_edges_.assign(map_size, {});
  for (int from = 0; from < cfg.block_count; ++from) {
    for (int to : cfg.successors[static_cast<size_t>(from)]) {
      uint32_t index = edge_hash_index(from, to);
      auto& bucket = index_to_edges_[index];
      bucket.emplace_back(from, to);
      if (bucket.size() > 1) has_collisions_ = true;
    }
  }
}

uint32_t EdgeHashDict::block_rand_id(int block) const {
  if (block < 0 || static_cast<size_t>(block) >= rand_ids_.size())
    throw std::out_of_range("unknown block id");
  return rand_ids_[static_cast<size_t>(block)];
}

uint32_t EdgeHashDict::edge_hash_index(int prev, int cur) const {
  return ((block_rand_id(prev) >> 1) ^ block_rand_id(cur)) & (map_size_ - 1);
}

const std::vector<std::pair<int, int>>& EdgeHashDict::edges_at(uint32_t index) const {
  return index_to_edges_[index];
}

uint32_t edge_hash_index(int prev, int cur, const EdgeHashDict& dict) {
  return dict.edge_hash_index(prev, cur);
}

// ---------------------------------------------------------------------------

GlobalCoverage::GlobalCoverage(int block_count)
    : block_count_(block_count),
      block_hits_(static_cast<size_t>(block_count), 0),
      out_taken_(static_cast<size_t>(block_count), 0),
      edge_counts_(static_cast<size_t>(block_count)),
      covered_(block_count) {}

uint64_t GlobalCoverage::edge_taken(int from, int to) const {
  const auto& row = edge_counts_[static_cast<size_t>(from)];
  auto it = std::lower_bound(row.begin(), row.end(), to,
                             [](const auto& entry, int key) { return entry.first < key; });
  return (it != row.end() && it->first == to) ? it->second : 0;
}

bool GlobalCoverage::update_from_trace(const ExecutionTrace& trace, CoverageBitmap* bitmap,
                                       const EdgeHashDict* dict) {
  bool fresh = false;
  for (int block : trace.block_seq) {
    if (!covered_.test(block)) {
      covered_.set(block);
      fresh = true;
    }
    ++block_hits_[static_cast<size_t>(block)];
  }
  for (const auto& [from, to] : trace.edge_seq) {
    ++out_taken_[static_cast<size_t>(from)];
    auto& row = edge_counts_[static_cast<size_t>(from)];
    auto it = std::lower_bound(row.begin(), row.end(), to,
                               [](const auto& entry, int key) { return entry.first < key; });
    if (it == row.end() || it->first != to) {
      row.insert(it, {to, 1});
      ++covered_edges_;
      fresh = true;
    } else {
      ++it->second;
    }
    if (bitmap && dict) bitmap->set(dict->edge_hash_index(from, to));
  }
  return fresh;
}

void GlobalCoverage::add_edge_count(int from, int to, uint64_t count) {
  if (count == 0) return;
  out_taken_[static_cast<size_t>(from)] += count;
  auto& row = edge_counts_[static_cast<size_t>(from)];
  auto it = std::lower_bound(row.begin(), row.end(), to,
                             [](const auto& entry, int key) { return entry.first < key; });
  if (it == row.end() || it->first != to) {
    row.insert(it, {to, count});
    ++covered_edges_;
  } else {
    it->second += count;
  }
  mark_covered(from);
  mark_covered(to);
}

void GlobalCoverage::mark_covered(int block) { covered_.set(block); }

std::vector<std::pair<int, int>> GlobalCoverage::covered_edges() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(covered_edges_);
  for (int from = 0; from < block_count_; ++from)
    for (const auto& [to, count] : edge_counts_[static_cast<size_t>(from)])
      out.emplace_back(from, to);
  return out;
}

std::pair<BlockBitset, bool> reconstruct_blocks(const CoverageBitmap& bitmap,
                                                const EdgeHashDict& dict, const Cfg& cfg) {
  BlockBitset blocks(cfg.block_count);
  bool ambiguous = false;
  for (uint32_t index = 0; index < bitmap.map_size(); ++index) {
    if (!bitmap.test(index)) continue;
    const auto& edges = dict.edges_at(index);
    if (edges.size() >= 2) ambiguous = true;
    for (const auto& [from, to] : edges) {
      blocks.set(from);
      blocks.set(to);
    }
  }
  return {blocks, ambiguous};
}

// ---------------------------------------------------------------------------

std::string record_to_line(const ExecutionRecord& record) {
  std::string out;
  out += std::to_string(record.exec_id);
  out += ',';
  out += std::to_string(record.parent_seed);
  out += ',';
  out += mutator_name(static_cast<MutatorId>(record.mutator));
  out += ',';
  out += std::to_string(record.param);
  out += ',';
  out += std::to_string(record.position);
  out += ',';
  out += std::to_string(record.input_len);
  out += ',';
  out += record.covered_blocks.to_hex();
  out += ',';
  out += record.new_coverage ? '1' : '0';
  out += ',';
  out += record.crashed ? '1' : '0';
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  for (;;) {
    size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

int64_t parse_int_field(const std::string& field, const char* what) {
  int64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw std::runtime_error(std::string("bad ") + what + " field '" + field + "'");
  return value;
}

bool parse_bool_field(const std::string& field, const char* what) {
  if (field == "0") return false;
  if (field == "1") return true;
  throw std::runtime_error(std::string("bad ") + what + " field '" + field + "'");
}

}  // namespace

ExecutionRecord record_from_line(const std::string& line, int block_count) {
  auto fields = split_fields(line);
  if (fields.size() != 9) throw std::runtime_error("expected 9 fields");
  ExecutionRecord record;
  record.exec_id = static_cast<uint64_t>(parse_int_field(fields[0], "exec_id"));
  record.parent_seed = static_cast<int>(parse_int_field(fields[1], "parent_seed"));
  record.mutator = static_cast<int>(mutator_from_name(fields[2]));
  record.param = static_cast<int>(parse_int_field(fields[3], "param"));
  record.position = static_cast<int>(parse_int_field(fields[4], "position"));
  record.input_len = static_cast<int>(parse_int_field(fields[5], "input_len"));
  record.covered_blocks = BlockBitset::from_hex(fields[6], block_count);
  if (!record.covered_blocks.any()) throw std::runtime_error("empty covered set");
  record.new_coverage = parse_bool_field(fields[7], "new_coverage");
  record.crashed = parse_bool_field(fields[8], "crashed");
  return record;
}

RecordStore::RecordStore(std::string path) : path_(std::move(path)) {
  out_ = std::make_unique<std::ofstream>(path_, std::ios::out | std::ios::app | std::ios::binary);
  if (!*out_) throw std::runtime_error("cannot open record log '" + path_ + "'");
}

RecordStore::~RecordStore() = default;

void RecordStore::append(const ExecutionRecord& record) {
  *out_ << record_to_line(record) << '\n';
  if (!*out_) throw std::runtime_error("write failed on record log '" + path_ + "'");
}

void RecordStore::flush() { out_->flush(); }

std::vector<ExecutionRecord> RecordStore::load(const std::string& path, int block_count,
                                               bool tolerant, int* skipped) {
  std::ifstream in(path, std::ios::in | std::ios::binary);
  if (!in) throw std::runtime_error("cannot open record log '" + path + "'");
  std::vector<ExecutionRecord> records;
  std::string line;
  int line_no = 0;
  int skipped_count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_line(line, block_count));
    } catch (const std::exception& e) {
      if (!tolerant)
        throw std::runtime_error("corrupt record at line " + std::to_string(line_no) + ": " +
                                 e.what());
      ++skipped_count;
    }
  }
  if (skipped) *skipped = skipped_count;
  return records;
}

}  // namespace heatfuzz
