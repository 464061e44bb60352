#include "heatfuzz/target.hpp"

namespace heatfuzz {

namespace {

// Nested integer conditions gate a flag block; the flag block guards a short
// magic-byte check in front of the crash. Input layout: bytes 0-3 = a (i32le),
// 4-7 = b, 8-11 = c, 12+ = buf.
const std::string kMotivatingSource = R"(# bundled demo target: motivating
init L1
block L1 {
  else -> L2
}
block L2 {
  if i32le[0] > 100 -> L3
  else -> L9
}
block L3 {
  if i32le[4] == -1 -> L4
  else -> L9
}
block L4 {
  if i32le[8] < 0 -> L5
  else -> L9
}
block L5 {
  else -> L6
}
block L6 {
  if byte[12] == 88 and byte[13] == 88 and byte[14] == 88 -> L7
  else -> L9
}
block L7 {
  else -> L8
}
block L8 crash {
}
block L9 {
}
)";

// Six nested single-byte comparisons in front of the crash block.
const std::string kDeepNestSource = R"(# bundled demo target: deep-nest
init N0
block N0 {
  else -> N1
}
block N1 {
  if byte[0] == 77 -> N2
  else -> OUT
}
block N2 {
  if byte[1] == 201 -> N3
  else -> OUT
}
block N3 {
  if byte[2] == 13 -> N4
  else -> OUT
}
block N4 {
  if byte[3] == 55 -> N5
  else -> OUT
}
block N5 {
  if byte[4] == 128 -> N6
  else -> OUT
}
block N6 {
  if byte[5] == 250 -> BUG
  else -> OUT
}
block BUG crash {
}
block OUT {
}
)";

// Eight-block branching program whose shape matches the worked reward
// example: B4 and B8 are the hard-to-reach blocks, B6 soaks up most mass.
const std::string kFigure3Source = R"(# bundled demo target: figure3
init B1
block B1 {
  if byte[0] >= 128 -> B2
  else -> B6
}
block B2 {
  if byte[1] == 7 -> B3
  if byte[1] >= 250 -> B5
  else -> B6
}
block B3 {
  if i16le[2] == 4660 -> B4
  else -> B6
}
block B4 {
  if byte[4] < 3 -> B6
  if byte[4] < 6 -> B7
  else -> B8
}
block B5 {
  if byte[5] < 100 -> B6
  if byte[5] < 200 -> B7
  else -> B8
}
block B6 {
}
block B7 {
}
block B8 {
}
)";

}  // namespace

const std::string& demo_target_source(const std::string& name) {
  if (name == "motivating") return kMotivatingSource;
  if (name == "deep-nest") return kDeepNestSource;
  if (name == "figure3") return kFigure3Source;
  throw std::runtime_error("unknown demo target '" + name + "'");
}

std::map<std::string, TargetProgram> demo_targets() {
  std::map<std::string, TargetProgram> out;
  out.emplace("motivating", parse_target(kMotivatingSource));
  out.emplace("deep-nest", parse_target(kDeepNestSource));
  out.emplace("figure3", parse_target(kFigure3Source));
  return out;
}

}  // namespace heatfuzz
