#include "sfeat/descriptor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "sfeat/error.hpp"

namespace sfeat {
namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f32(std::vector<unsigned char>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace

void write_keypoints(const std::filesystem::path& path, const KeypointSet& set) {
  if (set.descriptors.size() != set.size() * set.dim) {
    throw ShapeError("keypoint set has " + std::to_string(set.descriptors.size()) +
                     " descriptor values for " + std::to_string(set.size()) + " points");
  }
  std::vector<unsigned char> buf = {'S', 'F', 'D', 'K'};
  put_u32(buf, kDescriptorFileVersion);
  put_u32(buf, static_cast<std::uint32_t>(set.size()));
  put_u32(buf, static_cast<std::uint32_t>(set.dim));
  for (const Keypoint& k : set.keypoints) {
    put_f32(buf, k.x);
    put_f32(buf, k.y);
    put_f32(buf, k.scale);
    put_f32(buf, k.score);
  }
  for (float v : set.descriptors) put_f32(buf, v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

KeypointSet read_keypoints(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open descriptor file '" + path.string() + "'");
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = "descriptor file '" + path.string() + "'";
  if (buf.size() < 16 || std::memcmp(buf.data(), "SFDK", 4) != 0) throw DataError(name + ": bad magic");
  const std::uint32_t version = get_u32(&buf[4]);
  if (version != kDescriptorFileVersion) {
    throw DataError(name + ": unsupported version " + std::to_string(version));
  }
  const std::uint64_t count = get_u32(&buf[8]);
  const std::uint64_t dim = get_u32(&buf[12]);
  const std::uint64_t expected = 16 + count * 16 + count * dim * 4;
  if (buf.size() != expected) {
    throw DataError(name + ": expected " + std::to_string(expected) + " bytes, found " +
                    std::to_string(buf.size()));
  }
  KeypointSet set;
  set.dim = dim;
  const unsigned char* p = buf.data() + 16;
  for (std::uint64_t i = 0; i < count; ++i, p += 16) {
    set.keypoints.push_back({get_f32(p), get_f32(p + 4), get_f32(p + 8), get_f32(p + 12)});
  }
  set.descriptors.resize(count * dim);
  for (auto& v : set.descriptors) {
    v = get_f32(p);
    p += 4;
  }
  return set;
}

}  // namespace sfeat
