#include "sfeat/sequence.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sfeat/error.hpp"

namespace sfeat {
namespace fs = std::filesystem;

namespace {

fs::path find_image(const fs::path& dir, int index) {
  for (const char* ext : {".ppm", ".pgm"}) {
    fs::path p = dir / (std::to_string(index) + ext);
    if (fs::exists(p)) return p;
  }
  return {};
}

}  // namespace

Homography read_homography_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing homography file '" + path.string() + "'");
  std::array<double, 9> v{};
  std::string token;
  std::size_t n = 0;
  while (in >> token) {
    if (n == 9) throw DataError("homography file '" + path.string() + "' has more than 9 values");
    std::size_t used = 0;
    try {
      v[n] = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size()) {
      throw DataError("homography file '" + path.string() + "' has malformed value '" + token + "'");
    }
    ++n;
  }
  if (n != 9) {
    throw DataError("homography file '" + path.string() + "' has " + std::to_string(n) +
                    " values, expected 9");
  }
  try {
    return Homography::from_row_major(v);
  } catch (const NumericError& e) {
    throw DataError("homography file '" + path.string() + "': " + e.what());
  }
}

void write_homography_file(const fs::path& path, const Homography& h) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << std::setprecision(17);
  const auto v = h.row_major();
  for (int r = 0; r < 3; ++r) out << v[r * 3] << ' ' << v[r * 3 + 1] << ' ' << v[r * 3 + 2] << '\n';
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

ImageSequence load_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("sequence directory '" + dir.string() + "' not found");
  ImageSequence seq;
  seq.directory = dir;
  const fs::path first = find_image(dir, 1);
  if (first.empty()) throw DataError("missing reference image '" + (dir / "1.ppm").string() + "'");
  seq.images.push_back(read_pnm(first));
  for (int k = 2;; ++k) {
    const fs::path img = find_image(dir, k);
    if (img.empty()) break;
    const fs::path hfile = dir / ("H_1_" + std::to_string(k));
    if (!fs::exists(hfile)) throw DataError("missing homography file '" + hfile.string() + "'");
    seq.homographies.push_back(read_homography_file(hfile));
    seq.images.push_back(read_pnm(img));
  }
  if (seq.images.size() < 2) throw DataError("sequence '" + dir.string() + "' has no target images");
  return seq;
}

void write_sequence(const fs::path& dir, const std::vector<Image>& images,
                    const std::vector<Homography>& homographies) {
  if (images.size() != homographies.size() + 1) {
    throw ConfigError("write_sequence needs one homography per target image");
  }
  fs::create_directories(dir);
  for (std::size_t k = 0; k < images.size(); ++k) {
    write_pnm(dir / (std::to_string(k + 1) + ".ppm"), images[k]);
    if (k > 0) write_homography_file(dir / ("H_1_" + std::to_string(k + 1)), homographies[k - 1]);
  }
}

std::vector<Image> load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("data directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("data directory '" + dir.string() + "' contains no .ppm/.pgm images");
  std::vector<Image> corpus;
  corpus.reserve(files.size());
  for (const auto& f : files) corpus.push_back(read_pnm(f));
  return corpus;
}

}  // namespace sfeat
