#pragma once

#include <filesystem>
#include <vector>

#include "sfeat/homography.hpp"
#include "sfeat/image.hpp"

namespace sfeat {

/// HPatches-style sequence: reference image 1 and targets 2..n, with
/// homographies[k] mapping image 1 onto image k + 2.
struct ImageSequence {
  std::filesystem::path directory;
  std::vector<Image> images;
  std::vector<Homography> homographies;
};

/// Reads "1.ppm" (or .pgm), then "k.ppm" for k = 2, 3, ... until the first
/// missing index, each paired with text file "H_1_k".
ImageSequence load_sequence(const std::filesystem::path& dir);

/// Nine whitespace-separated reals, row-major, normalized on load.
Homography read_homography_file(const std::filesystem::path& path);
void write_homography_file(const std::filesystem::path& path, const Homography& h);

/// Writes images as 1.ppm, 2.ppm, ... and H_1_k files.
void write_sequence(const std::filesystem::path& dir, const std::vector<Image>& images,
                    const std::vector<Homography>& homographies);

/// All .ppm/.pgm files of a directory, sorted by filename.
std::vector<Image> load_corpus(const std::filesystem::path& dir);

}  // namespace sfeat
