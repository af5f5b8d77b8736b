#ifndef AFFORD_PNM_HPP
#define AFFORD_PNM_HPP

// Binary netpbm I/O: P5 (8-bit grayscale) for GT maps, predicted maps and
// full-view masks; P6 (8-bit RGB) for scene images and overlays.

#include <cstdint>
#include <filesystem>
#include <string>

#include "afford/image.hpp"

namespace afford {

using Gray8 = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

std::string encode_pgm(const Gray8& image);
Gray8 decode_pgm(const std::string& bytes);
void write_pgm(const std::filesystem::path& path, const Gray8& image);
Gray8 read_pgm(const std::filesystem::path& path);

std::string encode_ppm(const SceneImage& image);
SceneImage decode_ppm(const std::string& bytes);
void write_ppm(const std::filesystem::path& path, const SceneImage& image);
SceneImage read_ppm(const std::filesystem::path& path);

/// round(255 * v), v clamped to [0,1].
Gray8 to_gray8(const AffordanceMap& map);
AffordanceMap from_gray8(const Gray8& image);

/// 255 = foreground, 0 = background.
Gray8 mask_to_gray8(const BoolMask& mask);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace afford

#endif  // AFFORD_PNM_HPP
