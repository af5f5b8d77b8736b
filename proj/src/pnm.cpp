#include "afford/pnm.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace afford {
namespace {

struct PnmHeader {
  std::string magic;
  Eigen::Index width = 0;
  Eigen::Index height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char ch = bytes[pos];
    if (ch == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return bytes.substr(start, pos - start);
}

PnmHeader parse_header(const std::string& bytes, const char* expected) {
  PnmHeader h;
  std::size_t pos = 0;
  h.magic = next_token(bytes, pos);
  if (h.magic != expected) raise(ErrorCode::FormatError, std::string("expected netpbm magic ") + expected);
  try {
    h.width = std::stol(next_token(bytes, pos));
    h.height = std::stol(next_token(bytes, pos));
    h.maxval = std::stoi(next_token(bytes, pos));
  } catch (const std::exception&) {
    raise(ErrorCode::FormatError, "malformed netpbm header");
  }
  if (h.width < 1 || h.height < 1) raise(ErrorCode::FormatError, "netpbm image must be at least 1x1");
  if (h.maxval != 255) raise(ErrorCode::FormatError, "only 8-bit netpbm files (maxval 255) are supported");
  // exactly one whitespace byte separates the header from the raster
  h.data_offset = pos + 1;
  return h;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) raise(ErrorCode::IoError, "short write to " + path.string());
}

std::string encode_pgm(const Gray8& image) {
  std::string out = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(image.size()));
  for (Eigen::Index r = 0; r < image.rows(); ++r)
    for (Eigen::Index c = 0; c < image.cols(); ++c) out.push_back(static_cast<char>(image(r, c)));
  return out;
}

Gray8 decode_pgm(const std::string& bytes) {
  const PnmHeader h = parse_header(bytes, "P5");
  if (bytes.size() < h.data_offset + static_cast<std::size_t>(h.width * h.height))
    raise(ErrorCode::FormatError, "truncated P5 raster");
  Gray8 image(h.height, h.width);
  std::size_t p = h.data_offset;
  for (Eigen::Index r = 0; r < h.height; ++r)
    for (Eigen::Index c = 0; c < h.width; ++c) image(r, c) = static_cast<std::uint8_t>(bytes[p++]);
  return image;
}

void write_pgm(const std::filesystem::path& path, const Gray8& image) { write_file(path, encode_pgm(image)); }

Gray8 read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

std::string encode_ppm(const SceneImage& image) {
  std::string out = "P6\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
  for (Eigen::Index r = 0; r < image.rows(); ++r)
    for (Eigen::Index c = 0; c < image.cols(); ++c)
      for (int k = 0; k < 3; ++k) {
        const double v = std::clamp(image.channels[k](r, c), 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(255.0 * v))));
      }
  return out;
}

SceneImage decode_ppm(const std::string& bytes) {
  const PnmHeader h = parse_header(bytes, "P6");
  if (bytes.size() < h.data_offset + static_cast<std::size_t>(3 * h.width * h.height))
    raise(ErrorCode::FormatError, "truncated P6 raster");
  SceneImage image(h.height, h.width);
  std::size_t p = h.data_offset;
  for (Eigen::Index r = 0; r < h.height; ++r)
    for (Eigen::Index c = 0; c < h.width; ++c)
      for (int k = 0; k < 3; ++k) image.channels[k](r, c) = static_cast<std::uint8_t>(bytes[p++]) / 255.0;
  return image;
}

void write_ppm(const std::filesystem::path& path, const SceneImage& image) { write_file(path, encode_ppm(image)); }

SceneImage read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

Gray8 to_gray8(const AffordanceMap& map) {
  Gray8 out(map.rows(), map.cols());
  for (Eigen::Index i = 0; i < map.size(); ++i)
    out(i) = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(map(i), 0.0, 1.0)));
  return out;
}

AffordanceMap from_gray8(const Gray8& image) { return image.cast<double>() / 255.0; }

Gray8 mask_to_gray8(const BoolMask& mask) {
  return mask.select(Gray8::Constant(mask.rows(), mask.cols(), 255), Gray8::Zero(mask.rows(), mask.cols()));
}

}  // namespace afford
