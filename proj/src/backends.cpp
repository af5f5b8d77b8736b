#include "afford/backends.hpp"

#include <sys/wait.h>

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <deque>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "afford/arcot.hpp"
#include "afford/error.hpp"
#include "afford/pnm.hpp"

namespace afford {

using nlohmann::json;

RleMask rle_encode(const BoolMask& mask) {
  RleMask rle{mask.rows(), mask.cols(), {}};
  bool current = false;
  std::uint32_t run = 0;
  // Eigen's default storage is column-major, matching the COCO order.
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (mask(i) != current) {
      rle.counts.push_back(run);
      run = 0;
      current = !current;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

BoolMask rle_decode(const RleMask& rle) {
  BoolMask mask = BoolMask::Constant(rle.rows, rle.cols, false);
  Eigen::Index pos = 0;
  bool value = false;
  for (std::uint32_t run : rle.counts) {
    if (pos + run > mask.size()) raise(ErrorCode::FormatError, "RLE runs exceed the mask size");
    for (std::uint32_t i = 0; i < run; ++i) mask(pos++) = value;
    value = !value;
  }
  if (pos != mask.size()) raise(ErrorCode::FormatError, "RLE runs do not cover the mask");
  return mask;
}

std::vector<BoolMask> ColorComponentSegmenter::segment(const SceneImage& image) {
  const Eigen::Index rows = image.rows(), cols = image.cols();
  const int L = std::max(levels_, 2);
  Eigen::ArrayXXi color(rows, cols);
  std::map<int, Eigen::Index> histogram;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      int id = 0;
      for (int k = 0; k < 3; ++k) {
        const double v = std::clamp(image.channels[k](r, c), 0.0, 1.0);
        id = id * L + static_cast<int>(std::lround(v * (L - 1)));
      }
      color(r, c) = id;
      ++histogram[id];
    }

  int backdrop = -1;
  if (histogram.size() > 1) {
    Eigen::Index best = -1;
    for (const auto& [id, count] : histogram)
      if (count > best) {
        best = count;
        backdrop = id;
      }
  }

  std::vector<BoolMask> masks;
  BoolMask visited = BoolMask::Constant(rows, cols, false);
  std::deque<std::pair<Eigen::Index, Eigen::Index>> queue;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (visited(r, c) || color(r, c) == backdrop) continue;
      const int id = color(r, c);
      BoolMask mask = BoolMask::Constant(rows, cols, false);
      visited(r, c) = true;
      queue.emplace_back(r, c);
      while (!queue.empty()) {
        auto [y, x] = queue.front();
        queue.pop_front();
        mask(y, x) = true;
        constexpr int dy[] = {-1, 1, 0, 0};
        constexpr int dx[] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
          const Eigen::Index ny = y + dy[d], nx = x + dx[d];
          if (ny < 0 || nx < 0 || ny >= rows || nx >= cols) continue;
          if (visited(ny, nx) || color(ny, nx) != id) continue;
          visited(ny, nx) = true;
          queue.emplace_back(ny, nx);
        }
      }
      masks.push_back(std::move(mask));
    }
  return masks;
}

namespace {

std::filesystem::path temp_path(const std::string& stem, const std::string& ext) {
  static std::atomic<std::uint64_t> counter{0};
  return std::filesystem::temp_directory_path() /
         (stem + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ext);
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out.push_back(c);
  }
  return out + "'";
}

Embedding parse_embedding(const std::string& output) {
  try {
    auto values = json::parse(output).get<std::vector<double>>();
    if (values.empty()) raise(ErrorCode::EncoderFailure, "encoder returned an empty vector");
    return Eigen::Map<Embedding>(values.data(), static_cast<Eigen::Index>(values.size()));
  } catch (const json::exception& e) {
    raise(ErrorCode::EncoderFailure, std::string("encoder output is not a JSON number array: ") + e.what());
  }
}

}  // namespace

std::string run_command(const std::string& command, const std::string& stdin_data) {
  std::string full = command;
  std::filesystem::path input;
  if (!stdin_data.empty()) {
    input = temp_path("afford-stdin", ".txt");
    write_file(input, stdin_data);
    full += " < " + shell_quote(input.string());
  }
  FILE* pipe = ::popen(full.c_str(), "r");
  if (pipe == nullptr) raise(ErrorCode::IoError, "cannot start: " + command);
  std::string output;
  char buffer[4096];
  while (std::size_t n = std::fread(buffer, 1, sizeof buffer, pipe)) output.append(buffer, n);
  const int status = ::pclose(pipe);
  if (!input.empty()) std::filesystem::remove(input);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
    raise(ErrorCode::IoError, "command failed: " + command);
  return output;
}

std::vector<BoolMask> CommandSegmenter::segment(const SceneImage& image) {
  const auto path = temp_path("afford-segment", ".ppm");
  write_ppm(path, image);
  std::string output;
  try {
    output = run_command(command_ + " " + shell_quote(path.string()));
  } catch (const Error& e) {
    std::filesystem::remove(path);
    raise(ErrorCode::SegmenterFailure, e.what());
  }
  std::filesystem::remove(path);
  std::vector<BoolMask> masks;
  try {
    for (const auto& m : json::parse(output).at("masks")) {
      RleMask rle;
      rle.rows = m.at("size").at(0).get<Eigen::Index>();
      rle.cols = m.at("size").at(1).get<Eigen::Index>();
      rle.counts = m.at("counts").get<std::vector<std::uint32_t>>();
      masks.push_back(rle_decode(rle));
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::SegmenterFailure, std::string("malformed segmenter output: ") + e.what());
  }
  return masks;
}

std::uint64_t fnv1a(const std::string& data, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ull ^ seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

ColorKeyedEncoder::ColorKeyedEncoder(std::map<std::string, std::array<double, 3>> colors, std::uint64_t seed)
    : seed_(seed) {
  for (auto& [name, rgb] : colors) colors_[text::normalize(name)] = rgb;
}

Embedding ColorKeyedEncoder::embed(const SceneImage& region) {
  Embedding v(3);
  for (int k = 0; k < 3; ++k) v(k) = region.channels[k].mean();
  const double n = v.norm();
  if (n == 0.0) return Embedding::Constant(3, 1.0 / std::sqrt(3.0));
  return v / n;
}

Embedding ColorKeyedEncoder::embed(const std::string& name) {
  const auto words = text::split_words(name);
  const std::array<double, 3>* best = nullptr;
  std::size_t best_words = 0;
  for (const auto& [key, rgb] : colors_) {
    const auto key_words = text::split_words(key);
    bool all = !key_words.empty();
    for (const auto& kw : key_words) all = all && std::find(words.begin(), words.end(), kw) != words.end();
    if (all && key_words.size() > best_words) {
      best = &rgb;
      best_words = key_words.size();
    }
  }
  Embedding v(3);
  if (best != nullptr) {
    v << (*best)[0], (*best)[1], (*best)[2];
  } else {
    std::mt19937_64 rng(fnv1a(text::normalize(name), seed_));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    v << unit(rng), unit(rng), unit(rng);
  }
  const double n = v.norm();
  if (n == 0.0) return Embedding::Constant(3, 1.0 / std::sqrt(3.0));
  return v / n;
}

Embedding CommandImageEncoder::embed(const SceneImage& region) {
  const auto path = temp_path("afford-region", ".ppm");
  write_ppm(path, region);
  std::string output;
  try {
    output = run_command(command_ + " " + shell_quote(path.string()));
  } catch (const Error& e) {
    std::filesystem::remove(path);
    raise(ErrorCode::EncoderFailure, e.what());
  }
  std::filesystem::remove(path);
  return parse_embedding(output);
}

Embedding CommandTextEncoder::embed(const std::string& text) {
  try {
    return parse_embedding(run_command(command_, text));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EncoderFailure) throw;
    raise(ErrorCode::EncoderFailure, e.what());
  }
}

}  // namespace afford
