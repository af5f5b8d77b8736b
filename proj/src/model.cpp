#include "afford/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "afford/error.hpp"
#include "afford/pnm.hpp"

namespace afford {

using nlohmann::json;

namespace {

Linear random_linear(Eigen::Index in, Eigen::Index out, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  Linear l{Eigen::MatrixXd(in, out), Eigen::MatrixXd::Zero(1, out)};
  for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight(i) = normal(rng);
  return l;
}

Eigen::MatrixXd activate(const Eigen::MatrixXd& x, Activation a) {
  return a == Activation::Tanh ? Eigen::MatrixXd(x.array().tanh()) : x;
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

}  // namespace

PatchBackbone PatchBackbone::random(int patch, int width, int depth, std::uint64_t seed) {
  if (patch < 1 || width < 1 || depth < 0) raise(ErrorCode::InvalidConfig, "invalid backbone shape");
  std::mt19937_64 rng(seed);
  PatchBackbone b;
  b.patch = patch;
  const Eigen::Index in = 3 * patch * patch;
  b.embed = random_linear(in, width, 1.0 / std::sqrt(double(in)), rng);
  std::normal_distribution<double> bias(0.0, 0.1);
  for (Eigen::Index i = 0; i < b.embed.bias.size(); ++i) b.embed.bias(i) = bias(rng);
  for (int l = 0; l < depth; ++l) b.blocks.push_back(random_linear(width, width, 1.0 / std::sqrt(double(width)), rng));
  return b;
}

TokenSequence PatchBackbone::embed_patches(const SceneImage& image) const {
  const Eigen::Index gr = image.rows() / patch, gc = image.cols() / patch;
  if (gr < 1 || gc < 1)
    raise(ErrorCode::ShapeError, "image " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()) +
                                     " is smaller than one " + std::to_string(patch) + "px patch");
  const Eigen::Index pp = Eigen::Index(patch) * patch;
  if (embed.in() != 3 * pp) raise(ErrorCode::BackboneFailure, "patch embedding does not match the patch size");
  Eigen::MatrixXd flat(gr * gc, 3 * pp);
  for (Eigen::Index pr = 0; pr < gr; ++pr)
    for (Eigen::Index pc = 0; pc < gc; ++pc) {
      const Eigen::Index row = pr * gc + pc;
      for (int k = 0; k < 3; ++k)
        for (int y = 0; y < patch; ++y)
          for (int x = 0; x < patch; ++x) flat(row, k * pp + y * patch + x) = image.channels[k](pr * patch + y, pc * patch + x);
    }
  return TokenSequence{embed.apply(flat), gr, gc, false};
}

PatchBackbone::Trace PatchBackbone::forward_traced(const SceneImage& image, const WcbConfig& wcb_config) const {
  for (int l : wcb_config.injection_layers)
    if (l < 0 || l >= depth()) raise(ErrorCode::InvalidConfig, "WCB injection layer " + std::to_string(l) + " out of range");
  Trace t;
  t.output = embed_patches(image);
  const Eigen::Index skip = t.output.has_class_token ? 1 : 0;
  for (int l = 0; l < depth(); ++l) {
    Eigen::MatrixXd pre = blocks[l].apply(t.output.tokens);
    if (l == depth() - 1) {
      t.last_input = t.output.tokens;
      t.last_pre = pre;
    }
    t.output.tokens += activate(pre, activation);
    if (wcb_config.injection_layers.count(l)) t.output.tokens = wcb(t.output.tokens, wcb_config.beta, skip);
  }
  if (!t.output.tokens.allFinite()) raise(ErrorCode::BackboneFailure, "backbone produced non-finite features");
  return t;
}

TokenSequence PatchBackbone::forward(const SceneImage& image, const WcbConfig& wcb_config) const {
  return forward_traced(image, wcb_config).output;
}

std::vector<NamedParameter> PatchBackbone::parameters() {
  std::vector<NamedParameter> p = {{"backbone.embed.weight", &embed.weight}, {"backbone.embed.bias", &embed.bias}};
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    p.push_back({"backbone.blocks." + std::to_string(l) + ".weight", &blocks[l].weight});
    p.push_back({"backbone.blocks." + std::to_string(l) + ".bias", &blocks[l].bias});
  }
  return p;
}

std::vector<NamedConstParameter> PatchBackbone::parameters() const {
  std::vector<NamedConstParameter> out;
  for (auto& p : const_cast<PatchBackbone*>(this)->parameters()) out.push_back({p.name, p.value});
  return out;
}

Eigen::MatrixXd im2col3x3(const Eigen::MatrixXd& x, Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index d = x.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows * cols, 9 * d);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const Eigen::Index sr = r + dr, sc = c + dc;
          if (sr < 0 || sc < 0 || sr >= rows || sc >= cols) continue;
          const int tap = (dr + 1) * 3 + (dc + 1);
          out.block(r * cols + c, tap * d, 1, d) = x.row(sr * cols + sc);
        }
  return out;
}

Eigen::MatrixXd col2im3x3(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols, Eigen::Index d) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows * cols, d);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const Eigen::Index sr = r + dr, sc = c + dc;
          if (sr < 0 || sc < 0 || sr >= rows || sc >= cols) continue;
          const int tap = (dr + 1) * 3 + (dc + 1);
          out.row(sr * cols + sc) += m.block(r * cols + c, tap * d, 1, d);
        }
  return out;
}

AffordanceHead AffordanceHead::random(Eigen::Index in_width, Eigen::Index hidden, Eigen::Index channels,
                                      std::uint64_t seed) {
  if (in_width < 1 || hidden < 1 || channels < 1) raise(ErrorCode::InvalidConfig, "invalid head shape");
  std::mt19937_64 rng(seed);
  AffordanceHead h;
  h.ffn = random_linear(in_width, hidden, std::sqrt(2.0 / double(in_width)), rng);
  h.conv1 = random_linear(9 * hidden, hidden, std::sqrt(2.0 / double(9 * hidden)), rng);
  h.conv2 = random_linear(9 * hidden, hidden, std::sqrt(2.0 / double(9 * hidden)), rng);
  h.proj = random_linear(hidden, channels, 1.0 / std::sqrt(double(hidden)), rng);
  return h;
}

AffordanceHead AffordanceHead::identity(Eigen::Index width, Eigen::Index channels) {
  AffordanceHead h;
  h.ffn = {Eigen::MatrixXd::Identity(width, width), Eigen::MatrixXd::Zero(1, width)};
  Eigen::MatrixXd centre = Eigen::MatrixXd::Zero(9 * width, width);
  centre.block(4 * width, 0, width, width).setIdentity();
  h.conv1 = {centre, Eigen::MatrixXd::Zero(1, width)};
  h.conv2 = {centre, Eigen::MatrixXd::Zero(1, width)};
  h.proj = {Eigen::MatrixXd::Constant(width, channels, 1.0 / double(width)), Eigen::MatrixXd::Zero(1, channels)};
  return h;
}

AffordanceHead::Activations AffordanceHead::forward(const TokenSequence& tokens) const {
  const Eigen::Index n = tokens.patch_count();
  if (tokens.grid_rows < 1 || tokens.grid_cols < 1 || tokens.grid_rows * tokens.grid_cols != n)
    raise(ErrorCode::ShapeError, "token count " + std::to_string(n) + " does not tile a " +
                                     std::to_string(tokens.grid_rows) + "x" + std::to_string(tokens.grid_cols) + " grid");
  if (tokens.width() != ffn.in()) raise(ErrorCode::ShapeError, "token width does not match the head input width");
  Activations a;
  a.rows = tokens.grid_rows;
  a.cols = tokens.grid_cols;
  a.input = tokens.tokens.bottomRows(n);
  a.ffn_pre = ffn.apply(a.input);
  a.ffn_out = relu(a.ffn_pre);
  a.cols1 = im2col3x3(a.ffn_out, a.rows, a.cols);
  a.conv1_pre = conv1.apply(a.cols1);
  a.conv1_out = relu(a.conv1_pre);
  a.cols2 = im2col3x3(a.conv1_out, a.rows, a.cols);
  a.conv2_pre = conv2.apply(a.cols2);
  a.features = relu(a.conv2_pre);
  a.scores = proj.apply(a.features);
  return a;
}

std::vector<NamedParameter> AffordanceHead::parameters() {
  return {{"head.ffn.weight", &ffn.weight},     {"head.ffn.bias", &ffn.bias},
          {"head.conv1.weight", &conv1.weight}, {"head.conv1.bias", &conv1.bias},
          {"head.conv2.weight", &conv2.weight}, {"head.conv2.bias", &conv2.bias},
          {"head.proj.weight", &proj.weight},   {"head.proj.bias", &proj.bias}};
}

std::vector<NamedConstParameter> AffordanceHead::parameters() const {
  std::vector<NamedConstParameter> out;
  for (auto& p : const_cast<AffordanceHead*>(this)->parameters()) out.push_back({p.name, p.value});
  return out;
}

ModelState make_model(const PredicateList& predicates, const ModelShape& shape, std::uint64_t seed, double beta) {
  if (predicates.empty()) raise(ErrorCode::EmptyPredicateList, "model needs at least one predicate");
  if (!(beta >= 0.0 && beta <= 1.0)) raise(ErrorCode::InvalidConfig, "beta must lie in [0,1]");
  ModelState m;
  m.backbone = PatchBackbone::random(shape.patch, shape.width, shape.depth, seed);
  m.head = AffordanceHead::random(shape.width, shape.hidden, static_cast<Eigen::Index>(predicates.size()),
                                  seed ^ 0x9E3779B97F4A7C15ull);
  m.meta.predicates = predicates;
  m.meta.beta = beta;
  m.meta.injection_layers = WcbConfig::all_layers(shape.depth, beta).injection_layers;
  m.meta.backbone_id = m.backbone.id;
  m.meta.seed = seed;
  return m;
}

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) raise(ErrorCode::FormatError, "truncated array file");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_array(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::string out = "WAFT";
  put_le<std::uint32_t>(out, 1);  // version
  put_le<std::uint32_t>(out, 1);  // float64
  put_le<std::uint32_t>(out, 2);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_le<double>(out, m(r, c));
  write_file(path, out);
}

Eigen::MatrixXd read_array(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  if (in.compare(0, 4, "WAFT") != 0) raise(ErrorCode::FormatError, path.string() + ": bad magic");
  std::size_t pos = 4;
  if (get_le<std::uint32_t>(in, pos) != 1) raise(ErrorCode::FormatError, path.string() + ": unsupported version");
  if (get_le<std::uint32_t>(in, pos) != 1) raise(ErrorCode::FormatError, path.string() + ": unsupported dtype");
  const auto ndim = get_le<std::uint32_t>(in, pos);
  if (ndim < 1 || ndim > 2) raise(ErrorCode::FormatError, path.string() + ": expected a 1-d or 2-d array");
  std::uint64_t shape[2] = {1, 1};
  for (std::uint32_t i = 0; i < ndim; ++i) shape[ndim == 1 ? 1 : i] = get_le<std::uint64_t>(in, pos);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get_le<double>(in, pos);
  if (pos != in.size()) raise(ErrorCode::FormatError, path.string() + ": trailing bytes");
  return m;
}

ModelState make_color_probe_model(const PredicateList& predicates,
                                  const std::map<std::string, std::array<double, 3>>& predicate_colors, int patch,
                                  double beta) {
  if (predicates.empty()) raise(ErrorCode::EmptyPredicateList, "model needs at least one predicate");
  if (patch < 1) raise(ErrorCode::InvalidConfig, "patch size must be positive");
  if (!(beta >= 0.0 && beta <= 1.0)) raise(ErrorCode::InvalidConfig, "beta must lie in [0,1]");
  const Eigen::Index pp = Eigen::Index(patch) * patch;
  const auto C = static_cast<Eigen::Index>(predicates.size());

  ModelState m;
  m.backbone.id = "color-probe";
  m.backbone.patch = patch;
  m.backbone.activation = Activation::Tanh;
  m.backbone.embed = {Eigen::MatrixXd::Zero(3 * pp, 3), Eigen::MatrixXd::Zero(1, 3)};
  for (int k = 0; k < 3; ++k) m.backbone.embed.weight.block(k * pp, k, pp, 1).setConstant(1.0 / double(pp));
  m.backbone.blocks = {Linear{Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(1, 3)}};

  m.head = AffordanceHead::identity(3, C);
  m.head.proj.weight.setZero();
  for (const auto& [name, rgb] : predicate_colors) {
    const auto idx = predicates.index_of(name);
    if (!idx) raise(ErrorCode::UnknownPredicate, "colour given for unknown predicate '" + name + "'");
    for (int k = 0; k < 3; ++k) m.head.proj.weight(k, Eigen::Index(*idx)) = rgb[k];
  }

  m.meta.predicates = predicates;
  m.meta.beta = beta;
  m.meta.injection_layers = WcbConfig::all_layers(1, beta).injection_layers;
  m.meta.backbone_id = m.backbone.id;
  return m;
}

void save_model(const ModelState& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json meta = {
      {"format_version", 1},
      {"predicates", model.meta.predicates.names()},
      {"beta", model.meta.beta},
      {"injection_layers", std::vector<int>(model.meta.injection_layers.begin(), model.meta.injection_layers.end())},
      {"backbone_id", model.meta.backbone_id},
      {"seed", model.meta.seed},
      {"patch", model.backbone.patch},
      {"width", model.backbone.width()},
      {"depth", model.backbone.depth()},
      {"hidden", model.head.hidden()},
      {"activation", model.backbone.activation == Activation::Tanh ? "tanh" : "identity"},
  };
  json groups = json::array();
  for (const auto& p : model.backbone.parameters()) {
    write_array(dir / (p.name + ".bin"), *p.value);
    groups.push_back(p.name);
  }
  for (const auto& p : model.head.parameters()) {
    write_array(dir / (p.name + ".bin"), *p.value);
    groups.push_back(p.name);
  }
  meta["parameter_groups"] = groups;
  write_file(dir / "metadata.json", meta.dump(2) + "\n");
}

ModelState load_model(const std::filesystem::path& dir) {
  const auto meta_path = dir / "metadata.json";
  if (!std::filesystem::exists(meta_path)) raise(ErrorCode::IoError, "no model metadata at " + meta_path.string());
  ModelState m;
  try {
    const json meta = json::parse(read_file(meta_path));
    m.meta.predicates = PredicateList(meta.at("predicates").get<std::vector<std::string>>());
    m.meta.beta = meta.at("beta").get<double>();
    for (int l : meta.at("injection_layers").get<std::vector<int>>()) m.meta.injection_layers.insert(l);
    m.meta.backbone_id = meta.at("backbone_id").get<std::string>();
    m.meta.seed = meta.at("seed").get<std::uint64_t>();
    m.backbone.id = m.meta.backbone_id;
    m.backbone.patch = meta.at("patch").get<int>();
    m.backbone.activation = meta.value("activation", std::string("tanh")) == "tanh" ? Activation::Tanh : Activation::Identity;
    m.backbone.blocks.resize(static_cast<std::size_t>(meta.at("depth").get<int>()));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::FormatError, meta_path.string() + ": " + e.what());
  }
  for (auto& p : m.backbone.parameters()) *p.value = read_array(dir / (p.name + ".bin"));
  for (auto& p : m.head.parameters()) *p.value = read_array(dir / (p.name + ".bin"));
  if (m.head.channels() != static_cast<Eigen::Index>(m.meta.predicates.size()))
    raise(ErrorCode::FormatError, "head channel count differs from the predicate list length");
  if (!(m.meta.beta >= 0.0 && m.meta.beta <= 1.0)) raise(ErrorCode::FormatError, "beta outside [0,1]");
  for (int l : m.meta.injection_layers)
    if (l < 0 || l >= m.backbone.depth()) raise(ErrorCode::FormatError, "injection layer out of range");
  return m;
}

}  // namespace afford
