#include "afford/training.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "afford/error.hpp"

namespace afford {
namespace {

struct ImagePass {
  PatchBackbone::Trace trace;
  AffordanceHead::Activations act;
};

ImagePass run(const ModelState& model, const WcbConfig& wcb_config, const SceneImage& image) {
  ImagePass p;
  p.trace = model.backbone.forward_traced(image, wcb_config);
  p.act = model.head.forward(p.trace.output);
  return p;
}

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& pre) { return (pre.array() > 0.0).cast<double>().matrix(); }

Eigen::MatrixXd column_sum(const Eigen::MatrixXd& m) { return m.colwise().sum(); }

// Backpropagates score and feature gradients of one image into `grads`
// (ordered as trainable_parameters).
void backward(const ModelState& model, const WcbConfig& wcb_config, const ImagePass& pass,
              const Eigen::MatrixXd& d_scores, const Eigen::MatrixXd& d_features_extra, bool finetune,
              std::vector<Eigen::MatrixXd>& grads) {
  const auto& h = model.head;
  const auto& a = pass.act;
  grads[6] += a.features.transpose() * d_scores;
  grads[7] += column_sum(d_scores);
  Eigen::MatrixXd d_features = d_scores * h.proj.weight.transpose() + d_features_extra;

  Eigen::MatrixXd d_z2 = d_features.cwiseProduct(relu_mask(a.conv2_pre));
  grads[4] += a.cols2.transpose() * d_z2;
  grads[5] += column_sum(d_z2);
  Eigen::MatrixXd d_a2 = col2im3x3(d_z2 * h.conv2.weight.transpose(), a.rows, a.cols, h.hidden());

  Eigen::MatrixXd d_z1 = d_a2.cwiseProduct(relu_mask(a.conv1_pre));
  grads[2] += a.cols1.transpose() * d_z1;
  grads[3] += column_sum(d_z1);
  Eigen::MatrixXd d_a1 = col2im3x3(d_z1 * h.conv1.weight.transpose(), a.rows, a.cols, h.hidden());

  Eigen::MatrixXd d_u = d_a1.cwiseProduct(relu_mask(a.ffn_pre));
  grads[0] += a.input.transpose() * d_u;
  grads[1] += column_sum(d_u);

  if (!finetune) return;
  Eigen::MatrixXd d_tokens = d_u * h.ffn.weight.transpose();
  const int last = model.backbone.depth() - 1;
  if (wcb_config.injection_layers.count(last)) d_tokens = wcb_backward(d_tokens, wcb_config.beta);
  Eigen::MatrixXd d_pre = d_tokens;
  if (model.backbone.activation == Activation::Tanh)
    d_pre = d_tokens.cwiseProduct((1.0 - pass.trace.last_pre.array().tanh().square()).matrix());
  grads[8] += pass.trace.last_input.transpose() * d_pre;
  grads[9] += column_sum(d_pre);
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Pooled {
  Eigen::VectorXd attention;  // N
  Eigen::RowVectorXd feature;  // H
};

Pooled attention_pool(const AffordanceHead::Activations& a, std::size_t label) {
  Pooled p;
  const Eigen::VectorXd s = a.scores.col(static_cast<Eigen::Index>(label));
  p.attention = (s.array() - s.maxCoeff()).exp().matrix();
  p.attention /= p.attention.sum();
  p.feature = p.attention.transpose() * a.features;
  return p;
}

// Gradients of a pooled feature back onto scores and features.
void pool_backward(const AffordanceHead::Activations& a, const Pooled& p, const Eigen::RowVectorXd& d_feature,
                   std::size_t label, Eigen::MatrixXd& d_scores, Eigen::MatrixXd& d_features) {
  d_features += p.attention * d_feature;
  const Eigen::VectorXd d_att = a.features * d_feature.transpose();
  const double centre = p.attention.dot(d_att);
  d_scores.col(static_cast<Eigen::Index>(label)) += p.attention.cwiseProduct((d_att.array() - centre).matrix());
}

}  // namespace

std::vector<NamedParameter> trainable_parameters(ModelState& model, bool finetune_last_block) {
  auto params = model.head.parameters();
  if (finetune_last_block && model.backbone.depth() > 0) {
    auto& last = model.backbone.blocks.back();
    const std::string prefix = "backbone.blocks." + std::to_string(model.backbone.depth() - 1);
    params.push_back({prefix + ".weight", &last.weight});
    params.push_back({prefix + ".bias", &last.bias});
  }
  return params;
}

PairLoss pair_loss(const ModelState& model, const WcbConfig& wcb_config, const SceneImage& exo, const SceneImage& ego,
                   std::size_t label, double align_weight, bool finetune_last_block,
                   std::vector<Eigen::MatrixXd>* gradients) {
  const Eigen::Index channels = model.head.channels();
  if (label >= static_cast<std::size_t>(channels))
    raise(ErrorCode::LabelOutOfRange, "label " + std::to_string(label) + " >= " + std::to_string(channels));
  const bool finetune = finetune_last_block && model.backbone.depth() > 0;

  const ImagePass ex = run(model, wcb_config, exo);
  const ImagePass eg = run(model, wcb_config, ego);
  const auto n_ex = static_cast<double>(ex.act.scores.rows());

  PairLoss loss;
  const Eigen::RowVectorXd pooled_scores = ex.act.scores.colwise().mean();
  Eigen::RowVectorXd d_pooled(channels);
  for (Eigen::Index k = 0; k < channels; ++k) {
    const double y = k == static_cast<Eigen::Index>(label) ? 1.0 : 0.0;
    loss.classification += (softplus(pooled_scores(k)) - y * pooled_scores(k)) / double(channels);
    d_pooled(k) = (sigmoid(pooled_scores(k)) - y) / double(channels);
  }

  const Pooled pe = attention_pool(ex.act, label);
  const Pooled pg = attention_pool(eg.act, label);
  const double ne = pe.feature.norm(), ng = pg.feature.norm();
  double cosine = 0.0;
  if (ne > 0.0 && ng > 0.0) cosine = pe.feature.dot(pg.feature) / (ne * ng);
  loss.alignment = 1.0 - cosine;
  loss.total = loss.classification + align_weight * loss.alignment;

  if (gradients == nullptr) return loss;

  auto& grads = *gradients;
  grads.clear();
  for (const auto& p : model.head.parameters()) grads.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
  if (finetune) {
    const auto& last = model.backbone.blocks.back();
    grads.push_back(Eigen::MatrixXd::Zero(last.weight.rows(), last.weight.cols()));
    grads.push_back(Eigen::MatrixXd::Zero(last.bias.rows(), last.bias.cols()));
  }

  Eigen::MatrixXd ds_ex = Eigen::MatrixXd::Zero(ex.act.scores.rows(), channels);
  ds_ex.rowwise() += d_pooled / n_ex;
  Eigen::MatrixXd df_ex = Eigen::MatrixXd::Zero(ex.act.features.rows(), ex.act.features.cols());
  Eigen::MatrixXd ds_eg = Eigen::MatrixXd::Zero(eg.act.scores.rows(), channels);
  Eigen::MatrixXd df_eg = Eigen::MatrixXd::Zero(eg.act.features.rows(), eg.act.features.cols());

  if (ne > 0.0 && ng > 0.0 && align_weight != 0.0) {
    // d(1 - cos)/du = -(v / (|u||v|) - cos * u / |u|^2)
    const Eigen::RowVectorXd d_fe = -align_weight * (pg.feature / (ne * ng) - cosine * pe.feature / (ne * ne));
    const Eigen::RowVectorXd d_fg = -align_weight * (pe.feature / (ne * ng) - cosine * pg.feature / (ng * ng));
    pool_backward(ex.act, pe, d_fe, label, ds_ex, df_ex);
    pool_backward(eg.act, pg, d_fg, label, ds_eg, df_eg);
  }
  backward(model, wcb_config, ex, ds_ex, df_ex, finetune, grads);
  backward(model, wcb_config, eg, ds_eg, df_eg, finetune, grads);
  return loss;
}

TrainResult train(ModelState& model, const std::vector<SceneImage>& exo, const std::vector<SceneImage>& ego,
                  const std::vector<std::size_t>& labels, const Hyperparameters& hyper,
                  const std::function<void(int, double)>& on_epoch) {
  if (exo.empty() || ego.empty() || labels.empty()) raise(ErrorCode::EmptyDataset, "training set is empty");
  if (exo.size() != ego.size() || exo.size() != labels.size())
    raise(ErrorCode::DimensionMismatch, "exo images, ego images and labels must pair up one to one");
  if (hyper.batch_size < 1 || hyper.epochs < 0 || hyper.learning_rate < 0.0 || hyper.weight_decay < 0.0)
    raise(ErrorCode::InvalidConfig, "invalid training hyperparameters");
  const Eigen::Index rows = exo[0].rows(), cols = exo[0].cols();
  for (std::size_t i = 0; i < exo.size(); ++i) {
    if (exo[i].rows() != rows || exo[i].cols() != cols || ego[i].rows() != rows || ego[i].cols() != cols)
      raise(ErrorCode::DimensionMismatch, "training images must share one size");
    if (labels[i] >= model.meta.predicates.size())
      raise(ErrorCode::LabelOutOfRange, "label " + std::to_string(labels[i]) + " at index " + std::to_string(i));
  }

  const WcbConfig wcb_config = model.wcb_config();
  const bool finetune = hyper.finetune_last_block && model.backbone.depth() > 0;
  auto params = trainable_parameters(model, finetune);
  std::vector<Eigen::MatrixXd> m1, m2;
  for (const auto& p : params) {
    m1.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
    m2.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long step = 0;

  std::mt19937_64 rng(hyper.seed);
  std::vector<std::size_t> order(exo.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
      std::vector<Eigen::MatrixXd> batch_grad;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t s = order[i];
        std::vector<Eigen::MatrixXd> g;
        epoch_loss += pair_loss(model, wcb_config, exo[s], ego[s], labels[s], hyper.align_weight, finetune, &g).total;
        if (batch_grad.empty())
          batch_grad = std::move(g);
        else
          for (std::size_t k = 0; k < g.size(); ++k) batch_grad[k] += g[k];
      }
      const double scale = 1.0 / double(end - start);
      ++step;
      const double c1 = 1.0 - std::pow(b1, double(step)), c2 = 1.0 - std::pow(b2, double(step));
      for (std::size_t k = 0; k < params.size(); ++k) {
        Eigen::MatrixXd& w = *params[k].value;
        const Eigen::MatrixXd g = batch_grad[k] * scale + hyper.weight_decay * w;
        m1[k] = b1 * m1[k] + (1.0 - b1) * g;
        m2[k] = b2 * m2[k] + (1.0 - b2) * g.cwiseProduct(g);
        w.array() -= hyper.learning_rate * (m1[k].array() / c1) / ((m2[k].array() / c2).sqrt() + eps);
      }
    }
    const double mean = epoch_loss / double(order.size());
    result.loss_history.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

}  // namespace afford
