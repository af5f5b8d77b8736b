#ifndef AFFORD_TRAINING_HPP
#define AFFORD_TRAINING_HPP

// Weakly supervised exocentric -> egocentric training of the affordance head.
//
// Per (exo, ego, label) pair the loss is
//   BCE(sigmoid(mean_p S_exo[p, :]), onehot(label))            classification
// + align_weight * (1 - cos(pool(exo), pool(ego)))             alignment
// where pool(x) = sum_p softmax_p(S_x[:, label]) * F_x[p, :] pools the head
// features F under the attention of the label's channel. Only the head and,
// optionally, the final backbone block (the path through its WCB) train.

#include <cstdint>
#include <functional>
#include <vector>

#include "afford/model.hpp"

namespace afford {

struct Hyperparameters {
  double learning_rate = 0.005;
  double weight_decay = 5e-4;
  int batch_size = 16;
  int epochs = 35;
  double align_weight = 1.0;
  bool finetune_last_block = true;
  std::uint64_t seed = 0;
};

struct PairLoss {
  double total = 0.0;
  double classification = 0.0;
  double alignment = 0.0;
};

/// Parameters updated by the optimizer, in a fixed order.
std::vector<NamedParameter> trainable_parameters(ModelState& model, bool finetune_last_block);

/// Loss of one pair; when `gradients` is non-null it receives dLoss/dParam
/// for every entry of trainable_parameters (same order, same shapes).
PairLoss pair_loss(const ModelState& model, const WcbConfig& wcb_config, const SceneImage& exo, const SceneImage& ego,
                   std::size_t label, double align_weight, bool finetune_last_block,
                   std::vector<Eigen::MatrixXd>* gradients = nullptr);

struct TrainResult {
  /// Mean pair loss of every epoch.
  std::vector<double> loss_history;
};

/// Adam with L2 weight decay. `on_epoch(epoch, mean_loss)` fires after each
/// epoch with a consistent snapshot.
TrainResult train(ModelState& model, const std::vector<SceneImage>& exo, const std::vector<SceneImage>& ego,
                  const std::vector<std::size_t>& labels, const Hyperparameters& hyper,
                  const std::function<void(int, double)>& on_epoch = {});

}  // namespace afford

#endif  // AFFORD_TRAINING_HPP
