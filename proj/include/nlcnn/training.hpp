#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "nlcnn/augment.hpp"
#include "nlcnn/constraints.hpp"
#include "nlcnn/dataset.hpp"
#include "nlcnn/error.hpp"
#include "nlcnn/gradients.hpp"
#include "nlcnn/nlconv.hpp"
#include "nlcnn/rng.hpp"

namespace nlcnn {

/// Declarative description of one convolutional layer.
struct LayerSpec {
  VariantKind variant = VariantKind::Elementwise;
  KernelShape kernel;
  Stride stride;
  std::size_t out_channels = 1;
  Activation activation = Activation::Relu;
};

struct NetworkLayer {
  LayerParams params;  ///< effective exponents, always within bounds
  ConstraintPolicy policy;
  /// Unconstrained exponent payload per channel; present only in Reparam mode.
  std::optional<std::vector<EwmVariant>> latent;
};

/// Stack of nonlinear convolution layers followed by flatten and a dense
/// softmax classifier. Layer l + 1 sees layer l's feature map as a
/// grid_t x (grid_c * M) matrix.
struct Network {
  std::size_t input_rows = 0;
  std::size_t input_cols = 0;
  std::vector<NetworkLayer> layers;
  Tensor head_w;  ///< classes x features
  Tensor head_b;  ///< classes

  std::size_t classes() const { return head_b.size(); }
  std::size_t feature_count() const;
  /// Input shape seen by each layer, plus the final feature-map matrix shape.
  std::vector<Shape> layer_input_shapes() const;
  void validate() const;
};

/// Builds a network at neutral exponent initialization; W1 and the head are
/// drawn uniform in ±sqrt(6 / (fan_in + fan_out)), biases start at zero.
Network build_network(std::size_t input_rows, std::size_t input_cols,
                      const std::vector<LayerSpec>& layers, std::size_t classes,
                      const ConstraintPolicy& policy, SeededRng& rng);

/// Softmax with max subtraction.
Tensor softmax(const Tensor& logits);
Tensor network_logits(const Network& net, const Tensor& window, double eps = kDefaultEps);
/// Class probabilities for one window.
Tensor forward_network(const Network& net, const Tensor& window, double eps = kDefaultEps);

struct NetworkGrad {
  std::vector<LayerGrad> layers;
  Tensor head_w;
  Tensor head_b;
};

/// Cross-entropy loss of one sample and, when `grad` is given, its gradient
/// added into `grad` (which must come from zero_grad).
double sample_loss(const Network& net, const Tensor& window, int label, NetworkGrad* grad,
                   double eps = kDefaultEps);
NetworkGrad zero_grad(const Network& net);

/// Trainable parameters flattened in a fixed order: per layer and channel W1,
/// bias, then exponents (latent values in Reparam mode); finally the head.
std::vector<double> pack_params(const Network& net, bool include_exponents = true);
/// Inverse of pack_params. In Reparam mode effective exponents are refreshed
/// from the latent values; no clipping is applied here.
void unpack_params(Network& net, const std::vector<double>& flat, bool include_exponents = true);
/// Gradient in pack_params order, chained through the reparameterization
/// where active and projected at active bounds in ProjectAfterStep mode.
std::vector<double> pack_grads(const Network& net, const NetworkGrad& grad,
                               bool include_exponents = true);

/// Applies each layer's constraint after an optimizer step.
void enforce_constraints(Network& net);
/// Largest amount by which any effective exponent leaves its bounds (0 when feasible).
double max_bound_violation(const Network& net);
/// All effective exponents of every layer.
std::vector<double> effective_exponents(const Network& net);

enum class OptimizerKind { Sgd, Adam };

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double beta1 = 0.9, double beta2 = 0.999,
            double epsilon = 1e-8);
  void step(std::vector<double>& params, const std::vector<double>& grads);

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, epsilon_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::vector<AugmentSpec> augment;
  /// When false the exponents stay at their initial (fixed) values.
  bool train_exponents = true;
  std::size_t eval_every = 1;
  double eps = kDefaultEps;

  void validate() const;
};

struct Metrics {
  std::size_t classes = 0;
  std::vector<std::vector<std::size_t>> confusion;  ///< [true][predicted]
  double accuracy = 0.0;
  /// Recall per class; 0 for classes absent from the data.
  std::vector<double> detection_rate;
  /// Fraction of class-0 (normal) windows predicted as any fault; 0 without normal windows.
  double false_alarm = 0.0;
  double loss = 0.0;  ///< mean cross-entropy
  std::size_t total() const;
};

/// Metrics from true and predicted labels alone.
Metrics metrics_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                 std::size_t classes);
Metrics evaluate(const Network& net, const WindowedDataset& data, double eps = kDefaultEps);

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  std::optional<Metrics> eval;
};

/// Raised when a minibatch loss is NaN or Inf.
class NonFiniteLoss : public NumericError {
 public:
  NonFiniteLoss(std::size_t epoch, std::size_t batch);
  std::size_t epoch, batch;
};

/// Minibatch cross-entropy training. Constraints are enforced after every
/// step. Deterministic for a fixed config seed. Metrics are computed on
/// `eval_data` when given, else on the training data.
std::vector<EpochRecord> train(Network& net, const WindowedDataset& data, const TrainConfig& config,
                               const WindowedDataset* eval_data = nullptr);

/// CSV: epoch,loss,accuracy,false_alarm,det_0..det_{K-1}; metric cells are
/// empty on epochs without evaluation.
void write_metrics_csv(std::ostream& out, const std::vector<EpochRecord>& history, std::size_t classes);

inline constexpr int kModelFormatVersion = 1;
void save_model(std::ostream& out, const Network& net);
void save_model(const std::filesystem::path& path, const Network& net);
Network load_model(std::istream& in);
Network load_model(const std::filesystem::path& path);

}  // namespace nlcnn
