#pragma once

// Small MLP policy: tanh hidden layers, linear output, optional saturation.

#include "cbfd/sim.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace cbfd {

Vec apply_feature_map(FeatureMapId id, const Vec& x);
int feature_dim(FeatureMapId id, int state_dim);

struct Layer {
  Mat weight;  // out x in
  Vec bias;
};

struct MlpGradients {
  std::vector<Mat> weight;
  std::vector<Vec> bias;
};

struct TrainConfig {
  int epochs = 500;
  int batch = 64;
  double lr = 1e-3;
  // Cosine decay of the step size from lr to lr * final_lr_fraction; 1 keeps it constant.
  double final_lr_fraction = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
};

struct EpochLoss {
  double train_mse = 0.0;
  double val_mse = 0.0;
};

class Dataset {
 public:
  enum class Split { Train, Val };

  Dataset() = default;
  Dataset(int feature_dim, int label_dim, double val_fraction = 0.1, std::uint64_t seed = 0);

  // Split tag is drawn once per row from the dataset's own stream.
  void add(const Vec& features, const Vec& label);
  void append(const Dataset& other);

  std::size_t size() const { return features_.size(); }
  std::size_t count(Split s) const;
  int feature_dim() const { return feature_dim_; }
  int label_dim() const { return label_dim_; }
  const Vec& features(std::size_t i) const { return features_[i]; }
  const Vec& label(std::size_t i) const { return labels_[i]; }
  Split split(std::size_t i) const { return splits_[i]; }

  // Columns are samples.
  std::pair<Mat, Mat> matrices(Split s) const;

 private:
  int feature_dim_ = 0;
  int label_dim_ = 0;
  double val_fraction_ = 0.1;
  std::uint64_t seed_ = 0;
  std::uint64_t draws_ = 0;
  std::vector<Vec> features_;
  std::vector<Vec> labels_;
  std::vector<Split> splits_;
};

class MlpPolicy {
 public:
  MlpPolicy() = default;
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  MlpPolicy(std::vector<int> layer_dims, std::uint64_t seed,
            FeatureMapId feature_map = FeatureMapId::Identity);

  static MlpPolicy zeros(std::vector<int> layer_dims, FeatureMapId feature_map = FeatureMapId::Identity);

  const std::vector<int>& layer_dims() const { return dims_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  FeatureMapId feature_map() const { return feature_map_; }
  std::uint64_t seed() const { return seed_; }

  void set_saturation(std::optional<std::pair<double, double>> s) { saturation_ = s; }
  const std::optional<std::pair<double, double>>& saturation() const { return saturation_; }

  // Per-feature affine normalization applied before the first layer:
  // z = (features - shift) / scale.
  void set_normalization(Vec shift, Vec scale);
  const Vec& input_shift() const { return shift_; }
  const Vec& input_scale() const { return scale_; }

  // features -> output (saturated if configured). Throws DimMismatch.
  Vec forward(const Vec& features) const;
  // Unsaturated batch evaluation; columns are samples.
  Mat forward_batch(const Mat& features) const;
  // Raw state -> control via the feature map.
  Vec act(const Vec& state) const { return forward(apply_feature_map(feature_map_, state)); }
  Policy as_policy() const;

  // Mean squared error over all outputs and the analytic gradient of it.
  double loss(const Mat& features, const Mat& targets) const;
  double loss_and_gradient(const Mat& features, const Mat& targets, MlpGradients& grad) const;

  std::size_t parameter_count() const;
  Vec parameters() const;
  void set_parameters(const Vec& p);
  Vec flatten(const MlpGradients& g) const;

  nlohmann::json training_meta;

 private:
  std::vector<int> dims_;
  std::vector<Layer> layers_;
  FeatureMapId feature_map_ = FeatureMapId::Identity;
  std::optional<std::pair<double, double>> saturation_;
  Vec shift_;
  Vec scale_;
  std::uint64_t seed_ = 0;
};

// Mini-batch Adam on the MSE. Deterministic given cfg.seed. Throws
// DivergenceError on a non-finite loss and InvalidArgument on an empty
// training split.
std::vector<EpochLoss> train(MlpPolicy& net, const Dataset& data, const TrainConfig& cfg);

// Mean and standard deviation (floored at 1e-6) of the training features.
std::pair<Vec, Vec> feature_statistics(const Dataset& data);

nlohmann::json to_json(const MlpPolicy& net);
MlpPolicy mlp_from_json(const nlohmann::json& j);

}  // namespace cbfd
