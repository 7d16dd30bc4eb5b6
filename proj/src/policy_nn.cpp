#include "cbfd/policy_nn.hpp"

#include "cbfd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace cbfd {

Vec apply_feature_map(FeatureMapId id, const Vec& x) {
  switch (id) {
    case FeatureMapId::Identity:
      return x;
    case FeatureMapId::UnicycleSinCos: {
      if (x.size() != 3) throw DimMismatch("unicycle_sincos expects a 3-D state");
      Vec f(4);
      f << x[0], x[1], std::sin(x[2]), std::cos(x[2]);
      return f;
    }
  }
  return x;
}

int feature_dim(FeatureMapId id, int state_dim) {
  if (id != FeatureMapId::UnicycleSinCos) return state_dim;
  if (state_dim != 3) throw DimMismatch("unicycle_sincos expects a 3-D state");
  return 4;
}

// ---------------------------------------------------------------- Dataset

Dataset::Dataset(int feature_dim, int label_dim, double val_fraction, std::uint64_t seed)
    : feature_dim_(feature_dim), label_dim_(label_dim), val_fraction_(val_fraction), seed_(seed) {
  if (feature_dim < 1 || label_dim < 1) throw InvalidArgument("dataset: bad dimensions");
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw InvalidArgument("dataset: val_fraction in [0,1)");
}

void Dataset::add(const Vec& features, const Vec& label) {
  if (features.size() != feature_dim_ || label.size() != label_dim_) {
    throw DimMismatch("dataset: row dimension");
  }
  if (!features.allFinite() || !label.allFinite()) throw InvalidArgument("dataset: non-finite row");
  const double r = static_cast<double>(derive_seed(seed_, draws_++) >> 11) * 0x1.0p-53;
  features_.push_back(features);
  labels_.push_back(label);
  splits_.push_back(r < val_fraction_ ? Split::Val : Split::Train);
}

void Dataset::append(const Dataset& other) {
  if (other.size() == 0) return;
  if (other.feature_dim_ != feature_dim_ || other.label_dim_ != label_dim_) {
    throw DimMismatch("dataset: append dimension");
  }
  features_.insert(features_.end(), other.features_.begin(), other.features_.end());
  labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
  splits_.insert(splits_.end(), other.splits_.begin(), other.splits_.end());
}

std::size_t Dataset::count(Split s) const {
  return static_cast<std::size_t>(std::count(splits_.begin(), splits_.end(), s));
}

std::pair<Mat, Mat> Dataset::matrices(Split s) const {
  const auto n = static_cast<Eigen::Index>(count(s));
  Mat x(feature_dim_, n);
  Mat y(label_dim_, n);
  Eigen::Index c = 0;
  for (std::size_t i = 0; i < size(); ++i) {
    if (splits_[i] != s) continue;
    x.col(c) = features_[i];
    y.col(c) = labels_[i];
    ++c;
  }
  return {x, y};
}

// ---------------------------------------------------------------- MlpPolicy

MlpPolicy::MlpPolicy(std::vector<int> layer_dims, std::uint64_t seed, FeatureMapId feature_map)
    : dims_(std::move(layer_dims)), feature_map_(feature_map), seed_(seed) {
  if (dims_.size() < 2) throw InvalidArgument("mlp: need at least input and output dims");
  for (int d : dims_) {
    if (d < 1) throw InvalidArgument("mlp: layer dims must be positive");
  }
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[i]));
    Layer layer{Mat(dims_[i + 1], dims_[i]), Vec(dims_[i + 1])};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = rng.uniform(-bound, bound);
    layers_.push_back(std::move(layer));
  }
}

MlpPolicy MlpPolicy::zeros(std::vector<int> layer_dims, FeatureMapId feature_map) {
  MlpPolicy net(std::move(layer_dims), 0, feature_map);
  for (auto& l : net.layers_) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return net;
}

void MlpPolicy::set_normalization(Vec shift, Vec scale) {
  if (shift.size() != dims_.front() || scale.size() != dims_.front()) {
    throw DimMismatch("mlp: normalization dimension");
  }
  if ((scale.array() <= 0.0).any()) throw InvalidArgument("mlp: normalization scale must be > 0");
  shift_ = std::move(shift);
  scale_ = std::move(scale);
}

namespace {

// tanh through exp, which Eigen vectorizes for doubles; saturates cleanly to +-1.
Mat tanh_act(const Mat& z) { return 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0); }

}  // namespace

Mat MlpPolicy::forward_batch(const Mat& features) const {
  if (features.rows() != dims_.front()) {
    throw DimMismatch("mlp: expected " + std::to_string(dims_.front()) + " features, got " +
                      std::to_string(features.rows()));
  }
  Mat a = features;
  if (shift_.size()) a = (a.colwise() - shift_).array().colwise() / scale_.array();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Mat z = layers_[i].weight * a;
    z.colwise() += layers_[i].bias;
    a = i + 1 < layers_.size() ? tanh_act(z) : z;
  }
  return a;
}

Vec MlpPolicy::forward(const Vec& features) const {
  Vec out = forward_batch(features);
  if (saturation_) out = out.cwiseMax(saturation_->first).cwiseMin(saturation_->second);
  return out;
}

Policy MlpPolicy::as_policy() const {
  auto self = std::make_shared<const MlpPolicy>(*this);
  return [self](const Vec& x) { return self->act(x); };
}

double MlpPolicy::loss(const Mat& features, const Mat& targets) const {
  if (features.cols() == 0) return 0.0;
  return (forward_batch(features) - targets).squaredNorm() / static_cast<double>(targets.size());
}

double MlpPolicy::loss_and_gradient(const Mat& features, const Mat& targets,
                                    MlpGradients& grad) const {
  const std::size_t nl = layers_.size();
  std::vector<Mat> acts;  // acts[i] is the input of layer i
  acts.reserve(nl + 1);
  Mat a = features;
  if (shift_.size()) a = (a.colwise() - shift_).array().colwise() / scale_.array();
  acts.push_back(a);
  for (std::size_t i = 0; i < nl; ++i) {
    Mat z = layers_[i].weight * acts.back();
    z.colwise() += layers_[i].bias;
    acts.push_back(i + 1 < nl ? tanh_act(z) : z);
  }
  const Mat diff = acts.back() - targets;
  const double count = static_cast<double>(targets.size());
  const double value = diff.squaredNorm() / count;

  grad.weight.resize(nl);
  grad.bias.resize(nl);
  Mat delta = (2.0 / count) * diff;
  for (std::size_t i = nl; i-- > 0;) {
    grad.weight[i] = delta * acts[i].transpose();
    grad.bias[i] = delta.rowwise().sum();
    if (i > 0) {
      delta = (layers_[i].weight.transpose() * delta).array() * (1.0 - acts[i].array().square());
    }
  }
  return value;
}

std::size_t MlpPolicy::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Vec MlpPolicy::parameters() const {
  Vec p(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index k = 0;
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) p[k++] = l.weight(r, c);
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) p[k++] = l.bias[r];
  }
  return p;
}

void MlpPolicy::set_parameters(const Vec& p) {
  if (static_cast<std::size_t>(p.size()) != parameter_count()) throw DimMismatch("mlp: parameter count");
  Eigen::Index k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = p[k++];
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = p[k++];
  }
}

Vec MlpPolicy::flatten(const MlpGradients& g) const {
  Vec p(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (Eigen::Index r = 0; r < g.weight[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < g.weight[i].cols(); ++c) p[k++] = g.weight[i](r, c);
    }
    for (Eigen::Index r = 0; r < g.bias[i].size(); ++r) p[k++] = g.bias[i][r];
  }
  return p;
}

// ---------------------------------------------------------------- training

std::pair<Vec, Vec> feature_statistics(const Dataset& data) {
  const auto [x, y] = data.matrices(Dataset::Split::Train);
  if (x.cols() == 0) throw InvalidArgument("feature_statistics: empty training split");
  const Vec mean = x.rowwise().mean();
  const Vec var = (x.colwise() - mean).array().square().rowwise().mean();
  return {mean, var.cwiseSqrt().cwiseMax(1e-6)};
}

std::vector<EpochLoss> train(MlpPolicy& net, const Dataset& data, const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch < 1 || !(cfg.lr > 0.0) ||
      !(cfg.final_lr_fraction > 0.0 && cfg.final_lr_fraction <= 1.0)) {
    throw InvalidArgument("train: bad config");
  }
  if (data.feature_dim() != net.layer_dims().front() || data.label_dim() != net.layer_dims().back()) {
    throw DimMismatch("train: dataset does not match network dimensions");
  }
  const auto [x_train, y_train] = data.matrices(Dataset::Split::Train);
  const auto [x_val, y_val] = data.matrices(Dataset::Split::Val);
  const Eigen::Index n = x_train.cols();
  if (n == 0) throw InvalidArgument("train: empty training split");
  if (net.input_shift().size() == 0) {
    auto [shift, scale] = feature_statistics(data);
    net.set_normalization(shift, scale);
  }

  auto& layers = net.layers();
  const std::size_t nl = layers.size();
  std::vector<Mat> mw(nl), vw(nl);
  std::vector<Vec> mb(nl), vb(nl);
  for (std::size_t i = 0; i < nl; ++i) {
    mw[i] = Mat::Zero(layers[i].weight.rows(), layers[i].weight.cols());
    vw[i] = mw[i];
    mb[i] = Vec::Zero(layers[i].bias.size());
    vb[i] = mb[i];
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  MlpGradients grad;
  std::vector<EpochLoss> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  double b1t = 1.0;
  double b2t = 1.0;
  Mat xb, yb;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    const double progress = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 1.0;
    const double lr = cfg.lr * (cfg.final_lr_fraction +
                                (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    double batch_loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch) {
      const Eigen::Index m = std::min<Eigen::Index>(cfg.batch, n - start);
      xb.resize(x_train.rows(), m);
      yb.resize(y_train.rows(), m);
      for (Eigen::Index c = 0; c < m; ++c) {
        xb.col(c) = x_train.col(order[static_cast<std::size_t>(start + c)]);
        yb.col(c) = y_train.col(order[static_cast<std::size_t>(start + c)]);
      }
      const double l = net.loss_and_gradient(xb, yb, grad);
      if (!std::isfinite(l)) throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch));
      batch_loss_sum += l * static_cast<double>(m);

      b1t *= cfg.beta1;
      b2t *= cfg.beta2;
      const double step = lr * std::sqrt(1.0 - b2t) / (1.0 - b1t);
      for (std::size_t i = 0; i < nl; ++i) {
        mw[i] = cfg.beta1 * mw[i] + (1.0 - cfg.beta1) * grad.weight[i];
        vw[i] = cfg.beta2 * vw[i] + (1.0 - cfg.beta2) * grad.weight[i].cwiseAbs2();
        layers[i].weight.array() -= step * mw[i].array() / (vw[i].array().sqrt() + cfg.eps);
        mb[i] = cfg.beta1 * mb[i] + (1.0 - cfg.beta1) * grad.bias[i];
        vb[i] = cfg.beta2 * vb[i] + (1.0 - cfg.beta2) * grad.bias[i].cwiseAbs2();
        layers[i].bias.array() -= step * mb[i].array() / (vb[i].array().sqrt() + cfg.eps);
      }
    }

    // Running mean of the minibatch losses; the last epoch gets an exact pass.
    EpochLoss e;
    e.train_mse = epoch + 1 == cfg.epochs ? net.loss(x_train, y_train) : batch_loss_sum / static_cast<double>(n);
    e.val_mse = x_val.cols() ? net.loss(x_val, y_val) : e.train_mse;
    if (!std::isfinite(e.train_mse)) throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch));
    history.push_back(e);
  }
  return history;
}

// ---------------------------------------------------------------- JSON

nlohmann::json to_json(const MlpPolicy& net) {
  using nlohmann::json;
  json j;
  j["layer_dims"] = net.layer_dims();
  j["activation"] = "tanh";
  j["saturation"] = net.saturation() ? json::array({net.saturation()->first, net.saturation()->second})
                                     : json(nullptr);
  json weights = json::array();
  json biases = json::array();
  for (const auto& l : net.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    }
    weights.push_back(w);
    biases.push_back(std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size()));
  }
  j["weights"] = weights;
  j["biases"] = biases;
  j["feature_map"] = to_string(net.feature_map());
  j["seed"] = net.seed();
  const Vec& s = net.input_shift();
  const Vec& c = net.input_scale();
  j["input_shift"] = std::vector<double>(s.data(), s.data() + s.size());
  j["input_scale"] = std::vector<double>(c.data(), c.data() + c.size());
  j["training_meta"] = net.training_meta.is_null() ? json::object() : net.training_meta;
  return j;
}

MlpPolicy mlp_from_json(const nlohmann::json& j) {
  try {
    if (j.value("activation", "tanh") != "tanh") throw InvalidArgument("model: only tanh is supported");
    const auto dims = j.at("layer_dims").get<std::vector<int>>();
    MlpPolicy net(dims, j.value("seed", std::uint64_t{0}),
                  feature_map_from_string(j.at("feature_map").get<std::string>()));
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != net.layers().size() || biases.size() != net.layers().size()) {
      throw DimMismatch("model: layer count does not match layer_dims");
    }
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
      auto& l = net.layers()[i];
      const auto w = weights[i].get<std::vector<double>>();
      const auto b = biases[i].get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(l.weight.size()) ||
          b.size() != static_cast<std::size_t>(l.bias.size())) {
        throw DimMismatch("model: weight shape in layer " + std::to_string(i));
      }
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = w[k++];
      }
      for (std::size_t r = 0; r < b.size(); ++r) l.bias[static_cast<Eigen::Index>(r)] = b[r];
      if (!l.weight.allFinite() || !l.bias.allFinite()) throw InvalidArgument("model: non-finite weight");
    }
    if (j.contains("saturation") && !j["saturation"].is_null()) {
      const auto s = j["saturation"].get<std::vector<double>>();
      if (s.size() != 2 || !(s[0] <= s[1])) throw InvalidArgument("model: saturation must be [lo, hi]");
      net.set_saturation(std::make_pair(s[0], s[1]));
    }
    const auto shift = j.value("input_shift", std::vector<double>{});
    const auto scale = j.value("input_scale", std::vector<double>{});
    if (!shift.empty()) {
      net.set_normalization(Eigen::Map<const Vec>(shift.data(), static_cast<Eigen::Index>(shift.size())),
                            Eigen::Map<const Vec>(scale.data(), static_cast<Eigen::Index>(scale.size())));
    }
    net.training_meta = j.value("training_meta", nlohmann::json::object());
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("model JSON: ") + e.what());
  }
}

}  // namespace cbfd
