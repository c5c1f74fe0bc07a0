#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "slipnap/common.hpp"

namespace slipnap {

// Symmetric fully-connected autoencoder: 5 encoder layers ending in the
// bottleneck, mirrored decoder. Batch norm + leaky-ReLU follow every layer
// except the final decoder output.
struct AeArchitecture {
  int input_dim = 512;
  std::vector<int> encoder_widths = {384, 288, 192, 144, 100};
  double leaky_slope = 0.01;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  bool use_batch_norm = true;

  // Widths geometrically interpolated between input_dim and the bottleneck.
  static AeArchitecture geometric(int input_dim, int depth = 5, int bottleneck = 100) {
    AeArchitecture a;
    a.input_dim = input_dim;
    a.encoder_widths.clear();
    double ratio = static_cast<double>(bottleneck) / input_dim;
    for (int l = 1; l <= depth; ++l) {
      int w = (l == depth) ? bottleneck
                           : static_cast<int>(std::lround(input_dim * std::pow(ratio, static_cast<double>(l) / depth)));
      a.encoder_widths.push_back(std::max(w, bottleneck));
    }
    return a;
  }

  int depth() const { return static_cast<int>(encoder_widths.size()); }
  int bottleneck() const { return encoder_widths.back(); }
  int pathway_dim() const {
    int d = 0;
    for (int w : encoder_widths) d += w;
    return d;
  }

  // Full layer width sequence: input, encoder..., mirrored decoder..., input.
  std::vector<int> layer_dims() const {
    std::vector<int> dims;
    dims.push_back(input_dim);
    for (int w : encoder_widths) dims.push_back(w);
    for (int i = depth() - 2; i >= 0; --i) dims.push_back(encoder_widths[static_cast<std::size_t>(i)]);
    dims.push_back(input_dim);
    return dims;
  }

  void validate() const {
    if (input_dim <= 0 || encoder_widths.empty()) throw ConfigError("autoencoder: empty architecture");
    for (int w : encoder_widths)
      if (w <= 0) throw ConfigError("autoencoder: non-positive layer width");
    if (!(leaky_slope >= 0) || !(bn_eps > 0)) throw ConfigError("autoencoder: bad activation/bn parameters");
  }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 64;
  int epochs = 200;
  int patience = 20;  // early stop on validation MSE
  std::uint64_t shuffle_seed = 7;

  void validate() const {
    if (batch_size < 2) throw ConfigError("train: batch size must be >= 2 (batch norm)");
    if (epochs < 0 || patience < 0) throw ConfigError("train: negative epochs/patience");
  }
};

struct PathwayTrace {
  Eigen::VectorXd h;      // H(x): concatenated encoder activations
  Eigen::VectorXd h_hat;  // H^(x): encoder activations of the reconstruction
  Eigen::VectorXd d;      // h - h_hat
};

enum class AeMode { Train, Eval };

class AeModel {
 public:
  struct Layer {
    Eigen::MatrixXd w;  // out x in
    Eigen::VectorXd b;
    bool normalized = false;  // batch norm + activation present
    Eigen::VectorXd gamma, beta, running_mean, running_var;
  };

  AeModel() = default;

  AeModel(const AeArchitecture& arch, std::uint64_t init_seed) : arch_(arch) {
    arch.validate();
    std::mt19937_64 rng(init_seed);
    auto dims = arch.layer_dims();
    const int n_layers = static_cast<int>(dims.size()) - 1;
    layers_.resize(static_cast<std::size_t>(n_layers));
    for (int i = 0; i < n_layers; ++i) {
      auto& l = layers_[static_cast<std::size_t>(i)];
      int in = dims[static_cast<std::size_t>(i)], out = dims[static_cast<std::size_t>(i) + 1];
      double bound = 1.0 / std::sqrt(static_cast<double>(in));
      l.w.resize(out, in);
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) l.w(r, c) = (2.0 * u64_to_unit_double(rng()) - 1.0) * bound;
      l.b = Eigen::VectorXd::Zero(out);
      l.normalized = arch.use_batch_norm && i != n_layers - 1;
      if (l.normalized) {
        l.gamma = Eigen::VectorXd::Ones(out);
        l.beta = Eigen::VectorXd::Zero(out);
        l.running_mean = Eigen::VectorXd::Zero(out);
        l.running_var = Eigen::VectorXd::Ones(out);
      }
    }
  }

  const AeArchitecture& arch() const { return arch_; }
  AeMode mode() const { return mode_; }
  void set_mode(AeMode m) { mode_ = m; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  // --- eval-mode forward (running batch-norm statistics) ---

  struct ForwardResult {
    Eigen::MatrixXd x_hat;                // input_dim x batch
    std::vector<Eigen::MatrixXd> hidden;  // one per encoder layer
  };

  // Columns of x are samples. Hidden activations are captured after each
  // encoder layer's activation function.
  ForwardResult forward_batch(const Eigen::MatrixXd& x) const {
    require_eval("forward");
    if (x.rows() != arch_.input_dim) throw DataError("autoencoder: input dimension mismatch");
    if (!x.allFinite()) throw DataError("autoencoder: non-finite input");
    ForwardResult res;
    Eigen::MatrixXd a = x;
    const int depth = arch_.depth();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      a = eval_layer(layers_[i], a);
      if (static_cast<int>(i) < depth) res.hidden.push_back(a);
    }
    res.x_hat = std::move(a);
    return res;
  }

  std::pair<Eigen::VectorXd, std::vector<Eigen::VectorXd>> forward(const Eigen::VectorXd& x) const {
    auto res = forward_batch(x);
    std::vector<Eigen::VectorXd> hid;
    hid.reserve(res.hidden.size());
    for (auto& h : res.hidden) hid.push_back(h.col(0));
    return {res.x_hat.col(0), std::move(hid)};
  }

  // Encoder-only pass returning the concatenated activations H(x) row-wise:
  // result is batch x pathway_dim.
  Eigen::MatrixXd encode_pathway(const Eigen::MatrixXd& x) const {
    require_eval("pathway");
    Eigen::MatrixXd h(x.cols(), arch_.pathway_dim());
    Eigen::MatrixXd a = x;
    Eigen::Index off = 0;
    for (int i = 0; i < arch_.depth(); ++i) {
      a = eval_layer(layers_[static_cast<std::size_t>(i)], a);
      h.middleCols(off, a.rows()) = a.transpose();
      off += a.rows();
    }
    return h;
  }

  Eigen::MatrixXd decode(const Eigen::MatrixXd& z) const {
    require_eval("decode");
    Eigen::MatrixXd a = z;
    for (std::size_t i = static_cast<std::size_t>(arch_.depth()); i < layers_.size(); ++i)
      a = eval_layer(layers_[i], a);
    return a;
  }

  // Rows of the result are d(x) = H(x) - H^(x) for each input column.
  Eigen::MatrixXd pathway_batch(const Eigen::MatrixXd& x,
                                Eigen::MatrixXd* h_out = nullptr,
                                Eigen::MatrixXd* h_hat_out = nullptr) const {
    auto res = forward_batch(x);
    Eigen::MatrixXd h(x.cols(), arch_.pathway_dim());
    Eigen::Index off = 0;
    for (const auto& a : res.hidden) {
      h.middleCols(off, a.rows()) = a.transpose();
      off += a.rows();
    }
    Eigen::MatrixXd h_hat = encode_pathway(res.x_hat);
    Eigen::MatrixXd d = h - h_hat;
    if (h_out) *h_out = std::move(h);
    if (h_hat_out) *h_hat_out = std::move(h_hat);
    return d;
  }

  PathwayTrace pathway(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd h, h_hat;
    Eigen::MatrixXd d = pathway_batch(x, &h, &h_hat);
    PathwayTrace t;
    t.h = h.row(0).transpose();
    t.h_hat = h_hat.row(0).transpose();
    t.d = d.row(0).transpose();
    return t;
  }

  // --- training-mode machinery ---

  // Flattened parameter vector in a fixed documented order:
  // per layer: w (col-major), b, then gamma, beta when normalized.
  Eigen::VectorXd flatten_params() const {
    Eigen::VectorXd p(param_count());
    Eigen::Index off = 0;
    for (const auto& l : layers_) {
      std::copy(l.w.data(), l.w.data() + l.w.size(), p.data() + off);
      off += l.w.size();
      std::copy(l.b.data(), l.b.data() + l.b.size(), p.data() + off);
      off += l.b.size();
      if (l.normalized) {
        std::copy(l.gamma.data(), l.gamma.data() + l.gamma.size(), p.data() + off);
        off += l.gamma.size();
        std::copy(l.beta.data(), l.beta.data() + l.beta.size(), p.data() + off);
        off += l.beta.size();
      }
    }
    return p;
  }

  void set_params(const Eigen::VectorXd& p) {
    if (p.size() != param_count()) throw ConfigError("autoencoder: parameter vector size mismatch");
    Eigen::Index off = 0;
    for (auto& l : layers_) {
      std::copy(p.data() + off, p.data() + off + l.w.size(), l.w.data());
      off += l.w.size();
      std::copy(p.data() + off, p.data() + off + l.b.size(), l.b.data());
      off += l.b.size();
      if (l.normalized) {
        std::copy(p.data() + off, p.data() + off + l.gamma.size(), l.gamma.data());
        off += l.gamma.size();
        std::copy(p.data() + off, p.data() + off + l.beta.size(), l.beta.data());
        off += l.beta.size();
      }
    }
  }

  Eigen::Index param_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) {
      n += l.w.size() + l.b.size();
      if (l.normalized) n += l.gamma.size() + l.beta.size();
    }
    return n;
  }

  // Train-mode forward/backward over one mini-batch (columns of x); returns
  // the MSE reconstruction loss and the gradient in flatten_params() order.
  // Running statistics are updated only when update_running is set.
  double loss_and_gradients(const Eigen::MatrixXd& x, Eigen::VectorXd* grad_out,
                            bool update_running = false) {
    const Eigen::Index batch = x.cols();
    if (batch < 1) throw DataError("autoencoder: empty batch");
    if (x.rows() != arch_.input_dim) throw DataError("autoencoder: input dimension mismatch");
    const double slope = arch_.leaky_slope;

    struct Cache {
      Eigen::MatrixXd a_in, z_norm, post;  // post = layer output
      Eigen::VectorXd inv_std;
    };
    std::vector<Cache> caches(layers_.size());

    Eigen::MatrixXd a = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto& l = layers_[i];
      auto& c = caches[i];
      c.a_in = a;
      Eigen::MatrixXd z = (l.w * a).colwise() + l.b;
      if (l.normalized) {
        Eigen::VectorXd mu = z.rowwise().mean();
        Eigen::MatrixXd zc = z.colwise() - mu;
        Eigen::VectorXd var = zc.array().square().rowwise().mean();
        c.inv_std = (var.array() + arch_.bn_eps).rsqrt();
        c.z_norm = zc.array().colwise() * c.inv_std.array();
        Eigen::MatrixXd y = (c.z_norm.array().colwise() * l.gamma.array()).colwise() + l.beta.array();
        a = y.array().max(y.array() * slope);  // leaky-ReLU
        c.post = y;                            // pre-activation kept for the derivative
        if (update_running) {
          l.running_mean = (1.0 - arch_.bn_momentum) * l.running_mean + arch_.bn_momentum * mu;
          l.running_var = (1.0 - arch_.bn_momentum) * l.running_var + arch_.bn_momentum * var;
        }
      } else if (static_cast<int>(i) != static_cast<int>(layers_.size()) - 1) {
        // batch norm disabled but activation still applies to hidden layers
        a = z.array().max(z.array() * slope);
        c.post = z;
      } else {
        a = z;
        c.post = z;
      }
    }

    const Eigen::MatrixXd& x_hat = a;
    const double denom = static_cast<double>(batch) * arch_.input_dim;
    double loss = (x_hat - x).squaredNorm() / denom;
    if (!grad_out) return loss;

    Eigen::VectorXd grad(param_count());
    Eigen::Index off_end = grad.size();
    Eigen::MatrixXd da = 2.0 / denom * (x_hat - x);

    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
      auto& l = layers_[static_cast<std::size_t>(i)];
      auto& c = caches[static_cast<std::size_t>(i)];
      const bool last = (i == static_cast<int>(layers_.size()) - 1);
      Eigen::MatrixXd dz;
      Eigen::VectorXd dgamma, dbeta;
      if (!last) {
        // back through leaky-ReLU on the pre-activation sign
        Eigen::MatrixXd mask = (c.post.array() >= 0).cast<double>() * (1.0 - slope) + slope;
        da = da.array() * mask.array();
      }
      if (l.normalized) {
        dgamma = (da.array() * c.z_norm.array()).rowwise().sum();
        dbeta = da.rowwise().sum();
        Eigen::MatrixXd dzn = da.array().colwise() * l.gamma.array();
        const double invb = 1.0 / static_cast<double>(batch);
        Eigen::VectorXd sum_dzn = dzn.rowwise().sum();
        Eigen::VectorXd sum_dzn_zn = (dzn.array() * c.z_norm.array()).rowwise().sum();
        dz = (dzn.array() - (invb * sum_dzn).replicate(1, batch).array() -
              c.z_norm.array() * (invb * sum_dzn_zn).replicate(1, batch).array())
                 .colwise() *
             c.inv_std.array();
      } else {
        dz = da;
      }
      Eigen::MatrixXd dw = dz * c.a_in.transpose();
      Eigen::VectorXd db = dz.rowwise().sum();
      // fill gradient slots in reverse order
      if (l.normalized) {
        off_end -= dbeta.size();
        std::copy(dbeta.data(), dbeta.data() + dbeta.size(), grad.data() + off_end);
        off_end -= dgamma.size();
        std::copy(dgamma.data(), dgamma.data() + dgamma.size(), grad.data() + off_end);
      }
      off_end -= db.size();
      std::copy(db.data(), db.data() + db.size(), grad.data() + off_end);
      off_end -= dw.size();
      std::copy(dw.data(), dw.data() + dw.size(), grad.data() + off_end);
      if (i > 0) da = l.w.transpose() * dz;
    }
    *grad_out = std::move(grad);
    return loss;
  }

  // Validation MSE with running statistics (eval-mode semantics).
  double eval_mse(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd a = x;
    for (const auto& l : layers_) a = eval_layer(l, a);
    return (a - x).squaredNorm() / (static_cast<double>(x.cols()) * arch_.input_dim);
  }

 private:
  Eigen::MatrixXd eval_layer(const Layer& l, const Eigen::MatrixXd& a) const {
    Eigen::MatrixXd z = (l.w * a).colwise() + l.b;
    const bool last = (&l == &layers_.back());
    if (l.normalized) {
      Eigen::VectorXd inv_std = (l.running_var.array() + arch_.bn_eps).rsqrt();
      z = ((z.colwise() - l.running_mean).array().colwise() * (inv_std.array() * l.gamma.array()))
              .colwise() +
          l.beta.array();
      return z.array().max(z.array() * arch_.leaky_slope);
    }
    if (!arch_.use_batch_norm && !last)
      return z.array().max(z.array() * arch_.leaky_slope);
    return z;
  }

  void require_eval(const char* what) const {
    if (mode_ != AeMode::Eval)
      throw ConfigError(std::string("autoencoder: ") + what + " requires Eval mode");
  }

  AeArchitecture arch_;
  std::vector<Layer> layers_;
  AeMode mode_ = AeMode::Eval;
};

struct TrainResult {
  AeModel model;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch
  int best_epoch = -1;
};

// Trains on normal data with Adam + early stopping; returns the parameter
// snapshot with the best validation MSE.
inline TrainResult train_autoencoder(const Eigen::MatrixXd& train_x, const Eigen::MatrixXd& val_x,
                                     const AeArchitecture& arch, const TrainConfig& cfg,
                                     std::uint64_t init_seed = 1) {
  cfg.validate();
  arch.validate();
  if (train_x.cols() == 0) throw DataError("train: empty training set");
  if (train_x.rows() != arch.input_dim) throw DataError("train: input dimension mismatch");

  TrainResult res;
  res.model = AeModel(arch, init_seed);
  if (cfg.epochs == 0) return res;

  AeModel& model = res.model;
  model.set_mode(AeMode::Train);

  Eigen::VectorXd m = Eigen::VectorXd::Zero(model.param_count());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(model.param_count());
  long step = 0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(train_x.cols()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  std::mt19937_64 rng(cfg.shuffle_seed);

  double best_val = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_params;
  std::vector<AeModel::Layer> best_layers;
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the documented PRNG
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(u64_to_unit_double(rng()) * static_cast<double>(i));
      if (j >= i) j = i - 1;
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    long n_batches = 0;
    for (Eigen::Index start = 0; start < train_x.cols(); start += cfg.batch_size) {
      Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, train_x.cols() - start);
      if (bs < 2) break;  // batch norm needs at least 2 samples
      Eigen::MatrixXd batch(train_x.rows(), bs);
      for (Eigen::Index c = 0; c < bs; ++c) batch.col(c) = train_x.col(order[static_cast<std::size_t>(start + c)]);
      Eigen::VectorXd grad;
      double loss = model.loss_and_gradients(batch, &grad, /*update_running=*/true);
      if (!std::isfinite(loss))
        throw TrainingError("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
      epoch_loss += loss;
      ++n_batches;
      ++step;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
      v = cfg.beta2 * v.array() + (1.0 - cfg.beta2) * grad.array().square();
      double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      Eigen::VectorXd p = model.flatten_params();
      p.array() -= cfg.learning_rate * (m.array() / bc1) /
                   ((v.array() / bc2).sqrt() + cfg.adam_eps);
      model.set_params(p);
    }
    res.train_loss.push_back(n_batches > 0 ? epoch_loss / n_batches : 0.0);

    double vloss = (val_x.cols() > 0) ? model.eval_mse(val_x) : res.train_loss.back();
    res.val_loss.push_back(vloss);
    if (vloss < best_val) {
      best_val = vloss;
      best_params = model.flatten_params();
      best_layers = model.layers();
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }

  if (!best_layers.empty()) model.layers() = best_layers;
  model.set_mode(AeMode::Eval);
  return res;
}

}  // namespace slipnap
