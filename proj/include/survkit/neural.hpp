// Feedforward neural survival model: a scalar log-hazard network trained by
// minimizing the negative Cox partial likelihood over minibatch risk sets.
// Backward passes through batch normalization and dropout are exact and
// gradient-checked; training supports SGD with momentum and Adam, both with
// decoupled weight decay, and early stopping on validation concordance.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "survkit/cohort.hpp"
#include "survkit/common.hpp"
#include "survkit/metrics.hpp"

namespace survkit::neural {

enum class Activation { relu, leaky_relu, selu };
enum class Optimizer { sgd_momentum, adam };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::selu: return "selu";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "selu") return Activation::selu;
  throw ConfigError("unknown activation '" + s + "'");
}

inline std::string to_string(Optimizer o) {
  return o == Optimizer::adam ? "adam" : "sgd_momentum";
}

inline Optimizer optimizer_from_string(const std::string& s) {
  if (s == "adam") return Optimizer::adam;
  if (s == "sgd_momentum") return Optimizer::sgd_momentum;
  throw ConfigError("unknown optimizer '" + s + "'");
}

struct MlpSpec {
  std::vector<int> hidden_layers;  // 0 to 3 widths
  Activation activation = Activation::relu;
  double dropout_rate = 0.0;  // [0, 1)
  bool batch_norm = false;
  double weight_decay = 0.0;  // decoupled L2
  Optimizer optimizer = Optimizer::adam;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double learning_rate = 1e-3;
  int batch_size = 256;
  int max_epochs = 200;
  int early_stop_patience = 10;

  void validate() const {
    if (hidden_layers.size() > 3) throw ConfigError("mlp: at most 3 hidden layers");
    for (int w : hidden_layers)
      if (w < 1) throw ConfigError("mlp: hidden widths must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw ConfigError("mlp: dropout_rate must lie in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("mlp: weight_decay must be >= 0");
    if (!(learning_rate >= 0.0)) throw ConfigError("mlp: learning_rate must be >= 0");
    if (batch_size < 1) throw ConfigError("mlp: batch_size must be >= 1");
    if (max_epochs < 0) throw ConfigError("mlp: max_epochs must be >= 0");
    if (early_stop_patience < 1) throw ConfigError("mlp: early_stop_patience must be >= 1");
  }
};

struct EpochLog {
  double train_loss = 0.0;
  double val_concordance = 0.0;
};

constexpr double kBnEpsilon = 1e-5;
constexpr double kBnMomentum = 0.9;
constexpr double kLeakySlope = 0.01;
constexpr double kSeluLambda = 1.0507009873554805;
constexpr double kSeluAlpha = 1.6732632423543772;

struct MlpSurvModel {
  MlpSpec spec;
  int input_dim = 0;
  // weights[l] is (out x in); the last layer maps to one output.
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  // Batch-norm parameters/statistics per hidden layer (empty when disabled).
  std::vector<Eigen::VectorXd> bn_gamma, bn_shift, bn_run_mean, bn_run_var;
  std::vector<EpochLog> training_log;
  bool diverged = false;
  int best_epoch = -1;
  // Feature binding carried for artifact-level schema checks.
  std::vector<std::string> column_names;
  std::vector<cohort::ColumnScaling> scaling;

  std::size_t n_layers() const { return weights.size(); }

  // Inference-mode scores for a batch (rows = subjects): running batch-norm
  // statistics, no dropout.
  Eigen::VectorXd score(const Eigen::MatrixXd& x) const {
    if (x.cols() != input_dim) throw ConfigError("mlp: input dimension mismatch");
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l + 1 < n_layers(); ++l) {
      Eigen::MatrixXd a = (h * weights[l].transpose()).rowwise() + biases[l].transpose();
      if (spec.batch_norm) {
        const Eigen::ArrayXd inv_std = (bn_run_var[l].array() + kBnEpsilon).sqrt().inverse();
        a = ((a.rowwise() - bn_run_mean[l].transpose()).array().rowwise() *
             (inv_std * bn_gamma[l].array()).transpose())
                .rowwise() +
            bn_shift[l].array().transpose();
      }
      h = activate(a);
    }
    return (h * weights.back().transpose()).col(0).array() + biases.back()(0);
  }

  double score_one(std::span<const double> x) const {
    Eigen::MatrixXd row(1, static_cast<Eigen::Index>(x.size()));
    for (std::size_t j = 0; j < x.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = x[j];
    return score(row)(0);
  }

  Eigen::MatrixXd activate(const Eigen::MatrixXd& z) const {
    switch (spec.activation) {
      case Activation::relu:
        return z.array().max(0.0);
      case Activation::leaky_relu:
        return z.array().max(kLeakySlope * z.array());
      case Activation::selu:
        return (z.array() > 0.0)
            .select(kSeluLambda * z.array(),
                    kSeluLambda * kSeluAlpha * (z.array().exp() - 1.0));
    }
    throw ConfigError("mlp: unknown activation");
  }

  Eigen::MatrixXd activate_derivative(const Eigen::MatrixXd& z) const {
    switch (spec.activation) {
      case Activation::relu:
        return (z.array() > 0.0).cast<double>();
      case Activation::leaky_relu:
        return (z.array() > 0.0).select(Eigen::ArrayXXd::Constant(z.rows(), z.cols(), 1.0),
                                        Eigen::ArrayXXd::Constant(z.rows(), z.cols(), kLeakySlope));
      case Activation::selu:
        return (z.array() > 0.0)
            .select(Eigen::ArrayXXd::Constant(z.rows(), z.cols(), kSeluLambda),
                    kSeluLambda * kSeluAlpha * z.array().exp());
    }
    throw ConfigError("mlp: unknown activation");
  }
};

// Fan-in uniform initialization: He-style for relu/leaky_relu, LeCun-style
// for selu. Deterministic given the seed.
inline MlpSurvModel initialize(const MlpSpec& spec, int input_dim, std::uint64_t seed) {
  spec.validate();
  if (input_dim < 1) throw ConfigError("mlp: input_dim must be >= 1");
  MlpSurvModel m;
  m.spec = spec;
  m.input_dim = input_dim;
  std::vector<int> dims;
  dims.push_back(input_dim);
  for (int w : spec.hidden_layers) dims.push_back(w);
  dims.push_back(1);

  Rng rng(derive_seed(seed, 0x1417));
  const double gain = spec.activation == Activation::selu ? 3.0 : 6.0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l], fan_out = dims[l + 1];
    const double bound = std::sqrt(gain / static_cast<double>(fan_in));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = (2.0 * uniform01(rng) - 1.0) * bound;
    m.weights.push_back(std::move(w));
    m.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  if (spec.batch_norm) {
    for (int w : spec.hidden_layers) {
      m.bn_gamma.push_back(Eigen::VectorXd::Ones(w));
      m.bn_shift.push_back(Eigen::VectorXd::Zero(w));
      m.bn_run_mean.push_back(Eigen::VectorXd::Zero(w));
      m.bn_run_var.push_back(Eigen::VectorXd::Ones(w));
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Negative Cox partial likelihood over the batch risk sets (Breslow ties),
// averaged over events and with exact gradient w.r.t. the scores. A batch
// without events is reported rather than thrown.
// ---------------------------------------------------------------------------

struct BatchLoss {
  bool has_events = false;
  double value = 0.0;
  Eigen::VectorXd grad;  // d value / d scores, original order
};

inline BatchLoss cox_batch_loss(const Eigen::VectorXd& scores,
                                const std::vector<SurvivalOutcome>& y) {
  const auto n = scores.size();
  if (static_cast<std::size_t>(n) != y.size())
    throw ConfigError("cox_batch_loss: size mismatch");
  BatchLoss out;
  out.grad = Eigen::VectorXd::Zero(n);
  const auto n_events = static_cast<double>(count_events(y));
  if (n_events == 0) return out;
  out.has_events = true;

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return y[static_cast<std::size_t>(a)].duration > y[static_cast<std::size_t>(b)].duration;
  });

  const double shift = scores.maxCoeff();
  Eigen::VectorXd w = (scores.array() - shift).exp();

  // Walk descending durations: per tie group record the risk-set denominator.
  struct Group {
    int lo, hi;         // range in `order`
    int deaths;
    double denom;       // shifted risk-set sum after the group is absorbed
  };
  std::vector<Group> grp;
  double risk_sum = 0.0;
  double value = 0.0;
  int i = 0;
  while (i < n) {
    int j = i;
    const double t = y[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])].duration;
    int deaths = 0;
    while (j < n &&
           y[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])].duration == t) {
      const int idx = order[static_cast<std::size_t>(j)];
      risk_sum += w(idx);
      if (y[static_cast<std::size_t>(idx)].event) {
        ++deaths;
        value -= scores(idx);
      }
      ++j;
    }
    if (deaths > 0) value += static_cast<double>(deaths) * (std::log(risk_sum) + shift);
    grp.push_back({i, j, deaths, risk_sum});
    i = j;
  }
  out.value = value / n_events;

  // Suffix accumulation of d_g / denom_g gives each subject its cumulative
  // event-group weight (all event times at or before its own duration).
  double cum = 0.0;
  for (auto g = grp.rbegin(); g != grp.rend(); ++g) {
    if (g->deaths > 0) cum += static_cast<double>(g->deaths) / g->denom;
    for (int k = g->lo; k < g->hi; ++k) {
      const int idx = order[static_cast<std::size_t>(k)];
      const double ev = y[static_cast<std::size_t>(idx)].event ? 1.0 : 0.0;
      out.grad(idx) = (w(idx) * cum - ev) / n_events;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training internals: batched forward/backward with exact batch-norm and
// dropout gradients.
// ---------------------------------------------------------------------------

struct ParamGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  std::vector<Eigen::VectorXd> bn_gamma, bn_shift;

  static ParamGradients zeros_like(const MlpSurvModel& m) {
    ParamGradients g;
    for (const auto& w : m.weights) g.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    for (const auto& b : m.biases) g.biases.push_back(Eigen::VectorXd::Zero(b.size()));
    for (const auto& v : m.bn_gamma) g.bn_gamma.push_back(Eigen::VectorXd::Zero(v.size()));
    for (const auto& v : m.bn_shift) g.bn_shift.push_back(Eigen::VectorXd::Zero(v.size()));
    return g;
  }
};

namespace detail {

struct LayerCache {
  Eigen::MatrixXd input;    // activations entering the layer
  Eigen::MatrixXd affine;   // pre-normalization
  Eigen::MatrixXd xhat;     // normalized (batch norm only)
  Eigen::ArrayXd inv_std;   // per unit
  Eigen::MatrixXd pre_act;  // post-norm, pre-activation
  Eigen::MatrixXd mask;     // dropout mask (already scaled), empty if unused
};

struct ForwardOptions {
  bool bn_batch_stats = true;     // false = frozen running statistics
  bool update_running = false;    // accumulate running stats (training)
  Rng* dropout_rng = nullptr;     // nullptr disables dropout
};

inline Eigen::VectorXd forward_batch(MlpSurvModel& m, const Eigen::MatrixXd& x,
                                     const ForwardOptions& opt,
                                     std::vector<LayerCache>& caches) {
  if (x.cols() != m.input_dim) throw ConfigError("mlp: input dimension mismatch");
  caches.assign(m.n_layers() - 1, {});
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l + 1 < m.n_layers(); ++l) {
    LayerCache& c = caches[l];
    c.input = h;
    c.affine = (h * m.weights[l].transpose()).rowwise() + m.biases[l].transpose();
    if (m.spec.batch_norm) {
      Eigen::VectorXd mu, var;
      if (opt.bn_batch_stats) {
        mu = c.affine.colwise().mean();
        var = (c.affine.rowwise() - mu.transpose()).array().square().colwise().mean();
        if (opt.update_running) {
          m.bn_run_mean[l] = kBnMomentum * m.bn_run_mean[l] + (1.0 - kBnMomentum) * mu;
          m.bn_run_var[l] = kBnMomentum * m.bn_run_var[l] + (1.0 - kBnMomentum) * var;
        }
      } else {
        mu = m.bn_run_mean[l];
        var = m.bn_run_var[l];
      }
      c.inv_std = (var.array() + kBnEpsilon).sqrt().inverse();
      c.xhat = (c.affine.rowwise() - mu.transpose()).array().rowwise() * c.inv_std.transpose();
      c.pre_act = (c.xhat.array().rowwise() * m.bn_gamma[l].array().transpose()).rowwise() +
                  m.bn_shift[l].array().transpose();
    } else {
      c.pre_act = c.affine;
    }
    h = m.activate(c.pre_act);
    if (opt.dropout_rng != nullptr && m.spec.dropout_rate > 0.0) {
      const double keep = 1.0 - m.spec.dropout_rate;
      c.mask.resize(h.rows(), h.cols());
      for (Eigen::Index r = 0; r < h.rows(); ++r)
        for (Eigen::Index cc = 0; cc < h.cols(); ++cc)
          c.mask(r, cc) = uniform01(*opt.dropout_rng) < keep ? 1.0 / keep : 0.0;
      h.array() *= c.mask.array();
    }
  }
  return (h * m.weights.back().transpose()).col(0).array() + m.biases.back()(0);
}

// Backward pass given d loss / d scores; caches must come from the matching
// forward call. bn_batch_stats selects the exact training-statistics
// gradient (means and variances treated as functions of the batch) versus
// the frozen-statistics affine gradient.
inline void backward_batch(const MlpSurvModel& m, const std::vector<LayerCache>& caches,
                           const Eigen::MatrixXd& x, const Eigen::VectorXd& dscores,
                           bool bn_batch_stats, ParamGradients& grads) {
  const std::size_t last = m.n_layers() - 1;
  // Post-activation output feeding the final affine layer.
  Eigen::MatrixXd h_last;
  if (last == 0) {
    h_last = x;
  } else {
    const LayerCache& c = caches[last - 1];
    h_last = m.activate(c.pre_act);
    if (c.mask.size() > 0) h_last.array() *= c.mask.array();
  }

  grads.weights[last].noalias() = dscores.transpose() * h_last;
  grads.biases[last](0) = dscores.sum();
  Eigen::MatrixXd dh = dscores * m.weights[last];

  for (std::size_t li = last; li-- > 0;) {
    const LayerCache& c = caches[li];
    if (c.mask.size() > 0) dh.array() *= c.mask.array();
    Eigen::MatrixXd dz = dh.array() * m.activate_derivative(c.pre_act).array();

    Eigen::MatrixXd da;
    if (m.spec.batch_norm) {
      grads.bn_gamma[li] = (dz.array() * c.xhat.array()).colwise().sum();
      grads.bn_shift[li] = dz.colwise().sum();
      Eigen::MatrixXd dxhat = dz.array().rowwise() * m.bn_gamma[li].array().transpose();
      if (bn_batch_stats) {
        const double batch = static_cast<double>(dz.rows());
        Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
        Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * c.xhat.array()).colwise().sum();
        da = ((batch * dxhat).rowwise() - sum_dxhat).array() -
             (c.xhat.array().rowwise() * sum_dxhat_xhat.array());
        da.array().rowwise() *= (c.inv_std / batch).transpose();
      } else {
        da = dxhat.array().rowwise() * c.inv_std.transpose();
      }
    } else {
      da = dz;
    }

    grads.weights[li].noalias() = da.transpose() * c.input;
    grads.biases[li] = da.colwise().sum();
    if (li > 0) dh = da * m.weights[li];
  }
}

// Optimizer state per tensor.
struct OptState {
  std::vector<Eigen::MatrixXd> w_m, w_v;
  std::vector<Eigen::VectorXd> b_m, b_v, g_m, g_v, s_m, s_v;
  long step = 0;

  static OptState zeros_like(const MlpSurvModel& m) {
    OptState s;
    for (const auto& w : m.weights) {
      s.w_m.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
      s.w_v.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : m.biases) {
      s.b_m.push_back(Eigen::VectorXd::Zero(b.size()));
      s.b_v.push_back(Eigen::VectorXd::Zero(b.size()));
    }
    for (const auto& g : m.bn_gamma) {
      s.g_m.push_back(Eigen::VectorXd::Zero(g.size()));
      s.g_v.push_back(Eigen::VectorXd::Zero(g.size()));
    }
    for (const auto& g : m.bn_shift) {
      s.s_m.push_back(Eigen::VectorXd::Zero(g.size()));
      s.s_v.push_back(Eigen::VectorXd::Zero(g.size()));
    }
    return s;
  }
};

template <class Tensor>
void update_tensor(const MlpSpec& spec, long step, Tensor& param, const Tensor& grad,
                   Tensor& m1, Tensor& m2, bool decay) {
  const double lr = spec.learning_rate;
  if (spec.optimizer == Optimizer::adam) {
    m1 = spec.adam_beta1 * m1 + (1.0 - spec.adam_beta1) * grad;
    m2.array() = spec.adam_beta2 * m2.array() + (1.0 - spec.adam_beta2) * grad.array().square();
    const double bc1 = 1.0 - std::pow(spec.adam_beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(spec.adam_beta2, static_cast<double>(step));
    param.array() -=
        lr * (m1.array() / bc1) / ((m2.array() / bc2).sqrt() + spec.adam_epsilon);
  } else {
    m1 = spec.momentum * m1 + grad;
    param -= lr * m1;
  }
  if (decay && spec.weight_decay > 0.0) param *= (1.0 - lr * spec.weight_decay);
}

inline void apply_update(MlpSurvModel& m, const ParamGradients& g, OptState& st) {
  ++st.step;
  for (std::size_t l = 0; l < m.weights.size(); ++l)
    update_tensor(m.spec, st.step, m.weights[l], g.weights[l], st.w_m[l], st.w_v[l], true);
  for (std::size_t l = 0; l < m.biases.size(); ++l)
    update_tensor(m.spec, st.step, m.biases[l], g.biases[l], st.b_m[l], st.b_v[l], false);
  for (std::size_t l = 0; l < m.bn_gamma.size(); ++l)
    update_tensor(m.spec, st.step, m.bn_gamma[l], g.bn_gamma[l], st.g_m[l], st.g_v[l], false);
  for (std::size_t l = 0; l < m.bn_shift.size(); ++l)
    update_tensor(m.spec, st.step, m.bn_shift[l], g.bn_shift[l], st.s_m[l], st.s_v[l], false);
}

}  // namespace detail

// Full-batch loss with exact parameter gradients; the hook used both by
// training and by finite-difference checks. When bn_frozen is set the
// forward pass uses running statistics and the backward pass treats the
// normalization as a fixed affine map.
inline double loss_and_gradients(MlpSurvModel& model, const Eigen::MatrixXd& x,
                                 const std::vector<SurvivalOutcome>& y, bool bn_frozen,
                                 ParamGradients& grads, Rng* dropout_rng = nullptr) {
  std::vector<detail::LayerCache> caches;
  detail::ForwardOptions opt;
  opt.bn_batch_stats = !bn_frozen;
  opt.update_running = false;
  opt.dropout_rng = dropout_rng;
  Eigen::VectorXd scores = detail::forward_batch(model, x, opt, caches);
  BatchLoss loss = cox_batch_loss(scores, y);
  if (!loss.has_events) throw NumericError("loss_and_gradients: batch has no events");
  grads = ParamGradients::zeros_like(model);
  detail::backward_batch(model, caches, x, loss.grad, !bn_frozen, grads);
  return loss.value;
}

// ---------------------------------------------------------------------------
// Single-subject forward. Inference mode uses running statistics and no
// dropout; train mode treats x as a batch of one (batch statistics collapse
// the normalized value to zero) and applies dropout from `rng`.
// ---------------------------------------------------------------------------

enum class ForwardMode { train, infer };

inline double forward(const MlpSurvModel& model, std::span<const double> x, ForwardMode mode,
                      Rng* rng = nullptr) {
  if (static_cast<int>(x.size()) != model.input_dim)
    throw ConfigError("mlp forward: input dimension mismatch");
  if (mode == ForwardMode::infer) return model.score_one(x);
  MlpSurvModel scratch = model;
  Eigen::MatrixXd row(1, model.input_dim);
  for (std::size_t j = 0; j < x.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = x[j];
  std::vector<detail::LayerCache> caches;
  detail::ForwardOptions opt;
  opt.bn_batch_stats = true;
  opt.update_running = false;
  if (model.spec.dropout_rate > 0.0) {
    if (rng == nullptr) throw ConfigError("mlp forward: train mode with dropout needs an RNG");
    opt.dropout_rng = rng;
  }
  return detail::forward_batch(scratch, row, opt, caches)(0);
}

// ---------------------------------------------------------------------------
// Minibatch training with early stopping on validation concordance.
// Returns the weights of the best-validation epoch; a NaN loss aborts
// training at the last finite epoch and flags the model.
// ---------------------------------------------------------------------------

inline MlpSurvModel train(const cohort::FeatureMatrix& x_train,
                          const std::vector<SurvivalOutcome>& y_train,
                          const cohort::FeatureMatrix& x_val,
                          const std::vector<SurvivalOutcome>& y_val, const MlpSpec& spec,
                          std::uint64_t seed) {
  spec.validate();
  const auto n = x_train.values.rows();
  if (static_cast<std::size_t>(n) != y_train.size())
    throw ConfigError("mlp train: feature/outcome row mismatch");
  if (static_cast<std::size_t>(x_val.values.rows()) != y_val.size())
    throw ConfigError("mlp train: validation feature/outcome row mismatch");
  if (count_events(y_train) == 0) throw NumericError("mlp train: no events in training data");

  MlpSurvModel model = initialize(spec, static_cast<int>(x_train.values.cols()),
                                  derive_seed(seed, 0x13317));
  model.column_names = x_train.column_names;
  model.scaling = x_train.scaling;

  auto opt_state = detail::OptState::zeros_like(model);
  Rng shuffle_rng(derive_seed(seed, 0x5FF1E));
  Rng dropout_rng(derive_seed(seed, 0xD20));

  MlpSurvModel best = model;
  double best_c = -std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 0; epoch < spec.max_epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), shuffle_rng);
    double loss_sum = 0.0;
    int loss_batches = 0;
    bool exploded = false;

    for (Eigen::Index start = 0; start < n; start += spec.batch_size) {
      const auto len = std::min<Eigen::Index>(spec.batch_size, n - start);
      Eigen::MatrixXd xb(len, x_train.values.cols());
      std::vector<SurvivalOutcome> yb(static_cast<std::size_t>(len));
      for (Eigen::Index k = 0; k < len; ++k) {
        xb.row(k) = x_train.values.row(idx[static_cast<std::size_t>(start + k)]);
        yb[static_cast<std::size_t>(k)] =
            y_train[static_cast<std::size_t>(idx[static_cast<std::size_t>(start + k)])];
      }

      std::vector<detail::LayerCache> caches;
      detail::ForwardOptions fopt;
      fopt.bn_batch_stats = true;
      fopt.update_running = true;
      fopt.dropout_rng = spec.dropout_rate > 0.0 ? &dropout_rng : nullptr;
      Eigen::VectorXd scores = detail::forward_batch(model, xb, fopt, caches);
      BatchLoss loss = cox_batch_loss(scores, yb);
      if (!loss.has_events) continue;  // skipped, not an error
      if (!std::isfinite(loss.value)) {
        exploded = true;
        break;
      }
      ParamGradients grads = ParamGradients::zeros_like(model);
      detail::backward_batch(model, caches, xb, loss.grad, true, grads);
      detail::apply_update(model, grads, opt_state);
      loss_sum += loss.value;
      ++loss_batches;
    }

    if (exploded) {
      model.diverged = true;
      break;
    }

    EpochLog log;
    log.train_loss = loss_batches > 0 ? loss_sum / loss_batches
                                      : std::numeric_limits<double>::quiet_NaN();
    Eigen::VectorXd val_scores = model.score(x_val.values);
    std::vector<double> vs(val_scores.data(), val_scores.data() + val_scores.size());
    log.val_concordance = metrics::concordance(vs, y_val).c_index;
    model.training_log.push_back(log);

    if (log.val_concordance > best_c) {
      best_c = log.val_concordance;
      best = model;
      best.training_log.clear();
      best.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= spec.early_stop_patience) {
      break;
    }
  }

  const bool diverged = model.diverged;
  auto log = model.training_log;
  if (best.best_epoch >= 0) {
    best.training_log = std::move(log);
    best.diverged = diverged;
    return best;
  }
  return model;  // never evaluated an epoch (max_epochs == 0)
}

// ---------------------------------------------------------------------------
// Learning-rate range estimation: one identically-initialized epoch per
// candidate; returns the largest rate whose smoothed batch losses decrease
// monotonically and whose full-data loss improves over the epoch.
// ---------------------------------------------------------------------------

inline double lr_range_estimate(const cohort::FeatureMatrix& x,
                                const std::vector<SurvivalOutcome>& y, const MlpSpec& spec,
                                std::vector<double> lr_grid, std::uint64_t seed = 0) {
  if (lr_grid.empty()) throw ConfigError("lr_range_estimate: empty grid");
  for (double lr : lr_grid)
    if (!(lr > 0.0)) throw ConfigError("lr_range_estimate: rates must be > 0");
  std::sort(lr_grid.begin(), lr_grid.end());
  if (count_events(y) == 0) throw NumericError("lr_range_estimate: no events");

  auto full_loss = [&](MlpSurvModel& m) {
    Eigen::VectorXd s = m.score(x.values);
    return cox_batch_loss(s, y).value;
  };

  double chosen = 0.0;
  bool found = false;
  for (double lr : lr_grid) {
    MlpSpec s = spec;
    s.learning_rate = lr;
    s.max_epochs = 1;
    MlpSurvModel model = initialize(s, static_cast<int>(x.values.cols()),
                                    derive_seed(seed, 0x12A11));
    auto opt_state = detail::OptState::zeros_like(model);
    Rng order_rng(derive_seed(seed, 0x0D0E));  // identical order for every candidate
    Rng dropout_rng(derive_seed(seed, 0xD21));
    std::vector<int> idx(static_cast<std::size_t>(x.values.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), order_rng);

    const double before = full_loss(model);
    bool ok = std::isfinite(before);
    double smoothed = 0.0;
    bool first = true;
    for (Eigen::Index start = 0; ok && start < x.values.rows(); start += s.batch_size) {
      const auto len = std::min<Eigen::Index>(s.batch_size, x.values.rows() - start);
      Eigen::MatrixXd xb(len, x.values.cols());
      std::vector<SurvivalOutcome> yb(static_cast<std::size_t>(len));
      for (Eigen::Index k = 0; k < len; ++k) {
        xb.row(k) = x.values.row(idx[static_cast<std::size_t>(start + k)]);
        yb[static_cast<std::size_t>(k)] =
            y[static_cast<std::size_t>(idx[static_cast<std::size_t>(start + k)])];
      }
      std::vector<detail::LayerCache> caches;
      detail::ForwardOptions fopt;
      fopt.bn_batch_stats = true;
      fopt.update_running = true;
      fopt.dropout_rng = s.dropout_rate > 0.0 ? &dropout_rng : nullptr;
      Eigen::VectorXd scores = detail::forward_batch(model, xb, fopt, caches);
      BatchLoss loss = cox_batch_loss(scores, yb);
      if (!loss.has_events) continue;
      if (!std::isfinite(loss.value)) {
        ok = false;
        break;
      }
      const double next = first ? loss.value : 0.8 * smoothed + 0.2 * loss.value;
      if (!first && next > smoothed + 1e-12 * std::max(1.0, std::abs(smoothed))) ok = false;
      smoothed = next;
      first = false;
      ParamGradients grads = ParamGradients::zeros_like(model);
      detail::backward_batch(model, caches, xb, loss.grad, true, grads);
      detail::apply_update(model, grads, opt_state);
    }
    if (!ok) continue;
    const double after = full_loss(model);
    if (std::isfinite(after) && after < before) {
      chosen = lr;
      found = true;
    }
  }
  if (!found)
    throw NumericError("lr_range_estimate: no candidate decreased the loss; "
                       "try a grid with a smaller floor");
  return chosen;
}

}  // namespace survkit::neural
