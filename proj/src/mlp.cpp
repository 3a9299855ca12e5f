#include "balkit/mlp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "balkit/parallel.hpp"

namespace balkit {

namespace {

void validate_arch(const MlpArchitecture& arch) {
  if (arch.input_dim < 1 || arch.class_count < 2) {
    throw std::invalid_argument("MlpArchitecture: need input_dim >= 1 and classes >= 2");
  }
  for (int h : arch.hidden) {
    if (h < 1) throw std::invalid_argument("MlpArchitecture: zero-dimensional layer");
  }
  if (arch.dropout < 0.0 || arch.dropout >= 1.0) {
    throw std::invalid_argument("MlpArchitecture: dropout must be in [0, 1)");
  }
}

std::vector<int> layer_dims(const MlpArchitecture& arch) {
  std::vector<int> dims;
  dims.push_back(arch.input_dim);
  for (int h : arch.hidden) dims.push_back(h);
  dims.push_back(arch.class_count);
  return dims;
}

// Row-wise log-softmax in place.
void log_softmax_rows(Eigen::MatrixXd& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double max_v = logits.row(r).maxCoeff();
    const double lse = max_v + std::log((logits.row(r).array() - max_v).exp().sum());
    logits.row(r).array() -= lse;
  }
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // activation entering each layer
  std::vector<Eigen::MatrixXd> tanh_out;
  std::vector<Eigen::MatrixXd> masks;  // scaled dropout masks (empty = off)
  Eigen::MatrixXd logits;
};

enum class DropoutKind { Off, PerSample };

void forward(const MlpParams& params, const Eigen::MatrixXd& x, DropoutKind kind,
             Rng* rng, ForwardCache& cache) {
  const int layers = params.arch.layer_count();
  const double p = params.arch.dropout;
  const double keep_scale = p > 0.0 ? 1.0 / (1.0 - p) : 1.0;
  cache.inputs.assign(layers, {});
  cache.tanh_out.assign(layers - 1, {});
  cache.masks.assign(layers - 1, {});

  Eigen::MatrixXd act = x;
  for (int l = 0; l < layers; ++l) {
    cache.inputs[l] = act;
    Eigen::MatrixXd z = act * params.weights[l].transpose();
    z.rowwise() += params.biases[l].transpose();
    if (l == layers - 1) {
      cache.logits = std::move(z);
      break;
    }
    Eigen::MatrixXd t = z.array().tanh();
    cache.tanh_out[l] = t;
    if (kind == DropoutKind::PerSample && p > 0.0) {
      Eigen::MatrixXd mask(t.rows(), t.cols());
      for (Eigen::Index r = 0; r < mask.rows(); ++r) {
        for (Eigen::Index cidx = 0; cidx < mask.cols(); ++cidx) {
          mask(r, cidx) = uniform_unit(*rng) < p ? 0.0 : keep_scale;
        }
      }
      cache.masks[l] = mask;
      act = t.cwiseProduct(mask);
    } else {
      act = std::move(t);
    }
  }
}

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

Gradients zero_gradients(const MlpParams& params) {
  Gradients g;
  for (const auto& w : params.weights) g.weights.emplace_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : params.biases) g.biases.emplace_back(Eigen::VectorXd::Zero(b.size()));
  return g;
}

// Mean cross-entropy (equivalently the target-dependent part of the KL) over
// soft or one-hot target rows; gradients via backprop through the cache.
double loss_and_gradients(const MlpParams& params, const ForwardCache& cache,
                          const Eigen::MatrixXd& targets, Gradients& grads) {
  const int layers = params.arch.layer_count();
  const Eigen::Index batch = cache.logits.rows();

  Eigen::MatrixXd log_probs = cache.logits;
  log_softmax_rows(log_probs);
  const double loss = -(targets.array() * log_probs.array()).sum() / batch;

  Eigen::MatrixXd delta =
      (log_probs.array().exp().matrix() - targets) / static_cast<double>(batch);
  for (int l = layers - 1; l >= 0; --l) {
    grads.weights[l] = delta.transpose() * cache.inputs[l];
    grads.biases[l] = delta.colwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = delta * params.weights[l];
    if (cache.masks[l - 1].size() > 0) back = back.cwiseProduct(cache.masks[l - 1]);
    delta = back.cwiseProduct(
        (1.0 - cache.tanh_out[l - 1].array().square()).matrix());
  }
  return loss;
}

Eigen::MatrixXd one_hot_rows(const std::vector<int>& labels, int class_count) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(labels.size(), class_count);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= class_count) {
      throw std::invalid_argument("label out of range [0, C)");
    }
    t(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return t;
}

// little-endian binary helpers
void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 4);
}

void put_f64(std::ostream& os, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

// Combined hard + soft example stream; train_supervised is the empty-soft
// special case so both trainers share one update path.
MlpParams train_impl(const MlpParams& init, const Eigen::MatrixXd& hard_inputs,
                     const std::vector<int>& hard_labels, const SoftLabelSet* soft,
                     const TrainSchedule& schedule) {
  validate_arch(init.arch);
  const Eigen::Index hard_count = hard_inputs.rows();
  const Eigen::Index soft_count = soft != nullptr ? soft->size() : 0;
  const Eigen::Index total = hard_count + soft_count;
  if (total == 0) throw std::invalid_argument("train: no examples");
  if (hard_count != static_cast<Eigen::Index>(hard_labels.size())) {
    throw std::invalid_argument("train: inputs/labels length mismatch");
  }
  if (schedule.epochs < 1 || schedule.minibatch < 1 || schedule.learning_rate <= 0.0 ||
      schedule.oversample_target < 1 || schedule.weight_decay < 0.0 ||
      schedule.momentum < 0.0 || schedule.momentum >= 1.0) {
    throw std::invalid_argument("train: schedule fields must be positive");
  }
  const int c = init.arch.class_count;
  const Eigen::Index dim = init.arch.input_dim;
  if (hard_inputs.cols() != dim || (soft != nullptr && soft_count > 0 &&
                                    (soft->inputs.cols() != dim || soft->soft_targets.cols() != c))) {
    throw std::invalid_argument("train: input dimensions do not match the architecture");
  }
  if (soft != nullptr) {
    for (Eigen::Index r = 0; r < soft_count; ++r) {
      const double sum = soft->soft_targets.row(r).sum();
      if (std::abs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument("train: soft target row is not a distribution");
      }
    }
  }
  const Eigen::MatrixXd hard_targets = one_hot_rows(hard_labels, c);

  MlpParams params = init;
  Gradients velocity = zero_gradients(params);
  Rng rng = make_rng(schedule.seed);

  std::vector<int> stream(schedule.oversample_target);
  std::vector<int> perm(total);
  std::iota(perm.begin(), perm.end(), 0);

  ForwardCache cache;
  Gradients grads = zero_gradients(params);

  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    if (schedule.sample_with_replacement) {
      for (int& s : stream) s = uniform_index(rng, static_cast<int>(total));
    } else {
      for (int t = 0; t < schedule.oversample_target; ++t) {
        const int pos = t % static_cast<int>(total);
        if (pos == 0) {
          for (Eigen::Index i = total - 1; i > 0; --i) {
            std::swap(perm[i], perm[uniform_index(rng, static_cast<int>(i) + 1)]);
          }
        }
        stream[t] = perm[pos];
      }
    }

    for (int start = 0; start < schedule.oversample_target; start += schedule.minibatch) {
      const int count = std::min<int>(schedule.minibatch, schedule.oversample_target - start);
      Eigen::MatrixXd x(count, dim);
      Eigen::MatrixXd targets(count, c);
      for (int i = 0; i < count; ++i) {
        const int s = stream[start + i];
        if (s < hard_count) {
          x.row(i) = hard_inputs.row(s);
          targets.row(i) = hard_targets.row(s);
        } else {
          x.row(i) = soft->inputs.row(s - hard_count);
          targets.row(i) = soft->soft_targets.row(s - hard_count);
        }
      }

      forward(params, x, DropoutKind::PerSample, &rng, cache);
      loss_and_gradients(params, cache, targets, grads);

      for (std::size_t l = 0; l < params.weights.size(); ++l) {
        if (schedule.weight_decay > 0.0) {
          grads.weights[l] += schedule.weight_decay * params.weights[l];
        }
        velocity.weights[l] = schedule.momentum * velocity.weights[l] -
                              schedule.learning_rate * grads.weights[l];
        velocity.biases[l] = schedule.momentum * velocity.biases[l] -
                             schedule.learning_rate * grads.biases[l];
        params.weights[l] += velocity.weights[l];
        params.biases[l] += velocity.biases[l];
      }
    }
  }
  return params;
}

}  // namespace

MlpParams init_model(const MlpArchitecture& arch, std::uint64_t seed) {
  validate_arch(arch);
  MlpParams params;
  params.arch = arch;
  Rng rng = make_rng(seed);
  const std::vector<int> dims = layer_dims(arch);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double limit = std::sqrt(3.0 / fan_in);
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int cidx = 0; cidx < fan_in; ++cidx) {
        w(r, cidx) = (2.0 * uniform_unit(rng) - 1.0) * limit;
      }
    }
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(Eigen::VectorXd::Zero(fan_out));
  }
  return params;
}

MlpParams train_supervised(const MlpParams& init, const Eigen::MatrixXd& inputs,
                           const std::vector<int>& labels,
                           const TrainSchedule& schedule) {
  if (inputs.rows() == 0) throw std::invalid_argument("train_supervised: empty data");
  return train_impl(init, inputs, labels, nullptr, schedule);
}

MlpParams train_distilled(const MlpParams& init, const Eigen::MatrixXd& hard_inputs,
                          const std::vector<int>& hard_labels,
                          const SoftLabelSet& soft, const TrainSchedule& schedule) {
  return train_impl(init, hard_inputs, hard_labels, &soft, schedule);
}

PosteriorPredictions predict_mc(const MlpParams& params, const Eigen::MatrixXd& inputs,
                                int k, std::uint64_t seed) {
  validate_arch(params.arch);
  if (k < 1) throw std::invalid_argument("predict_mc: k must be >= 1");
  const int n = static_cast<int>(inputs.rows());
  const int c = params.arch.class_count;
  const int layers = params.arch.layer_count();
  const double p = params.arch.dropout;
  const double keep_scale = p > 0.0 ? 1.0 / (1.0 - p) : 1.0;

  // One dropout mask per posterior sample, shared across all inputs so every
  // candidate is evaluated under the same parameter draw.
  std::vector<std::vector<Eigen::VectorXd>> masks(k);
  Rng rng = make_rng(seed);
  for (int j = 0; j < k; ++j) {
    masks[j].resize(layers - 1);
    for (int l = 0; l + 1 < layers; ++l) {
      Eigen::VectorXd mask(params.arch.hidden[l]);
      for (Eigen::Index u = 0; u < mask.size(); ++u) {
        mask[u] = uniform_unit(rng) < p ? 0.0 : keep_scale;
      }
      masks[j][l] = std::move(mask);
    }
  }

  std::vector<double> log_probs(static_cast<std::size_t>(n) * k * c);
  parallel_for(k, [&](int j) {
    Eigen::MatrixXd act = inputs;
    for (int l = 0; l < layers; ++l) {
      Eigen::MatrixXd z = act * params.weights[l].transpose();
      z.rowwise() += params.biases[l].transpose();
      if (l == layers - 1) {
        act = std::move(z);
        break;
      }
      act = z.array().tanh();
      if (p > 0.0) act = act.array().rowwise() * masks[j][l].transpose().array();
    }
    log_softmax_rows(act);
    for (int i = 0; i < n; ++i) {
      double* dst = log_probs.data() + (static_cast<std::size_t>(i) * k + j) * c;
      for (int cls = 0; cls < c; ++cls) dst[cls] = std::min(act(i, cls), 0.0);
    }
  });
  return PosteriorPredictions(std::move(log_probs), n, k, c);
}

PosteriorPredictions predict_point(const MlpParams& params,
                                   const Eigen::MatrixXd& inputs) {
  validate_arch(params.arch);
  ForwardCache cache;
  forward(params, inputs, DropoutKind::Off, nullptr, cache);
  Eigen::MatrixXd log_probs = cache.logits;
  log_softmax_rows(log_probs);
  const int n = static_cast<int>(inputs.rows());
  const int c = params.arch.class_count;
  std::vector<double> flat(static_cast<std::size_t>(n) * c);
  for (int i = 0; i < n; ++i) {
    for (int cls = 0; cls < c; ++cls) {
      flat[static_cast<std::size_t>(i) * c + cls] = std::min(log_probs(i, cls), 0.0);
    }
  }
  return PosteriorPredictions(std::move(flat), n, 1, c);
}

double mean_cross_entropy(const MlpParams& params, const Eigen::MatrixXd& inputs,
                          const std::vector<int>& labels) {
  ForwardCache cache;
  forward(params, inputs, DropoutKind::Off, nullptr, cache);
  Eigen::MatrixXd log_probs = cache.logits;
  log_softmax_rows(log_probs);
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    loss -= log_probs(static_cast<Eigen::Index>(i), labels[i]);
  }
  return loss / static_cast<double>(labels.size());
}

double mean_kl_to_model(const MlpParams& params, const SoftLabelSet& soft) {
  ForwardCache cache;
  forward(params, soft.inputs, DropoutKind::Off, nullptr, cache);
  Eigen::MatrixXd log_probs = cache.logits;
  log_softmax_rows(log_probs);
  double kl = 0.0;
  for (Eigen::Index r = 0; r < soft.size(); ++r) {
    for (Eigen::Index cls = 0; cls < soft.soft_targets.cols(); ++cls) {
      const double t = soft.soft_targets(r, cls);
      if (t > 0.0) kl += t * (std::log(std::max(t, kProbFloor)) - log_probs(r, cls));
    }
  }
  return kl / static_cast<double>(soft.size());
}

double gradient_norm(const MlpParams& params, const Eigen::MatrixXd& inputs,
                     const std::vector<int>& labels) {
  ForwardCache cache;
  forward(params, inputs, DropoutKind::Off, nullptr, cache);
  Gradients grads = zero_gradients(params);
  loss_and_gradients(params, cache, one_hot_rows(labels, params.arch.class_count), grads);
  double sq = 0.0;
  for (const auto& g : grads.weights) sq += g.squaredNorm();
  for (const auto& g : grads.biases) sq += g.squaredNorm();
  return std::sqrt(sq);
}

double check_gradients(const MlpParams& params, const Eigen::MatrixXd& inputs,
                       const std::vector<int>& labels) {
  if (inputs.rows() > 8) {
    throw std::invalid_argument("check_gradients: batch size must be <= 8");
  }
  const Eigen::MatrixXd targets = one_hot_rows(labels, params.arch.class_count);

  ForwardCache cache;
  forward(params, inputs, DropoutKind::Off, nullptr, cache);
  Gradients analytic = zero_gradients(params);
  loss_and_gradients(params, cache, targets, analytic);

  MlpParams probe = params;
  const double h = 1e-5;
  const auto loss_at = [&]() {
    ForwardCache fc;
    forward(probe, inputs, DropoutKind::Off, nullptr, fc);
    Gradients scratch = zero_gradients(probe);
    return loss_and_gradients(probe, fc, targets, scratch);
  };

  double max_rel = 0.0;
  const auto check_entry = [&](double& value, double analytic_grad) {
    const double saved = value;
    value = saved + h;
    const double plus = loss_at();
    value = saved - h;
    const double minus = loss_at();
    value = saved;
    const double fd = (plus - minus) / (2.0 * h);
    const double rel = std::abs(analytic_grad - fd) /
                       std::max(std::abs(analytic_grad) + std::abs(fd), 1e-3);
    max_rel = std::max(max_rel, rel);
  };

  for (std::size_t l = 0; l < probe.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < probe.weights[l].rows(); ++r) {
      for (Eigen::Index cidx = 0; cidx < probe.weights[l].cols(); ++cidx) {
        check_entry(probe.weights[l](r, cidx), analytic.weights[l](r, cidx));
      }
    }
    for (Eigen::Index r = 0; r < probe.biases[l].size(); ++r) {
      check_entry(probe.biases[l](r), analytic.biases[l](r));
    }
  }
  return max_rel;
}

void save_checkpoint(const MlpParams& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write("IAQM", 4);
  put_u32(os, 1);  // version
  const std::vector<int> dims = layer_dims(params.arch);
  put_u32(os, static_cast<std::uint32_t>(dims.size()));
  for (int d : dims) put_u32(os, static_cast<std::uint32_t>(d));
  put_f64(os, params.arch.dropout);
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index cidx = 0; cidx < w.cols(); ++cidx) put_f64(os, w(r, cidx));
    }
    for (Eigen::Index r = 0; r < params.biases[l].size(); ++r) {
      put_f64(os, params.biases[l](r));
    }
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

MlpParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "IAQM", 4) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = get_u32(is);
  if (version != 1) {
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));
  }
  const std::uint32_t dim_count = get_u32(is);
  if (!is || dim_count < 2 || dim_count > 64) {
    throw std::runtime_error("load_checkpoint: corrupt dimension count");
  }
  std::vector<int> dims(dim_count);
  for (auto& d : dims) d = static_cast<int>(get_u32(is));

  MlpArchitecture arch;
  arch.input_dim = dims.front();
  arch.class_count = dims.back();
  arch.hidden.assign(dims.begin() + 1, dims.end() - 1);
  arch.dropout = get_f64(is);
  validate_arch(arch);

  MlpParams params;
  params.arch = arch;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Eigen::MatrixXd w(dims[l + 1], dims[l]);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index cidx = 0; cidx < w.cols(); ++cidx) w(r, cidx) = get_f64(is);
    }
    Eigen::VectorXd b(dims[l + 1]);
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = get_f64(is);
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path);
  return params;
}

}  // namespace balkit
