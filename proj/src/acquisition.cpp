#include "balkit/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "balkit/parallel.hpp"

namespace balkit {

namespace {

constexpr double kMiSlack = 1e-9;
constexpr double kPowerScoreFloor = 1e-12;

void require_posterior(const PosteriorPredictions& preds, const char* what) {
  if (preds.k() < 2) {
    throw std::invalid_argument(
        std::string(what) +
        " requires K >= 2 posterior samples; epistemic uncertainty is "
        "undefined for point estimates");
  }
}

void require_same_shape(const PosteriorPredictions& a, const PosteriorPredictions& b) {
  if (a.n() != b.n() || a.c() != b.c()) {
    throw std::invalid_argument(
        "parent and evaluation predictions must share N and C");
  }
}

void require_no_nan(const ScoreVector& scores) {
  for (double s : scores.scores) {
    if (std::isnan(s)) throw std::invalid_argument("ScoreVector contains NaN");
  }
  if (scores.scores.size() != scores.pool_indices.size()) {
    throw std::invalid_argument("ScoreVector: scores/pool_indices length mismatch");
  }
}

double bald_single(const PosteriorPredictions& preds, int n) {
  const double score =
      predictive_entropy(preds, n) - expected_conditional_entropy(preds, n);
  if (score < -kMiSlack) {
    throw std::logic_error("BALD score below -1e-9; predictions are inconsistent");
  }
  return std::max(score, 0.0);
}

// Candidate order by (score desc, pool index asc).
std::vector<int> ranked_positions(const ScoreVector& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores.scores[a] != scores.scores[b]) {
      return scores.scores[a] > scores.scores[b];
    }
    return scores.pool_indices[a] < scores.pool_indices[b];
  });
  return order;
}

// Probabilities of one tensor as a [K x N*C] matrix, a column block of C per
// candidate; this is the GEMM operand for batched joint-entropy extension.
Eigen::MatrixXd probability_blocks(const PosteriorPredictions& preds) {
  const int n = preds.n(), k = preds.k(), c = preds.c();
  Eigen::MatrixXd probs(k, static_cast<Eigen::Index>(n) * c);
  parallel_for(n, [&](int i) {
    for (int j = 0; j < k; ++j) {
      const double* lp = preds.slice(i, j);
      for (int cls = 0; cls < c; ++cls) {
        probs(j, static_cast<Eigen::Index>(i) * c + cls) = std::exp(lp[cls]);
      }
    }
  });
  return probs;
}

// Joint entropy of state-members plus each candidate, for all candidates at
// once. Exact states use the full mixture; MC states Rao-Blackwellize over the
// candidate's classes with the stored importance weights.
void extension_entropies(const JointState& state, const Eigen::MatrixXd& probs_knc,
                         int c, std::vector<double>& out) {
  const int n = static_cast<int>(probs_knc.cols() / c);
  const double k = static_cast<double>(state.sample_count());
  const Eigen::Index r = state.rows();
  out.assign(n, 0.0);

  Eigen::ArrayXd inv_weights;
  if (state.mode == JointMode::MonteCarlo) {
    inv_weights.resize(r);
    for (Eigen::Index i = 0; i < r; ++i) {
      inv_weights[i] =
          1.0 / std::max(std::exp(state.importance_log_weights[i]), kProbFloor);
    }
  }

  // ~64 MB of scratch per chunk
  const Eigen::Index max_doubles = Eigen::Index(8) << 20;
  const int chunk =
      static_cast<int>(std::clamp<Eigen::Index>(max_doubles / std::max<Eigen::Index>(r * c, 1),
                                                1, n));
  parallel_chunks(n, chunk, [&](int begin, int end) {
    const Eigen::MatrixXd mix =
        state.config_probs *
        probs_knc.middleCols(static_cast<Eigen::Index>(begin) * c,
                             static_cast<Eigen::Index>(end - begin) * c) /
        k;
    for (int j = begin; j < end; ++j) {
      const auto block = mix.middleCols(static_cast<Eigen::Index>(j - begin) * c, c).array();
      if (state.mode == JointMode::Exact) {
        out[j] = -(block * block.max(kProbFloor).log()).sum();
      } else {
        out[j] = -((block.colwise() * inv_weights) * block.max(kProbFloor).log()).sum() /
                 static_cast<double>(r);
      }
    }
  });
}

struct GreedyInput {
  const PosteriorPredictions* preds;
  Eigen::MatrixXd probs;      // [K x N*C]
  std::vector<double> ece;    // per candidate
  JointState exact_state;
  double ece_sum = 0.0;
};

GreedyInput prepare_greedy_input(const PosteriorPredictions& preds) {
  GreedyInput in;
  in.preds = &preds;
  in.probs = probability_blocks(preds);
  in.ece.resize(preds.n());
  parallel_for(preds.n(), [&](int i) { in.ece[i] = expected_conditional_entropy(preds, i); });
  in.exact_state = make_joint_state_exact(preds);
  return in;
}

BatchSelection greedy_joint_select(const PosteriorPredictions& parent,
                                   const PosteriorPredictions* eval, int b,
                                   const McConfig& mc, Rng& rng, const char* tag) {
  require_posterior(parent, tag);
  if (eval != nullptr) {
    require_posterior(*eval, tag);
    require_same_shape(parent, *eval);
  }
  if (b < 1) throw std::invalid_argument("batch size must be >= 1");
  const int n = parent.n();
  const int c = parent.c();
  const int b_eff = std::min(b, n);

  std::vector<GreedyInput> inputs;
  inputs.push_back(prepare_greedy_input(parent));
  if (eval != nullptr) inputs.push_back(prepare_greedy_input(*eval));

  BatchSelection out;
  out.method_tag = tag;
  if (b > n) out.method_tag += "+whole-pool";
  std::vector<char> chosen(n, 0);
  bool exact_ok = true;
  std::vector<std::vector<double>> ext(inputs.size(), std::vector<double>(n));

  for (int step = 0; step < b_eff; ++step) {
    const bool use_exact =
        exact_ok && inputs[0].exact_state.rows() * c <= mc.exact_config_limit;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      if (use_exact) {
        extension_entropies(inputs[t].exact_state, inputs[t].probs, c, ext[t]);
      } else {
        JointState st = make_joint_state_mc(*inputs[t].preds, mc.mc_samples, rng);
        for (int idx : out.indices) st = joint_extend(st, *inputs[t].preds, idx, rng);
        extension_entropies(st, inputs[t].probs, c, ext[t]);
      }
    }

    double best = -std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (int j = 0; j < n; ++j) {
      if (chosen[j]) continue;
      double objective = ext[0][j] - inputs[0].ece_sum - inputs[0].ece[j];
      if (eval != nullptr) {
        objective -= ext[1][j] - inputs[1].ece_sum - inputs[1].ece[j];
      }
      if (objective > best) {
        best = objective;
        best_idx = j;
      }
    }

    chosen[best_idx] = 1;
    out.indices.push_back(best_idx);
    out.step_scores.push_back(best);
    for (auto& in : inputs) in.ece_sum += in.ece[best_idx];
    if (use_exact && inputs[0].exact_state.rows() * c <= mc.exact_config_limit) {
      for (auto& in : inputs) {
        in.exact_state =
            joint_extend(in.exact_state, *in.preds, best_idx, mc.exact_config_limit);
      }
    } else {
      exact_ok = false;
    }
  }
  return out;
}

}  // namespace

const char* method_name(AcquisitionMethod m) {
  switch (m) {
    case AcquisitionMethod::Random: return "random";
    case AcquisitionMethod::Bald: return "bald";
    case AcquisitionMethod::BatchBald: return "batchbald";
    case AcquisitionMethod::Eig: return "eig";
    case AcquisitionMethod::EvalBald: return "evalbald";
    case AcquisitionMethod::BatchEvalBald: return "batch_evalbald";
    case AcquisitionMethod::PowerBald: return "power_bald";
    case AcquisitionMethod::PowerEig: return "power_eig";
    case AcquisitionMethod::PowerEvalBald: return "power_evalbald";
    case AcquisitionMethod::ThompsonBald: return "thompson_bald";
    case AcquisitionMethod::UniformTop: return "uniform_top";
  }
  return "unknown";
}

std::optional<AcquisitionMethod> method_from_name(const std::string& name) {
  static const AcquisitionMethod all[] = {
      AcquisitionMethod::Random,       AcquisitionMethod::Bald,
      AcquisitionMethod::BatchBald,    AcquisitionMethod::Eig,
      AcquisitionMethod::EvalBald,     AcquisitionMethod::BatchEvalBald,
      AcquisitionMethod::PowerBald,    AcquisitionMethod::PowerEig,
      AcquisitionMethod::PowerEvalBald, AcquisitionMethod::ThompsonBald,
      AcquisitionMethod::UniformTop,
  };
  for (AcquisitionMethod m : all) {
    if (name == method_name(m)) return m;
  }
  return std::nullopt;
}

bool method_needs_eval_model(AcquisitionMethod m) {
  switch (m) {
    case AcquisitionMethod::Eig:
    case AcquisitionMethod::EvalBald:
    case AcquisitionMethod::BatchEvalBald:
    case AcquisitionMethod::PowerEig:
    case AcquisitionMethod::PowerEvalBald:
      return true;
    default:
      return false;
  }
}

bool method_needs_posterior(AcquisitionMethod m) {
  switch (m) {
    case AcquisitionMethod::Random:
    case AcquisitionMethod::Eig:
    case AcquisitionMethod::PowerEig:
      return false;
    default:
      return true;
  }
}

int method_default_k(AcquisitionMethod m) {
  switch (m) {
    case AcquisitionMethod::BatchBald:
    case AcquisitionMethod::BatchEvalBald:
      return 100;
    default:
      return 20;
  }
}

ScoreVector make_score_vector(std::vector<double> scores) {
  ScoreVector out;
  out.pool_indices.resize(scores.size());
  std::iota(out.pool_indices.begin(), out.pool_indices.end(), 0);
  out.scores = std::move(scores);
  return out;
}

ScoreVector score_bald(const PosteriorPredictions& preds) {
  require_posterior(preds, "BALD");
  std::vector<double> scores(preds.n());
  parallel_for(preds.n(), [&](int i) { scores[i] = bald_single(preds, i); });
  return make_score_vector(std::move(scores));
}

ScoreVector score_eig(const PosteriorPredictions& parent,
                      const PosteriorPredictions& eval) {
  require_same_shape(parent, eval);
  std::vector<double> scores(parent.n());
  parallel_for(parent.n(), [&](int i) {
    scores[i] = predictive_entropy(parent, i) - predictive_entropy(eval, i);
  });
  return make_score_vector(std::move(scores));
}

ScoreVector score_evalbald(const PosteriorPredictions& parent,
                           const PosteriorPredictions& eval) {
  require_posterior(parent, "EvaluationBALD");
  require_posterior(eval, "EvaluationBALD");
  require_same_shape(parent, eval);
  std::vector<double> scores(parent.n());
  parallel_for(parent.n(), [&](int i) {
    scores[i] = bald_single(parent, i) - bald_single(eval, i);
  });
  return make_score_vector(std::move(scores));
}

BatchSelection select_top_k(const ScoreVector& scores, int b) {
  if (b < 1) throw std::invalid_argument("select_top_k: b must be >= 1");
  require_no_nan(scores);
  const std::vector<int> order = ranked_positions(scores);
  const int take = std::min<int>(b, scores.size());

  BatchSelection out;
  out.method_tag = "top_k";
  if (b > scores.size()) out.method_tag += "+whole-pool";
  for (int i = 0; i < take; ++i) {
    out.indices.push_back(order[i]);
    out.step_scores.push_back(scores.scores[order[i]]);
  }
  return out;
}

BatchSelection select_batchbald(const PosteriorPredictions& preds, int b,
                                const McConfig& mc, Rng& rng) {
  return greedy_joint_select(preds, nullptr, b, mc, rng, "batchbald");
}

BatchSelection select_batch_evalbald(const PosteriorPredictions& parent,
                                     const PosteriorPredictions& eval, int b,
                                     const McConfig& mc, Rng& rng) {
  return greedy_joint_select(parent, &eval, b, mc, rng, "batch_evalbald");
}

BatchSelection sample_power(const ScoreVector& scores, int b, double alpha,
                            Rng& rng) {
  if (b < 1 || b > scores.size()) {
    throw std::invalid_argument("sample_power: need 1 <= b <= N");
  }
  if (alpha < 0.0) throw std::invalid_argument("sample_power: alpha must be >= 0");
  require_no_nan(scores);
  const int n = scores.size();

  // Gumbel-top-k keys; equals sequential sampling without replacement with
  // p(i) proportional to max(score, 1e-12)^alpha.
  std::vector<double> keys(n);
  for (int i = 0; i < n; ++i) {
    keys[i] = alpha * std::log(std::max(scores.scores[i], kPowerScoreFloor)) +
              sample_gumbel(rng);
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + b, order.end(), [&](int a, int c) {
    if (keys[a] != keys[c]) return keys[a] > keys[c];
    return scores.pool_indices[a] < scores.pool_indices[c];
  });

  BatchSelection out;
  out.method_tag = "power";
  for (int i = 0; i < b; ++i) {
    out.indices.push_back(order[i]);
    out.step_scores.push_back(scores.scores[order[i]]);
  }
  return out;
}

BatchSelection sample_uniform_top(const ScoreVector& scores, int b,
                                  int class_count, Rng& rng) {
  if (b < 1 || b > scores.size()) {
    throw std::invalid_argument("sample_uniform_top: need 1 <= b <= N");
  }
  if (class_count < 1) {
    throw std::invalid_argument("sample_uniform_top: class count must be >= 1");
  }
  require_no_nan(scores);
  const long long wanted = static_cast<long long>(b) * class_count;
  const int m = static_cast<int>(std::min<long long>(wanted, scores.size()));

  std::vector<int> top = ranked_positions(scores);
  top.resize(m);
  // partial Fisher-Yates over the top-m ranks, then restore score order
  std::vector<int> ranks(m);
  std::iota(ranks.begin(), ranks.end(), 0);
  for (int i = 0; i < b; ++i) {
    std::swap(ranks[i], ranks[i + uniform_index(rng, m - i)]);
  }
  ranks.resize(b);
  std::sort(ranks.begin(), ranks.end());

  BatchSelection out;
  out.method_tag = "uniform_top";
  for (int rank : ranks) {
    out.indices.push_back(top[rank]);
    out.step_scores.push_back(scores.scores[top[rank]]);
  }
  return out;
}

BatchSelection sample_thompson(const PosteriorPredictions& preds, int b, Rng& rng) {
  require_posterior(preds, "ThompsonBALD");
  if (b < 1) throw std::invalid_argument("sample_thompson: b must be >= 1");
  const int k = preds.k();
  const int n = preds.n();
  const int c = preds.c();
  if (k < 2 * b) {
    throw std::invalid_argument(
        "sample_thompson: need K >= 2*b posterior samples (each slot needs >= 2)");
  }

  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = k - 1; i > 0; --i) {
    std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
  }

  BatchSelection out;
  out.method_tag = "thompson_bald";
  std::vector<char> chosen(n, 0);
  std::vector<double> marginal(c);
  for (int slot = 0; slot < std::min(b, n); ++slot) {
    const int begin = static_cast<int>(static_cast<long long>(slot) * k / b);
    const int end = static_cast<int>(static_cast<long long>(slot + 1) * k / b);
    const int group = end - begin;

    double best = -std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (int i = 0; i < n; ++i) {
      if (chosen[i]) continue;
      std::fill(marginal.begin(), marginal.end(), 0.0);
      double cond = 0.0;
      for (int g = begin; g < end; ++g) {
        const double* lp = preds.slice(i, perm[g]);
        cond += entropy_of_log_probs(lp, c);
        for (int cls = 0; cls < c; ++cls) marginal[cls] += std::exp(lp[cls]);
      }
      for (int cls = 0; cls < c; ++cls) marginal[cls] /= group;
      const double score = entropy_of_probs(marginal.data(), c) - cond / group;
      if (score > best) {
        best = score;
        best_idx = i;
      }
    }
    chosen[best_idx] = 1;
    out.indices.push_back(best_idx);
    out.step_scores.push_back(best);
  }
  return out;
}

BatchSelection select_random(int n, int b, Rng& rng) {
  if (b < 0 || b > n) throw std::invalid_argument("select_random: need b <= n");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  BatchSelection out;
  out.method_tag = "random";
  for (int i = 0; i < b; ++i) {
    std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
    out.indices.push_back(idx[i]);
    out.step_scores.push_back(0.0);
  }
  return out;
}

}  // namespace balkit
