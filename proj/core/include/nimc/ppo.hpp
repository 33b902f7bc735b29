#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nimc/env.hpp"
#include "nimc/policy.hpp"

namespace nimc {

struct PpoConfig {
  int n_envs = 256;
  int n_steps = 64;
  int epochs = 4;
  int minibatches = 8;
  double clip = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double learning_rate = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 1e-3;
  double max_grad_norm = 1.0;
  std::int64_t total_steps = 2'000'000;
  std::uint64_t seed = 0;
  /// Worker threads for stepping environments; results do not depend on it.
  int n_threads = 1;

  static constexpr double kAdamBeta1 = 0.9;
  static constexpr double kAdamBeta2 = 0.999;
  static constexpr double kAdamEps = 1e-8;

  void validate() const;
};

/// Records are stored step-major: index = t * n_envs + e.
struct RolloutBuffer {
  int n_envs = 0;
  int n_steps = 0;
  Eigen::MatrixXd obs;  // normalized observations, one column per record
  std::vector<std::array<double, kActionDim>> pre_squash;
  /// Gaussian log-density of the pre-squash sample under the behavior
  /// policy. The tanh Jacobian cancels in the importance ratio.
  std::vector<double> log_prob;
  std::vector<double> reward;
  std::vector<double> value;
  /// V(s_{t+1}) for truncated records, zero otherwise.
  std::vector<double> bootstrap;
  std::vector<std::uint8_t> done;
  std::vector<std::uint8_t> terminated;
  std::vector<PredictiveError> pred_err;
  std::vector<BodyState> state;
  std::vector<BodyState> next_state;
  std::vector<CtbrAction> action;
  /// Value of the observation following the last step of each env.
  std::vector<double> last_value;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::vector<double> episode_returns;  // episodes finished during collection
  std::vector<int> episode_lengths;

  std::size_t size() const { return static_cast<std::size_t>(n_envs) * n_steps; }
  std::size_t index(int t, int e) const { return static_cast<std::size_t>(t) * n_envs + e; }
  void resize(int envs, int steps, int obs_dim);
};

/// Parallel environments with their running episode statistics.
class VecEnv {
 public:
  VecEnv(const EnvConfig& cfg, int n_envs, std::uint64_t seed);

  int size() const { return static_cast<int>(envs_.size()); }
  TrackingEnv& env(int i) { return envs_[static_cast<std::size_t>(i)]; }
  const TrackingEnv& env(int i) const { return envs_[static_cast<std::size_t>(i)]; }
  Eigen::MatrixXd observe() const;

  std::vector<double>& episode_return() { return ep_return_; }
  std::vector<int>& episode_length() { return ep_length_; }

 private:
  std::vector<TrackingEnv> envs_;
  std::vector<double> ep_return_;
  std::vector<int> ep_length_;
};

/// Steps every env n_steps times with actions sampled from the policy.
/// Observations pass through `normalizer`, which is updated first when
/// `update_normalizer` is set. Finished envs are reset in place.
RolloutBuffer collect_rollouts(VecEnv& envs, const PolicyNetwork& net,
                               const Eigen::VectorXd& params, ObsNormalizer& normalizer,
                               bool update_normalizer, const PpoConfig& cfg, Rng& rng);

/// GAE(gamma, lambda) in place; returns = advantages + values.
void compute_gae(RolloutBuffer& buffer, double gamma, double lambda);

/// Zero mean, unit std; leaves the values centered only when std < 1e-8.
void normalize_advantages(std::vector<double>& adv);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;

  void init(Eigen::Index n);
};

struct UpdateMetrics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  bool aborted = false;
  std::string diagnostic;
};

/// Gradient of the PPO loss over a set of records; returns the loss
/// components for those records. `adv` is indexed like the buffer.
struct LossTerms {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double total() const;
};
LossTerms ppo_loss_and_grad(const PolicyNetwork& net, const Eigen::VectorXd& params,
                            const RolloutBuffer& buffer, const std::vector<double>& adv,
                            const std::vector<std::size_t>& records, const PpoConfig& cfg,
                            Eigen::VectorXd* grad);

/// Minibatched clipped-surrogate epochs with Adam. Leaves `params` untouched
/// and sets `aborted` if a non-finite loss or gradient appears.
UpdateMetrics ppo_update(const PolicyNetwork& net, Eigen::VectorXd& params, AdamState& adam,
                         const RolloutBuffer& buffer, const PpoConfig& cfg, Rng& rng);

struct TrainConfig {
  PpoConfig ppo;
  EnvConfig env;
  NetworkConfig net;
  /// Iterations between intermediate checkpoints; 0 writes only the final one.
  int checkpoint_every = 0;
  std::string tag;
};

struct IterationLog {
  int iteration = 0;
  std::int64_t env_steps = 0;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  double episode_return_mean = 0.0;
  int episodes = 0;
  double pred_err_norm_mean = 0.0;
  UpdateMetrics update;
};

struct TrainResult {
  PolicyCheckpoint checkpoint;
  std::vector<IterationLog> log;
  std::string params_hash;
};

using TrainCallback = std::function<void(const IterationLog&)>;

/// Full training run. When `out_dir` is non-empty writes metrics.csv and
/// checkpoints (policy.json, plus policy_iterNNNN.json when configured).
TrainResult train(const TrainConfig& cfg, const std::string& out_dir = {},
                  const TrainCallback& on_iteration = {});

/// Hex FNV-1a hash of the raw parameter bytes.
std::string params_hash(const Eigen::VectorXd& params);

/// Mean per-step reward of a deterministic rollout, for progress checks.
double evaluate_mean_reward(const PolicyCheckpoint& ckpt, const EnvConfig& env, int n_envs,
                            int n_steps, std::uint64_t seed);

}  // namespace nimc
