#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <utility>
#include <vector>

#include "nimc/ctbr.hpp"
#include "nimc/observation.hpp"
#include "nimc/random.hpp"

namespace nimc {

inline constexpr int kActionDim = 4;
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 1.0;

struct NetworkConfig {
  int hidden = 128;
  int layers = 3;
  int tcn_channels = 32;
  int latent = 16;
  double init_log_std = -0.5;

  void validate() const;
};

/// Named slice of the flat parameter vector, stored column-major.
struct ParamBlock {
  std::string name;
  int rows = 0;
  int cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(rows) * cols; }
};

/// Temporal-convolutional encoder: two valid convolutions (kernel 3,
/// dilations 1 and 2, tanh) followed by a linear projection of the flattened
/// feature map to the latent (tanh).
struct TcnShape {
  int in_channels = 0;
  int length = 0;
  int channels = 0;
  int latent = 0;

  int t1() const { return length - 2; }
  int t2() const { return t1() - 4; }
};

/// Fixed-architecture actor-critic:
///   waypoint TCN -> latent; optional history TCN -> latent;
///   actor MLP (tanh) -> pre-squash action mean; critic MLP (tanh) -> value;
///   state-independent log-std.
/// All parameters live in one flat vector so the optimizer, gradient tape
/// and checkpoints share a layout.
class PolicyNetwork {
 public:
  PolicyNetwork() = default;
  PolicyNetwork(const ObservationConfig& obs_cfg, const NetworkConfig& net_cfg);

  const ObservationConfig& obs_config() const { return obs_cfg_; }
  const NetworkConfig& net_config() const { return net_cfg_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(const std::string& name) const;
  Eigen::Index num_params() const { return num_params_; }
  int obs_dim() const { return obs_cfg_.size(); }
  int mlp_input_dim() const { return mlp_in_; }

  /// Orthogonal-ish scaled Gaussian init for weights, zero biases, and the
  /// configured initial log-std.
  Eigen::VectorXd init_params(Rng& rng) const;
  Eigen::VectorXd zero_params() const { return Eigen::VectorXd::Zero(num_params_); }

  struct Output {
    Eigen::MatrixXd mean;      // kActionDim x B, pre-squash
    Eigen::VectorXd log_std;   // kActionDim
    Eigen::RowVectorXd value;  // 1 x B
  };

  /// Intermediate activations kept for the backward pass.
  struct Cache {
    struct Tcn {
      Eigen::MatrixXd p1, a1, p2, a2, latent;
    };
    Tcn wp, hist;
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> actor_h, critic_h;
  };

  /// `obs` is obs_dim x B (one column per sample).
  Output forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& obs,
                 Cache* cache = nullptr) const;

  struct Upstream {
    Eigen::MatrixXd d_mean;      // kActionDim x B
    Eigen::VectorXd d_log_std;   // kActionDim
    Eigen::RowVectorXd d_value;  // 1 x B
  };

  /// Accumulates d(loss)/d(params) into `grad` given upstream gradients of
  /// the loss with respect to the forward outputs.
  void backward(const Eigen::VectorXd& params, const Cache& cache, const Upstream& up,
                Eigen::VectorXd& grad) const;

  /// Clamp the log-std block into [kLogStdMin, kLogStdMax].
  void clamp_log_std(Eigen::VectorXd& params) const;

 private:
  struct Layer {
    int w = -1;
    int b = -1;
  };
  struct TcnBlocks {
    TcnShape shape;
    Layer conv1, conv2, proj;
  };

  int add_block(const std::string& name, int rows, int cols);
  TcnBlocks add_tcn(const std::string& prefix, const TcnShape& shape);
  std::vector<Layer> add_mlp(const std::string& prefix, int in, int out);

  Eigen::Map<const Eigen::MatrixXd> mat(const Eigen::VectorXd& p, int block) const;
  Eigen::Map<Eigen::MatrixXd> mat(Eigen::VectorXd& p, int block) const;

  void tcn_forward(const Eigen::VectorXd& params, const TcnBlocks& t, const Eigen::MatrixXd& obs,
                   int offset, Cache::Tcn& c) const;
  void tcn_backward(const Eigen::VectorXd& params, const TcnBlocks& t, const Cache::Tcn& c,
                    const Eigen::MatrixXd& d_latent, Eigen::VectorXd& grad) const;

  ObservationConfig obs_cfg_;
  NetworkConfig net_cfg_;
  std::vector<ParamBlock> blocks_;
  Eigen::Index num_params_ = 0;
  int mlp_in_ = 0;
  TcnBlocks wp_;
  TcnBlocks hist_;
  std::vector<Layer> actor_;
  std::vector<Layer> critic_;
  int log_std_ = -1;
};

/// Per-sample forward results for a single observation.
struct PolicyEval {
  std::array<double, kActionDim> mean{};     // pre-squash
  std::array<double, kActionDim> log_std{};
  CtbrAction action_mean;                    // tanh(mean) scaled to action ranges
  double value = 0.0;
};

PolicyEval policy_forward(const PolicyNetwork& net, const Eigen::VectorXd& params,
                          const Observation& obs);

/// Gradient of sum_b <up, outputs_b> with respect to every parameter.
Eigen::VectorXd policy_backward(const PolicyNetwork& net, const Eigen::VectorXd& params,
                                const Eigen::MatrixXd& obs_batch,
                                const PolicyNetwork::Upstream& up);

/// Squashed action in (-1, 1)^4 -> CtbrAction ranges.
CtbrAction squashed_to_action(const std::array<double, kActionDim>& squashed);

struct ActionSample {
  CtbrAction action;
  std::array<double, kActionDim> pre_squash{};
  /// Log density of the squashed vector tanh(u) in (-1, 1)^4.
  double log_prob = 0.0;
  /// Log density of the Gaussian pre-squash sample u alone.
  double gaussian_log_prob = 0.0;
};

double gaussian_log_prob(const std::array<double, kActionDim>& u,
                         const std::array<double, kActionDim>& mean,
                         const std::array<double, kActionDim>& log_std);
/// sum_i log(1 - tanh(u_i)^2), evaluated stably.
double tanh_log_det(const std::array<double, kActionDim>& u);

ActionSample sample_from(const std::array<double, kActionDim>& mean,
                         const std::array<double, kActionDim>& log_std, Rng& rng);

ActionSample sample_action(const PolicyNetwork& net, const Eigen::VectorXd& params,
                           const Observation& obs, Rng& rng);

/// Running per-channel mean/variance; normalized values are clipped.
class ObsNormalizer {
 public:
  ObsNormalizer() = default;
  explicit ObsNormalizer(int dim);

  void update(const Eigen::MatrixXd& batch);
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& batch) const;

  int dim() const { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& var() const { return var_; }
  double count() const { return count_; }
  void set_state(Eigen::VectorXd mean, Eigen::VectorXd var, double count);

  static constexpr double kClip = 10.0;

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd var_;
  double count_ = 0.0;
};

/// Everything needed to run a trained policy.
struct PolicyCheckpoint {
  ObservationConfig obs_cfg;
  NetworkConfig net_cfg;
  Eigen::VectorXd params;
  ObsNormalizer normalizer;
  std::string tag;
};

void save_checkpoint(const PolicyCheckpoint& ckpt, const std::string& path);
/// Throws if the file's observation-config hash differs from `expected`'s.
PolicyCheckpoint load_checkpoint(const std::string& path, const ObservationConfig& expected);
PolicyCheckpoint load_checkpoint(const std::string& path);

/// Inference wrapper: normalizes observations and evaluates the actor.
class PolicyRunner {
 public:
  explicit PolicyRunner(PolicyCheckpoint ckpt);

  /// Deterministic action tanh(mean), or a stochastic sample when `rng` is set.
  CtbrAction act(const Observation& obs, Rng* rng = nullptr) const;
  const PolicyCheckpoint& checkpoint() const { return ckpt_; }
  const PolicyNetwork& network() const { return net_; }

 private:
  PolicyCheckpoint ckpt_;
  PolicyNetwork net_;
};

}  // namespace nimc
