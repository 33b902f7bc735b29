#include "nimc/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "nimc/hash.hpp"

namespace nimc {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
// Above every per-environment stream id.
constexpr std::uint64_t kTrainStreamBase = 1ull << 40;

template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

Eigen::MatrixXd obs_matrix(const std::vector<Observation>& obs, int dim) {
  Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(obs.size()));
  for (std::size_t j = 0; j < obs.size(); ++j) {
    m.col(static_cast<Eigen::Index>(j)) =
        Eigen::Map<const Eigen::VectorXd>(obs[j].values.data(), dim);
  }
  return m;
}

}  // namespace

void PpoConfig::validate() const {
  if (n_envs < 1 || n_steps < 1) throw std::invalid_argument("ppo: n_envs and n_steps must be >= 1");
  if (epochs < 1 || minibatches < 1) throw std::invalid_argument("ppo: epochs and minibatches must be >= 1");
  if (minibatches > n_envs * n_steps) throw std::invalid_argument("ppo: more minibatches than records");
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("ppo: clip must be in (0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo: gamma must be in (0, 1]");
  if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("ppo: gae_lambda must be in (0, 1]");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("ppo: learning_rate must be > 0");
  if (value_coef < 0.0 || entropy_coef < 0.0) throw std::invalid_argument("ppo: negative loss coefficient");
  if (!(max_grad_norm > 0.0)) throw std::invalid_argument("ppo: max_grad_norm must be > 0");
  if (total_steps < 1) throw std::invalid_argument("ppo: total_steps must be >= 1");
  if (n_threads < 1) throw std::invalid_argument("ppo: n_threads must be >= 1");
}

void RolloutBuffer::resize(int envs, int steps, int obs_dim) {
  n_envs = envs;
  n_steps = steps;
  const std::size_t n = size();
  obs.resize(obs_dim, static_cast<Eigen::Index>(n));
  pre_squash.assign(n, {});
  log_prob.assign(n, 0.0);
  reward.assign(n, 0.0);
  value.assign(n, 0.0);
  bootstrap.assign(n, 0.0);
  done.assign(n, 0);
  terminated.assign(n, 0);
  pred_err.assign(n, {});
  state.assign(n, {});
  next_state.assign(n, {});
  action.assign(n, {});
  last_value.assign(static_cast<std::size_t>(envs), 0.0);
  advantages.assign(n, 0.0);
  returns.assign(n, 0.0);
  episode_returns.clear();
  episode_lengths.clear();
}

VecEnv::VecEnv(const EnvConfig& cfg, int n_envs, std::uint64_t seed) {
  if (n_envs < 1) throw std::invalid_argument("VecEnv: n_envs must be >= 1");
  envs_.reserve(static_cast<std::size_t>(n_envs));
  for (int i = 0; i < n_envs; ++i) {
    envs_.emplace_back(cfg, seed, static_cast<std::uint64_t>(i));
    envs_.back().reset();
  }
  ep_return_.assign(static_cast<std::size_t>(n_envs), 0.0);
  ep_length_.assign(static_cast<std::size_t>(n_envs), 0);
}

Eigen::MatrixXd VecEnv::observe() const {
  std::vector<Observation> obs;
  obs.reserve(envs_.size());
  for (const auto& e : envs_) obs.push_back(e.observe());
  return obs_matrix(obs, envs_.front().config().obs.size());
}

RolloutBuffer collect_rollouts(VecEnv& envs, const PolicyNetwork& net,
                               const Eigen::VectorXd& params, ObsNormalizer& normalizer,
                               bool update_normalizer, const PpoConfig& cfg, Rng& rng) {
  const int E = envs.size();
  const int T = cfg.n_steps;
  RolloutBuffer buf;
  buf.resize(E, T, net.obs_dim());
  std::vector<StepResult> results(static_cast<std::size_t>(E));
  std::vector<CtbrAction> actions(static_cast<std::size_t>(E));

  for (int t = 0; t < T; ++t) {
    const Eigen::MatrixXd raw = envs.observe();
    if (update_normalizer) normalizer.update(raw);
    const Eigen::MatrixXd x = normalizer.normalize(raw);
    const auto out = net.forward(params, x);
    std::array<double, kActionDim> log_std{};
    for (int c = 0; c < kActionDim; ++c) log_std[c] = out.log_std(c);

    for (int e = 0; e < E; ++e) {
      const std::size_t i = buf.index(t, e);
      std::array<double, kActionDim> mean{};
      for (int c = 0; c < kActionDim; ++c) mean[c] = out.mean(c, e);
      const auto s = sample_from(mean, log_std, rng);
      buf.obs.col(static_cast<Eigen::Index>(i)) = x.col(e);
      buf.pre_squash[i] = s.pre_squash;
      buf.log_prob[i] = s.gaussian_log_prob;
      buf.value[i] = out.value(e);
      actions[static_cast<std::size_t>(e)] = s.action;
    }

    parallel_for(E, cfg.n_threads, [&](int e) {
      results[static_cast<std::size_t>(e)] = envs.env(e).step(actions[static_cast<std::size_t>(e)]);
    });

    std::vector<int> truncated;
    for (int e = 0; e < E; ++e) {
      const auto& r = results[static_cast<std::size_t>(e)];
      const std::size_t i = buf.index(t, e);
      buf.reward[i] = r.reward;
      buf.done[i] = r.done;
      buf.terminated[i] = r.terminated;
      buf.pred_err[i] = r.pred_err;
      buf.state[i] = r.state;
      buf.next_state[i] = r.next_state;
      buf.action[i] = r.action;
      envs.episode_return()[e] += r.reward;
      envs.episode_length()[e] += 1;
      if (r.truncated) truncated.push_back(e);
      if (r.done) {
        buf.episode_returns.push_back(envs.episode_return()[e]);
        buf.episode_lengths.push_back(envs.episode_length()[e]);
        envs.episode_return()[e] = 0.0;
        envs.episode_length()[e] = 0;
      }
    }

    if (!truncated.empty()) {
      std::vector<Observation> term;
      for (int e : truncated) term.push_back(envs.env(e).observe());
      const auto v = net.forward(params, normalizer.normalize(obs_matrix(term, net.obs_dim()))).value;
      for (std::size_t j = 0; j < truncated.size(); ++j) {
        buf.bootstrap[buf.index(t, truncated[j])] = v(static_cast<Eigen::Index>(j));
      }
    }
    for (int e = 0; e < E; ++e) {
      if (results[static_cast<std::size_t>(e)].done) envs.env(e).reset();
    }
  }

  const auto last = net.forward(params, normalizer.normalize(envs.observe())).value;
  for (int e = 0; e < E; ++e) buf.last_value[static_cast<std::size_t>(e)] = last(e);
  return buf;
}

void compute_gae(RolloutBuffer& b, double gamma, double lambda) {
  b.advantages.assign(b.size(), 0.0);
  b.returns.assign(b.size(), 0.0);
  for (int e = 0; e < b.n_envs; ++e) {
    double gae = 0.0;
    for (int t = b.n_steps - 1; t >= 0; --t) {
      const std::size_t i = b.index(t, e);
      double next_value;
      if (b.done[i]) {
        next_value = b.terminated[i] ? 0.0 : b.bootstrap[i];
        gae = 0.0;
      } else {
        next_value = t + 1 < b.n_steps ? b.value[b.index(t + 1, e)] : b.last_value[static_cast<std::size_t>(e)];
      }
      const double delta = b.reward[i] + gamma * next_value - b.value[i];
      gae = delta + gamma * lambda * gae;
      b.advantages[i] = gae;
      b.returns[i] = gae + b.value[i];
    }
  }
}

void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : adv) a -= mean;
  if (sd < 1e-8) return;
  for (double& a : adv) a /= sd;
}

void AdamState::init(Eigen::Index n) {
  m = Eigen::VectorXd::Zero(n);
  v = Eigen::VectorXd::Zero(n);
  t = 0;
}

double LossTerms::total() const { return policy_loss + value_loss - entropy; }

LossTerms ppo_loss_and_grad(const PolicyNetwork& net, const Eigen::VectorXd& params,
                            const RolloutBuffer& buffer, const std::vector<double>& adv,
                            const std::vector<std::size_t>& records, const PpoConfig& cfg,
                            Eigen::VectorXd* grad) {
  const auto M = static_cast<Eigen::Index>(records.size());
  Eigen::MatrixXd x(net.obs_dim(), M);
  for (Eigen::Index j = 0; j < M; ++j) x.col(j) = buffer.obs.col(static_cast<Eigen::Index>(records[j]));
  PolicyNetwork::Cache cache;
  const auto out = net.forward(params, x, &cache);

  const Eigen::VectorXd inv_std = (-out.log_std.array()).exp().matrix();
  PolicyNetwork::Upstream up;
  up.d_mean.resize(kActionDim, M);
  up.d_log_std = Eigen::VectorXd::Zero(kActionDim);
  up.d_value.resize(M);

  LossTerms L;
  const double inv_m = 1.0 / static_cast<double>(M);
  for (Eigen::Index j = 0; j < M; ++j) {
    const std::size_t i = records[j];
    const auto& u = buffer.pre_squash[i];
    double lp = 0.0;
    Eigen::Matrix<double, kActionDim, 1> z;
    for (int c = 0; c < kActionDim; ++c) {
      z(c) = (u[c] - out.mean(c, j)) * inv_std(c);
      lp += -0.5 * z(c) * z(c) - out.log_std(c) - 0.5 * kLog2Pi;
    }
    const double log_ratio = lp - buffer.log_prob[i];
    const double ratio = std::exp(log_ratio);
    const double a = adv[i];
    const double unclipped = ratio * a;
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * a;
    L.policy_loss -= std::min(unclipped, clipped) * inv_m;
    if (std::abs(ratio - 1.0) > cfg.clip) L.clip_fraction += inv_m;
    L.approx_kl += ((ratio - 1.0) - log_ratio) * inv_m;

    // d(-min(rA, clip(r)A))/d(lp) is -rA on the unclipped branch, else 0.
    const bool active = unclipped <= clipped;
    const double g = active ? -a * ratio * inv_m : 0.0;
    for (int c = 0; c < kActionDim; ++c) {
      up.d_mean(c, j) = g * z(c) * inv_std(c);
      up.d_log_std(c) += g * (z(c) * z(c) - 1.0);
    }
    const double dv = out.value(j) - buffer.returns[i];
    L.value_loss += cfg.value_coef * dv * dv * inv_m;
    up.d_value(j) = cfg.value_coef * 2.0 * dv * inv_m;
  }
  L.entropy = cfg.entropy_coef * (out.log_std.sum() + 0.5 * kActionDim * (1.0 + kLog2Pi));
  up.d_log_std.array() -= cfg.entropy_coef;

  if (grad) {
    grad->setZero(net.num_params());
    net.backward(params, cache, up, *grad);
  }
  return L;
}

UpdateMetrics ppo_update(const PolicyNetwork& net, Eigen::VectorXd& params, AdamState& adam,
                         const RolloutBuffer& buffer, const PpoConfig& cfg, Rng& rng) {
  cfg.validate();
  if (adam.m.size() != params.size()) adam.init(params.size());
  std::vector<double> adv = buffer.advantages;
  normalize_advantages(adv);

  const Eigen::VectorXd params0 = params;
  const AdamState adam0 = adam;
  std::vector<std::size_t> perm(buffer.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});

  UpdateMetrics m;
  int count = 0;
  Eigen::VectorXd grad(net.num_params());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int k = 0; k < cfg.minibatches; ++k) {
      const std::size_t lo = perm.size() * static_cast<std::size_t>(k) / cfg.minibatches;
      const std::size_t hi = perm.size() * static_cast<std::size_t>(k + 1) / cfg.minibatches;
      const std::vector<std::size_t> records(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                                             perm.begin() + static_cast<std::ptrdiff_t>(hi));
      const LossTerms L = ppo_loss_and_grad(net, params, buffer, adv, records, cfg, &grad);
      const double gn = grad.norm();
      if (!std::isfinite(L.total()) || !std::isfinite(gn)) {
        std::ostringstream os;
        os << "non-finite PPO loss at epoch " << epoch << " minibatch " << k
           << ": policy=" << L.policy_loss << " value=" << L.value_loss
           << " entropy=" << L.entropy << " grad_norm=" << gn;
        params = params0;
        adam = adam0;
        m.aborted = true;
        m.diagnostic = os.str();
        return m;
      }
      if (gn > cfg.max_grad_norm) grad *= cfg.max_grad_norm / gn;

      ++adam.t;
      adam.m = PpoConfig::kAdamBeta1 * adam.m + (1.0 - PpoConfig::kAdamBeta1) * grad;
      adam.v = PpoConfig::kAdamBeta2 * adam.v +
               (1.0 - PpoConfig::kAdamBeta2) * grad.array().square().matrix();
      const double bc1 = 1.0 - std::pow(PpoConfig::kAdamBeta1, static_cast<double>(adam.t));
      const double bc2 = 1.0 - std::pow(PpoConfig::kAdamBeta2, static_cast<double>(adam.t));
      params.array() -= cfg.learning_rate * (adam.m.array() / bc1) /
                        ((adam.v.array() / bc2).sqrt() + PpoConfig::kAdamEps);
      net.clamp_log_std(params);

      m.policy_loss += L.policy_loss;
      m.value_loss += L.value_loss;
      m.entropy += L.entropy;
      m.clip_fraction += L.clip_fraction;
      m.approx_kl += L.approx_kl;
      m.grad_norm += gn;
      ++count;
    }
  }
  const double inv = 1.0 / count;
  m.policy_loss *= inv;
  m.value_loss *= inv;
  m.entropy *= inv;
  m.clip_fraction *= inv;
  m.approx_kl *= inv;
  m.grad_norm *= inv;
  return m;
}

std::string params_hash(const Eigen::VectorXd& params) {
  return hex64(fnv1a64(params.data(), static_cast<std::size_t>(params.size()) * sizeof(double)));
}

namespace {

void write_checkpoint(const PolicyCheckpoint& c, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  save_checkpoint(c, tmp);
  std::filesystem::rename(tmp, path);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::string& out_dir,
                  const TrainCallback& on_iteration) {
  cfg.ppo.validate();
  cfg.env.validate();
  const PolicyNetwork net(cfg.env.obs, cfg.net);
  const std::uint64_t seed = cfg.ppo.seed;

  VecEnv envs(cfg.env, cfg.ppo.n_envs, seed);
  Rng init_rng = make_stream(seed, kTrainStreamBase + 1);
  Rng act_rng = make_stream(seed, kTrainStreamBase + 2);
  Rng upd_rng = make_stream(seed, kTrainStreamBase + 3);
  Eigen::VectorXd params = net.init_params(init_rng);
  ObsNormalizer normalizer(net.obs_dim());
  AdamState adam;
  adam.init(params.size());

  const std::int64_t per_iter = static_cast<std::int64_t>(cfg.ppo.n_envs) * cfg.ppo.n_steps;
  const int iterations = static_cast<int>((cfg.ppo.total_steps + per_iter - 1) / per_iter);

  std::ofstream csv;
  std::filesystem::path dir(out_dir);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(dir);
    csv.open(dir / "metrics.csv");
    if (!csv) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
    csv << "iteration,env_steps,reward_mean,reward_std,episode_return_mean,episodes,"
           "policy_loss,value_loss,entropy,clip_fraction,approx_kl,grad_norm,pred_err_norm_mean\n";
  }

  TrainResult result;
  auto snapshot = [&]() {
    PolicyCheckpoint c;
    c.obs_cfg = cfg.env.obs;
    c.net_cfg = cfg.net;
    c.params = params;
    c.normalizer = normalizer;
    c.tag = cfg.tag;
    return c;
  };

  for (int it = 0; it < iterations; ++it) {
    RolloutBuffer buf = collect_rollouts(envs, net, params, normalizer, true, cfg.ppo, act_rng);
    compute_gae(buf, cfg.ppo.gamma, cfg.ppo.gae_lambda);
    IterationLog log;
    log.iteration = it + 1;
    log.env_steps = per_iter * (it + 1);
    log.update = ppo_update(net, params, adam, buf, cfg.ppo, upd_rng);
    if (log.update.aborted) throw std::runtime_error("training aborted: " + log.update.diagnostic);

    const double n = static_cast<double>(buf.size());
    double sum = 0.0, sq = 0.0, pe = 0.0;
    for (std::size_t i = 0; i < buf.size(); ++i) {
      sum += buf.reward[i];
      sq += buf.reward[i] * buf.reward[i];
      pe += buf.pred_err[i].norm();
    }
    log.reward_mean = sum / n;
    log.reward_std = std::sqrt(std::max(0.0, sq / n - log.reward_mean * log.reward_mean));
    log.pred_err_norm_mean = pe / n;
    log.episodes = static_cast<int>(buf.episode_returns.size());
    if (log.episodes > 0) {
      log.episode_return_mean =
          std::accumulate(buf.episode_returns.begin(), buf.episode_returns.end(), 0.0) / log.episodes;
    }
    result.log.push_back(log);

    if (csv.is_open()) {
      char line[512];
      std::snprintf(line, sizeof line, "%d,%lld,%.9g,%.9g,%.9g,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                    log.iteration, static_cast<long long>(log.env_steps), log.reward_mean,
                    log.reward_std, log.episode_return_mean, log.episodes, log.update.policy_loss,
                    log.update.value_loss, log.update.entropy, log.update.clip_fraction,
                    log.update.approx_kl, log.update.grad_norm, log.pred_err_norm_mean);
      csv << line << std::flush;
      if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 && it + 1 < iterations) {
        char name[64];
        std::snprintf(name, sizeof name, "policy_iter%04d.json", it + 1);
        write_checkpoint(snapshot(), dir / name);
      }
    }
    if (on_iteration) on_iteration(log);
  }

  result.checkpoint = snapshot();
  result.params_hash = params_hash(params);
  if (!out_dir.empty()) write_checkpoint(result.checkpoint, dir / "policy.json");
  return result;
}

double evaluate_mean_reward(const PolicyCheckpoint& ckpt, const EnvConfig& env, int n_envs,
                            int n_steps, std::uint64_t seed) {
  const PolicyNetwork net(ckpt.obs_cfg, ckpt.net_cfg);
  VecEnv envs(env, n_envs, seed);
  double total = 0.0;
  for (int t = 0; t < n_steps; ++t) {
    Eigen::MatrixXd x = envs.observe();
    if (ckpt.normalizer.count() > 0.0) x = ckpt.normalizer.normalize(x);
    const auto out = net.forward(ckpt.params, x);
    for (int e = 0; e < n_envs; ++e) {
      std::array<double, kActionDim> s{};
      for (int c = 0; c < kActionDim; ++c) s[c] = std::tanh(out.mean(c, e));
      const auto r = envs.env(e).step(squashed_to_action(s));
      total += r.reward;
      if (r.done) envs.env(e).reset();
    }
  }
  return total / (static_cast<double>(n_envs) * n_steps);
}

}  // namespace nimc
