#include "nimc/policy.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "nimc/hash.hpp"

namespace nimc {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kKernel = 3;
constexpr int kDil1 = 1;
constexpr int kDil2 = 2;
constexpr double kLog2Pi = 1.8378770664093453;

// tanh through the vectorized exp; Eigen's double tanh is scalar. Absolute
// error is within a few ulp of 1.
MatrixXd tanh_of(const MatrixXd& z) {
  const Eigen::ArrayXXd t = (-2.0 * z.array().abs()).exp();
  return (((1.0 - t) / (1.0 + t)) * z.array().sign()).matrix();
}

// d/dz tanh(z) expressed through a = tanh(z).
MatrixXd tanh_grad(const MatrixXd& a, const MatrixXd& upstream) {
  return (upstream.array() * (1.0 - a.array().square())).matrix();
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

void NetworkConfig::validate() const {
  if (hidden < 1 || layers < 1 || tcn_channels < 1 || latent < 1) {
    throw std::invalid_argument("network sizes must be positive");
  }
  if (!std::isfinite(init_log_std)) throw std::invalid_argument("init_log_std must be finite");
}

PolicyNetwork::PolicyNetwork(const ObservationConfig& obs_cfg, const NetworkConfig& net_cfg)
    : obs_cfg_(obs_cfg), net_cfg_(net_cfg) {
  obs_cfg_.validate();
  net_cfg_.validate();
  wp_ = add_tcn("wp", {3, obs_cfg_.horizon, net_cfg_.tcn_channels, net_cfg_.latent});
  mlp_in_ = obs_cfg_.tuple_block_size() + net_cfg_.latent;
  if (obs_cfg_.history.long_history) {
    hist_ = add_tcn("hist", {ObservationConfig::kTupleSize, obs_cfg_.history.long_len,
                             net_cfg_.tcn_channels, net_cfg_.latent});
    mlp_in_ += net_cfg_.latent;
  }
  actor_ = add_mlp("actor", mlp_in_, kActionDim);
  critic_ = add_mlp("critic", mlp_in_, 1);
  log_std_ = add_block("log_std", kActionDim, 1);
}

int PolicyNetwork::add_block(const std::string& name, int rows, int cols) {
  ParamBlock b{name, rows, cols, num_params_};
  num_params_ += b.size();
  blocks_.push_back(b);
  return static_cast<int>(blocks_.size()) - 1;
}

PolicyNetwork::TcnBlocks PolicyNetwork::add_tcn(const std::string& prefix, const TcnShape& shape) {
  if (shape.t2() < 1) throw std::invalid_argument("TCN input too short for receptive field");
  TcnBlocks t;
  t.shape = shape;
  t.conv1 = {add_block(prefix + ".conv1.w", shape.channels, kKernel * shape.in_channels),
             add_block(prefix + ".conv1.b", shape.channels, 1)};
  t.conv2 = {add_block(prefix + ".conv2.w", shape.channels, kKernel * shape.channels),
             add_block(prefix + ".conv2.b", shape.channels, 1)};
  t.proj = {add_block(prefix + ".proj.w", shape.latent, shape.channels * shape.t2()),
            add_block(prefix + ".proj.b", shape.latent, 1)};
  return t;
}

std::vector<PolicyNetwork::Layer> PolicyNetwork::add_mlp(const std::string& prefix, int in,
                                                         int out) {
  std::vector<Layer> layers;
  int width = in;
  for (int i = 0; i < net_cfg_.layers; ++i) {
    const std::string n = prefix + "." + std::to_string(i);
    layers.push_back({add_block(n + ".w", net_cfg_.hidden, width), add_block(n + ".b", net_cfg_.hidden, 1)});
    width = net_cfg_.hidden;
  }
  const std::string n = prefix + ".out";
  layers.push_back({add_block(n + ".w", out, width), add_block(n + ".b", out, 1)});
  return layers;
}

const ParamBlock& PolicyNetwork::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("no parameter block named " + name);
}

Eigen::Map<const MatrixXd> PolicyNetwork::mat(const VectorXd& p, int block) const {
  const auto& b = blocks_[static_cast<std::size_t>(block)];
  return {p.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<MatrixXd> PolicyNetwork::mat(VectorXd& p, int block) const {
  const auto& b = blocks_[static_cast<std::size_t>(block)];
  return {p.data() + b.offset, b.rows, b.cols};
}

VectorXd PolicyNetwork::init_params(Rng& rng) const {
  VectorXd p = VectorXd::Zero(num_params_);
  auto fill = [&](int block, double gain) {
    auto m = mat(p, block);
    const double std = gain / std::sqrt(static_cast<double>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gaussian(rng, std);
  };
  for (const TcnBlocks* t : {&wp_, &hist_}) {
    if (t->conv1.w < 0) continue;
    fill(t->conv1.w, 1.0);
    fill(t->conv2.w, 1.0);
    fill(t->proj.w, 1.0);
  }
  for (std::size_t i = 0; i + 1 < actor_.size(); ++i) fill(actor_[i].w, 1.0);
  fill(actor_.back().w, 0.01);
  for (std::size_t i = 0; i + 1 < critic_.size(); ++i) fill(critic_[i].w, 1.0);
  fill(critic_.back().w, 1.0);
  mat(p, log_std_).setConstant(net_cfg_.init_log_std);
  return p;
}

void PolicyNetwork::clamp_log_std(VectorXd& params) const {
  auto m = mat(params, log_std_);
  m = m.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

void PolicyNetwork::tcn_forward(const VectorXd& params, const TcnBlocks& t, const MatrixXd& obs,
                                int offset, Cache::Tcn& c) const {
  const int B = static_cast<int>(obs.cols());
  const int C = t.shape.in_channels;
  const int T1 = t.shape.t1();
  const int T2 = t.shape.t2();
  const int H = t.shape.channels;

  // Input is time-major, so a dilation-1 patch is a contiguous row range.
  c.p1.resize(kKernel * C, static_cast<Eigen::Index>(T1) * B);
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < T1; ++i) {
      c.p1.col(static_cast<Eigen::Index>(b) * T1 + i) =
          obs.block(offset + C * i * kDil1, b, kKernel * C, 1);
    }
  }
  c.a1 = tanh_of((mat(params, t.conv1.w) * c.p1).colwise() +
                 mat(params, t.conv1.b).col(0));

  c.p2.resize(kKernel * H, static_cast<Eigen::Index>(T2) * B);
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < T2; ++i) {
      const Eigen::Index col = static_cast<Eigen::Index>(b) * T2 + i;
      for (int k = 0; k < kKernel; ++k) {
        c.p2.block(k * H, col, H, 1) = c.a1.col(static_cast<Eigen::Index>(b) * T1 + i + k * kDil2);
      }
    }
  }
  c.a2 = tanh_of((mat(params, t.conv2.w) * c.p2).colwise() +
                 mat(params, t.conv2.b).col(0));

  // Each sample's feature map is a contiguous H*T2 slab of a2.
  Eigen::Map<const MatrixXd> flat(c.a2.data(), static_cast<Eigen::Index>(H) * T2, B);
  c.latent = tanh_of((mat(params, t.proj.w) * flat).colwise() + mat(params, t.proj.b).col(0));
}

void PolicyNetwork::tcn_backward(const VectorXd& params, const TcnBlocks& t, const Cache::Tcn& c,
                                 const MatrixXd& d_latent, VectorXd& grad) const {
  const int B = static_cast<int>(d_latent.cols());
  const int T1 = t.shape.t1();
  const int T2 = t.shape.t2();
  const int H = t.shape.channels;

  const MatrixXd dz = tanh_grad(c.latent, d_latent);
  Eigen::Map<const MatrixXd> flat(c.a2.data(), static_cast<Eigen::Index>(H) * T2, B);
  mat(grad, t.proj.w) += dz * flat.transpose();
  mat(grad, t.proj.b) += dz.rowwise().sum();
  MatrixXd d_flat = mat(params, t.proj.w).transpose() * dz;
  Eigen::Map<const MatrixXd> d_a2(d_flat.data(), H, static_cast<Eigen::Index>(T2) * B);

  const MatrixXd dz2 = tanh_grad(c.a2, d_a2);
  mat(grad, t.conv2.w) += dz2 * c.p2.transpose();
  mat(grad, t.conv2.b) += dz2.rowwise().sum();
  const MatrixXd d_p2 = mat(params, t.conv2.w).transpose() * dz2;

  MatrixXd d_a1 = MatrixXd::Zero(H, static_cast<Eigen::Index>(T1) * B);
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < T2; ++i) {
      const Eigen::Index col = static_cast<Eigen::Index>(b) * T2 + i;
      for (int k = 0; k < kKernel; ++k) {
        d_a1.col(static_cast<Eigen::Index>(b) * T1 + i + k * kDil2) += d_p2.block(k * H, col, H, 1);
      }
    }
  }
  const MatrixXd dz1 = tanh_grad(c.a1, d_a1);
  mat(grad, t.conv1.w) += dz1 * c.p1.transpose();
  mat(grad, t.conv1.b) += dz1.rowwise().sum();
}

PolicyNetwork::Output PolicyNetwork::forward(const VectorXd& params, const MatrixXd& obs,
                                             Cache* cache) const {
  if (params.size() != num_params_) throw std::invalid_argument("parameter vector size mismatch");
  if (obs.rows() != obs_dim()) throw std::invalid_argument("observation size mismatch");
  Cache local;
  Cache& c = cache ? *cache : local;
  const Eigen::Index B = obs.cols();

  tcn_forward(params, wp_, obs, obs_cfg_.waypoint_offset(), c.wp);
  c.input.resize(mlp_in_, B);
  const int S = obs_cfg_.tuple_block_size();
  c.input.topRows(S) = obs.topRows(S);
  c.input.middleRows(S, net_cfg_.latent) = c.wp.latent;
  if (obs_cfg_.history.long_history) {
    tcn_forward(params, hist_, obs, obs_cfg_.long_offset(), c.hist);
    c.input.bottomRows(net_cfg_.latent) = c.hist.latent;
  }

  auto run_mlp = [&](const std::vector<Layer>& layers, std::vector<MatrixXd>& hs) {
    hs.clear();
    const MatrixXd* x = &c.input;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
      hs.push_back(tanh_of((mat(params, layers[i].w) * *x).colwise() +
                           mat(params, layers[i].b).col(0)));
      x = &hs.back();
    }
    return MatrixXd((mat(params, layers.back().w) * *x).colwise() +
                    mat(params, layers.back().b).col(0));
  };

  Output out;
  out.mean = run_mlp(actor_, c.actor_h);
  out.value = run_mlp(critic_, c.critic_h);
  out.log_std = mat(params, log_std_).col(0);
  return out;
}

void PolicyNetwork::backward(const VectorXd& params, const Cache& c, const Upstream& up,
                             VectorXd& grad) const {
  if (grad.size() != num_params_) grad = VectorXd::Zero(num_params_);
  MatrixXd d_input = MatrixXd::Zero(mlp_in_, c.input.cols());

  auto back_mlp = [&](const std::vector<Layer>& layers, const std::vector<MatrixXd>& hs,
                      const MatrixXd& d_out) {
    MatrixXd d = d_out;
    for (std::size_t li = layers.size(); li-- > 0;) {
      const MatrixXd& x = li == 0 ? c.input : hs[li - 1];
      mat(grad, layers[li].w) += d * x.transpose();
      mat(grad, layers[li].b) += d.rowwise().sum();
      MatrixXd dx = mat(params, layers[li].w).transpose() * d;
      if (li == 0) {
        d_input += dx;
      } else {
        d = tanh_grad(hs[li - 1], dx);
      }
    }
  };

  back_mlp(actor_, c.actor_h, up.d_mean);
  back_mlp(critic_, c.critic_h, MatrixXd(up.d_value));
  mat(grad, log_std_) += up.d_log_std;

  const int S = obs_cfg_.tuple_block_size();
  tcn_backward(params, wp_, c.wp, d_input.middleRows(S, net_cfg_.latent), grad);
  if (obs_cfg_.history.long_history) {
    tcn_backward(params, hist_, c.hist, d_input.bottomRows(net_cfg_.latent), grad);
  }
}

namespace {

MatrixXd as_column(const Observation& obs) {
  MatrixXd m(static_cast<Eigen::Index>(obs.values.size()), 1);
  for (std::size_t i = 0; i < obs.values.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = obs.values[i];
  return m;
}

}  // namespace

CtbrAction squashed_to_action(const std::array<double, kActionDim>& s) {
  const double pi = std::numbers::pi;
  return CtbrAction(0.5 * (s[0] + 1.0), {pi * s[1], pi * s[2], pi * s[3]});
}

PolicyEval policy_forward(const PolicyNetwork& net, const VectorXd& params,
                          const Observation& obs) {
  const auto out = net.forward(params, as_column(obs));
  PolicyEval e;
  std::array<double, kActionDim> squashed{};
  for (int i = 0; i < kActionDim; ++i) {
    e.mean[i] = out.mean(i, 0);
    e.log_std[i] = out.log_std(i);
    squashed[i] = std::tanh(e.mean[i]);
  }
  e.action_mean = squashed_to_action(squashed);
  e.value = out.value(0);
  return e;
}

VectorXd policy_backward(const PolicyNetwork& net, const VectorXd& params,
                         const MatrixXd& obs_batch, const PolicyNetwork::Upstream& up) {
  PolicyNetwork::Cache cache;
  net.forward(params, obs_batch, &cache);
  VectorXd grad = net.zero_params();
  net.backward(params, cache, up, grad);
  return grad;
}

double gaussian_log_prob(const std::array<double, kActionDim>& u,
                         const std::array<double, kActionDim>& mean,
                         const std::array<double, kActionDim>& log_std) {
  double lp = 0.0;
  for (int i = 0; i < kActionDim; ++i) {
    const double z = (u[i] - mean[i]) * std::exp(-log_std[i]);
    lp += -0.5 * z * z - log_std[i] - 0.5 * kLog2Pi;
  }
  return lp;
}

double tanh_log_det(const std::array<double, kActionDim>& u) {
  // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
  double s = 0.0;
  for (double x : u) s += 2.0 * (std::numbers::ln2 - x - softplus(-2.0 * x));
  return s;
}

ActionSample sample_from(const std::array<double, kActionDim>& mean,
                         const std::array<double, kActionDim>& log_std, Rng& rng) {
  ActionSample s;
  std::array<double, kActionDim> squashed{};
  for (int i = 0; i < kActionDim; ++i) {
    s.pre_squash[i] = mean[i] + std::exp(log_std[i]) * gaussian(rng);
    squashed[i] = std::tanh(s.pre_squash[i]);
  }
  s.action = squashed_to_action(squashed);
  s.gaussian_log_prob = gaussian_log_prob(s.pre_squash, mean, log_std);
  s.log_prob = s.gaussian_log_prob - tanh_log_det(s.pre_squash);
  return s;
}

ActionSample sample_action(const PolicyNetwork& net, const VectorXd& params,
                           const Observation& obs, Rng& rng) {
  const auto e = policy_forward(net, params, obs);
  return sample_from(e.mean, e.log_std, rng);
}

// ---------------------------------------------------------------------------

ObsNormalizer::ObsNormalizer(int dim)
    : mean_(VectorXd::Zero(dim)), var_(VectorXd::Ones(dim)), count_(0.0) {}

void ObsNormalizer::update(const MatrixXd& batch) {
  if (batch.rows() != mean_.size()) throw std::invalid_argument("normalizer: dimension mismatch");
  const double n = static_cast<double>(batch.cols());
  if (n == 0.0) return;
  const VectorXd bmean = batch.rowwise().mean();
  const VectorXd bvar = (batch.colwise() - bmean).array().square().rowwise().sum() / n;
  if (count_ == 0.0) {
    mean_ = bmean;
    var_ = bvar;
    count_ = n;
    return;
  }
  // Chan et al. parallel merge.
  const double total = count_ + n;
  const VectorXd delta = bmean - mean_;
  mean_ += delta * (n / total);
  var_ = (var_ * count_ + bvar * n + delta.array().square().matrix() * (count_ * n / total)) / total;
  count_ = total;
}

MatrixXd ObsNormalizer::normalize(const MatrixXd& batch) const {
  if (batch.rows() != mean_.size()) throw std::invalid_argument("normalizer: dimension mismatch");
  const Eigen::ArrayXd inv_std = (var_.array() + 1e-8).sqrt().inverse();
  MatrixXd out = ((batch.colwise() - mean_).array().colwise() * inv_std).matrix();
  return out.cwiseMax(-kClip).cwiseMin(kClip);
}

void ObsNormalizer::set_state(VectorXd mean, VectorXd var, double count) {
  if (mean.size() != var.size()) throw std::invalid_argument("normalizer: size mismatch");
  if ((var.array() < 0.0).any()) throw std::invalid_argument("normalizer: negative variance");
  mean_ = std::move(mean);
  var_ = std::move(var);
  count_ = count;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "nimc-policy";
constexpr int kCheckpointVersion = 1;

nlohmann::json vec_json(const VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void save_checkpoint(const PolicyCheckpoint& ckpt, const std::string& path) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["tag"] = ckpt.tag;
  const auto& o = ckpt.obs_cfg;
  j["obs_config"] = {{"horizon", o.horizon},
                     {"waypoint_dt", o.waypoint_dt},
                     {"feedback", o.feedback},
                     {"short_len", o.history.short_len},
                     {"long_history", o.history.long_history},
                     {"long_len", o.history.long_len}};
  j["obs_hash"] = hex64(o.hash());
  const auto& n = ckpt.net_cfg;
  j["net_config"] = {{"hidden", n.hidden},
                     {"layers", n.layers},
                     {"tcn_channels", n.tcn_channels},
                     {"latent", n.latent},
                     {"init_log_std", n.init_log_std}};
  j["params"] = vec_json(ckpt.params);
  j["normalizer"] = {{"mean", vec_json(ckpt.normalizer.mean())},
                     {"var", vec_json(ckpt.normalizer.var())},
                     {"count", ckpt.normalizer.count()}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << j.dump();
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

PolicyCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat || j.value("version", 0) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint format in " + path);
  }
  PolicyCheckpoint c;
  c.tag = j.value("tag", "");
  const auto& o = j.at("obs_config");
  c.obs_cfg.horizon = o.at("horizon").get<int>();
  c.obs_cfg.waypoint_dt = o.at("waypoint_dt").get<double>();
  c.obs_cfg.feedback = o.at("feedback").get<bool>();
  c.obs_cfg.history.short_len = o.at("short_len").get<int>();
  c.obs_cfg.history.long_history = o.at("long_history").get<bool>();
  c.obs_cfg.history.long_len = o.at("long_len").get<int>();
  if (hex64(c.obs_cfg.hash()) != j.at("obs_hash").get<std::string>()) {
    throw std::runtime_error("checkpoint " + path + " has an inconsistent observation hash");
  }
  const auto& n = j.at("net_config");
  c.net_cfg.hidden = n.at("hidden").get<int>();
  c.net_cfg.layers = n.at("layers").get<int>();
  c.net_cfg.tcn_channels = n.at("tcn_channels").get<int>();
  c.net_cfg.latent = n.at("latent").get<int>();
  c.net_cfg.init_log_std = n.at("init_log_std").get<double>();
  c.params = json_vec(j.at("params"));
  const auto& nz = j.at("normalizer");
  c.normalizer.set_state(json_vec(nz.at("mean")), json_vec(nz.at("var")),
                         nz.at("count").get<double>());

  const PolicyNetwork net(c.obs_cfg, c.net_cfg);
  if (c.params.size() != net.num_params()) {
    throw std::runtime_error("checkpoint " + path + " parameter count does not match network");
  }
  if (c.normalizer.dim() != net.obs_dim()) {
    throw std::runtime_error("checkpoint " + path + " normalizer size does not match observation");
  }
  return c;
}

PolicyCheckpoint load_checkpoint(const std::string& path, const ObservationConfig& expected) {
  PolicyCheckpoint c = load_checkpoint(path);
  if (c.obs_cfg.hash() != expected.hash()) {
    throw std::runtime_error("checkpoint " + path + " was trained with observation config [" +
                             c.obs_cfg.canonical() + "], expected [" + expected.canonical() + "]");
  }
  return c;
}

PolicyRunner::PolicyRunner(PolicyCheckpoint ckpt)
    : ckpt_(std::move(ckpt)), net_(ckpt_.obs_cfg, ckpt_.net_cfg) {
  if (ckpt_.params.size() != net_.num_params()) {
    throw std::invalid_argument("PolicyRunner: parameter count mismatch");
  }
  if (ckpt_.normalizer.dim() != net_.obs_dim()) ckpt_.normalizer = ObsNormalizer(net_.obs_dim());
}

CtbrAction PolicyRunner::act(const Observation& obs, Rng* rng) const {
  MatrixXd x = as_column(obs);
  if (ckpt_.normalizer.count() > 0.0) x = ckpt_.normalizer.normalize(x);
  const auto out = net_.forward(ckpt_.params, x);
  std::array<double, kActionDim> mean{};
  std::array<double, kActionDim> log_std{};
  for (int i = 0; i < kActionDim; ++i) {
    mean[i] = out.mean(i, 0);
    log_std[i] = out.log_std(i);
  }
  if (rng) return sample_from(mean, log_std, *rng).action;
  std::array<double, kActionDim> squashed{};
  for (int i = 0; i < kActionDim; ++i) squashed[i] = std::tanh(mean[i]);
  return squashed_to_action(squashed);
}

}  // namespace nimc
