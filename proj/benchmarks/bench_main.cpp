#include <benchmark/benchmark.h>

#include "nimc/controllers.hpp"
#include "nimc/ppo.hpp"

namespace nimc {
namespace {

SimState hovering(const QuadrotorParams& p) {
  SimState s;
  s.body.p = kFlightCenter;
  for (double& t : s.motor_thrusts) t = p.mass * kGravity / 4;
  return s;
}

void BM_ControlStep(benchmark::State& state) {
  const QuadrotorParams p = nominal_params();
  const SimState s0 = hovering(p);
  const DisturbanceConfig dist = DisturbanceConfig::brownian_default();
  Rng rng(1);
  const CtbrAction a(p.hover_thrust_norm(), {0.1, -0.1, 0.05});
  SimState s = s0;
  for (auto _ : state) {
    s = control_step(s, p, a, dist, rng);
    if (s.crashed || s.t > 5.0) s = s0;
    benchmark::DoNotOptimize(s.body.p);
  }
}
BENCHMARK(BM_ControlStep);

void BM_EnvStep(benchmark::State& state) {
  EnvConfig cfg;
  TrackingEnv env(cfg, 0, 0);
  env.reset();
  const CtbrAction a(nominal_params().hover_thrust_norm(), {});
  for (auto _ : state) {
    const StepResult r = env.step(a);
    benchmark::DoNotOptimize(env.observe().values.data());
    if (r.done) env.reset();
  }
}
BENCHMARK(BM_EnvStep);

// Batch of observations through the default network.
void BM_PolicyForward(benchmark::State& state) {
  const PolicyNetwork net(ObservationConfig{}, NetworkConfig{});
  Rng rng(2);
  const Eigen::VectorXd p = net.init_params(rng);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(net.obs_dim(), state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(p, obs).value.data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PolicyForward)->Arg(1)->Arg(256);

void BM_PolicyBackward(benchmark::State& state) {
  const PolicyNetwork net(ObservationConfig{}, NetworkConfig{});
  Rng rng(3);
  const Eigen::VectorXd p = net.init_params(rng);
  const Eigen::Index B = state.range(0);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(net.obs_dim(), B);
  PolicyNetwork::Upstream up;
  up.d_mean = Eigen::MatrixXd::Random(kActionDim, B);
  up.d_log_std = Eigen::VectorXd::Random(kActionDim);
  up.d_value = Eigen::RowVectorXd::Random(B);
  for (auto _ : state) benchmark::DoNotOptimize(policy_backward(net, p, obs, up).data());
  state.SetItemsProcessed(state.iterations() * B);
}
BENCHMARK(BM_PolicyBackward)->Arg(256);

void BM_MppiPlan(benchmark::State& state) {
  const QuadrotorParams p = nominal_params();
  MppiConfig cfg;
  cfg.n_samples = static_cast<int>(state.range(0));
  MppiController m(p, cfg, 4);
  const SimState s = hovering(p);
  const auto traj = make_hover(kFlightCenter, 10.0);
  for (auto _ : state) benchmark::DoNotOptimize(m.plan(s, traj, 0.0, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MppiPlan)->Arg(512)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_Gae(benchmark::State& state) {
  RolloutBuffer b;
  b.resize(256, 64, 1);
  Rng rng(5);
  for (std::size_t i = 0; i < b.size(); ++i) {
    b.reward[i] = gaussian(rng);
    b.value[i] = gaussian(rng);
  }
  for (auto _ : state) {
    compute_gae(b, 0.99, 0.95);
    benchmark::DoNotOptimize(b.advantages.data());
  }
}
BENCHMARK(BM_Gae);

}  // namespace
}  // namespace nimc

BENCHMARK_MAIN();
