// Serial reference kernels against their OpenMP counterparts.
#include "graspedit/ppo.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

using namespace graspedit;

namespace {

const GraspEnv& desk_env() {
  static const GraspEnv env(load_dataset(GRASPEDIT_DATA_DIR "/objects/desk/train/manifest.json"),
                            load_hand_spec(GRASPEDIT_DATA_DIR "/hands/gripper2.json"),
                            load_demo(GRASPEDIT_DATA_DIR "/demos/gripper2_top.json"));
  return env;
}

NetConfig net_config() {
  NetConfig c;
  c.seed = 1;
  return c;
}

void pool(benchmark::State& state, bool parallel) {
  const ActorCritic net(net_config());
  auto envs = desk_env().reset(static_cast<int>(state.range(0)), 3);
  const ObsBatch ob = make_obs_batch(envs);
  const BatchInput in = ob.view();
  Matrix pooled;
  Eigen::MatrixXi argmax;
  for (auto _ : state) {
    if (parallel)
      pool_batch_parallel(net.encoder, in.clouds, pooled, argmax);
    else
      pool_batch_serial(net.encoder, in.clouds, pooled, argmax);
    benchmark::DoNotOptimize(pooled.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void step(benchmark::State& state, bool parallel) {
  const GraspEnv& env = desk_env();
  const int n = static_cast<int>(state.range(0));
  const std::vector<EditParams> actions(n, EditParams::zero(env.hand().dof()));
  for (auto _ : state) {
    state.PauseTiming();
    auto envs = env.reset(n, 5);
    state.ResumeTiming();
    benchmark::DoNotOptimize(step_batch(env, envs, actions, parallel));
  }
  state.SetItemsProcessed(state.iterations() * n);
}

void ppo_iteration(benchmark::State& state, bool parallel) {
  const GraspEnv& env = desk_env();
  ActorCritic net(net_config());
  PPOConfig cfg;
  Adam opt(net.num_params(), cfg.lr);
  const int n = static_cast<int>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto envs = env.reset(n, ++seed);
    const RolloutBatch b = collect(env, net, {}, envs, seed, parallel);
    benchmark::DoNotOptimize(ppo_update(net, opt, b, cfg, {}, seed, parallel));
  }
}

void pool_serial(benchmark::State& s) { pool(s, false); }
void pool_parallel(benchmark::State& s) { pool(s, true); }
void step_serial(benchmark::State& s) { step(s, false); }
void step_parallel(benchmark::State& s) { step(s, true); }
void iteration_serial(benchmark::State& s) { ppo_iteration(s, false); }
void iteration_parallel(benchmark::State& s) { ppo_iteration(s, true); }

}  // namespace

BENCHMARK(pool_serial)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(pool_parallel)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(step_serial)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(step_parallel)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(iteration_serial)->Arg(512)->Unit(benchmark::kMillisecond)->Iterations(3);
BENCHMARK(iteration_parallel)->Arg(512)->Unit(benchmark::kMillisecond)->Iterations(3);

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::AddCustomContext("omp_max_threads", std::to_string(omp_get_max_threads()));
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
