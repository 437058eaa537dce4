// Serial reference paths against the kernels used in production runs:
//   - one block of trajectories, plain loop (1 worker) vs OpenMP (all threads);
//   - arrowhead eigenvalues by secular equation vs a dense solver;
//   - the O(N) arrowhead product vs a dense matrix-vector product.

#include <benchmark/benchmark.h>

#include <random>

#include "nah/config.hpp"
#include "nah/ensemble_runner.hpp"
#include "nah/mapping_hamiltonian.hpp"
#include "nah/units.hpp"

namespace {

using namespace nah;

ModelParameters shipped(int n_states) {
  auto p = config::load_model(std::filesystem::path(NAH_SOURCE_DIR) / "data" /
                              "no_au111_standin.json");
  p.band.n_states = n_states;
  return p;
}

void trajectory_block(benchmark::State& state) {
  const int workers = static_cast<int>(state.range(0));
  RunConfig c;
  c.model_file = "bench";
  c.nu_i = {3};
  c.E_i = {units::eV(1.0)};
  c.n_trajectories = 32;
  c.block_size = 32;
  c.seed = 1;
  c.n_workers = workers;
  c.integrator.t_max = units::fs(100.0);
  const auto p = shipped(100);
  RunOptions o;
  o.write_outputs = false;
  for (auto _ : state) benchmark::DoNotOptimize(run_cell(c, p, {3, units::eV(1.0)}, o));
  state.SetItemsProcessed(state.iterations() * c.n_trajectories);
}
// 0 workers means every available thread.
BENCHMARK(trajectory_block)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond)->UseRealTime();

struct Arrowhead {
  double corner;
  std::vector<double> diagonal, border;
};

Arrowhead arrowhead(int n) {
  const SystemModel m(shipped(n));
  Arrowhead a;
  a.corner = h_gap(units::angstrom(1.2), units::angstrom(1.6), m.params);
  a.diagonal = m.band.energies;
  a.border = coupling_vk(units::angstrom(1.6), m.band, m.params);
  return a;
}

void eigen_secular(benchmark::State& state) {
  const auto a = arrowhead(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(arrowhead_eigenvalues(a.corner, a.diagonal, a.border));
}
BENCHMARK(eigen_secular)->Arg(50)->Arg(100)->Arg(200);

void eigen_dense(benchmark::State& state) {
  const auto a = arrowhead(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(arrowhead_eigenvalues_dense(a.corner, a.diagonal, a.border));
}
BENCHMARK(eigen_dense)->Arg(50)->Arg(100)->Arg(200);

void product_arrowhead(benchmark::State& state) {
  const SystemModel m(shipped(static_cast<int>(state.range(0))));
  const auto pm = build_potential_matrix(units::angstrom(1.2), units::angstrom(1.6), m, 0.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  std::vector<double> x(m.dimension());
  for (auto& v : x) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(pm.apply_traceless(x));
}
BENCHMARK(product_arrowhead)->Arg(100)->Arg(400)->Arg(1600);

void product_dense(benchmark::State& state) {
  const SystemModel m(shipped(static_cast<int>(state.range(0))));
  const auto pm = build_potential_matrix(units::angstrom(1.2), units::angstrom(1.6), m, 0.0);
  const Eigen::MatrixXd dense = pm.dense_traceless();
  const Eigen::VectorXd x = Eigen::VectorXd::Random(m.dimension());
  Eigen::VectorXd y(m.dimension());
  for (auto _ : state) {
    y.noalias() = dense * x;
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(product_dense)->Arg(100)->Arg(400)->Arg(1600);

}  // namespace

BENCHMARK_MAIN();
