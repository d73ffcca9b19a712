// Estimate the compute share of four boards from simulated proofs, then
// plan one round of data exchanges between them.

#include <cstdio>

#include "swarmchain/swarmchain.hpp"

using namespace swarmchain;

int main() {
  struct Board {
    const char* name;
    NodeId id;
    double hash_rate;
  };
  const Board boards[] = {{"up", NodeId{1}, 89000}, {"upgtw", NodeId{2}, 79000}, {"tx2", NodeId{3}, 184000},
                          {"i5", NodeId{4}, 561000}};
  const auto params = PowParams::for_difficulty(20);

  std::vector<ProofHistory> histories;
  for (const auto& b : boards) {
    ProofHistory h{b.id, {}};
    for (std::uint64_t e = 1; e <= 20; ++e) {
      Encoder seed;
      seed.u64(e);
      const auto puzzle = derive_puzzle(b.id, seed.hash(), params);
      auto p = solve(puzzle, params, 1ull << 40, 60.0, b.hash_rate, PowMode::Simulated, mix_seed(1, e, b.id.value));
      if (!p) continue;
      h.entries.push_back({e, p->achieved_bits, p->is_full, p->elapsed, p->share_count, p->share_bits});
    }
    histories.push_back(std::move(h));
  }
  const auto est = estimate(histories, 3);
  std::printf("board    rate (h/s)   C^     window\n");
  for (const auto& b : boards) {
    const auto& n = est.nodes.at(b.id);
    std::printf("%-8s %10.0f  %.3f  %zu\n", b.name, n.rate, n.c_hat, n.window);
  }

  // The slow boards want point clouds; the fast ones offer them.
  AllocationProblem problem;
  problem.d_max = est.d_max;
  for (const auto& b : boards) problem.c_hat[b.id] = est.nodes.at(b.id).c_hat;
  problem.requests = {{NodeId{1}, DataType::PointCloud, 60000, 0.1, 0.3},
                      {NodeId{2}, DataType::PointCloud, 60000, 0.1, 0.3}};
  problem.availables = {{NodeId{3}, DataType::PointCloud, 80000, 0.05, 0.2},
                        {NodeId{4}, DataType::PointCloud, 40000, 0.4, 0.6}};
  problem.quality = {{NodeId{3}, 2.0}, {NodeId{4}, -1.0}};
  for (auto r : {NodeId{1}, NodeId{2}})
    for (auto p : {NodeId{3}, NodeId{4}}) problem.bandwidth[{r, p}] = 50000;

  const auto plan = optimize(problem);
  std::printf("\nreceiver provider  size   E      term\n");
  for (const auto& x : plan.exchanges)
    std::printf("%8u %8u %6llu  %.3f  %.3f\n", x.receiver.value, x.provider.value,
                static_cast<unsigned long long>(x.size), x.error, x.term_value);
  std::printf("objective %.3f\n", plan.objective_value);
}
