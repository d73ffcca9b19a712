#pragma once

// Independent reference implementations used as test oracles. These are
// deliberately naive: no pruning, no shared helpers from the solver.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "swarmchain/swarmchain.hpp"

namespace oracle {

using namespace swarmchain;

struct Candidate {
  NodeId receiver;
  NodeId provider;
  double size = 0;
  double term = 0;
};

inline double mismatch(const DataRequest& r, const AvailableData& a) {
  const double lo = std::max(r.min_res, a.min_res);
  const double hi = std::min(r.max_res, a.max_res);
  const double width = ((r.max_res - r.min_res) + (a.max_res - a.min_res)) / 2.0;
  double e = 1.0;
  if (lo > hi) e += (lo - hi) / (width > 0 ? width : 1.0);
  if (r.max_size > a.max_size) e += static_cast<double>(r.max_size - a.max_size) / static_cast<double>(r.max_size);
  return e;
}

/// Candidates in request-major order, then sorted the way a plan is summed.
inline std::vector<Candidate> candidates(const AllocationProblem& p) {
  struct Keyed {
    std::tuple<NodeId, NodeId, std::size_t, std::size_t> key;
    Candidate c;
  };
  std::vector<Keyed> out;
  for (std::size_t ri = 0; ri < p.requests.size(); ++ri) {
    const auto& r = p.requests[ri];
    if (!p.c_hat.count(r.requester)) continue;
    for (std::size_t ai = 0; ai < p.availables.size(); ++ai) {
      const auto& a = p.availables[ai];
      if (a.type != r.type || a.provider == r.requester) continue;
      if (!p.bandwidth.count({r.requester, a.provider})) continue;
      double size = static_cast<double>(std::min(r.max_size, a.max_size));
      size = std::min(size, p.d_max * p.c_hat.at(r.requester));
      size = std::min(size, p.bandwidth.at({r.requester, a.provider}));
      size = std::floor(size);
      if (size <= 0) continue;
      const double term = p.alpha * p.quality.at(a.provider) + p.beta * (1.0 / mismatch(r, a));
      out.push_back({{r.requester, a.provider, ri, ai}, {r.requester, a.provider, size, term}});
    }
  }
  std::sort(out.begin(), out.end(), [](const Keyed& x, const Keyed& y) { return x.key < y.key; });
  std::vector<Candidate> cs;
  for (auto& k : out) cs.push_back(k.c);
  return cs;
}

/// Best objective over every feasible subset.
inline double best_objective(const AllocationProblem& p) {
  const auto cs = candidates(p);
  double best = 0.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << cs.size()); ++mask) {
    std::map<NodeId, double> load;
    double obj = 0.0;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (!(mask >> i & 1)) continue;
      obj += cs[i].term;
      load[cs[i].receiver] += cs[i].size;
    }
    bool ok = true;
    if (p.mode == CapacityMode::Aggregate)
      for (const auto& [r, l] : load) ok = ok && l <= p.d_max * p.c_hat.at(r);
    if (ok) best = std::max(best, obj);
  }
  return best;
}

/// Random instance: `receivers` requesters and `providers` offerers over a
/// couple of data types, with some missing links.
inline AllocationProblem random_problem(Rng& rng, std::uint32_t receivers, std::uint32_t providers,
                                        CapacityMode mode = CapacityMode::PerExchange) {
  AllocationProblem p;
  p.mode = mode;
  p.d_max = 1000.0 + static_cast<double>(rng.below(9000));
  p.alpha = 0.1 + rng.uniform() * 2.0;
  p.beta = 0.1 + rng.uniform() * 2.0;
  auto type = [&] { return rng.below(3) == 0 ? DataType::Image : DataType::PointCloud; };
  for (std::uint32_t i = 1; i <= receivers; ++i) {
    const double lo = rng.uniform() * 5.0;
    p.requests.push_back({NodeId{i}, type(), 100 + rng.below(5000), lo, lo + 0.5 + rng.uniform() * 3.0});
    p.c_hat[NodeId{i}] = 0.05 + rng.uniform() * 0.95;
  }
  for (std::uint32_t j = 1; j <= providers; ++j) {
    const NodeId id{100 + j};
    const double lo = rng.uniform() * 5.0;
    p.availables.push_back({id, type(), 100 + rng.below(5000), lo, lo + 0.5 + rng.uniform() * 3.0});
    p.quality[id] = rng.uniform() * 6.0 - 2.0;
    for (std::uint32_t i = 1; i <= receivers; ++i)
      if (rng.below(5) != 0) p.bandwidth[{NodeId{i}, id}] = 200.0 + static_cast<double>(rng.below(6000));
  }
  return p;
}

}  // namespace oracle
