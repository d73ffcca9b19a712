// Run a scenario, then rebuild the ledger from its blocks alone and check
// that every validator replaying the chain lands on the same state.
//
//   example_replay <scenario> [epochs]

#include <cstdio>
#include <cstdlib>

#include "swarmchain/swarmchain.hpp"

using namespace swarmchain;

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <scenario> [epochs]\n", argv[0]);
    return 2;
  }
  try {
    const auto sc = load_scenario(argv[1]);
    const std::uint64_t epochs = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : sc.epochs;
    World world(sc, sc.seed);
    const auto traces = world.run(epochs);

    for (const auto& t : traces) {
      Tokens delivered = 0;
      for (const auto& x : t.transfers) delivered += static_cast<Tokens>(x.bytes_delivered);
      std::printf("epoch %3llu  tip %.16s  proofs %zu  stamps %zu  exchanges %zu  bytes %lld%s\n",
                  static_cast<unsigned long long>(t.epoch), to_hex(t.tip).c_str(), t.proofs.size(), t.stamps.size(),
                  t.plan.exchanges.size(), static_cast<long long>(delivered), t.destroyed ? "  (destroyed)" : "");
    }

    const auto replayed = replay(world.chain(), sc.chain);
    const bool same = state_digest(replayed) == state_digest(world.state());
    std::printf("\n%zu blocks replayed, state digest %s\n", world.chain().size(), same ? "matches" : "DIFFERS");

    std::size_t registered = 0;
    for (const auto& t : traces)
      for (const auto& s : t.stamps) registered += admit_forward(world.chain(), s.stamp_digest);
    std::printf("%zu stamps forwardable by relays\n", registered);
    return same ? 0 : 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == Errc::ParseError ? 2 : 1;
  }
}
