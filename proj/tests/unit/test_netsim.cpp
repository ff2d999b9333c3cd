#include "doctest.h"
#include "emarket/netsim/simulation.hpp"
#include "support/ledger_fixture.hpp"

using namespace emarket;
using namespace emarket::netsim;
using emarket::testing::LedgerFixture;

TEST_CASE("xorshift64* reference sequence") {
  // values from tests/oracles/xorshift.py
  Xorshift64Star a(1);
  CHECK(a.next() == 0x4b46a55df3611b9bull);
  CHECK(a.next() == 0xd7e1f1410e763ef4ull);
  CHECK(a.next() == 0x5f14ec66975f9b06ull);
  Xorshift64Star z(0);
  CHECK(z.next() != 0);
  Xorshift64Star r(42);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += r.bernoulli(1, 4);
  CHECK(hits > 2300);
  CHECK(hits < 2700);
  CHECK(r.bernoulli(1, 1));
  CHECK_FALSE(r.bernoulli(0, 1));
}

TEST_CASE("broadcast") {
  LedgerFixture fx;

  SUBCASE("two nodes, latency 1: peer adopts the head after one tick") {
    Simulation sim(NetworkConfig::ring(2), fx.keys);
    auto b = sim.mine(0, {});
    CHECK(sim.pending_events() == 1);
    CHECK(sim.node(1).store.canonical_head() != b.hash());
    sim.step();
    CHECK(sim.node(1).store.canonical_head() == b.hash());
    CHECK(sim.converged());
  }

  SUBCASE("origin without peers enqueues nothing") {
    NetworkConfig cfg;
    cfg.node_count = 2;
    Simulation sim(cfg, fx.keys);
    sim.mine(0, {});
    CHECK(sim.pending_events() == 0);
  }

  SUBCASE("drop probability 1 never delivers") {
    auto cfg = NetworkConfig::ring(3);
    cfg.drop_num = 1;
    cfg.drop_den = 1;
    Simulation sim(cfg, fx.keys);
    sim.mine(0, {});
    sim.mine(1, {});
    for (int i = 0; i < 10; ++i) sim.step();
    CHECK(sim.node(2).store.size() == 1);
    CHECK_FALSE(sim.converged());
    for (const auto& e : sim.log()) CHECK(e.kind != "deliver");
  }
}

TEST_CASE("step") {
  LedgerFixture fx;

  SUBCASE("empty queue only advances the tick") {
    Simulation sim(NetworkConfig::ring(3), fx.keys);
    auto heads = sim.heads();
    sim.step();
    CHECK(sim.tick() == 1);
    CHECK(sim.heads() == heads);
    CHECK(sim.log().empty());
  }

  SUBCASE("same-tick events are delivered in (from, to) order") {
    NetworkConfig cfg;
    cfg.node_count = 3;
    cfg.edges = {{0, 2, 1}, {1, 2, 1}};
    Simulation sim(cfg, fx.keys);
    auto b1 = sim.mine(1, {});
    auto b0 = sim.mine(0, {});
    sim.step();
    // node 2 sees node 0's block first, so it keeps it on the height tie
    CHECK(sim.node(2).store.entry(b0.hash())->arrival_index <
          sim.node(2).store.entry(b1.hash())->arrival_index);
    CHECK(sim.node(2).store.canonical_head() == b0.hash());
  }

  SUBCASE("5-node ring converges within diameter x latency") {
    auto cfg = NetworkConfig::ring(5);
    Simulation sim(cfg, fx.keys);
    auto b = sim.mine(0, {});
    CHECK(cfg.diameter() == 2);
    sim.step();
    CHECK_FALSE(sim.converged());
    sim.step();
    CHECK(sim.converged());
    CHECK(sim.heads().front() == b.hash());
  }

  SUBCASE("gossip relays each block once per node") {
    Simulation sim(NetworkConfig::complete(4), fx.keys);
    sim.mine(0, {});
    for (int i = 0; i < 5; ++i) sim.step();
    std::size_t sends = 0;
    for (const auto& e : sim.log()) sends += e.kind == "send";
    // origin sends 3, each of the three receivers relays to the 2 others
    CHECK(sends == 3 + 3 * 2);
  }
}

TEST_CASE("run_scenario") {
  LedgerFixture fx;

  SUBCASE("single node mining three blocks") {
    NetworkConfig cfg;
    std::vector<MiningEntry> script{{1, 0, {}}, {2, 0, {}}, {3, 0, {}}};
    auto r = run_scenario(cfg, script, fx.keys);
    REQUIRE(r.heads.size() == 1);
    CHECK(r.heads[0].height == 3);
    CHECK(r.convergence_tick.has_value());
  }

  SUBCASE("2|3 partition then heal adopts the longer side") {
    auto cfg = NetworkConfig::ring(5);
    cfg.partitions.push_back({0, 10, {0, 1}});
    std::vector<MiningEntry> script{
        {1, 0, {}}, {1, 2, {}}, {3, 1, {}}, {3, 3, {}}, {5, 4, {}},
    };
    auto r = run_scenario(cfg, script, fx.keys);
    // side {0,1} holds 2 blocks, side {2,3,4} holds 3
    REQUIRE(r.heads.size() == 5);
    for (const auto& h : r.heads) {
      CHECK(h.height == 3);
      CHECK(h.head == r.heads[4].head);
    }
    CHECK(r.max_height == 3);
    REQUIRE(r.convergence_tick.has_value());
    CHECK(*r.convergence_tick <= r.quiescence_tick + cfg.diameter() * cfg.max_latency());

    // no delivery crossed the cut while the partition was active
    for (const auto& e : r.log) {
      if (e.kind != "deliver" || e.tick >= 10) continue;
      bool from_a = e.from <= 1, to_a = e.to <= 1;
      CHECK(from_a == to_a);
    }
  }

  SUBCASE("reruns are identical") {
    auto cfg = NetworkConfig::ring(5);
    cfg.drop_num = 1;
    cfg.drop_den = 3;
    cfg.rng_seed = 99;
    std::vector<MiningEntry> script{{0, 0, {}}, {2, 3, {fx.payment("alice", "bob", 3)}}, {4, 1, {}}};
    auto a = run_scenario(cfg, script, fx.keys);
    auto b = run_scenario(cfg, script, fx.keys);
    CHECK(canonical_dump(a.to_json()) == canonical_dump(b.to_json()));
    cfg.rng_seed = 100;
    auto c = run_scenario(cfg, script, fx.keys);
    CHECK(canonical_dump(a.to_json()) != canonical_dump(c.to_json()));
  }

  SUBCASE("invalid configs") {
    auto cfg = NetworkConfig::ring(3);
    cfg.edges.push_back({0, 7, 1});
    CHECK_THROWS_AS(run_scenario(cfg, {}, fx.keys), ConfigInvalid);
    cfg = NetworkConfig::ring(3);
    cfg.drop_num = 2;
    CHECK_THROWS_AS(run_scenario(cfg, {}, fx.keys), ConfigInvalid);
    cfg = NetworkConfig::ring(3);
    cfg.partitions = {{0, 5, {0}}, {3, 8, {0}}};
    CHECK_THROWS_AS(run_scenario(cfg, {}, fx.keys), ConfigInvalid);
    cfg = NetworkConfig::ring(3);
    CHECK_THROWS_AS(run_scenario(cfg, {{5, 0, {}}, {2, 0, {}}}, fx.keys), ConfigInvalid);
  }

  SUBCASE("config json round trip") {
    auto cfg = NetworkConfig::ring(4, 2);
    cfg.partitions = {{1, 3, {0, 1}}};
    cfg.drop_num = 1;
    cfg.drop_den = 10;
    cfg.rng_seed = 5;
    auto back = NetworkConfig::from_json(cfg.to_json());
    CHECK(canonical_dump(back.to_json()) == canonical_dump(cfg.to_json()));
  }
}
