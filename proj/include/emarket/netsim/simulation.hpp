#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "emarket/ledger/chain_store.hpp"
#include "emarket/netsim/rng.hpp"

namespace emarket::netsim {

using NodeId = std::uint32_t;

struct ConfigInvalid : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Edge {
  NodeId a = 0;
  NodeId b = 0;
  std::uint64_t latency_ticks = 1;
};

// Edges with one endpoint in `side` and the other outside are cut for ticks
// in [start_tick, end_tick).
struct Partition {
  std::uint64_t start_tick = 0;
  std::uint64_t end_tick = 0;
  std::set<NodeId> side;

  bool active_at(std::uint64_t tick) const { return tick >= start_tick && tick < end_tick; }
  bool cuts(NodeId x, NodeId y) const { return side.count(x) != side.count(y); }
};

struct NetworkConfig {
  std::uint32_t node_count = 1;
  std::vector<Edge> edges;
  std::uint64_t drop_num = 0;
  std::uint64_t drop_den = 1;
  std::vector<Partition> partitions;
  std::uint64_t rng_seed = 0;
  unsigned difficulty_bits = 4;

  // Throws ConfigInvalid.
  void validate() const;
  // Hop diameter of the full topology (0 for a single node, throws if disconnected).
  std::uint64_t diameter() const;
  std::uint64_t max_latency() const;

  Json to_json() const;
  static NetworkConfig from_json(const Json& j);

  static NetworkConfig ring(std::uint32_t n, std::uint64_t latency = 1);
  static NetworkConfig complete(std::uint32_t n, std::uint64_t latency = 1);
};

struct NodeState {
  NodeId node_id = 0;
  ledger::ChainStore store;
  std::map<NodeId, std::uint64_t> peers;  // peer -> latency
  std::set<Hash256> relayed;
};

struct SimEvent {
  std::uint64_t deliver_at_tick = 0;
  NodeId from = 0;
  NodeId to = 0;
  Hash256 hash;

  auto key() const { return std::tie(deliver_at_tick, from, to, hash); }
  bool operator<(const SimEvent& o) const { return key() < o.key(); }
};

struct LogEntry {
  std::uint64_t tick = 0;
  std::string kind;  // mine | send | sync | drop | cut | deliver | reject | heal
  NodeId from = 0;
  NodeId to = 0;
  std::optional<Hash256> hash;
  std::string detail;

  Json to_json() const;
  bool operator==(const LogEntry&) const = default;
};

class Simulation {
 public:
  Simulation(NetworkConfig config, std::shared_ptr<const ledger::KeyDirectory> keys,
             const ledger::Block& genesis = ledger::make_genesis());

  // Enqueue one event per live edge from origin (excluding `except`); the
  // block must already be in origin's store.
  void broadcast(NodeId origin, const ledger::Block& block,
                 std::optional<NodeId> except = std::nullopt);

  // Advance one tick: heal syncs for partitions ending now, then deliver every
  // due event in (tick, from, to, hash) order.
  void step();

  // Mine txs on node's head, append locally, broadcast.
  ledger::Block mine(NodeId node, const std::vector<ledger::Transaction>& txs);
  // Append an externally produced block at node and broadcast it.
  void inject(NodeId node, const ledger::Block& block);

  std::uint64_t tick() const { return tick_; }
  std::size_t pending_events() const { return queue_.size(); }
  bool edge_live(NodeId x, NodeId y, std::uint64_t tick) const;

  const NodeState& node(NodeId id) const { return nodes_.at(id); }
  NodeState& node(NodeId id) { return nodes_.at(id); }
  std::size_t node_count() const { return nodes_.size(); }
  const NetworkConfig& config() const { return config_; }

  std::vector<Hash256> heads() const;
  bool converged() const;
  const std::vector<LogEntry>& log() const { return log_; }

 private:
  void send(NodeId from, NodeId to, const ledger::Block& block, const char* kind);
  void deliver(const SimEvent& ev, const ledger::Block& block);
  void relay(NodeId node, const Hash256& hash, std::optional<NodeId> except);

  NetworkConfig config_;
  std::vector<NodeState> nodes_;
  Xorshift64Star rng_;
  std::uint64_t tick_ = 0;
  std::map<SimEvent, ledger::Block> queue_;
  std::vector<LogEntry> log_;
};

struct MiningEntry {
  std::uint64_t tick = 0;
  NodeId node = 0;
  std::vector<ledger::Transaction> txs;
};

struct NodeHead {
  NodeId node = 0;
  Hash256 head;
  std::uint64_t height = 0;
};

struct ScenarioResult {
  std::vector<NodeHead> heads;
  std::vector<LogEntry> log;
  std::uint64_t final_tick = 0;
  std::uint64_t quiescence_tick = 0;  // last mining tick or partition heal, whichever is later
  std::optional<std::uint64_t> convergence_tick;  // heads equal from this tick on
  std::uint64_t max_height = 0;                   // over every block any node holds

  Json to_json() const;
};

// Deterministic for (config, script): reruns give bit-identical logs and heads.
// Throws ConfigInvalid on a bad config or an unsorted script.
ScenarioResult run_scenario(const NetworkConfig& config, const std::vector<MiningEntry>& script,
                            std::shared_ptr<const ledger::KeyDirectory> keys,
                            std::uint64_t max_ticks = 1'000'000);

std::vector<MiningEntry> mining_script_from_json(const Json& j);

}  // namespace emarket::netsim
