#include "emarket/netsim/simulation.hpp"

#include <algorithm>
#include <deque>
#include <limits>

namespace emarket::netsim {

// ---------------------------------------------------------------- config

void NetworkConfig::validate() const {
  if (node_count < 1) throw ConfigInvalid("node_count must be >= 1");
  if (drop_den == 0) throw ConfigInvalid("drop_probability denominator must be positive");
  if (drop_num > drop_den) throw ConfigInvalid("drop_probability must lie in [0,1]");
  if (difficulty_bits > ledger::kMaxDifficultyBits) throw ConfigInvalid("difficulty_bits must be <= 32");
  std::set<std::pair<NodeId, NodeId>> seen;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    auto where = "edge " + std::to_string(i) + ": ";
    if (e.a >= node_count || e.b >= node_count) throw ConfigInvalid(where + "references an unknown node");
    if (e.a == e.b) throw ConfigInvalid(where + "self loop");
    if (e.latency_ticks < 1) throw ConfigInvalid(where + "latency_ticks must be >= 1");
    if (!seen.emplace(std::min(e.a, e.b), std::max(e.a, e.b)).second)
      throw ConfigInvalid(where + "duplicate edge");
  }
  for (std::size_t i = 0; i < partitions.size(); ++i) {
    const auto& p = partitions[i];
    auto where = "partition " + std::to_string(i) + ": ";
    if (p.end_tick <= p.start_tick) throw ConfigInvalid(where + "end_tick must exceed start_tick");
    for (auto n : p.side)
      if (n >= node_count) throw ConfigInvalid(where + "references an unknown node");
    for (std::size_t j = 0; j < i; ++j) {
      const auto& q = partitions[j];
      bool overlap = p.start_tick < q.end_tick && q.start_tick < p.end_tick;
      if (!overlap) continue;
      for (const auto& e : edges)
        if (p.cuts(e.a, e.b) && q.cuts(e.a, e.b))
          throw ConfigInvalid(where + "overlaps partition " + std::to_string(j) + " on edge " +
                              std::to_string(e.a) + "-" + std::to_string(e.b));
    }
  }
}

std::uint64_t NetworkConfig::diameter() const {
  std::vector<std::vector<NodeId>> adj(node_count);
  for (const auto& e : edges) {
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }
  std::uint64_t diam = 0;
  for (NodeId s = 0; s < node_count; ++s) {
    std::vector<std::int64_t> dist(node_count, -1);
    std::deque<NodeId> q{s};
    dist[s] = 0;
    while (!q.empty()) {
      auto u = q.front();
      q.pop_front();
      for (auto v : adj[u])
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          q.push_back(v);
        }
    }
    for (auto d : dist) {
      if (d < 0) throw ConfigInvalid("topology is disconnected");
      diam = std::max<std::uint64_t>(diam, static_cast<std::uint64_t>(d));
    }
  }
  return diam;
}

std::uint64_t NetworkConfig::max_latency() const {
  std::uint64_t m = 1;
  for (const auto& e : edges) m = std::max(m, e.latency_ticks);
  return m;
}

Json NetworkConfig::to_json() const {
  Json j;
  j["node_count"] = node_count;
  j["edges"] = Json::array();
  for (const auto& e : edges) j["edges"].push_back({{"a", e.a}, {"b", e.b}, {"latency", e.latency_ticks}});
  j["drop_probability"] = {{"num", drop_num}, {"den", drop_den}};
  j["partitions"] = Json::array();
  for (const auto& p : partitions)
    j["partitions"].push_back({{"start", p.start_tick}, {"end", p.end_tick}, {"side", p.side}});
  j["seed"] = rng_seed;
  j["difficulty_bits"] = difficulty_bits;
  return j;
}

namespace {
std::uint64_t get_u64(const Json& j, const char* key, std::uint64_t fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_integer() || it->get<std::int64_t>() < 0)
    throw ConfigInvalid(std::string("field '") + key + "' must be a non-negative integer");
  return it->get<std::uint64_t>();
}
}  // namespace

NetworkConfig NetworkConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigInvalid("network config must be an object");
  NetworkConfig c;
  c.node_count = static_cast<std::uint32_t>(get_u64(j, "node_count", 1));
  c.rng_seed = get_u64(j, "seed", 0);
  c.difficulty_bits = static_cast<unsigned>(get_u64(j, "difficulty_bits", 4));
  if (auto it = j.find("edges"); it != j.end()) {
    for (const auto& e : *it) {
      Edge edge;
      if (e.is_array()) {
        if (e.size() < 2 || e.size() > 3) throw ConfigInvalid("edge arrays are [a, b] or [a, b, latency]");
        edge.a = e[0].get<NodeId>();
        edge.b = e[1].get<NodeId>();
        if (e.size() == 3) edge.latency_ticks = e[2].get<std::uint64_t>();
      } else {
        edge.a = static_cast<NodeId>(get_u64(e, "a", 0));
        edge.b = static_cast<NodeId>(get_u64(e, "b", 0));
        edge.latency_ticks = get_u64(e, "latency", 1);
      }
      c.edges.push_back(edge);
    }
  }
  if (auto it = j.find("drop_probability"); it != j.end()) {
    if (it->is_array() && it->size() == 2) {
      c.drop_num = (*it)[0].get<std::uint64_t>();
      c.drop_den = (*it)[1].get<std::uint64_t>();
    } else if (it->is_object()) {
      c.drop_num = get_u64(*it, "num", 0);
      c.drop_den = get_u64(*it, "den", 1);
    } else if (it->is_number_integer()) {
      c.drop_num = it->get<std::uint64_t>();
      c.drop_den = 1;
    } else {
      throw ConfigInvalid("drop_probability must be [num, den] or {num, den}");
    }
  }
  if (auto it = j.find("partitions"); it != j.end()) {
    for (const auto& p : *it) {
      Partition part;
      part.start_tick = get_u64(p, "start", 0);
      part.end_tick = get_u64(p, "end", 0);
      for (const auto& n : p.at("side")) part.side.insert(n.get<NodeId>());
      c.partitions.push_back(part);
    }
  }
  c.validate();
  return c;
}

NetworkConfig NetworkConfig::ring(std::uint32_t n, std::uint64_t latency) {
  NetworkConfig c;
  c.node_count = n;
  if (n == 2) c.edges.push_back({0, 1, latency});
  if (n > 2)
    for (NodeId i = 0; i < n; ++i) c.edges.push_back({i, static_cast<NodeId>((i + 1) % n), latency});
  return c;
}

NetworkConfig NetworkConfig::complete(std::uint32_t n, std::uint64_t latency) {
  NetworkConfig c;
  c.node_count = n;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId k = i + 1; k < n; ++k) c.edges.push_back({i, k, latency});
  return c;
}

// ---------------------------------------------------------------- log

Json LogEntry::to_json() const {
  Json j = {{"tick", tick}, {"kind", kind}, {"from", from}, {"to", to}};
  j["hash"] = hash ? Json(hash->hex()) : Json(nullptr);
  if (!detail.empty()) j["detail"] = detail;
  return j;
}

// ---------------------------------------------------------------- simulation

Simulation::Simulation(NetworkConfig config, std::shared_ptr<const ledger::KeyDirectory> keys,
                       const ledger::Block& genesis)
    : config_(std::move(config)), rng_(config_.rng_seed) {
  config_.validate();
  nodes_.reserve(config_.node_count);
  for (NodeId i = 0; i < config_.node_count; ++i) {
    nodes_.push_back(NodeState{i, ledger::ChainStore(keys), {}, {}});
    nodes_.back().store.append_block(genesis);
    nodes_.back().relayed.insert(genesis.hash());
  }
  for (const auto& e : config_.edges) {
    nodes_[e.a].peers[e.b] = e.latency_ticks;
    nodes_[e.b].peers[e.a] = e.latency_ticks;
  }
}

bool Simulation::edge_live(NodeId x, NodeId y, std::uint64_t tick) const {
  for (const auto& p : config_.partitions)
    if (p.active_at(tick) && p.cuts(x, y)) return false;
  return true;
}

void Simulation::send(NodeId from, NodeId to, const ledger::Block& block, const char* kind) {
  auto hash = block.hash();
  if (!edge_live(from, to, tick_)) {
    log_.push_back({tick_, "cut", from, to, hash, kind});
    return;
  }
  if (rng_.bernoulli(config_.drop_num, config_.drop_den)) {
    log_.push_back({tick_, "drop", from, to, hash, kind});
    return;
  }
  SimEvent ev{tick_ + nodes_[from].peers.at(to), from, to, hash};
  log_.push_back({tick_, kind, from, to, hash, "at " + std::to_string(ev.deliver_at_tick)});
  queue_.emplace(ev, block);
}

void Simulation::broadcast(NodeId origin, const ledger::Block& block, std::optional<NodeId> except) {
  for (const auto& [peer, latency] : nodes_.at(origin).peers) {
    if (except && peer == *except) continue;
    send(origin, peer, block, "send");
  }
}

void Simulation::relay(NodeId node, const Hash256& hash, std::optional<NodeId> except) {
  auto& n = nodes_[node];
  if (!n.relayed.insert(hash).second) return;
  broadcast(node, *n.store.find(hash), except);
}

void Simulation::step() {
  ++tick_;

  for (const auto& p : config_.partitions) {
    if (p.end_tick != tick_) continue;
    for (const auto& e : config_.edges) {
      if (!p.cuts(e.a, e.b) || !edge_live(e.a, e.b, tick_)) continue;
      log_.push_back({tick_, "heal", e.a, e.b, std::nullopt, {}});
      for (auto [x, y] : {std::pair{e.a, e.b}, std::pair{e.b, e.a}}) {
        std::vector<const ledger::Block*> blocks;
        for (const auto& [h, entry] : nodes_[x].store.entries()) blocks.push_back(&entry.block);
        std::sort(blocks.begin(), blocks.end(), [](const auto* l, const auto* r) {
          return std::pair(l->height, l->hash()) < std::pair(r->height, r->hash());
        });
        for (const auto* b : blocks) send(x, y, *b, "sync");
      }
    }
  }

  while (!queue_.empty() && queue_.begin()->first.deliver_at_tick <= tick_) {
    auto item = queue_.extract(queue_.begin());
    deliver(item.key(), item.mapped());
  }
}

void Simulation::deliver(const SimEvent& ev, const ledger::Block& block) {
  if (!edge_live(ev.from, ev.to, tick_)) {
    log_.push_back({tick_, "cut", ev.from, ev.to, ev.hash, "in flight"});
    return;
  }
  auto& n = nodes_[ev.to];
  ledger::ChainStore::AppendResult r;
  try {
    r = n.store.append_block(block);
  } catch (const ledger::LedgerError& e) {
    log_.push_back({tick_, "reject", ev.from, ev.to, ev.hash, ledger::to_string(e.code())});
    return;
  }
  const char* outcome = r.status == ledger::ChainStore::AppendStatus::Added       ? "added"
                        : r.status == ledger::ChainStore::AppendStatus::Duplicate ? "duplicate"
                                                                                  : "staged";
  log_.push_back({tick_, "deliver", ev.from, ev.to, ev.hash, outcome});
  for (const auto& h : r.connected) relay(ev.to, h, h == ev.hash ? std::optional(ev.from) : std::nullopt);
}

ledger::Block Simulation::mine(NodeId node, const std::vector<ledger::Transaction>& txs) {
  auto& n = nodes_.at(node);
  const auto& head = n.store.head_block();
  ledger::MineOptions opts;
  opts.timestamp = static_cast<std::int64_t>(tick_);
  opts.parallel = false;
  auto block = ledger::mine_block(txs, ledger::ParentRef::of(head), config_.difficulty_bits,
                                  static_cast<std::uint64_t>(node) << 32, n.store.keys(), opts);
  log_.push_back({tick_, "mine", node, node, block.hash(), "height " + std::to_string(block.height)});
  inject(node, block);
  return block;
}

void Simulation::inject(NodeId node, const ledger::Block& block) {
  auto& n = nodes_.at(node);
  auto r = n.store.append_block(block);
  for (const auto& h : r.connected) relay(node, h, std::nullopt);
}

std::vector<Hash256> Simulation::heads() const {
  std::vector<Hash256> out;
  for (const auto& n : nodes_) out.push_back(*n.store.canonical_head());
  return out;
}

bool Simulation::converged() const {
  auto h = heads();
  return std::all_of(h.begin(), h.end(), [&](const auto& x) { return x == h.front(); });
}

}  // namespace emarket::netsim
