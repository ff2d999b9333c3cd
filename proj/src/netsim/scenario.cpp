#include <algorithm>

#include "emarket/netsim/simulation.hpp"

namespace emarket::netsim {

Json ScenarioResult::to_json() const {
  Json j;
  j["heads"] = Json::array();
  for (const auto& h : heads)
    j["heads"].push_back({{"node", h.node}, {"head", h.head.hex()}, {"height", h.height}});
  j["log"] = Json::array();
  for (const auto& e : log) j["log"].push_back(e.to_json());
  j["final_tick"] = final_tick;
  j["quiescence_tick"] = quiescence_tick;
  j["convergence_tick"] = convergence_tick ? Json(*convergence_tick) : Json(nullptr);
  j["max_height"] = max_height;
  return j;
}

std::vector<MiningEntry> mining_script_from_json(const Json& j) {
  std::vector<MiningEntry> script;
  if (j.is_null()) return script;
  if (!j.is_array()) throw ConfigInvalid("mining_script must be an array");
  for (const auto& e : j) {
    MiningEntry m;
    m.tick = e.at("tick").get<std::uint64_t>();
    m.node = e.at("node").get<NodeId>();
    if (auto it = e.find("txs"); it != e.end())
      for (const auto& t : *it) m.txs.push_back(ledger::Transaction::from_json(t));
    script.push_back(std::move(m));
  }
  return script;
}

ScenarioResult run_scenario(const NetworkConfig& config, const std::vector<MiningEntry>& script,
                            std::shared_ptr<const ledger::KeyDirectory> keys, std::uint64_t max_ticks) {
  config.validate();
  for (std::size_t i = 0; i < script.size(); ++i) {
    if (script[i].node >= config.node_count)
      throw ConfigInvalid("mining_script[" + std::to_string(i) + "] references an unknown node");
    if (i > 0 && script[i].tick < script[i - 1].tick)
      throw ConfigInvalid("mining_script ticks must be sorted");
  }

  Simulation sim(config, std::move(keys));
  std::uint64_t last_heal = 0;
  for (const auto& p : config.partitions) last_heal = std::max(last_heal, p.end_tick);

  ScenarioResult result;
  result.quiescence_tick = std::max(last_heal, script.empty() ? 0 : script.back().tick);

  std::size_t next = 0;
  std::optional<std::uint64_t> converged_since;
  while (true) {
    while (next < script.size() && script[next].tick == sim.tick()) {
      sim.mine(script[next].node, script[next].txs);
      ++next;
    }
    if (sim.converged()) {
      if (!converged_since) converged_since = sim.tick();
    } else {
      converged_since.reset();
    }
    bool done = next >= script.size() && sim.pending_events() == 0 && sim.tick() >= last_heal;
    if (done || sim.tick() >= max_ticks) break;
    sim.step();
  }

  result.final_tick = sim.tick();
  result.convergence_tick = converged_since;
  result.log = sim.log();
  for (NodeId n = 0; n < sim.node_count(); ++n) {
    const auto& store = sim.node(n).store;
    result.heads.push_back({n, *store.canonical_head(), store.head_block().height});
    for (const auto& [h, e] : store.entries()) result.max_height = std::max(result.max_height, e.block.height);
  }
  return result;
}

}  // namespace emarket::netsim
