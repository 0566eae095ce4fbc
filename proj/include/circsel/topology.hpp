#pragma once

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "circsel/network_model.hpp"
#include "circsel/rng.hpp"

namespace circsel {

/// A cluster that generated nodes are scattered around. Weights set how many
/// relays, clients and servers land in each region.
struct Region {
  std::string name;
  Position center;
  double spread_deg = 3.0;
  double relay_weight = 1.0;
  double client_weight = 1.0;
  double server_weight = 1.0;
};

/// Regional mix approximating where relays, users and popular sites sit.
inline std::vector<Region> default_regions() {
  return {
      {"us_east", {40.7, -74.0}, 3.0, 0.12, 0.14, 0.22},
      {"us_west", {37.4, -122.1}, 3.0, 0.06, 0.07, 0.14},
      {"germany", {50.1, 8.7}, 2.5, 0.24, 0.12, 0.12},
      {"france", {48.9, 2.3}, 2.5, 0.14, 0.08, 0.08},
      {"netherlands", {52.4, 4.9}, 1.5, 0.12, 0.05, 0.08},
      {"uk", {51.5, -0.1}, 2.0, 0.06, 0.07, 0.08},
      {"sweden", {59.3, 18.1}, 2.5, 0.05, 0.03, 0.02},
      {"russia", {55.8, 37.6}, 3.0, 0.06, 0.16, 0.06},
      {"brazil", {-23.6, -46.6}, 3.0, 0.02, 0.06, 0.04},
      {"japan", {35.7, 139.7}, 2.5, 0.03, 0.05, 0.08},
      {"india", {19.1, 72.9}, 3.0, 0.02, 0.06, 0.04},
      {"australia", {-33.9, 151.2}, 2.5, 0.02, 0.02, 0.02},
  };
}

struct TopologyParams {
  int exits = 8;
  int exit_guards = 2;
  int guards = 10;
  int middles = 24;
  int clients = 220;
  int servers = 44;
  // Log-normal relay bandwidth; a stand-in for measured capacities.
  double relay_bw_median_kibps = 2560.0;
  double relay_bw_sigma = 0.8;
  double guard_bw_factor = 1.5;  // flagged relays skew faster
  double exit_bw_factor = 1.5;
  double relay_bw_min_kibps = 64.0;
  // Actual capacity = advertised * lognormal(1, sigma): consensus weights are
  // noisy estimates, so some relays are persistently over- or under-loaded.
  double capacity_error_sigma = 0.4;
  double client_bw_kibps = 2048.0;
  double server_bw_kibps = 10240.0;
  std::vector<Port> exit_ports{80, 443};
  Port server_port = 80;
  std::vector<Region> regions = default_regions();

  void validate() const {
    if (exits < 0 || exit_guards < 0 || guards < 0 || middles < 0)
      throw std::invalid_argument("topology: relay counts must be >= 0");
    if (exits + exit_guards < 1 || guards + exit_guards < 1 || exits + exit_guards + guards + middles < 3)
      throw std::invalid_argument("topology: need at least one exit, one guard and three relays");
    if (clients < 1 || servers < 1) throw std::invalid_argument("topology: counts must be > 0");
    if (!(relay_bw_median_kibps > 0.0) || relay_bw_sigma < 0.0 || capacity_error_sigma < 0.0 || !(client_bw_kibps > 0.0) ||
        !(server_bw_kibps > 0.0))
      throw std::invalid_argument("topology: bandwidth parameters must be positive");
    if (exit_ports.empty()) throw std::invalid_argument("topology: exit policy needs ports");
    if (regions.empty()) throw std::invalid_argument("topology: no regions");
  }
};

namespace detail {

inline const Region& pick_region(const std::vector<Region>& regions, double Region::*weight,
                                 RngStream& rng) {
  double total = 0.0;
  for (const auto& r : regions) total += r.*weight;
  if (!(total > 0.0)) return regions.front();
  double x = rng.uniform01() * total;
  for (const auto& r : regions) {
    x -= r.*weight;
    if (x < 0.0) return r;
  }
  return regions.back();
}

inline Position scatter(const Region& r, RngStream& rng) {
  double lat = std::clamp(rng.normal(r.center.lat_deg, r.spread_deg), -89.0, 89.0);
  double lon = rng.normal(r.center.lon_deg, r.spread_deg);
  while (lon > 180.0) lon -= 360.0;
  while (lon < -180.0) lon += 360.0;
  return {lat, lon};
}

}  // namespace detail

/// Builds a synthetic topology. Relay order: exits, exit-guards, guards,
/// middles; ids are dense indices.
inline Topology generate_topology(const TopologyParams& p, RngStream& rng) {
  p.validate();
  Topology t;
  auto add_relay = [&](bool guard, bool exit) {
    RelayDescriptor r;
    r.relay_id = static_cast<RelayId>(t.relays.size());
    r.is_guard = guard;
    r.is_exit = exit;
    double bw = rng.lognormal(p.relay_bw_median_kibps, p.relay_bw_sigma);
    if (guard) bw *= p.guard_bw_factor;
    if (exit) bw *= p.exit_bw_factor;
    r.bandwidth_kibps = std::max(p.relay_bw_min_kibps, std::round(bw));
    r.capacity_kibps = std::max(p.relay_bw_min_kibps,
                                std::round(rng.lognormal(r.bandwidth_kibps, p.capacity_error_sigma)));
    r.position = detail::scatter(detail::pick_region(p.regions, &Region::relay_weight, rng), rng);
    if (exit) r.exit_policy.insert(p.exit_ports.begin(), p.exit_ports.end());
    t.relays.push_back(std::move(r));
  };
  for (int i = 0; i < p.exits; ++i) add_relay(false, true);
  for (int i = 0; i < p.exit_guards; ++i) add_relay(true, true);
  for (int i = 0; i < p.guards; ++i) add_relay(true, false);
  for (int i = 0; i < p.middles; ++i) add_relay(false, false);

  for (int i = 0; i < p.clients; ++i) {
    EndpointDescriptor e;
    e.endpoint_id = static_cast<std::uint32_t>(i);
    e.kind = EndpointKind::client;
    e.bandwidth_kibps = p.client_bw_kibps;
    e.position = detail::scatter(detail::pick_region(p.regions, &Region::client_weight, rng), rng);
    t.clients.push_back(e);
  }
  for (int i = 0; i < p.servers; ++i) {
    EndpointDescriptor e;
    e.endpoint_id = static_cast<std::uint32_t>(i);
    e.kind = EndpointKind::server;
    e.bandwidth_kibps = p.server_bw_kibps;
    e.port = p.server_port;
    e.position = detail::scatter(detail::pick_region(p.regions, &Region::server_weight, rng), rng);
    t.servers.push_back(e);
  }
  t.validate();
  return t;
}

// --- topology file (JSON key-value tree)

inline nlohmann::json region_to_json(const Region& r) {
  return {{"name", r.name},
          {"lat", r.center.lat_deg},
          {"lon", r.center.lon_deg},
          {"spread_deg", r.spread_deg},
          {"relay_weight", r.relay_weight},
          {"client_weight", r.client_weight},
          {"server_weight", r.server_weight}};
}

inline Region region_from_json(const nlohmann::json& j) {
  Region r;
  r.name = j.at("name").get<std::string>();
  r.center = {j.at("lat").get<double>(), j.at("lon").get<double>()};
  r.spread_deg = j.value("spread_deg", 3.0);
  r.relay_weight = j.value("relay_weight", 1.0);
  r.client_weight = j.value("client_weight", 1.0);
  r.server_weight = j.value("server_weight", 1.0);
  return r;
}

inline nlohmann::json topology_to_json(const Topology& t) {
  using nlohmann::json;
  json relays = json::array();
  for (const auto& r : t.relays) {
    json flags = json::array();
    if (r.is_guard) flags.push_back("guard");
    if (r.is_exit) flags.push_back("exit");
    relays.push_back({{"id", r.relay_id},
                      {"bandwidth_kibps", r.bandwidth_kibps},
                      {"capacity_kibps", r.effective_capacity_kibps()},
                      {"flags", flags},
                      {"lat", r.position.lat_deg},
                      {"lon", r.position.lon_deg},
                      {"exit_policy", r.exit_policy}});
  }
  auto endpoints = [](const std::vector<EndpointDescriptor>& v, bool with_port) {
    json a = json::array();
    for (const auto& e : v) {
      json o{{"id", e.endpoint_id},
             {"lat", e.position.lat_deg},
             {"lon", e.position.lon_deg},
             {"bandwidth_kibps", e.bandwidth_kibps}};
      if (with_port) o["port"] = e.port;
      a.push_back(std::move(o));
    }
    return a;
  };
  return {{"relays", relays},
          {"clients", endpoints(t.clients, false)},
          {"servers", endpoints(t.servers, true)}};
}

inline Topology topology_from_json(const nlohmann::json& j) {
  Topology t;
  for (const auto& r : j.at("relays")) {
    RelayDescriptor d;
    d.relay_id = r.at("id").get<RelayId>();
    d.bandwidth_kibps = r.at("bandwidth_kibps").get<double>();
    d.capacity_kibps = r.value("capacity_kibps", 0.0);
    for (const auto& f : r.value("flags", nlohmann::json::array())) {
      const auto flag = f.get<std::string>();
      if (flag == "guard") d.is_guard = true;
      else if (flag == "exit") d.is_exit = true;
      else throw std::invalid_argument("unknown relay flag: " + flag);
    }
    d.position = {r.at("lat").get<double>(), r.at("lon").get<double>()};
    for (const auto& port : r.value("exit_policy", nlohmann::json::array()))
      d.exit_policy.insert(port.get<Port>());
    t.relays.push_back(std::move(d));
  }
  auto endpoints = [](const nlohmann::json& a, EndpointKind kind) {
    std::vector<EndpointDescriptor> v;
    for (const auto& e : a) {
      EndpointDescriptor d;
      d.endpoint_id = e.at("id").get<std::uint32_t>();
      d.kind = kind;
      d.position = {e.at("lat").get<double>(), e.at("lon").get<double>()};
      d.bandwidth_kibps = e.at("bandwidth_kibps").get<double>();
      d.port = e.value("port", Port{80});
      v.push_back(d);
    }
    return v;
  };
  t.clients = endpoints(j.at("clients"), EndpointKind::client);
  t.servers = endpoints(j.at("servers"), EndpointKind::server);
  t.validate();
  return t;
}

inline Topology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open topology file: " + path);
  return topology_from_json(nlohmann::json::parse(in));
}

inline void save_topology(const Topology& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write topology file: " + path);
  out << topology_to_json(t).dump(1) << '\n';
}

}  // namespace circsel
