#pragma once

#include <complex>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace vctl {

enum class NetworkErrc {
  non_radial,
  disconnected,
  duplicate_bus_id,
  missing_slack,
  invalid_reference,
  bad_document,
};

struct NetworkError : std::runtime_error {
  NetworkError(NetworkErrc c, const std::string& what)
      : std::runtime_error(what), code(c) {}
  NetworkErrc code;
};

enum class BusKind { slack, load };

struct ShuntCap {
  double q_mvar = 0.1;
};

struct Bus {
  int id = 0;
  BusKind kind = BusKind::load;
  double p_load_nom = 0.0;  // MW, nominal peak
  double q_load_nom = 0.0;  // MVAr
  double pv_capacity = 0.0; // MW, 0 when no PV installed
  std::optional<ShuntCap> sc;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;  // p.u.
  double x = 0.0;  // p.u.
};

/// Radial feeder. Immutable after load_network(); the solver ordering
/// (parent pointers, leaf-to-root sweep order) is precomputed there.
struct Network {
  std::string name;
  double base_mva = 10.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;

  // Derived topology, indices into `buses`. parent[root] = -1.
  int slack_index = 0;
  std::vector<int> parent;
  std::vector<std::complex<double>> branch_z;  // impedance of branch into bus i
  std::vector<int> order;                      // root-first BFS order

  int bus_count() const { return static_cast<int>(buses.size()); }
  int index_of(int bus_id) const;

  std::vector<int> pv_bus_indices() const;
  std::vector<int> sc_bus_indices() const;
  double total_p_load_nom() const;
  double total_q_load_nom() const;
  double total_pv_capacity() const;
};

/// Net per-unit injections for one 15-minute case (generation positive;
/// the slack entry is ignored by the solver).
struct CaseInjection {
  std::vector<double> p_pu;
  std::vector<double> q_pu;
};

struct VoltageSolution {
  std::vector<double> v_mag;  // p.u., one per bus
  int iterations = 0;
  bool converged = false;
};

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 100;
  double collapse_floor = 0.5;  // p.u.; dipping below aborts with Diverged
};

struct DivergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Network load_network(const nlohmann::json& doc);
Network load_network_file(const std::filesystem::path& path);
nlohmann::json network_to_json(const Network& net);

/// Backward/forward sweep on the radial tree. The slack bus is held at
/// root_voltage; converged means the max per-iteration voltage change
/// fell below opts.tol within opts.max_iter sweeps.
VoltageSolution solve_power_flow(const Network& net, const CaseInjection& inj,
                                 double root_voltage,
                                 const SolverOptions& opts = {});

struct ScSpec;  // devices.hpp

CaseInjection build_case_injection(const Network& net,
                                   const std::vector<double>& bus_p_load_mw,
                                   const std::vector<double>& bus_q_load_mvar,
                                   const std::vector<double>& bus_pv_mw,
                                   const std::vector<int>& sc_states,
                                   const std::vector<ScSpec>& sc_specs);

/// The bundled 141-bus feeder: 140 branches, 22 PV buses at 1.5 MW and
/// 5 shunt capacitors at 0.1 MVAr, placements drawn from a fixed seed.
Network bundled_feeder141();

}  // namespace vctl
