#pragma once

// Shallow-water workload: a first-order finite-volume solver used as the
// correctness oracle for partitioned runs, a distributed variant that moves
// halo data through the network simulator, and the per-step pipeline timing
// of one FPGA.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpgacomm/mesh.hpp"
#include "fpgacomm/netsim.hpp"
#include "fpgacomm/perfmodel.hpp"

namespace fpgacomm::swe {

using mesh::ElementId;
using mesh::Mesh;
using mesh::PartId;
using mesh::Partitioning;

struct State {
  double h = 0;
  double hu = 0;
  double hv = 0;
  friend bool operator==(const State&, const State&) = default;
};

/// Prescribed water depth on Sea edges: mean + amplitude*sin(2*pi*t/period).
struct SeaForcing {
  double mean_depth = 1.0;
  double amplitude = 0.0;
  double period = 1.0;

  double depth(double t) const;
};

struct SolverConfig {
  double g = 9.81;
  double dt = 1e-3;
  SeaForcing sea;
};

/// Non-finite state or other numerical breakdown.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CflViolation : public std::runtime_error {
 public:
  CflViolation(double dt, double limit);
  double dt;
  double limit;
};

/// Largest stable dt for the given state: min over elements of
/// area / (perimeter * max wave speed).
double max_stable_dt(const Mesh& mesh, const std::vector<State>& state, double g);
void check_cfl(const Mesh& mesh, const std::vector<State>& state, const SolverConfig& cfg);

std::vector<State> lake_at_rest(const Mesh& mesh, double depth);
/// Depth h_left for centroids with x < x0, h_right otherwise; fluid at rest.
std::vector<State> dam_break(const Mesh& mesh, double x0, double h_left, double h_right);
double total_mass(const Mesh& mesh, const std::vector<State>& state);

/// One forward Euler step at time t. Fluxes are accumulated in ascending
/// edge id so any partitioned evaluation reproduces it bit for bit.
std::vector<State> step_reference(const Mesh& mesh, const std::vector<State>& state,
                                  const SolverConfig& cfg, double t);

/// Checks the CFL bound once, then advances `steps` steps from t = 0.
std::vector<State> run_reference(const Mesh& mesh, std::vector<State> state,
                                 const SolverConfig& cfg, std::uint64_t steps);

void write_snapshot_csv(std::ostream& out, const std::vector<State>& state);

// ---------------------------------------------------------------------------
// Halo exchange

/// AcclHybrid: PL-issued sends streamed out of the kernel, buffered receives
/// copied out per neighbor. AcclStreamed: receives read the consumer stream
/// in arrival order. HostMpi: host-issued blocking send/recv per neighbor.
enum class HaloScheme { AcclHybrid, AcclStreamed, HostMpi };

std::string to_string(HaloScheme s);
HaloScheme parse_halo_scheme(const std::string& s);

class HaloMismatch : public std::runtime_error {
 public:
  HaloMismatch(std::uint64_t step, PartId partition, PartId neighbor, const std::string& detail);
  std::uint64_t step;
  PartId partition;
  PartId neighbor;
};

enum class Fault {
  None,
  /// The faulty partition sends its halo to one neighbor in reverse order.
  ReverseSendOrder,
  /// The faulty partition leaves the last element out of one halo.
  DropSendElement,
};

struct DistributedOptions {
  HaloScheme scheme = HaloScheme::AcclHybrid;
  Bytes bytes_per_element = 32;
  bool verify_ids = true;
  Fault fault = Fault::None;
  PartId fault_partition = 0;
  std::uint64_t fault_step = 0;
  std::ostream* trace = nullptr;
};

class DistributedSolver {
 public:
  /// `cluster.node_count` is overridden with the number of parts.
  DistributedSolver(const Mesh& mesh, Partitioning parts, netsim::ClusterConfig cluster,
                    SolverConfig cfg, DistributedOptions options = {});

  /// Scatter a global state; checks the CFL bound.
  void set_state(const std::vector<State>& global);
  void step();
  void run(std::uint64_t steps) {
    for (std::uint64_t i = 0; i < steps; ++i) step();
  }
  std::vector<State> gather() const;

  std::uint64_t steps_done() const { return step_; }
  const Partitioning& partitioning() const { return parts_; }
  const netsim::Simulator& simulator() const { return sim_; }

 private:
  void exchange_halos();
  void compute(PartId p);

  const Mesh& mesh_;
  Partitioning parts_;
  SolverConfig cfg_;
  DistributedOptions opt_;
  netsim::Simulator sim_;
  /// Per part: a full-length view holding owned and ghost elements.
  std::vector<std::vector<State>> view_;
  std::vector<std::vector<std::uint32_t>> edges_;  // edges touching each part, ascending
  std::vector<std::size_t> stream_read_;
  std::uint64_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Pipeline timing

struct PipelineConfig {
  double f = 274e6;
  double l_pipe = 120;
  double d_ext = 150;
  double flop_per_element = 360;
};

/// Cycle breakdown of one time step on one FPGA.
struct StepTiming {
  double compute_cycles = 0;  // e_core + d_ext, the slack before halo data is needed
  double arrival_cycles = 0;  // l_comm * f
  double stall_cycles = 0;
  double drain_cycles = 0;    // e_send + e_recv
  double pipe_cycles = 0;
  double total_cycles = 0;

  double stall_fraction() const { return stall_cycles / total_cycles; }
};

StepTiming simulate_timing(const mesh::PartitionStats& stats, const PipelineConfig& cfg,
                           Seconds l_comm);
std::vector<StepTiming> simulate_timing(const mesh::PartitionStats& stats,
                                        const PipelineConfig& cfg,
                                        const std::vector<Seconds>& l_comm_series);

struct HaloExchangeTiming {
  /// Per part and step: (e_send + e_recv)/f plus the time from step start
  /// until the last halo receive completed.
  std::vector<std::vector<Seconds>> l_comm;
  std::vector<std::vector<StepTiming>> timing;
  netsim::SimStats stats;
};

/// Runs `steps` halo exchanges in one simulator without payloads. Step s+1
/// starts when the slowest part finishes step s.
HaloExchangeTiming simulate_halo_exchange(const Partitioning& parts,
                                          const mesh::StatsReport& report,
                                          netsim::ClusterConfig cluster, HaloScheme scheme,
                                          const PipelineConfig& pipeline, Bytes bytes_per_element,
                                          std::uint32_t steps, std::ostream* trace = nullptr);

/// Closed-form communication latency for the worst-case partition under the
/// given halo scheme.
Seconds model_comm_latency(const mesh::WorstCase& worst, HaloScheme scheme,
                           const netsim::ClusterConfig& cluster, const PipelineConfig& pipeline);

AppModelParams model_params(const mesh::WorstCase& worst, const PipelineConfig& pipeline,
                            double e_total);

// ---------------------------------------------------------------------------
// Scaling experiments

enum class ScalingKind { Weak, Strong };

std::string to_string(ScalingKind k);
ScalingKind parse_scaling_kind(const std::string& s);

struct ScalingConfig {
  ScalingKind kind = ScalingKind::Weak;
  std::vector<std::uint32_t> ks{1, 2, 4, 8, 16, 32, 48};
  /// Weak scaling: rectangular cells per part (two elements each).
  std::uint64_t cells_per_part = 3250;
  /// Strong scaling: fixed mesh size in cells.
  std::uint32_t strong_nx = 232;
  std::uint32_t strong_ny = 232;
  mesh::PartitionMethod method = mesh::PartitionMethod::CoordinateBisection;
  HaloScheme scheme = HaloScheme::AcclHybrid;
  PipelineConfig pipeline;
  Bytes bytes_per_element = 32;
  std::uint32_t steps = 3;
};

struct ScalingRow {
  std::uint32_t k = 0;
  std::uint32_t n_max = 0;
  std::uint64_t elements = 0;
  double sim_flops = 0;
  double model_flops = 0;
  double efficiency = 0;
  double stall_fraction = 0;
  double step_cycles = 0;
  Seconds sim_l_comm = 0;
  Seconds model_l_comm = 0;
};

/// Rectangular mesh used for weak scaling at k parts.
Mesh weak_scaling_mesh(std::uint32_t k, std::uint64_t cells_per_part);

std::vector<ScalingRow> run_scaling_experiment(const ScalingConfig& cfg,
                                               const netsim::ClusterConfig& cluster);

void write_scaling_csv(std::ostream& out, const std::vector<ScalingRow>& rows);

}  // namespace fpgacomm::swe
