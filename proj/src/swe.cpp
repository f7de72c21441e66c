#include "fpgacomm/swe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

namespace fpgacomm::swe {

using netsim::CommandDescriptor;
using netsim::CommandHandle;
using netsim::CommandOp;
using netsim::PostOptions;
using netsim::SimTime;
using netsim::Simulator;

double SeaForcing::depth(double t) const {
  return mean_depth + amplitude * std::sin(2.0 * std::numbers::pi * t / period);
}

CflViolation::CflViolation(double dt, double limit)
    : std::runtime_error(fmt::format("time step {} s exceeds the CFL limit {} s", dt, limit)),
      dt(dt),
      limit(limit) {}

namespace {

State operator+(const State& a, const State& b) { return {a.h + b.h, a.hu + b.hu, a.hv + b.hv}; }
State operator-(const State& a, const State& b) { return {a.h - b.h, a.hu - b.hu, a.hv - b.hv}; }
State operator*(double s, const State& a) { return {s * a.h, s * a.hu, s * a.hv}; }

State& operator+=(State& a, const State& b) {
  a.h += b.h;
  a.hu += b.hu;
  a.hv += b.hv;
  return a;
}
State& operator-=(State& a, const State& b) {
  a.h -= b.h;
  a.hu -= b.hu;
  a.hv -= b.hv;
  return a;
}

bool finite(const State& s) {
  return std::isfinite(s.h) && std::isfinite(s.hu) && std::isfinite(s.hv);
}

double wave_speed(const State& s, double g) {
  if (s.h <= 0) return 0;
  return std::hypot(s.hu, s.hv) / s.h + std::sqrt(g * s.h);
}

// Rusanov flux through edge a->b (outward for the left element), already
// multiplied by the edge length. The normal is used unnormalized as (dy, -dx)
// so that a fluid at rest produces exactly cancelling pressure terms.
State rusanov(const mesh::Point& a, const mesh::Point& b, const State& L, const State& R,
              double g) {
  const double nx = b.y - a.y;
  const double ny = -(b.x - a.x);
  const double len = std::hypot(nx, ny);
  auto physical = [&](const State& U, double& speed) {
    const double qn = U.hu * nx + U.hv * ny;
    const double p = 0.5 * g * U.h * U.h;
    if (U.h <= 0) {
      speed = 0;
      return State{qn, p * nx, p * ny};
    }
    speed = std::abs(qn) / (U.h * len) + std::sqrt(g * U.h);
    return State{qn, U.hu * qn / U.h + p * nx, U.hv * qn / U.h + p * ny};
  };
  double sl = 0;
  double sr = 0;
  const State fl = physical(L, sl);
  const State fr = physical(R, sr);
  const double smax = std::max(sl, sr);
  return 0.5 * (fl + fr) - (0.5 * smax * len) * (R - L);
}

State edge_flux(const Mesh& mesh, std::uint32_t edge_id, const std::vector<State>& u,
                const SolverConfig& cfg, double t) {
  const auto& edge = mesh.edges()[edge_id];
  const auto& a = mesh.vertices()[edge.v[0]];
  const auto& b = mesh.vertices()[edge.v[1]];
  const State& L = u[static_cast<std::size_t>(edge.left)];
  if (!edge.boundary()) return rusanov(a, b, L, u[static_cast<std::size_t>(edge.right)], cfg.g);

  if (edge.tag == mesh::BoundaryTag::Sea) {
    const double hg = cfg.sea.depth(t);
    const State ghost = L.h > 0 ? State{hg, L.hu / L.h * hg, L.hv / L.h * hg} : State{hg, 0, 0};
    return rusanov(a, b, L, ghost, cfg.g);
  }
  // Reflective wall: mirror the normal momentum. The mass flux through a wall
  // is zero by construction; set it exactly so closed basins conserve mass.
  const double nx = b.y - a.y;
  const double ny = -(b.x - a.x);
  const double qn = (L.hu * nx + L.hv * ny) / (nx * nx + ny * ny);
  const State ghost{L.h, L.hu - 2.0 * qn * nx, L.hv - 2.0 * qn * ny};
  State f = rusanov(a, b, L, ghost, cfg.g);
  f.h = 0;
  return f;
}

State update(const State& u, const State& res, double dt, double area) {
  const double c = dt / area;
  return State{u.h - c * res.h, u.hu - c * res.hu, u.hv - c * res.hv};
}

void require_finite(const State& s, ElementId e, double t) {
  if (!finite(s))
    throw SolverError(fmt::format("non-finite state in element {} after the step at t = {} s "
                                  "(h = {}, hu = {}, hv = {})",
                                  e, t, s.h, s.hu, s.hv));
}

}  // namespace

double max_stable_dt(const Mesh& mesh, const std::vector<State>& state, double g) {
  double limit = std::numeric_limits<double>::infinity();
  for (ElementId e = 0; e < mesh.element_count(); ++e) {
    const double s = wave_speed(state[e], g);
    if (s > 0) limit = std::min(limit, mesh.area(e) / (mesh.perimeter(e) * s));
  }
  return limit;
}

void check_cfl(const Mesh& mesh, const std::vector<State>& state, const SolverConfig& cfg) {
  if (state.size() != mesh.element_count())
    throw SolverError(fmt::format("state has {} entries for {} elements", state.size(),
                                  mesh.element_count()));
  for (ElementId e = 0; e < state.size(); ++e) require_finite(state[e], e, 0);
  if (!(cfg.dt > 0)) throw CflViolation(cfg.dt, max_stable_dt(mesh, state, cfg.g));
  const double limit = max_stable_dt(mesh, state, cfg.g);
  if (cfg.dt > limit) throw CflViolation(cfg.dt, limit);
}

std::vector<State> lake_at_rest(const Mesh& mesh, double depth) {
  return std::vector<State>(mesh.element_count(), State{depth, 0, 0});
}

std::vector<State> dam_break(const Mesh& mesh, double x0, double h_left, double h_right) {
  std::vector<State> s(mesh.element_count());
  for (ElementId e = 0; e < s.size(); ++e)
    s[e].h = mesh.centroid(e).x < x0 ? h_left : h_right;
  return s;
}

double total_mass(const Mesh& mesh, const std::vector<State>& state) {
  double m = 0;
  for (ElementId e = 0; e < state.size(); ++e) m += state[e].h * mesh.area(e);
  return m;
}

std::vector<State> step_reference(const Mesh& mesh, const std::vector<State>& state,
                                  const SolverConfig& cfg, double t) {
  std::vector<State> res(state.size());
  const auto& edges = mesh.edges();
  for (std::uint32_t i = 0; i < edges.size(); ++i) {
    const State f = edge_flux(mesh, i, state, cfg, t);
    res[static_cast<std::size_t>(edges[i].left)] += f;
    if (!edges[i].boundary()) res[static_cast<std::size_t>(edges[i].right)] -= f;
  }
  std::vector<State> next(state.size());
  for (ElementId e = 0; e < state.size(); ++e) {
    next[e] = update(state[e], res[e], cfg.dt, mesh.area(e));
    require_finite(next[e], e, t);
  }
  return next;
}

std::vector<State> run_reference(const Mesh& mesh, std::vector<State> state,
                                 const SolverConfig& cfg, std::uint64_t steps) {
  check_cfl(mesh, state, cfg);
  for (std::uint64_t i = 0; i < steps; ++i)
    state = step_reference(mesh, state, cfg, static_cast<double>(i) * cfg.dt);
  return state;
}

void write_snapshot_csv(std::ostream& out, const std::vector<State>& state) {
  out << "element,h,hu,hv\n";
  for (std::size_t e = 0; e < state.size(); ++e)
    out << fmt::format("{},{},{},{}\n", e, state[e].h, state[e].hu, state[e].hv);
}

// ---------------------------------------------------------------------------

std::string to_string(HaloScheme s) {
  switch (s) {
    case HaloScheme::AcclHybrid: return "accl-hybrid";
    case HaloScheme::AcclStreamed: return "accl-streamed";
    case HaloScheme::HostMpi: return "host-mpi";
  }
  return "?";
}

HaloScheme parse_halo_scheme(const std::string& s) {
  if (s == "accl-hybrid") return HaloScheme::AcclHybrid;
  if (s == "accl-streamed") return HaloScheme::AcclStreamed;
  if (s == "host-mpi") return HaloScheme::HostMpi;
  throw std::invalid_argument(fmt::format("unknown halo scheme '{}'", s));
}

HaloMismatch::HaloMismatch(std::uint64_t step, PartId partition, PartId neighbor,
                           const std::string& detail)
    : std::runtime_error(fmt::format("halo mismatch at step {} on partition {} from neighbor {}: {}",
                                     step, partition, neighbor, detail)),
      step(step),
      partition(partition),
      neighbor(neighbor) {}

namespace {

using PayloadFn =
    std::function<std::shared_ptr<const std::vector<std::byte>>(PartId, std::size_t)>;

/// Posts one halo exchange for every part and returns the receive handles,
/// indexed [part][halo].
std::vector<std::vector<CommandHandle>> post_exchange(Simulator& sim, const Partitioning& parts,
                                                      HaloScheme scheme, Bytes bpe,
                                                      netsim::Tag tag, SimTime at,
                                                      const PayloadFn& payload) {
  const DataPath recv_path =
      scheme == HaloScheme::AcclStreamed ? DataPath::Streamed : DataPath::Buffered;
  const Scheduling origin = scheme == HaloScheme::HostMpi ? Scheduling::Host : Scheduling::PL;
  std::vector<std::vector<CommandHandle>> recvs(parts.parts);
  for (PartId p = 0; p < parts.parts; ++p) {
    const auto& halos = parts.halos[p];
    auto send_cmd = [&](std::size_t i) {
      auto data = payload ? payload(p, i) : nullptr;
      const Bytes size = data ? data->size() : halos[i].send.size() * bpe;
      return CommandDescriptor{.op = CommandOp::Send,
                               .peer = halos[i].neighbor,
                               .tag = tag,
                               .size = size,
                               .path = recv_path,
                               .issue_origin = origin,
                               .payload = std::move(data)};
    };
    auto recv_cmd = [&](std::size_t i) {
      return CommandDescriptor{.op = CommandOp::Recv,
                               .peer = halos[i].neighbor,
                               .tag = tag,
                               .size = halos[i].recv.size() * bpe,
                               .path = recv_path,
                               .issue_origin = origin};
    };
    if (scheme == HaloScheme::HostMpi) {
      for (std::size_t i = 0; i < halos.size(); ++i) {
        const auto lane = static_cast<std::uint32_t>(i);
        sim.post_command(p, send_cmd(i), PostOptions{.lane = lane, .blocking = true, .at = at});
        recvs[p].push_back(
            sim.post_command(p, recv_cmd(i), PostOptions{.lane = lane, .blocking = true, .at = at}));
      }
    } else {
      for (std::size_t i = 0; i < halos.size(); ++i)
        sim.post_command(p, send_cmd(i), PostOptions{.lane = 0, .blocking = false, .at = at});
      for (std::size_t i = 0; i < halos.size(); ++i)
        recvs[p].push_back(
            sim.post_command(p, recv_cmd(i), PostOptions{.lane = 0, .blocking = true, .at = at}));
    }
  }
  return recvs;
}

void add_rx_buffers(Simulator& sim, const Partitioning& parts, HaloScheme scheme) {
  if (scheme == HaloScheme::AcclStreamed) return;
  for (PartId p = 0; p < parts.parts; ++p)
    for (const auto& h : parts.halos[p]) sim.add_rx_buffer(p, h.neighbor);
}

constexpr Bytes kRecordBytes = 32;

void encode(std::vector<std::byte>& out, std::size_t at, std::uint64_t id, const State& s) {
  std::memcpy(out.data() + at, &id, 8);
  std::memcpy(out.data() + at + 8, &s.h, 8);
  std::memcpy(out.data() + at + 16, &s.hu, 8);
  std::memcpy(out.data() + at + 24, &s.hv, 8);
}

std::pair<std::uint64_t, State> decode(const std::byte* in) {
  std::uint64_t id = 0;
  State s;
  std::memcpy(&id, in, 8);
  std::memcpy(&s.h, in + 8, 8);
  std::memcpy(&s.hu, in + 16, 8);
  std::memcpy(&s.hv, in + 24, 8);
  return {id, s};
}

}  // namespace

DistributedSolver::DistributedSolver(const Mesh& mesh, Partitioning parts,
                                     netsim::ClusterConfig cluster, SolverConfig cfg,
                                     DistributedOptions options)
    : mesh_(mesh),
      parts_(std::move(parts)),
      cfg_(cfg),
      opt_(options),
      sim_([&] {
        cluster.node_count = parts_.parts;
        return cluster;
      }()) {
  if (parts_.assignment.size() != mesh_.element_count())
    throw netsim::ConfigError("partitioning does not belong to this mesh");
  if (opt_.bytes_per_element < kRecordBytes)
    throw netsim::ConfigError(fmt::format("halo records need at least {} bytes per element",
                                          kRecordBytes));
  sim_.set_trace(opt_.trace);
  add_rx_buffers(sim_, parts_, opt_.scheme);
  view_.assign(parts_.parts, {});
  edges_.assign(parts_.parts, {});
  stream_read_.assign(parts_.parts, 0);
  const auto& edges = mesh_.edges();
  for (std::uint32_t i = 0; i < edges.size(); ++i) {
    const PartId pl = parts_.assignment[static_cast<std::size_t>(edges[i].left)];
    edges_[pl].push_back(i);
    if (!edges[i].boundary()) {
      const PartId pr = parts_.assignment[static_cast<std::size_t>(edges[i].right)];
      if (pr != pl) edges_[pr].push_back(i);
    }
  }
}

void DistributedSolver::set_state(const std::vector<State>& global) {
  check_cfl(mesh_, global, cfg_);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (PartId p = 0; p < parts_.parts; ++p) {
    view_[p].assign(mesh_.element_count(), State{nan, nan, nan});
    for (auto e : parts_.elements[p]) view_[p][e] = global[e];
  }
}

std::vector<State> DistributedSolver::gather() const {
  std::vector<State> out(mesh_.element_count());
  for (PartId p = 0; p < parts_.parts; ++p)
    for (auto e : parts_.elements[p]) out[e] = view_[p][e];
  return out;
}

void DistributedSolver::step() {
  if (view_.empty() || view_[0].empty()) throw SolverError("distributed solver has no state");
  exchange_halos();
  for (PartId p = 0; p < parts_.parts; ++p) compute(p);
  ++step_;
}

void DistributedSolver::compute(PartId p) {
  const double t = static_cast<double>(step_) * cfg_.dt;
  auto& u = view_[p];
  std::vector<State> res(mesh_.element_count());
  const auto& edges = mesh_.edges();
  for (auto i : edges_[p]) {
    const State f = edge_flux(mesh_, i, u, cfg_, t);
    const auto l = static_cast<std::size_t>(edges[i].left);
    if (parts_.assignment[l] == p) res[l] += f;
    if (!edges[i].boundary()) {
      const auto r = static_cast<std::size_t>(edges[i].right);
      if (parts_.assignment[r] == p) res[r] -= f;
    }
  }
  std::vector<State> next(parts_.elements[p].size());
  for (std::size_t j = 0; j < next.size(); ++j) {
    const ElementId e = parts_.elements[p][j];
    next[j] = update(u[e], res[e], cfg_.dt, mesh_.area(e));
    require_finite(next[j], e, t);
  }
  for (std::size_t j = 0; j < next.size(); ++j) u[parts_.elements[p][j]] = next[j];
}

void DistributedSolver::exchange_halos() {
  const Bytes bpe = opt_.bytes_per_element;
  const bool faulty_step = opt_.fault != Fault::None && step_ == opt_.fault_step;
  auto payload = [&](PartId p, std::size_t i) {
    std::vector<ElementId> send = parts_.halos[p][i].send;
    if (faulty_step && p == opt_.fault_partition && i == 0) {
      if (opt_.fault == Fault::ReverseSendOrder) std::reverse(send.begin(), send.end());
      if (opt_.fault == Fault::DropSendElement && !send.empty()) send.pop_back();
    }
    auto data = std::make_shared<std::vector<std::byte>>(send.size() * bpe);
    for (std::size_t j = 0; j < send.size(); ++j) encode(*data, j * bpe, send[j], view_[p][send[j]]);
    return std::shared_ptr<const std::vector<std::byte>>(std::move(data));
  };

  std::vector<std::vector<CommandHandle>> recvs;
  netsim::SimStats stats;
  try {
    recvs = post_exchange(sim_, parts_, opt_.scheme, bpe, static_cast<netsim::Tag>(step_),
                          sim_.now(), payload);
    stats = sim_.run_until();
  } catch (const netsim::RecvMismatch& m) {
    throw HaloMismatch(step_, m.node, m.peer,
                       fmt::format("expected {} bytes, received {}", m.expected, m.actual));
  }
  if (stats.deadlocked()) {
    const auto& u = stats.unmatched.front();
    throw HaloMismatch(step_, u.node, u.peer, "halo exchange did not complete");
  }

  for (PartId p = 0; p < parts_.parts; ++p) {
    const auto& halos = parts_.halos[p];
    for (std::size_t i = 0; i < halos.size(); ++i) {
      const auto& h = halos[i];
      const std::byte* data = nullptr;
      if (opt_.scheme == HaloScheme::AcclStreamed) {
        // Records are taken off the consumer stream in arrival order and
        // assigned to ghosts in the agreed receive order.
        const auto& stream = sim_.consumer_stream_bytes(p);
        if (stream.size() < stream_read_[p] + h.recv.size() * bpe)
          throw HaloMismatch(step_, p, h.neighbor, "consumer stream ran dry");
        data = stream.data() + stream_read_[p];
        stream_read_[p] += h.recv.size() * bpe;
      } else {
        const auto& bytes = sim_.received_data(recvs[p][i]);
        if (bytes.size() != h.recv.size() * bpe)
          throw HaloMismatch(step_, p, h.neighbor,
                             fmt::format("expected {} bytes, received {}", h.recv.size() * bpe,
                                         bytes.size()));
        data = bytes.data();
      }
      for (std::size_t j = 0; j < h.recv.size(); ++j) {
        const auto [id, s] = decode(data + j * bpe);
        if (opt_.verify_ids && id != h.recv[j])
          throw HaloMismatch(step_, p, h.neighbor,
                             fmt::format("slot {} expected element {}, got {}", j, h.recv[j], id));
        view_[p][h.recv[j]] = s;
      }
    }
  }
}

// ---------------------------------------------------------------------------

StepTiming simulate_timing(const mesh::PartitionStats& stats, const PipelineConfig& cfg,
                           Seconds l_comm) {
  // Same operand order as the closed-form model so both agree bit for bit.
  StepTiming t;
  const double slack = static_cast<double>(stats.e_core) + cfg.d_ext;
  const double arrival = l_comm * cfg.f;
  t.compute_cycles = slack;
  t.arrival_cycles = arrival;
  t.stall_cycles = std::max(0.0, arrival - slack);
  t.drain_cycles = static_cast<double>(stats.e_send) + static_cast<double>(stats.e_recv);
  t.pipe_cycles = cfg.l_pipe;
  t.total_cycles = std::max(slack, arrival) + static_cast<double>(stats.e_send) +
                   static_cast<double>(stats.e_recv) + cfg.l_pipe;
  return t;
}

std::vector<StepTiming> simulate_timing(const mesh::PartitionStats& stats,
                                        const PipelineConfig& cfg,
                                        const std::vector<Seconds>& l_comm_series) {
  std::vector<StepTiming> out;
  out.reserve(l_comm_series.size());
  for (auto l : l_comm_series) out.push_back(simulate_timing(stats, cfg, l));
  return out;
}

HaloExchangeTiming simulate_halo_exchange(const Partitioning& parts,
                                          const mesh::StatsReport& report,
                                          netsim::ClusterConfig cluster, HaloScheme scheme,
                                          const PipelineConfig& pipeline, Bytes bytes_per_element,
                                          std::uint32_t steps, std::ostream* trace) {
  cluster.node_count = std::max<std::uint32_t>(parts.parts, 2);
  Simulator sim(cluster);
  sim.set_trace(trace);
  add_rx_buffers(sim, parts, scheme);

  HaloExchangeTiming out;
  out.l_comm.assign(parts.parts, {});
  out.timing.assign(parts.parts, {});
  SimTime start;
  for (std::uint32_t s = 0; s < steps; ++s) {
    const auto recvs = post_exchange(sim, parts, scheme, bytes_per_element,
                                     static_cast<netsim::Tag>(s), start, nullptr);
    out.stats = sim.run_until();
    if (out.stats.deadlocked()) throw netsim::SimulationError("halo exchange did not complete");
    double slowest = 0;
    for (PartId p = 0; p < parts.parts; ++p) {
      const auto& ps = report.parts[p];
      Seconds l = 0;
      if (!recvs[p].empty()) {
        SimTime last = start;
        for (auto h : recvs[p]) last = std::max(last, *sim.record(h).completed);
        l = static_cast<double>(ps.e_send + ps.e_recv) / pipeline.f + (last - start).seconds();
      }
      out.l_comm[p].push_back(l);
      out.timing[p].push_back(simulate_timing(ps, pipeline, l));
      slowest = std::max(slowest, out.timing[p].back().total_cycles);
    }
    start = std::max(sim.now(), start + SimTime::from_seconds(slowest / pipeline.f));
  }
  return out;
}

AppModelParams model_params(const mesh::WorstCase& worst, const PipelineConfig& pipeline,
                            double e_total) {
  AppModelParams p;
  p.f = pipeline.f;
  p.flop_per_element = pipeline.flop_per_element;
  p.e_total = e_total;
  p.e_core = static_cast<double>(worst.max_e_core);
  p.d_ext = pipeline.d_ext;
  p.e_send = static_cast<double>(worst.max_e_send);
  p.e_recv = static_cast<double>(worst.max_e_recv);
  p.l_pipe = pipeline.l_pipe;
  p.n_max = worst.n_max;
  return p;
}

Seconds model_comm_latency(const mesh::WorstCase& worst, HaloScheme scheme,
                           const netsim::ClusterConfig& cluster, const PipelineConfig& pipeline) {
  if (worst.n_max == 0) return 0;
  AppModelParams p = model_params(worst, pipeline, 0);
  const auto link = netsim::model_link(cluster);
  const Bytes largest = worst.largest_halo_bytes;
  switch (scheme) {
    case HaloScheme::AcclHybrid:
      p.l_pingping = perfmodel::transfer_latency(largest, {DataPath::Streamed, Scheduling::PL},
                                                 link, cluster.sched, cluster.mem);
      return perfmodel::comm_latency_model(p, cluster.sched.pl_command_latency,
                                           perfmodel::copy_latency(largest, cluster.mem));
    case HaloScheme::AcclStreamed:
      p.l_pingping = perfmodel::transfer_latency(largest, {DataPath::Streamed, Scheduling::PL},
                                                 link, cluster.sched, cluster.mem);
      return perfmodel::comm_latency_model(p, cluster.sched.pl_command_latency, 0.0);
    case HaloScheme::HostMpi:
      // Every neighbor runs its own blocking send/recv pair concurrently, so
      // the scheduling and copy costs are already inside one ping-ping.
      p.l_pingping = perfmodel::transfer_latency(largest, {DataPath::Buffered, Scheduling::Host},
                                                 link, cluster.sched, cluster.mem);
      return perfmodel::comm_latency_model(p, 0.0, 0.0);
  }
  return 0;
}

// ---------------------------------------------------------------------------

std::string to_string(ScalingKind k) { return k == ScalingKind::Weak ? "weak" : "strong"; }

ScalingKind parse_scaling_kind(const std::string& s) {
  if (s == "weak") return ScalingKind::Weak;
  if (s == "strong") return ScalingKind::Strong;
  throw std::invalid_argument(fmt::format("unknown scaling kind '{}'", s));
}

Mesh weak_scaling_mesh(std::uint32_t k, std::uint64_t cells_per_part) {
  const double cells = static_cast<double>(cells_per_part) * k;
  const auto nx = static_cast<std::uint32_t>(std::max(1.0, std::round(std::sqrt(cells))));
  const auto ny = static_cast<std::uint32_t>(std::max(1.0, std::round(cells / nx)));
  return mesh::generate_rect_mesh(nx, ny, mesh::Side::West);
}

namespace {

ScalingRow scaling_point(const Mesh& m, std::uint32_t k, const ScalingConfig& cfg,
                         const netsim::ClusterConfig& cluster) {
  const auto parts = mesh::partition(m, k, cfg.method);
  const auto report = mesh::partition_stats(parts, m, cfg.bytes_per_element, cfg.pipeline.d_ext);
  const auto timing = simulate_halo_exchange(parts, report, cluster, cfg.scheme, cfg.pipeline,
                                             cfg.bytes_per_element, std::max(cfg.steps, 1u));
  ScalingRow row;
  row.k = k;
  row.n_max = report.worst.n_max;
  row.elements = m.element_count();
  const double e_total = static_cast<double>(m.element_count());
  for (PartId p = 0; p < k; ++p) {
    const auto& last = timing.timing[p].back();
    if (last.total_cycles > row.step_cycles) {
      row.step_cycles = last.total_cycles;
      row.stall_fraction = last.stall_fraction();
    }
    row.sim_l_comm = std::max(row.sim_l_comm, timing.l_comm[p].back());
  }
  row.sim_flops = cfg.pipeline.f * (cfg.pipeline.flop_per_element * e_total) / row.step_cycles;
  const auto params = model_params(report.worst, cfg.pipeline, e_total);
  row.model_l_comm = model_comm_latency(report.worst, cfg.scheme, cluster, cfg.pipeline);
  row.model_flops = perfmodel::app_throughput_model(params, row.model_l_comm);
  return row;
}

}  // namespace

std::vector<ScalingRow> run_scaling_experiment(const ScalingConfig& cfg,
                                               const netsim::ClusterConfig& cluster) {
  if (cfg.ks.empty()) throw netsim::ConfigError("scaling experiment needs at least one k");
  std::optional<Mesh> fixed;
  if (cfg.kind == ScalingKind::Strong)
    fixed = mesh::generate_rect_mesh(cfg.strong_nx, cfg.strong_ny, mesh::Side::West);
  auto point = [&](std::uint32_t k) {
    if (fixed) return scaling_point(*fixed, k, cfg, cluster);
    return scaling_point(weak_scaling_mesh(k, cfg.cells_per_part), k, cfg, cluster);
  };

  const ScalingRow base = point(1);
  std::vector<ScalingRow> rows;
  for (auto k : cfg.ks) {
    if (k == 0) throw netsim::ConfigError("scaling experiment k must be >= 1");
    ScalingRow row = k == 1 ? base : point(k);
    row.efficiency = row.sim_flops / (static_cast<double>(k) * base.sim_flops);
    rows.push_back(row);
  }
  return rows;
}

void write_scaling_csv(std::ostream& out, const std::vector<ScalingRow>& rows) {
  out << "k,n_max,sim_flops,model_flops,efficiency,stall_fraction\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{},{},{},{}\n", r.k, r.n_max, r.sim_flops, r.model_flops,
                       r.efficiency, r.stall_fraction);
}

}  // namespace fpgacomm::swe
