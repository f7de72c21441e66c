#include "fpgacomm/beff.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

namespace fpgacomm::beff {

using netsim::CommandDescriptor;
using netsim::CommandHandle;
using netsim::CommandOp;
using netsim::NodeId;
using netsim::PostOptions;
using netsim::SimTime;

std::vector<Bytes> default_message_sizes() {
  std::vector<Bytes> sizes;
  for (Bytes s = 64; s <= (Bytes{4} << 20); s *= 2) sizes.push_back(s);
  return sizes;
}

std::vector<NodeId> ring_neighbors(NodeId node, std::uint32_t n) {
  std::vector<NodeId> out;
  const NodeId next = (node + 1) % n;
  const NodeId prev = (node + n - 1) % n;
  if (next != node) out.push_back(next);
  if (prev != node && prev != next) out.push_back(prev);
  return out;
}

namespace {

void validate(const BeffConfig& cfg) {
  if (cfg.node_count < 2)
    throw netsim::ConfigError(fmt::format("b_eff needs at least 2 nodes, got {}", cfg.node_count));
  if (cfg.repetitions < 1) throw netsim::ConfigError("b_eff needs at least one repetition");
  if (cfg.message_sizes.empty()) throw netsim::ConfigError("b_eff needs at least one message size");
  for (std::size_t i = 1; i < cfg.message_sizes.size(); ++i)
    if (cfg.message_sizes[i] <= cfg.message_sizes[i - 1])
      throw netsim::ConfigError("b_eff message sizes must be strictly increasing");
}

/// Mean round latency for one message size.
Seconds measure(const BeffConfig& cfg, const netsim::ClusterConfig& cluster, Bytes size,
                BeffResult& result, std::ostream* trace) {
  netsim::Simulator sim(cluster);
  sim.set_trace(trace);
  const auto n = cfg.node_count;
  for (NodeId i = 0; i < n; ++i)
    for (auto j : ring_neighbors(i, n)) sim.add_rx_buffer(i, j);

  const bool buffered = cfg.mode.path == DataPath::Buffered;
  Seconds total = 0;
  SimTime start;
  for (std::uint32_t rep = 0; rep < cfg.repetitions; ++rep) {
    std::vector<CommandHandle> recvs;
    for (NodeId i = 0; i < n; ++i) {
      const auto nbrs = ring_neighbors(i, n);
      for (std::uint32_t j = 0; j < nbrs.size(); ++j) {
        CommandDescriptor send{.op = CommandOp::Send,
                               .peer = nbrs[j],
                               .tag = rep,
                               .size = size,
                               .path = cfg.mode.path,
                               .issue_origin = cfg.mode.scheduling};
        CommandDescriptor recv = send;
        recv.op = CommandOp::Recv;
        // Buffered: a blocking send followed by the receive that copies the
        // neighbor's message out. Streamed: the receive waits on its own lane.
        const std::uint32_t send_lane = buffered ? j : 2 * j;
        const std::uint32_t recv_lane = buffered ? j : 2 * j + 1;
        sim.post_command(i, send, PostOptions{.lane = send_lane, .blocking = true, .at = start});
        recvs.push_back(
            sim.post_command(i, recv, PostOptions{.lane = recv_lane, .blocking = true, .at = start}));
      }
    }
    const auto stats = sim.run_until();
    if (stats.deadlocked())
      throw netsim::SimulationError(fmt::format("b_eff round {} for {} B did not complete", rep, size));
    SimTime last = start;
    for (auto h : recvs) last = std::max(last, *sim.record(h).completed);
    total += (last - start).seconds();
    result.max_inflight = std::max(result.max_inflight, stats.max_inflight);
    start = sim.now();
  }
  result.messages += sim.message_count();
  return total / cfg.repetitions;
}

}  // namespace

BeffResult run_beff(const BeffConfig& cfg, const netsim::ClusterConfig& cluster,
                    std::ostream* trace) {
  validate(cfg);
  netsim::ClusterConfig c = cluster;
  c.node_count = cfg.node_count;
  BeffResult result;
  for (auto size : cfg.message_sizes) {
    BeffRow row;
    row.size = size;
    row.latency = measure(cfg, c, size, result, trace);
    const double links = static_cast<double>(cfg.node_count) *
                         static_cast<double>(ring_neighbors(0, cfg.node_count).size());
    row.link_throughput = static_cast<double>(size) / row.latency;
    row.throughput = links * row.link_throughput;
    row.model_latency = model_latency(size, cfg.mode, c);
    row.rel_error = std::abs(row.latency - row.model_latency) / row.model_latency;
    result.rows.push_back(row);
  }
  result.b_eff = beff_aggregate(result.rows);
  return result;
}

BytesPerSecond beff_aggregate(const std::vector<BeffRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("b_eff aggregate of an empty table");
  double sum = 0;
  for (const auto& r : rows) sum += r.throughput;
  return sum / static_cast<double>(rows.size());
}

namespace {

Bytes whole_segment_window(const netsim::TransportConfig& t) {
  return t.effective_window() / t.mss * t.mss;
}

Seconds propagation(const LinkParams& link) {
  return link.base_latency + static_cast<double>(link.switch_hops) * link.per_hop_latency;
}

}  // namespace

Seconds windowed_rtt(const netsim::ClusterConfig& cluster) {
  const auto link = netsim::model_link(cluster);
  const auto& t = cluster.transport;
  return static_cast<double>(t.mss + t.frame_overhead) / link.raw_bandwidth + propagation(link) +
         t.ack_latency;
}

BytesPerSecond transport_throughput_bound(const netsim::ClusterConfig& cluster) {
  const auto link = netsim::model_link(cluster);
  const auto goodput = perfmodel::link_goodput(link);
  if (cluster.transport.kind == netsim::TransportKind::Datagram) return goodput;
  return perfmodel::windowed_throughput_cap(
      static_cast<double>(whole_segment_window(cluster.transport)), windowed_rtt(cluster), goodput);
}

Seconds model_latency(Bytes size, TransferMode mode, const netsim::ClusterConfig& cluster) {
  const auto link = netsim::model_link(cluster);
  const Seconds base = perfmodel::transfer_latency(size, mode, link, cluster.sched, cluster.mem);
  if (cluster.transport.kind == netsim::TransportKind::Datagram) return base;

  // Windowed: when the window is the bottleneck, every full window costs one
  // round trip and the remainder goes out at line rate.
  const Bytes window = whole_segment_window(cluster.transport);
  Seconds l_c = perfmodel::link_latency(size, link);
  const bool window_bound =
      transport_throughput_bound(cluster) < perfmodel::link_goodput(link);
  // A message no larger than the window fits in flight even with a short
  // last segment.
  if (window_bound && size > cluster.transport.effective_window()) {
    const Bytes rounds = (size - 1) / window;
    l_c = static_cast<double>(rounds) * windowed_rtt(cluster) +
          perfmodel::link_latency(size - rounds * window, link);
  }
  Seconds l = base - perfmodel::link_latency(size, link) + l_c;
  // A blocking buffered send only releases its lane once the last segment is
  // acknowledged, which delays the receive command behind it.
  if (mode.path == DataPath::Buffered) l += cluster.transport.ack_latency;
  return l;
}

void write_beff_csv(std::ostream& out, const BeffResult& result) {
  out << "size_bytes,latency_s,throughput_Bps,model_latency_s,rel_error\n";
  for (const auto& r : result.rows)
    out << fmt::format("{},{},{},{},{}\n", r.size, r.latency, r.throughput, r.model_latency,
                       r.rel_error);
}

void write_model_error_csv(std::ostream& out, const BeffResult& result) {
  out << "size_bytes,sim_latency_s,model_latency_s,abs_error_s,rel_error\n";
  for (const auto& r : result.rows)
    out << fmt::format("{},{},{},{},{}\n", r.size, r.latency, r.model_latency,
                       std::abs(r.latency - r.model_latency), r.rel_error);
}

}  // namespace fpgacomm::beff
