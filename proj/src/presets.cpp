#include "fpgacomm/presets.hpp"

#include <fmt/format.h>

namespace fpgacomm::presets {

namespace {

using netsim::ClusterConfig;
using netsim::Topology;
using netsim::TransportKind;

ClusterConfig base_cluster(Topology topology) {
  ClusterConfig c;
  c.topology = topology;
  c.link.raw_bandwidth = 12.5e9;  // 100 Gbit/s QSFP28
  c.link.base_latency = 1.8e-6;
  c.link.per_hop_latency = 1.0e-6;
  c.link.switch_hops = topology == Topology::Switched ? 1 : 0;
  c.sched.host_invoke_latency = 30e-6;
  c.sched.pl_command_latency = 0.3e-6;
  c.mem.mem_bandwidth = 14e9;
  c.mem.copy_setup_latency = 0.5e-6;
  c.transport.kind = TransportKind::Datagram;
  c.transport.mtu_payload = 1472;
  c.transport.frame_overhead = 66;
  c.link.mtu_payload = c.transport.mtu_payload;
  c.link.frame_overhead = c.transport.frame_overhead;
  return c;
}

ClusterConfig tcp_cluster(Bytes mss, std::uint32_t scaling) {
  ClusterConfig c = base_cluster(Topology::Switched);
  c.transport.kind = TransportKind::Windowed;
  c.transport.mss = mss;
  c.transport.mtu_payload = mss;
  c.transport.frame_overhead = 78;
  c.transport.window_bytes = 49152;
  c.transport.window_scaling = scaling;
  // Acks travel back over the same switched path.
  c.transport.ack_latency = c.link.base_latency + c.link.per_hop_latency;
  c.link.mtu_payload = mss;
  c.link.frame_overhead = 78;
  return c;
}

swe::PipelineConfig pipeline(double f) {
  swe::PipelineConfig p;
  p.f = f;
  return p;
}

std::vector<Preset> build() {
  std::vector<Preset> out;
  const TransferMode streamed_pl{DataPath::Streamed, Scheduling::PL};
  const TransferMode buffered_host{DataPath::Buffered, Scheduling::Host};

  out.push_back(Preset{
      .name = "direct-udp-pl",
      .notes = "Point-to-point 100G links, UDP framing, commands issued from PL. "
               "PL command latency 0.3 us is a calibration choice that keeps small-message "
               "latency below 3 us.",
      .cluster = base_cluster(Topology::Direct),
      .mode = streamed_pl,
      .scheme = swe::HaloScheme::AcclHybrid,
      .pipeline = pipeline(274e6)});

  out.push_back(Preset{
      .name = "switch-udp-pl",
      .notes = "As direct-udp-pl but through one switch hop adding about 1 us.",
      .cluster = base_cluster(Topology::Switched),
      .mode = streamed_pl,
      .scheme = swe::HaloScheme::AcclHybrid,
      .pipeline = pipeline(274e6)});

  out.push_back(Preset{
      .name = "switch-tcp-pl",
      .notes = "TCP through one switch hop, 1460 B MSS, 48 KiB window without scaling: "
               "window/RTT caps large messages near 8.5 GB/s.",
      .cluster = tcp_cluster(1460, 1),
      .mode = streamed_pl,
      .scheme = swe::HaloScheme::AcclHybrid,
      .pipeline = pipeline(252e6)});

  out.push_back(Preset{
      .name = "switch-tcp-pl-optimized",
      .notes = "TCP with window scaling x16 and jumbo frames (8960 B MSS): link goodput "
               "near 12.3 GB/s becomes the limit.",
      .cluster = tcp_cluster(8960, 16),
      .mode = streamed_pl,
      .scheme = swe::HaloScheme::AcclHybrid,
      .pipeline = pipeline(252e6)});

  out.push_back(Preset{
      .name = "buffered-host",
      .notes = "Direct UDP links with buffered receives and host-issued commands; each "
               "command costs one kernel invocation of about 30 us.",
      .cluster = base_cluster(Topology::Direct),
      .mode = buffered_host,
      .scheme = swe::HaloScheme::HostMpi,
      .pipeline = pipeline(274e6)});

  ClusterConfig mpi = base_cluster(Topology::Switched);
  mpi.link.raw_bandwidth = 10e9;
  // PCIe transfers to and from the host, the MPI stack and the InfiniBand
  // fabric lumped into one fixed latency: about 115 us for 64 B in total.
  mpi.link.base_latency = 54e-6;
  mpi.transport.mtu_payload = 4096;
  mpi.transport.frame_overhead = 30;
  mpi.link.mtu_payload = 4096;
  mpi.link.frame_overhead = 30;
  out.push_back(Preset{
      .name = "mpi-pcie-baseline",
      .notes = "Host MPI over InfiniBand with PCIe staging: small messages take more than "
               "110 us end to end.",
      .cluster = mpi,
      .mode = buffered_host,
      .scheme = swe::HaloScheme::HostMpi,
      .pipeline = pipeline(256e6)});
  return out;
}

}  // namespace

const std::vector<Preset>& all() {
  static const std::vector<Preset> presets = build();
  return presets;
}

const Preset& find(const std::string& name) {
  for (const auto& p : all())
    if (p.name == name) return p;
  std::string names;
  for (const auto& p : all()) names += (names.empty() ? "" : ", ") + p.name;
  throw netsim::ConfigError(fmt::format("unknown preset '{}' (known: {})", name, names));
}

}  // namespace fpgacomm::presets
