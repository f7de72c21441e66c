#include "fpgacomm/perfmodel.hpp"

#include <algorithm>
#include <limits>

namespace fpgacomm::perfmodel {

std::uint64_t frame_count(Bytes message_size, Bytes mtu_payload) {
  if (message_size == 0) return 1;
  return (message_size + mtu_payload - 1) / mtu_payload;
}

Bytes wire_bytes(Bytes message_size, Bytes mtu_payload, Bytes frame_overhead) {
  return message_size + frame_count(message_size, mtu_payload) * frame_overhead;
}

Seconds link_latency(Bytes message_size, const LinkParams& link) {
  const auto wire = wire_bytes(message_size, link.mtu_payload, link.frame_overhead);
  return link.base_latency + static_cast<double>(link.switch_hops) * link.per_hop_latency +
         static_cast<double>(wire) / link.raw_bandwidth;
}

Seconds copy_latency(Bytes message_size, const MemoryParams& mem) {
  return mem.copy_setup_latency + static_cast<double>(message_size) / mem.mem_bandwidth;
}

Seconds transfer_latency(Bytes message_size, TransferMode mode, const LinkParams& link,
                         const SchedulingParams& sched, const MemoryParams& mem) {
  const Seconds l_k = sched.command_latency(mode.scheduling);
  const Seconds l_c = link_latency(message_size, link);
  if (mode.path == DataPath::Streamed) return l_k + l_c;
  return 2.0 * l_k + copy_latency(message_size, mem) + l_c;
}

BytesPerSecond buffered_peak_throughput(BytesPerSecond mem_bw, BytesPerSecond link_bw) {
  return 1.0 / (1.0 / mem_bw + 1.0 / link_bw);
}

BytesPerSecond windowed_throughput_cap(double window_bytes, Seconds rtt,
                                       BytesPerSecond link_goodput) {
  if (window_bytes == std::numeric_limits<double>::infinity()) return link_goodput;
  return std::min(link_goodput, window_bytes / rtt);
}

BytesPerSecond link_goodput(const LinkParams& link) {
  const double payload = static_cast<double>(link.mtu_payload);
  return link.raw_bandwidth * payload / (payload + static_cast<double>(link.frame_overhead));
}

Seconds comm_latency_model(const AppModelParams& p, Seconds command_latency,
                           Seconds copy_latency_per_neighbor) {
  return (p.e_send + p.e_recv) / p.f + 2.0 * p.n_max * command_latency +
         p.n_max * copy_latency_per_neighbor + p.l_pingping;
}

Seconds comm_latency_model(const AppModelParams& p, const SchedulingParams& sched,
                           const MemoryParams& mem, Bytes halo_bytes, Scheduling origin) {
  return comm_latency_model(p, sched.command_latency(origin), copy_latency(halo_bytes, mem));
}

double step_cycles(const AppModelParams& p, Seconds l_comm) {
  const double slack = p.e_core + p.d_ext;
  const double arrival = l_comm * p.f;
  return std::max(slack, arrival) + p.e_send + p.e_recv + p.l_pipe;
}

double app_throughput_model(const AppModelParams& p, Seconds l_comm) {
  const double flop_total = p.flop_per_element * p.e_total;
  return p.f * flop_total / step_cycles(p, l_comm);
}

double stall_fraction(const AppModelParams& p, Seconds l_comm) {
  const double slack = p.e_core + p.d_ext;
  const double arrival = l_comm * p.f;
  const double stall = std::max(0.0, arrival - slack);
  return stall / step_cycles(p, l_comm);
}

}  // namespace fpgacomm::perfmodel
