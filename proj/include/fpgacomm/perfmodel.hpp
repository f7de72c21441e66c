#pragma once

// Closed-form latency and throughput models for FPGA-to-FPGA messaging and
// for the halo-exchanging stencil pipeline. All functions are pure.

#include <cstdint>

namespace fpgacomm {

using Bytes = std::uint64_t;
using Seconds = double;
using BytesPerSecond = double;

enum class DataPath { Buffered, Streamed };
enum class Scheduling { Host, PL };

struct TransferMode {
  DataPath path = DataPath::Streamed;
  Scheduling scheduling = Scheduling::PL;

  friend bool operator==(const TransferMode&, const TransferMode&) = default;
};

/// Physical link between two endpoints, optionally through a switch.
struct LinkParams {
  BytesPerSecond raw_bandwidth = 12.5e9;
  Seconds base_latency = 1.8e-6;
  std::uint32_t switch_hops = 0;
  Seconds per_hop_latency = 1.0e-6;
  Bytes frame_overhead = 66;
  Bytes mtu_payload = 1472;
};

struct SchedulingParams {
  Seconds host_invoke_latency = 30e-6;
  Seconds pl_command_latency = 0.3e-6;

  Seconds command_latency(Scheduling s) const {
    return s == Scheduling::Host ? host_invoke_latency : pl_command_latency;
  }
};

struct MemoryParams {
  BytesPerSecond mem_bandwidth = 14e9;
  Seconds copy_setup_latency = 0.5e-6;
};

/// Inputs of the pipeline throughput model. Element counts double as cycle
/// counts because the pipeline retires one element per clock.
struct AppModelParams {
  double f = 274e6;
  double flop_per_element = 0;
  double e_total = 0;
  double e_core = 0;
  double d_ext = 0;
  double e_send = 0;
  double e_recv = 0;
  double l_pipe = 0;
  double n_max = 0;
  Seconds l_pingping = 0;
};

namespace perfmodel {

/// Number of frames needed for `message_size` bytes; a zero-byte message
/// still occupies one frame.
std::uint64_t frame_count(Bytes message_size, Bytes mtu_payload);

/// Bytes on the wire including per-frame overhead.
Bytes wire_bytes(Bytes message_size, Bytes mtu_payload, Bytes frame_overhead);

Seconds link_latency(Bytes message_size, const LinkParams& link);

Seconds copy_latency(Bytes message_size, const MemoryParams& mem);

/// Buffered: two command latencies, one receive-side copy and the link.
/// Streamed: one command latency and the link.
Seconds transfer_latency(Bytes message_size, TransferMode mode, const LinkParams& link,
                         const SchedulingParams& sched, const MemoryParams& mem);

/// Throughput of copy and link stages in series (harmonic combination).
BytesPerSecond buffered_peak_throughput(BytesPerSecond mem_bw, BytesPerSecond link_bw);

BytesPerSecond windowed_throughput_cap(double window_bytes, Seconds rtt,
                                       BytesPerSecond link_goodput);

/// Payload rate of a saturated link once per-frame overhead is paid.
BytesPerSecond link_goodput(const LinkParams& link);

/// Communication latency of one halo exchange step. `command_latency` and
/// `copy_latency_per_neighbor` are times charged once (copy) or twice
/// (command) per neighbor; element counts are converted through the clock.
Seconds comm_latency_model(const AppModelParams& p, Seconds command_latency,
                           Seconds copy_latency_per_neighbor);

/// Same, deriving the per-neighbor terms from scheduling and memory
/// parameters; `halo_bytes` is the largest per-neighbor halo message.
Seconds comm_latency_model(const AppModelParams& p, const SchedulingParams& sched,
                           const MemoryParams& mem, Bytes halo_bytes,
                           Scheduling origin = Scheduling::PL);

/// Denominator of the throughput model in cycles.
double step_cycles(const AppModelParams& p, Seconds l_comm);

/// FLOP/s achieved by the pipeline given communication latency `l_comm`.
double app_throughput_model(const AppModelParams& p, Seconds l_comm);

/// Share of the step spent waiting for halo data.
double stall_fraction(const AppModelParams& p, Seconds l_comm);

}  // namespace perfmodel
}  // namespace fpgacomm
