#pragma once

// Effective-bandwidth ring benchmark: every node exchanges ping-ping messages
// with both ring neighbors over a sweep of message sizes.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fpgacomm/netsim.hpp"
#include "fpgacomm/perfmodel.hpp"

namespace fpgacomm::beff {

/// Powers of two from 64 B to 4 MiB.
std::vector<Bytes> default_message_sizes();

struct BeffConfig {
  std::uint32_t node_count = 2;
  std::vector<Bytes> message_sizes = default_message_sizes();
  std::uint32_t repetitions = 10;
  TransferMode mode;
};

struct BeffRow {
  Bytes size = 0;
  /// Mean time from round start until the last receive of the round completed.
  Seconds latency = 0;
  /// Bytes moved by all nodes in both directions per second of round time.
  BytesPerSecond throughput = 0;
  /// Bytes per second on a single directed link.
  BytesPerSecond link_throughput = 0;
  Seconds model_latency = 0;
  double rel_error = 0;
};

struct BeffResult {
  std::vector<BeffRow> rows;
  BytesPerSecond b_eff = 0;
  /// Largest unacknowledged byte count seen on any connection.
  Bytes max_inflight = 0;
  std::uint64_t messages = 0;
};

/// Ring neighbors of `node`: {node+1, node-1} mod n, deduplicated.
std::vector<netsim::NodeId> ring_neighbors(netsim::NodeId node, std::uint32_t n);

/// Runs the sweep with one fresh simulator per size. `cluster.node_count` is
/// replaced by `cfg.node_count`.
BeffResult run_beff(const BeffConfig& cfg, const netsim::ClusterConfig& cluster,
                    std::ostream* trace = nullptr);

/// Arithmetic mean of the per-size full-duplex throughputs.
BytesPerSecond beff_aggregate(const std::vector<BeffRow>& rows);

/// Round-trip time used by the windowed transport: one segment's
/// serialization, the forward path and the acknowledgment.
Seconds windowed_rtt(const netsim::ClusterConfig& cluster);
/// Payload rate of the transport: the window cap for windowed transports,
/// link goodput otherwise.
BytesPerSecond transport_throughput_bound(const netsim::ClusterConfig& cluster);

/// Closed-form completion time of one ping-ping exchange of `size` bytes.
Seconds model_latency(Bytes size, TransferMode mode, const netsim::ClusterConfig& cluster);

void write_beff_csv(std::ostream& out, const BeffResult& result);
void write_model_error_csv(std::ostream& out, const BeffResult& result);

}  // namespace fpgacomm::beff
