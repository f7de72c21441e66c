#pragma once

// Deterministic discrete-event model of FPGA nodes exchanging messages through
// a communication offload engine (command processor, data mover, transport).
//
// Time is kept in integer picoseconds. Events with equal timestamps are
// processed in the order they were scheduled.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "fpgacomm/perfmodel.hpp"

namespace fpgacomm::netsim {

using NodeId = std::uint32_t;
using Tag = std::int64_t;

class SimTime {
 public:
  constexpr SimTime() = default;
  static constexpr SimTime from_ps(std::int64_t ps) { return SimTime(ps); }
  /// Rounds to the nearest picosecond.
  static SimTime from_seconds(Seconds s);

  constexpr std::int64_t ps() const { return ps_; }
  constexpr double seconds() const { return static_cast<double>(ps_) * 1e-12; }

  constexpr SimTime operator+(SimTime o) const { return SimTime(ps_ + o.ps_); }
  constexpr SimTime operator-(SimTime o) const { return SimTime(ps_ - o.ps_); }
  constexpr SimTime& operator+=(SimTime o) {
    ps_ += o.ps_;
    return *this;
  }
  constexpr auto operator<=>(const SimTime&) const = default;

 private:
  constexpr explicit SimTime(std::int64_t ps) : ps_(ps) {}
  std::int64_t ps_ = 0;
};

enum class EventKind {
  CommandIssued,
  SegmentTx,
  SegmentRx,
  AckRx,
  CopyDone,
  StreamDelivered,
  KernelWake,
};

const char* to_string(EventKind kind);

struct Event {
  SimTime time;
  std::uint64_t sequence = 0;
  NodeId node = 0;
  EventKind kind = EventKind::KernelWake;
  std::uint64_t subject = 0;
};

/// Min-queue on (time, sequence). The sequence is assigned on push.
class EventQueue {
 public:
  const Event& push(Event e);
  Event pop();
  const Event& top() const { return heap_.top(); }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return std::tie(a.time, a.sequence) > std::tie(b.time, b.sequence);
    }
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  std::uint64_t next_sequence_ = 0;
};

enum class Topology { Direct, Switched };
enum class TransportKind { Datagram, Windowed };

struct TransportConfig {
  TransportKind kind = TransportKind::Datagram;
  Bytes mtu_payload = 1472;
  Bytes frame_overhead = 66;
  Bytes window_bytes = 65535;
  std::uint32_t window_scaling = 1;
  Bytes mss = 1460;
  Seconds ack_latency = 0;

  Bytes segment_payload() const {
    return kind == TransportKind::Windowed ? mss : mtu_payload;
  }
  Bytes effective_window() const { return window_bytes * window_scaling; }
};

struct ClusterConfig {
  Topology topology = Topology::Direct;
  std::uint32_t node_count = 2;
  LinkParams link;
  SchedulingParams sched;
  MemoryParams mem;
  TransportConfig transport;
};

/// Link parameters for the closed-form models, with framing taken from the
/// transport's segment size so model and simulator count the same frames.
inline LinkParams model_link(const ClusterConfig& c) {
  LinkParams l = c.link;
  l.mtu_payload = c.transport.segment_payload();
  l.frame_overhead = c.transport.frame_overhead;
  return l;
}

/// Raised for invalid setups: unknown peers, missing receive buffers,
/// inconsistent transport parameters.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an internal invariant breaks during a run.
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CommandOp { Send, Recv };

/// A Recv was matched with a message of a different size or data path.
class RecvMismatch : public SimulationError {
 public:
  RecvMismatch(NodeId node, NodeId peer, Tag tag, Bytes expected, Bytes actual, const std::string& what)
      : SimulationError(what), node(node), peer(peer), tag(tag), expected(expected), actual(actual) {}
  NodeId node;
  NodeId peer;
  Tag tag;
  Bytes expected;
  Bytes actual;
};

/// `path` names how the receiver consumes the message: Buffered lands in a
/// receive buffer and needs a matching Recv to copy it out; Streamed is
/// forwarded to the node's consumer stream in arrival order.
struct CommandDescriptor {
  CommandOp op = CommandOp::Send;
  NodeId peer = 0;
  Tag tag = 0;
  Bytes size = 0;
  DataPath path = DataPath::Buffered;
  Scheduling issue_origin = Scheduling::PL;
  /// Optional message contents for Sends; when absent the bytes are counted
  /// but not materialized.
  std::shared_ptr<const std::vector<std::byte>> payload;
};

/// Commands posted to the same (node, lane) are issued in order. A blocking
/// command holds its lane until it completes; a non-blocking one releases the
/// lane as soon as the engine has accepted it.
struct PostOptions {
  std::uint32_t lane = 0;
  bool blocking = true;
  std::optional<SimTime> at;
};

struct CommandHandle {
  std::uint64_t id = 0;
};

struct CommandRecord {
  NodeId node = 0;
  CommandDescriptor cmd;
  PostOptions options;
  SimTime posted;
  std::optional<SimTime> visible;
  std::optional<SimTime> completed;
  std::optional<std::uint64_t> message;
};

struct StreamChunk {
  NodeId source = 0;
  Tag tag = 0;
  std::uint64_t message = 0;
  Bytes offset = 0;
  Bytes length = 0;
  SimTime time;
  /// Offset of this chunk in the node's materialized stream bytes, when the
  /// message carried a payload.
  std::optional<std::size_t> stream_offset;
};

struct MessageRecord {
  std::uint64_t id = 0;
  NodeId source = 0;
  NodeId dest = 0;
  Tag tag = 0;
  Bytes size = 0;
  DataPath path = DataPath::Buffered;
  std::uint64_t send_command = 0;
  std::uint64_t segments = 0;
  Bytes injected = 0;
  Bytes arrived = 0;
  Bytes delivered = 0;
  std::uint64_t segments_arrived = 0;
  std::uint64_t segments_streamed = 0;
  std::uint64_t segments_acked = 0;
  std::optional<SimTime> delivered_at;
  bool consumed = false;
  std::shared_ptr<const std::vector<std::byte>> payload;
  std::vector<std::byte> received;
};

struct UnmatchedCommand {
  NodeId node = 0;
  NodeId peer = 0;
  Tag tag = 0;
  CommandOp op = CommandOp::Recv;

  friend bool operator==(const UnmatchedCommand&, const UnmatchedCommand&) = default;
};

struct NodeStats {
  Bytes bytes_sent = 0;
  Bytes bytes_received = 0;
  std::uint64_t messages_sent = 0;
  std::uint64_t messages_received = 0;
  SimTime copy_busy;
};

struct PortStats {
  NodeId source = 0;
  /// Destination for point-to-point ports; unset for a shared switch port.
  std::optional<NodeId> dest;
  Bytes wire_bytes = 0;
  SimTime busy;
};

struct SimStats {
  SimTime end_time;
  std::uint64_t events = 0;
  std::vector<NodeStats> nodes;
  std::vector<PortStats> ports;
  Bytes max_inflight = 0;
  std::vector<UnmatchedCommand> unmatched;

  bool deadlocked() const { return !unmatched.empty(); }
};

class Simulator {
 public:
  explicit Simulator(ClusterConfig config);

  const ClusterConfig& config() const { return config_; }
  SimTime now() const { return now_; }

  /// Enqueue an event; events in the past are a contract violation.
  void schedule(Event event);

  CommandHandle post_command(NodeId node, CommandDescriptor cmd, PostOptions options = {});

  /// Allow buffered messages from `source` to land on `node`.
  void add_rx_buffer(NodeId node, NodeId source);

  /// The consumer kernel on `node` does not accept stream data in [from, to).
  void add_consumer_stall(NodeId node, SimTime from, SimTime to);

  void set_trace(std::ostream* out) { trace_ = out; }

  /// Process events until quiescence or until the next event lies past `limit`.
  SimStats run_until(std::optional<SimTime> limit = std::nullopt);

  const CommandRecord& record(CommandHandle h) const;
  const MessageRecord& message(std::uint64_t id) const { return messages_.at(id); }
  std::size_t message_count() const { return messages_.size(); }
  const std::vector<StreamChunk>& consumer_stream(NodeId node) const;
  const std::vector<std::byte>& consumer_stream_bytes(NodeId node) const;
  /// Data handed to the consumer by a completed buffered Recv.
  const std::vector<std::byte>& received_data(CommandHandle h) const;

 private:
  struct Lane {
    NodeId node = 0;
    std::deque<std::uint64_t> pending;
    bool busy = false;
    bool wake_scheduled = false;
  };
  struct Connection {
    NodeId source = 0;
    NodeId dest = 0;
    std::deque<std::uint64_t> queue;
    Bytes head_offset = 0;
    std::uint64_t head_segments_sent = 0;
    Bytes inflight = 0;
    std::size_t port = 0;
  };
  struct Port {
    NodeId source = 0;
    std::optional<NodeId> dest;
    std::vector<std::size_t> connections;
    std::size_t round_robin = 0;
    bool busy = false;
    Bytes wire_bytes = 0;
    SimTime busy_time;
  };
  struct Segment {
    std::uint64_t message = 0;
    std::size_t connection = 0;
    Bytes offset = 0;
    Bytes length = 0;
    Bytes wire = 0;
  };
  struct NodeState {
    SimTime copy_free;
    SimTime stream_cursor;
    std::vector<std::pair<SimTime, SimTime>> stalls;
    std::vector<StreamChunk> stream;
    std::vector<std::byte> stream_bytes;
    std::vector<bool> rx_buffer_from;
    NodeStats stats;
  };
  using MatchKey = std::tuple<NodeId, NodeId, Tag>;  // (source, dest, tag)

  void dispatch(const Event& e);
  void pump_lane(std::size_t lane);
  void on_command_issued(std::uint64_t cmd_id);
  void start_send(std::uint64_t cmd_id);
  void start_recv(std::uint64_t cmd_id);
  void try_transmit(std::size_t port);
  void on_segment_tx(std::uint64_t seg_id);
  void on_segment_rx(std::uint64_t seg_id);
  void on_ack(std::uint64_t seg_id);
  void on_stream_delivered(std::uint64_t seg_id);
  void on_message_delivered(std::uint64_t msg_id);
  void bind_recv(std::uint64_t recv_id, std::uint64_t msg_id);
  void complete_command(std::uint64_t cmd_id);
  void check_conservation(const MessageRecord& m) const;
  std::size_t connection_for(NodeId source, NodeId dest);
  SimTime wire_time(Bytes wire) const;
  void trace(const Event& e, const std::string& detail);

  ClusterConfig config_;
  SimTime now_;
  EventQueue queue_;
  std::uint64_t events_processed_ = 0;
  std::ostream* trace_ = nullptr;

  std::vector<CommandRecord> commands_;
  std::vector<std::size_t> command_lane_;
  std::vector<MessageRecord> messages_;
  std::vector<Segment> segments_;
  std::vector<Lane> lanes_;
  std::map<std::pair<NodeId, std::uint32_t>, std::size_t> lane_index_;
  std::vector<Connection> connections_;
  std::map<std::pair<NodeId, NodeId>, std::size_t> connection_index_;
  std::vector<Port> ports_;
  std::vector<SimTime> switch_egress_free_;
  std::vector<NodeState> nodes_;
  std::map<MatchKey, std::deque<std::uint64_t>> ready_messages_;
  std::map<MatchKey, std::deque<std::uint64_t>> waiting_recvs_;
  Bytes max_inflight_ = 0;
};

}  // namespace fpgacomm::netsim
