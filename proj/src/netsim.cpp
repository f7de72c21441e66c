#include "fpgacomm/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <fmt/format.h>

namespace fpgacomm::netsim {

SimTime SimTime::from_seconds(Seconds s) { return SimTime(std::llround(s * 1e12)); }

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::CommandIssued: return "CommandIssued";
    case EventKind::SegmentTx: return "SegmentTx";
    case EventKind::SegmentRx: return "SegmentRx";
    case EventKind::AckRx: return "AckRx";
    case EventKind::CopyDone: return "CopyDone";
    case EventKind::StreamDelivered: return "StreamDelivered";
    case EventKind::KernelWake: return "KernelWake";
  }
  return "?";
}

const Event& EventQueue::push(Event e) {
  e.sequence = next_sequence_++;
  heap_.push(e);
  return heap_.top();
}

Event EventQueue::pop() {
  Event e = heap_.top();
  heap_.pop();
  return e;
}

namespace {

void validate(const ClusterConfig& c) {
  if (c.node_count == 0) throw ConfigError("cluster needs at least one node");
  if (!(c.link.raw_bandwidth > 0)) throw ConfigError("link raw_bandwidth must be > 0");
  if (c.link.base_latency < 0 || c.link.per_hop_latency < 0)
    throw ConfigError("link latencies must be >= 0");
  if (!(c.mem.mem_bandwidth > 0)) throw ConfigError("memory bandwidth must be > 0");
  if (c.mem.copy_setup_latency < 0) throw ConfigError("copy setup latency must be >= 0");
  if (c.sched.pl_command_latency < 0 || c.sched.host_invoke_latency < c.sched.pl_command_latency)
    throw ConfigError("scheduling latencies must satisfy host >= pl >= 0");
  const auto& t = c.transport;
  if (t.mtu_payload == 0) throw ConfigError("transport mtu_payload must be > 0");
  if (t.ack_latency < 0) throw ConfigError("transport ack_latency must be >= 0");
  if (t.kind == TransportKind::Windowed) {
    if (t.mss == 0 || t.mss > t.mtu_payload)
      throw ConfigError("transport mss must be in (0, mtu_payload]");
    if (t.window_bytes == 0 || t.window_scaling == 0)
      throw ConfigError("windowed transport needs a positive window");
    if (t.effective_window() < t.mss)
      throw ConfigError("effective window smaller than one segment");
  }
}

}  // namespace

Simulator::Simulator(ClusterConfig config) : config_(std::move(config)) {
  validate(config_);
  nodes_.resize(config_.node_count);
  for (auto& n : nodes_) n.rx_buffer_from.assign(config_.node_count, false);
  if (config_.topology == Topology::Switched) {
    for (NodeId i = 0; i < config_.node_count; ++i) ports_.push_back(Port{.source = i});
    switch_egress_free_.assign(config_.node_count, SimTime{});
  }
}

void Simulator::schedule(Event event) {
  if (event.time < now_)
    throw SimulationError(fmt::format("event {} scheduled at {} ps, before now ({} ps)",
                                      to_string(event.kind), event.time.ps(), now_.ps()));
  queue_.push(event);
}

SimTime Simulator::wire_time(Bytes wire) const {
  return SimTime::from_seconds(static_cast<double>(wire) / config_.link.raw_bandwidth);
}

CommandHandle Simulator::post_command(NodeId node, CommandDescriptor cmd, PostOptions options) {
  if (node >= config_.node_count)
    throw ConfigError(fmt::format("command posted to unknown node {}", node));
  if (cmd.peer >= config_.node_count)
    throw ConfigError(fmt::format("node {} names unknown peer {}", node, cmd.peer));
  if (cmd.peer == node) throw ConfigError(fmt::format("node {} addresses itself", node));
  if (cmd.payload && cmd.payload->size() != cmd.size)
    throw ConfigError(fmt::format("payload of {} bytes does not match size {}",
                                  cmd.payload->size(), cmd.size));
  const SimTime posted = options.at.value_or(now_);
  if (posted < now_) throw ConfigError("command posted in the past");

  const std::uint64_t id = commands_.size();
  auto [it, inserted] = lane_index_.try_emplace({node, options.lane}, lanes_.size());
  if (inserted) lanes_.push_back(Lane{.node = node});
  commands_.push_back(CommandRecord{.node = node, .cmd = std::move(cmd), .options = options,
                                    .posted = posted});
  command_lane_.push_back(it->second);
  lanes_[it->second].pending.push_back(id);
  pump_lane(it->second);
  return CommandHandle{id};
}

void Simulator::add_rx_buffer(NodeId node, NodeId source) {
  if (node >= config_.node_count || source >= config_.node_count)
    throw ConfigError(fmt::format("receive buffer for unknown pair ({}, {})", node, source));
  nodes_[node].rx_buffer_from[source] = true;
}

void Simulator::add_consumer_stall(NodeId node, SimTime from, SimTime to) {
  if (node >= config_.node_count) throw ConfigError("stall on unknown node");
  if (to < from) throw ConfigError("stall interval ends before it starts");
  nodes_.at(node).stalls.emplace_back(from, to);
}

const CommandRecord& Simulator::record(CommandHandle h) const { return commands_.at(h.id); }

const std::vector<StreamChunk>& Simulator::consumer_stream(NodeId node) const {
  return nodes_.at(node).stream;
}

const std::vector<std::byte>& Simulator::consumer_stream_bytes(NodeId node) const {
  return nodes_.at(node).stream_bytes;
}

const std::vector<std::byte>& Simulator::received_data(CommandHandle h) const {
  const auto& rec = commands_.at(h.id);
  if (rec.cmd.op != CommandOp::Recv || !rec.completed || !rec.message)
    throw SimulationError("received_data requires a completed Recv");
  return messages_.at(*rec.message).received;
}

SimStats Simulator::run_until(std::optional<SimTime> limit) {
  while (!queue_.empty()) {
    if (limit && queue_.top().time > *limit) break;
    const Event e = queue_.pop();
    if (e.time < now_) throw SimulationError("causality violation in event queue");
    now_ = e.time;
    ++events_processed_;
    dispatch(e);
  }

  SimStats stats;
  stats.end_time = now_;
  stats.events = events_processed_;
  stats.max_inflight = max_inflight_;
  for (const auto& n : nodes_) stats.nodes.push_back(n.stats);
  for (const auto& p : ports_)
    stats.ports.push_back(
        PortStats{.source = p.source, .dest = p.dest, .wire_bytes = p.wire_bytes, .busy = p.busy_time});
  if (queue_.empty()) {
    for (const auto& c : commands_)
      if (!c.completed)
        stats.unmatched.push_back({c.node, c.cmd.peer, c.cmd.tag, c.cmd.op});
    for (const auto& m : messages_)
      if (m.path == DataPath::Buffered && m.delivered_at && !m.consumed)
        stats.unmatched.push_back({m.source, m.dest, m.tag, CommandOp::Send});
  }
  return stats;
}

void Simulator::trace(const Event& e, const std::string& detail) {
  if (!trace_) return;
  *trace_ << e.time.ps() << ' ' << e.node << ' ' << to_string(e.kind) << ' ' << detail << '\n';
}

void Simulator::dispatch(const Event& e) {
  switch (e.kind) {
    case EventKind::CommandIssued: {
      const auto& c = commands_[e.subject];
      trace(e, fmt::format("cmd={} op={} peer={} tag={} size={}", e.subject,
                           c.cmd.op == CommandOp::Send ? "send" : "recv", c.cmd.peer, c.cmd.tag,
                           c.cmd.size));
      on_command_issued(e.subject);
      break;
    }
    case EventKind::SegmentTx: {
      const auto& s = segments_[e.subject];
      trace(e, fmt::format("msg={} off={} len={}", s.message, s.offset, s.length));
      on_segment_tx(e.subject);
      break;
    }
    case EventKind::SegmentRx: {
      const auto& s = segments_[e.subject];
      trace(e, fmt::format("msg={} off={} len={}", s.message, s.offset, s.length));
      on_segment_rx(e.subject);
      break;
    }
    case EventKind::AckRx: {
      const auto& s = segments_[e.subject];
      trace(e, fmt::format("msg={} off={} len={}", s.message, s.offset, s.length));
      on_ack(e.subject);
      break;
    }
    case EventKind::StreamDelivered: {
      const auto& s = segments_[e.subject];
      trace(e, fmt::format("msg={} off={} len={}", s.message, s.offset, s.length));
      on_stream_delivered(e.subject);
      break;
    }
    case EventKind::CopyDone:
      trace(e, fmt::format("cmd={}", e.subject));
      complete_command(e.subject);
      break;
    case EventKind::KernelWake:
      trace(e, fmt::format("lane={}", e.subject));
      lanes_[e.subject].wake_scheduled = false;
      pump_lane(e.subject);
      break;
  }
}

void Simulator::pump_lane(std::size_t lane_id) {
  auto& lane = lanes_[lane_id];
  if (lane.busy || lane.pending.empty()) return;
  const std::uint64_t id = lane.pending.front();
  const auto& rec = commands_[id];
  if (rec.posted > now_) {
    if (!lane.wake_scheduled) {
      lane.wake_scheduled = true;
      schedule(Event{.time = rec.posted, .node = lane.node, .kind = EventKind::KernelWake,
                     .subject = lane_id});
    }
    return;
  }
  lane.pending.pop_front();
  lane.busy = true;
  const SimTime latency =
      SimTime::from_seconds(config_.sched.command_latency(rec.cmd.issue_origin));
  schedule(Event{.time = now_ + latency, .node = rec.node, .kind = EventKind::CommandIssued,
                 .subject = id});
}

void Simulator::on_command_issued(std::uint64_t cmd_id) {
  auto& rec = commands_[cmd_id];
  rec.visible = now_;
  if (rec.cmd.op == CommandOp::Send)
    start_send(cmd_id);
  else
    start_recv(cmd_id);
  if (!rec.options.blocking) {
    lanes_[command_lane_[cmd_id]].busy = false;
    pump_lane(command_lane_[cmd_id]);
  }
}

std::size_t Simulator::connection_for(NodeId source, NodeId dest) {
  auto [it, inserted] = connection_index_.try_emplace({source, dest}, connections_.size());
  if (!inserted) return it->second;
  const std::size_t conn_id = it->second;
  std::size_t port_id = 0;
  if (config_.topology == Topology::Switched) {
    port_id = source;
  } else {
    port_id = ports_.size();
    ports_.push_back(Port{.source = source, .dest = dest});
  }
  ports_[port_id].connections.push_back(conn_id);
  connections_.push_back(Connection{.source = source, .dest = dest, .port = port_id});
  return conn_id;
}

void Simulator::start_send(std::uint64_t cmd_id) {
  const auto& rec = commands_[cmd_id];
  const std::uint64_t msg_id = messages_.size();
  MessageRecord m;
  m.id = msg_id;
  m.source = rec.node;
  m.dest = rec.cmd.peer;
  m.tag = rec.cmd.tag;
  m.size = rec.cmd.size;
  m.path = rec.cmd.path;
  m.send_command = cmd_id;
  m.segments = perfmodel::frame_count(m.size, config_.transport.segment_payload());
  m.payload = rec.cmd.payload;
  if (m.payload) m.received.resize(m.size);
  messages_.push_back(std::move(m));
  commands_[cmd_id].message = msg_id;
  nodes_[rec.node].stats.messages_sent++;

  const std::size_t conn = connection_for(rec.node, rec.cmd.peer);
  connections_[conn].queue.push_back(msg_id);
  try_transmit(connections_[conn].port);
}

void Simulator::try_transmit(std::size_t port_id) {
  auto& port = ports_[port_id];
  if (port.busy) return;
  const auto& t = config_.transport;
  const std::size_t n = port.connections.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t slot = (port.round_robin + k) % n;
    auto& conn = connections_[port.connections[slot]];
    if (conn.queue.empty()) continue;
    auto& msg = messages_[conn.queue.front()];
    const Bytes length = std::min(t.segment_payload(), msg.size - conn.head_offset);
    if (t.kind == TransportKind::Windowed && conn.inflight + length > t.effective_window())
      continue;

    const Bytes wire = length + t.frame_overhead;
    const std::uint64_t seg_id = segments_.size();
    segments_.push_back(Segment{.message = msg.id,
                                .connection = port.connections[slot],
                                .offset = conn.head_offset,
                                .length = length,
                                .wire = wire});
    if (t.kind == TransportKind::Windowed) {
      conn.inflight += length;
      if (conn.inflight > t.effective_window())
        throw SimulationError("in-flight bytes exceed the transport window");
      max_inflight_ = std::max(max_inflight_, conn.inflight);
    }
    msg.injected += length;
    nodes_[conn.source].stats.bytes_sent += length;
    conn.head_offset += length;
    if (++conn.head_segments_sent == msg.segments) {
      conn.queue.pop_front();
      conn.head_offset = 0;
      conn.head_segments_sent = 0;
    }

    const SimTime duration = wire_time(wire);
    port.busy = true;
    port.wire_bytes += wire;
    port.busy_time += duration;
    port.round_robin = (slot + 1) % n;
    schedule(Event{.time = now_ + duration, .node = conn.source, .kind = EventKind::SegmentTx,
                   .subject = seg_id});
    return;
  }
}

void Simulator::on_segment_tx(std::uint64_t seg_id) {
  const auto& seg = segments_[seg_id];
  const auto& conn = connections_[seg.connection];
  const auto& link = config_.link;
  const SimTime base = SimTime::from_seconds(link.base_latency);
  const SimTime hops = SimTime::from_ps(static_cast<std::int64_t>(link.switch_hops) *
                                        SimTime::from_seconds(link.per_hop_latency).ps());
  SimTime arrival = now_ + hops + base;
  if (config_.topology == Topology::Switched) {
    // Cut-through switch: the egress port toward the destination serializes
    // frames from all sources.
    auto& egress = switch_egress_free_[conn.dest];
    const SimTime egress_done = std::max(now_ + hops, egress + wire_time(seg.wire));
    egress = egress_done;
    arrival = egress_done + base;
  }
  schedule(Event{.time = arrival, .node = conn.dest, .kind = EventKind::SegmentRx,
                 .subject = seg_id});
  ports_[conn.port].busy = false;
  try_transmit(conn.port);
}

void Simulator::on_segment_rx(std::uint64_t seg_id) {
  const auto& seg = segments_[seg_id];
  auto& msg = messages_[seg.message];
  auto& node = nodes_[msg.dest];
  msg.arrived += seg.length;
  msg.segments_arrived++;
  node.stats.bytes_received += seg.length;
  if (msg.payload && seg.length > 0)
    std::memcpy(msg.received.data() + seg.offset, msg.payload->data() + seg.offset, seg.length);

  if (config_.transport.kind == TransportKind::Windowed)
    schedule(Event{.time = now_ + SimTime::from_seconds(config_.transport.ack_latency),
                   .node = msg.source,
                   .kind = EventKind::AckRx,
                   .subject = seg_id});

  if (msg.path == DataPath::Streamed) {
    // Stream data is handed over in arrival order; a stalled consumer holds
    // back everything behind it.
    SimTime t = std::max(now_, node.stream_cursor);
    for (bool moved = true; moved;) {
      moved = false;
      for (const auto& [from, to] : node.stalls)
        if (from <= t && t < to) {
          t = to;
          moved = true;
        }
    }
    node.stream_cursor = t;
    schedule(Event{.time = t, .node = msg.dest, .kind = EventKind::StreamDelivered,
                   .subject = seg_id});
    return;
  }

  if (msg.segments_arrived == msg.segments) {
    if (!node.rx_buffer_from[msg.source])
      throw ConfigError(fmt::format("node {} has no receive buffer for source {} (tag {})",
                                    msg.dest, msg.source, msg.tag));
    msg.delivered = msg.arrived;
    on_message_delivered(msg.id);
  }
}

void Simulator::on_stream_delivered(std::uint64_t seg_id) {
  const auto& seg = segments_[seg_id];
  auto& msg = messages_[seg.message];
  auto& node = nodes_[msg.dest];
  StreamChunk chunk{.source = msg.source,
                    .tag = msg.tag,
                    .message = msg.id,
                    .offset = seg.offset,
                    .length = seg.length,
                    .time = now_};
  if (msg.payload) {
    chunk.stream_offset = node.stream_bytes.size();
    node.stream_bytes.insert(node.stream_bytes.end(),
                             msg.received.begin() + static_cast<std::ptrdiff_t>(seg.offset),
                             msg.received.begin() + static_cast<std::ptrdiff_t>(seg.offset + seg.length));
  }
  node.stream.push_back(chunk);
  msg.delivered += seg.length;
  if (++msg.segments_streamed == msg.segments) on_message_delivered(msg.id);
}

void Simulator::on_ack(std::uint64_t seg_id) {
  const auto& seg = segments_[seg_id];
  auto& conn = connections_[seg.connection];
  auto& msg = messages_[seg.message];
  conn.inflight -= seg.length;
  if (++msg.segments_acked == msg.segments) complete_command(msg.send_command);
  try_transmit(conn.port);
}

void Simulator::check_conservation(const MessageRecord& m) const {
  if (m.injected != m.size || m.arrived != m.size || m.delivered != m.size)
    throw SimulationError(fmt::format(
        "byte conservation violated for message {}: size {} injected {} arrived {} delivered {}",
        m.id, m.size, m.injected, m.arrived, m.delivered));
}

void Simulator::on_message_delivered(std::uint64_t msg_id) {
  auto& msg = messages_[msg_id];
  check_conservation(msg);
  msg.delivered_at = now_;
  nodes_[msg.dest].stats.messages_received++;
  if (config_.transport.kind == TransportKind::Datagram) complete_command(msg.send_command);

  const MatchKey key{msg.source, msg.dest, msg.tag};
  auto waiting = waiting_recvs_.find(key);
  if (waiting != waiting_recvs_.end() && !waiting->second.empty()) {
    const auto recv_id = waiting->second.front();
    waiting->second.pop_front();
    bind_recv(recv_id, msg_id);
    return;
  }
  ready_messages_[key].push_back(msg_id);
}

void Simulator::start_recv(std::uint64_t cmd_id) {
  const auto& rec = commands_[cmd_id];
  const MatchKey key{rec.cmd.peer, rec.node, rec.cmd.tag};
  auto ready = ready_messages_.find(key);
  if (ready != ready_messages_.end() && !ready->second.empty()) {
    const auto msg_id = ready->second.front();
    ready->second.pop_front();
    bind_recv(cmd_id, msg_id);
    return;
  }
  waiting_recvs_[key].push_back(cmd_id);
}

void Simulator::bind_recv(std::uint64_t recv_id, std::uint64_t msg_id) {
  auto& rec = commands_[recv_id];
  auto& msg = messages_[msg_id];
  if (rec.cmd.path != msg.path)
    throw RecvMismatch(rec.node, rec.cmd.peer, rec.cmd.tag, rec.cmd.size, msg.size,
                       fmt::format("recv on node {} from {} tag {} expects a {} message", rec.node,
                                   rec.cmd.peer, rec.cmd.tag,
                                   rec.cmd.path == DataPath::Buffered ? "buffered" : "streamed"));
  if (rec.cmd.size != msg.size)
    throw RecvMismatch(rec.node, rec.cmd.peer, rec.cmd.tag, rec.cmd.size, msg.size,
                       fmt::format("recv on node {} from {} tag {}: expected {} bytes, got {}",
                                   rec.node, rec.cmd.peer, rec.cmd.tag, rec.cmd.size, msg.size));
  msg.consumed = true;
  rec.message = msg_id;
  if (msg.path == DataPath::Streamed) {
    complete_command(recv_id);
    return;
  }
  auto& node = nodes_[rec.node];
  const SimTime start = std::max(now_, node.copy_free);
  const SimTime duration =
      SimTime::from_seconds(perfmodel::copy_latency(msg.size, config_.mem));
  node.copy_free = start + duration;
  node.stats.copy_busy += duration;
  schedule(Event{.time = node.copy_free, .node = rec.node, .kind = EventKind::CopyDone,
                 .subject = recv_id});
}

void Simulator::complete_command(std::uint64_t cmd_id) {
  auto& rec = commands_[cmd_id];
  rec.completed = now_;
  if (rec.options.blocking) {
    lanes_[command_lane_[cmd_id]].busy = false;
    pump_lane(command_lane_[cmd_id]);
  }
}

}  // namespace fpgacomm::netsim
