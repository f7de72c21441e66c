#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <sstream>
#include <vector>

#include "fpgacomm/netsim.hpp"
#include "fpgacomm/perfmodel.hpp"

using namespace fpgacomm;
using namespace fpgacomm::netsim;

namespace {

ClusterConfig direct(std::uint32_t nodes = 2) {
  ClusterConfig c;
  c.node_count = nodes;
  c.link.base_latency = 1.8e-6;
  c.sched.pl_command_latency = 0.3e-6;
  c.sched.host_invoke_latency = 30e-6;
  return c;
}

std::shared_ptr<const std::vector<std::byte>> pattern(Bytes n, unsigned seed) {
  auto v = std::make_shared<std::vector<std::byte>>(n);
  for (Bytes i = 0; i < n; ++i) (*v)[i] = static_cast<std::byte>((i * 131 + seed * 17) & 0xff);
  return v;
}

CommandDescriptor send_to(NodeId peer, Tag tag, Bytes size, DataPath path,
                          Scheduling origin = Scheduling::PL) {
  return CommandDescriptor{.op = CommandOp::Send, .peer = peer, .tag = tag, .size = size,
                           .path = path, .issue_origin = origin};
}

CommandDescriptor recv_from(NodeId peer, Tag tag, Bytes size, DataPath path,
                            Scheduling origin = Scheduling::PL) {
  auto c = send_to(peer, tag, size, path, origin);
  c.op = CommandOp::Recv;
  return c;
}

double secs(SimTime t) { return t.seconds(); }

}  // namespace

TEST_CASE("sim time is exact picoseconds") {
  CHECK(SimTime::from_seconds(1e-12).ps() == 1);
  CHECK(SimTime::from_seconds(0.3e-6).ps() == 300'000);
  CHECK(SimTime::from_seconds(1.8e-6).ps() == 1'800'000);
  // one byte at 100 Gbit/s
  CHECK(SimTime::from_seconds(1 / 12.5e9).ps() == 80);
  auto t = SimTime::from_ps(5);
  t += SimTime::from_ps(7);
  CHECK(t.ps() == 12);
  CHECK(SimTime::from_ps(3) < SimTime::from_ps(4));
}

TEST_CASE("event queue orders by time then sequence") {
  EventQueue q;
  q.push(Event{.time = SimTime::from_ps(10), .subject = 1});
  q.push(Event{.time = SimTime::from_ps(5), .subject = 2});
  q.push(Event{.time = SimTime::from_ps(10), .subject = 3});
  q.push(Event{.time = SimTime::from_ps(5), .subject = 4});
  std::vector<std::uint64_t> order;
  while (!q.empty()) order.push_back(q.pop().subject);
  CHECK(order == std::vector<std::uint64_t>{2, 4, 1, 3});
}

TEST_CASE("scheduling in the past is rejected") {
  Simulator sim(direct());
  sim.post_command(0, send_to(1, 0, 64, DataPath::Streamed));
  sim.post_command(1, recv_from(0, 0, 64, DataPath::Streamed));
  sim.run_until();
  CHECK(sim.now() > SimTime{});
  CHECK_THROWS_AS(sim.schedule(Event{.time = SimTime{}}), SimulationError);
}

TEST_CASE("no commands quiesce immediately") {
  Simulator sim(direct());
  const auto stats = sim.run_until();
  CHECK(stats.end_time == SimTime{});
  CHECK(stats.events == 0);
  CHECK_FALSE(stats.deadlocked());
  for (const auto& n : stats.nodes) {
    CHECK(n.bytes_sent == 0);
    CHECK(n.bytes_received == 0);
  }
}

TEST_CASE("command origin latency") {
  for (auto origin : {Scheduling::Host, Scheduling::PL}) {
    Simulator sim(direct());
    const auto h = sim.post_command(0, send_to(1, 0, 64, DataPath::Streamed, origin));
    sim.post_command(1, recv_from(0, 0, 64, DataPath::Streamed));
    sim.run_until();
    const double expected = origin == Scheduling::Host ? 30e-6 : 0.3e-6;
    CHECK(secs(*sim.record(h).visible) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("configuration errors") {
  Simulator sim(direct(2));
  CHECK_THROWS_AS(sim.post_command(0, send_to(5, 0, 64, DataPath::Streamed)), ConfigError);
  CHECK_THROWS_AS(sim.post_command(7, send_to(1, 0, 64, DataPath::Streamed)), ConfigError);
  CHECK_THROWS_AS(sim.post_command(0, send_to(0, 0, 64, DataPath::Streamed)), ConfigError);

  auto bad = direct();
  bad.transport.kind = TransportKind::Windowed;
  bad.transport.mss = 2000;
  CHECK_THROWS_AS(Simulator{bad}, ConfigError);
  bad.transport.mss = 1460;
  bad.transport.window_bytes = 0;
  CHECK_THROWS_AS(Simulator{bad}, ConfigError);
}

TEST_CASE("zero-size message costs one empty frame") {
  auto c = direct();
  Simulator sim(c);
  const auto s = sim.post_command(0, send_to(1, 0, 0, DataPath::Streamed));
  const auto r = sim.post_command(1, recv_from(0, 0, 0, DataPath::Streamed));
  const auto stats = sim.run_until();
  CHECK_FALSE(stats.deadlocked());
  const double expected = 0.3e-6 + 1.8e-6 + 66 / 12.5e9;
  CHECK(secs(*sim.record(r).completed) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(sim.record(s).completed.has_value());
  CHECK(sim.message(0).segments == 1);
}

TEST_CASE("ping-ping pair moves equal bytes both ways") {
  Simulator sim(direct());
  sim.add_rx_buffer(0, 1);
  sim.add_rx_buffer(1, 0);
  std::vector<CommandHandle> hs;
  for (NodeId n : {0u, 1u}) {
    hs.push_back(sim.post_command(n, send_to(1 - n, 0, 10000, DataPath::Buffered),
                                  PostOptions{.lane = 0}));
    hs.push_back(sim.post_command(n, recv_from(1 - n, 0, 10000, DataPath::Buffered),
                                  PostOptions{.lane = 1}));
  }
  const auto stats = sim.run_until();
  CHECK_FALSE(stats.deadlocked());
  for (auto h : hs) CHECK(sim.record(h).completed.has_value());
  CHECK(stats.nodes[0].bytes_sent == 10000);
  CHECK(stats.nodes[1].bytes_sent == 10000);
  CHECK(stats.nodes[0].bytes_received == 10000);
  CHECK(stats.nodes[1].bytes_received == 10000);
}

TEST_CASE("buffered receive completion") {
  const Bytes size = 4096;
  const MemoryParams mem;
  const double copy = perfmodel::copy_latency(size, mem);

  SUBCASE("recv posted before arrival") {
    Simulator sim(direct());
    sim.add_rx_buffer(1, 0);
    sim.post_command(0, send_to(1, 3, size, DataPath::Buffered));
    const auto r = sim.post_command(1, recv_from(0, 3, size, DataPath::Buffered));
    sim.run_until();
    const double arrival = secs(*sim.message(0).delivered_at);
    CHECK(secs(*sim.record(r).completed) == doctest::Approx(arrival + copy).epsilon(1e-9));
  }
  SUBCASE("recv posted after arrival") {
    Simulator sim(direct());
    sim.add_rx_buffer(1, 0);
    sim.post_command(0, send_to(1, 3, size, DataPath::Buffered));
    const auto late = SimTime::from_seconds(50e-6);
    const auto r = sim.post_command(1, recv_from(0, 3, size, DataPath::Buffered, Scheduling::Host),
                                    PostOptions{.at = late});
    sim.run_until();
    CHECK(*sim.message(0).delivered_at < late);
    const double visible = 50e-6 + 30e-6;
    CHECK(secs(*sim.record(r).visible) == doctest::Approx(visible).epsilon(1e-9));
    CHECK(secs(*sim.record(r).completed) == doctest::Approx(visible + copy).epsilon(1e-9));
  }
}

TEST_CASE("buffered arrival without a receive buffer is a configuration error") {
  Simulator sim(direct());
  sim.post_command(0, send_to(1, 0, 64, DataPath::Buffered));
  CHECK_THROWS_AS(sim.run_until(), ConfigError);
}

TEST_CASE("receive mismatch names the pair") {
  Simulator sim(direct());
  sim.add_rx_buffer(1, 0);
  sim.post_command(0, send_to(1, 9, 64, DataPath::Buffered));
  sim.post_command(1, recv_from(0, 9, 128, DataPath::Buffered));
  try {
    sim.run_until();
    FAIL("expected RecvMismatch");
  } catch (const RecvMismatch& e) {
    CHECK(e.node == 1);
    CHECK(e.peer == 0);
    CHECK(e.tag == 9);
    CHECK(e.expected == 128);
    CHECK(e.actual == 64);
  }
}

TEST_CASE("unmatched receive is reported as deadlock") {
  Simulator sim(direct(3));
  sim.add_rx_buffer(1, 0);
  sim.post_command(0, send_to(1, 1, 64, DataPath::Buffered));
  sim.post_command(1, recv_from(0, 1, 64, DataPath::Buffered));
  sim.post_command(2, recv_from(1, 42, 64, DataPath::Buffered));
  const auto stats = sim.run_until();
  REQUIRE(stats.deadlocked());
  REQUIRE(stats.unmatched.size() == 1);
  CHECK(stats.unmatched[0] == UnmatchedCommand{.node = 2, .peer = 1, .tag = 42, .op = CommandOp::Recv});
}

TEST_CASE("unconsumed buffered message is reported") {
  Simulator sim(direct());
  sim.add_rx_buffer(1, 0);
  sim.post_command(0, send_to(1, 5, 64, DataPath::Buffered));
  const auto stats = sim.run_until();
  REQUIRE(stats.unmatched.size() == 1);
  CHECK(stats.unmatched[0] == UnmatchedCommand{.node = 0, .peer = 1, .tag = 5, .op = CommandOp::Send});
}

TEST_CASE("identical setups give identical traces") {
  auto run = [] {
    auto c = direct(4);
    c.topology = Topology::Switched;
    c.link.switch_hops = 1;
    Simulator sim(c);
    std::ostringstream trace;
    sim.set_trace(&trace);
    for (NodeId n = 0; n < 4; ++n) {
      sim.add_rx_buffer(n, (n + 3) % 4);
      sim.post_command(n, send_to((n + 1) % 4, 0, 5000 + n * 100, DataPath::Buffered),
                       PostOptions{.lane = 0, .blocking = false});
      sim.post_command(n, send_to((n + 2) % 4, 1, 3000, DataPath::Streamed),
                       PostOptions{.lane = 0, .blocking = false});
      sim.post_command(n, recv_from((n + 3) % 4, 0, 5000 + ((n + 3) % 4) * 100, DataPath::Buffered),
                       PostOptions{.lane = 1});
      sim.post_command(n, recv_from((n + 2) % 4, 1, 3000, DataPath::Streamed), PostOptions{.lane = 2});
    }
    const auto stats = sim.run_until();
    CHECK_FALSE(stats.deadlocked());
    return std::make_pair(trace.str(), stats.end_time);
  };
  const auto a = run();
  const auto b = run();
  CHECK(!a.first.empty());
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("trace timestamps never go backwards") {
  auto c = direct(3);
  Simulator sim(c);
  std::ostringstream trace;
  sim.set_trace(&trace);
  for (NodeId n = 0; n < 3; ++n)
    for (NodeId m = 0; m < 3; ++m)
      if (n != m) {
        sim.post_command(n, send_to(m, 0, 20000, DataPath::Streamed), PostOptions{.lane = m});
        sim.post_command(m, recv_from(n, 0, 20000, DataPath::Streamed), PostOptions{.lane = 10 + n});
      }
  sim.run_until();
  std::istringstream in(trace.str());
  std::string line;
  std::int64_t last = -1;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto t = std::stoll(line.substr(0, line.find(' ')));
    CHECK(t >= last);
    last = t;
    ++lines;
  }
  CHECK(lines > 20);
}

TEST_CASE("streamed messages from two senders interleave and reassemble") {
  auto c = direct(3);
  c.topology = Topology::Switched;
  Simulator sim(c);
  const Bytes size = 20 * 1472;
  auto p1 = pattern(size, 1);
  auto p2 = pattern(size, 2);
  auto s1 = send_to(2, 7, size, DataPath::Streamed);
  s1.payload = p1;
  auto s2 = send_to(2, 8, size, DataPath::Streamed);
  s2.payload = p2;
  sim.post_command(0, s1);
  sim.post_command(1, s2);
  sim.post_command(2, recv_from(0, 7, size, DataPath::Streamed), PostOptions{.lane = 0});
  sim.post_command(2, recv_from(1, 8, size, DataPath::Streamed), PostOptions{.lane = 1});
  const auto stats = sim.run_until();
  CHECK_FALSE(stats.deadlocked());

  const auto& chunks = sim.consumer_stream(2);
  const auto& bytes = sim.consumer_stream_bytes(2);
  CHECK(bytes.size() == 2 * size);
  std::size_t switches = 0;
  for (std::size_t i = 1; i < chunks.size(); ++i)
    if (chunks[i].source != chunks[i - 1].source) ++switches;
  CHECK(switches > 2);

  // the raw stream is not either message laid end to end
  CHECK_FALSE(std::equal(p1->begin(), p1->end(), bytes.begin()));

  std::map<std::pair<NodeId, Tag>, std::vector<std::byte>> rebuilt;
  std::map<std::pair<NodeId, Tag>, Bytes> next_offset;
  for (const auto& ch : chunks) {
    const auto key = std::make_pair(ch.source, ch.tag);
    CHECK(ch.offset == next_offset[key]);
    next_offset[key] += ch.length;
    auto& out = rebuilt[key];
    out.insert(out.end(), bytes.begin() + static_cast<std::ptrdiff_t>(*ch.stream_offset),
               bytes.begin() + static_cast<std::ptrdiff_t>(*ch.stream_offset + ch.length));
  }
  CHECK(rebuilt[{0, 7}] == *p1);
  CHECK(rebuilt[{1, 8}] == *p2);
}

TEST_CASE("single sender stream is contiguous") {
  Simulator sim(direct());
  const Bytes size = 10000;
  auto p = pattern(size, 3);
  auto s = send_to(1, 0, size, DataPath::Streamed);
  s.payload = p;
  sim.post_command(0, s);
  sim.post_command(1, recv_from(0, 0, size, DataPath::Streamed));
  sim.run_until();
  CHECK(sim.consumer_stream_bytes(1) == *p);
}

TEST_CASE("consumer stall delays delivery without loss") {
  const Bytes size = 30000;
  auto run = [&](bool stall) {
    Simulator sim(direct());
    if (stall) sim.add_consumer_stall(1, SimTime::from_seconds(2.5e-6), SimTime::from_seconds(20e-6));
    auto p = pattern(size, 4);
    auto s = send_to(1, 0, size, DataPath::Streamed);
    s.payload = p;
    sim.post_command(0, s);
    const auto r = sim.post_command(1, recv_from(0, 0, size, DataPath::Streamed));
    const auto stats = sim.run_until();
    CHECK_FALSE(stats.deadlocked());
    CHECK(sim.consumer_stream_bytes(1) == *p);
    const auto& m = sim.message(0);
    CHECK(m.injected == size);
    CHECK(m.arrived == size);
    CHECK(m.delivered == size);
    for (const auto& ch : sim.consumer_stream(1))
      if (stall) CHECK_FALSE((ch.time > SimTime::from_seconds(2.5e-6) && ch.time < SimTime::from_seconds(20e-6)));
    return *sim.record(r).completed;
  };
  const auto free_run = run(false);
  const auto stalled = run(true);
  CHECK(stalled >= SimTime::from_seconds(20e-6));
  CHECK(stalled > free_run);
}

TEST_CASE("per-pair messages arrive in FIFO order") {
  Simulator sim(direct());
  sim.add_rx_buffer(1, 0);
  std::vector<CommandHandle> recvs;
  for (Tag t = 0; t < 5; ++t) {
    auto s = send_to(1, 0, 3000 + t * 10, DataPath::Buffered);
    s.payload = pattern(s.size, static_cast<unsigned>(t));
    sim.post_command(0, s, PostOptions{.blocking = false});
    recvs.push_back(sim.post_command(1, recv_from(0, 0, 3000 + t * 10, DataPath::Buffered)));
  }
  const auto stats = sim.run_until();
  CHECK_FALSE(stats.deadlocked());
  for (std::size_t i = 0; i < recvs.size(); ++i) {
    CHECK(*sim.record(recvs[i]).message == i);
    CHECK(sim.received_data(recvs[i]) == *pattern(3000 + i * 10, static_cast<unsigned>(i)));
    if (i) CHECK(*sim.message(i).delivered_at > *sim.message(i - 1).delivered_at);
  }
}

TEST_CASE("windowed transport respects the window and reaches window/RTT") {
  auto c = direct();
  c.transport.kind = TransportKind::Windowed;
  c.transport.mss = 1024;
  c.transport.mtu_payload = 1472;
  c.transport.frame_overhead = 66;
  c.transport.window_bytes = 32768;
  c.transport.window_scaling = 1;
  const double seg = (1024 + 66) / 12.5e9;
  c.transport.ack_latency = 4e-6 - seg - c.link.base_latency;

  auto send_time = [&](Bytes size, Bytes* max_inflight) {
    Simulator sim(c);
    const auto h = sim.post_command(0, send_to(1, 0, size, DataPath::Streamed));
    sim.post_command(1, recv_from(0, 0, size, DataPath::Streamed));
    const auto stats = sim.run_until();
    CHECK_FALSE(stats.deadlocked());
    *max_inflight = stats.max_inflight;
    const auto& rec = sim.record(h);
    return (*rec.completed - *rec.visible).seconds();
  };
  const Bytes mib = Bytes{1} << 20;
  Bytes inflight_1 = 0, inflight_2 = 0;
  const double t1 = send_time(mib, &inflight_1);
  const double t2 = send_time(2 * mib, &inflight_2);
  CHECK(inflight_1 == 32768);
  CHECK(inflight_2 == 32768);

  // the second MiB runs entirely in steady state
  const double goodput = static_cast<double>(mib) / (t2 - t1);
  const double cap = perfmodel::windowed_throughput_cap(
      32768, 4e-6, perfmodel::link_goodput(model_link(c)));
  CHECK(cap == doctest::Approx(8.192e9));
  CHECK(goodput == doctest::Approx(cap).epsilon(0.02));
  CHECK(static_cast<double>(mib) / t1 < cap);
}

TEST_CASE("datagram send completes on delivery, windowed send on the last ack") {
  auto c = direct();
  Simulator udp(c);
  const auto hu = udp.post_command(0, send_to(1, 0, 5000, DataPath::Streamed));
  udp.post_command(1, recv_from(0, 0, 5000, DataPath::Streamed));
  udp.run_until();
  CHECK(*udp.record(hu).completed == *udp.message(0).delivered_at);

  c.transport.kind = TransportKind::Windowed;
  c.transport.ack_latency = 2e-6;
  Simulator tcp(c);
  const auto ht = tcp.post_command(0, send_to(1, 0, 5000, DataPath::Streamed));
  tcp.post_command(1, recv_from(0, 0, 5000, DataPath::Streamed));
  tcp.run_until();
  CHECK(*tcp.record(ht).completed - *tcp.message(0).delivered_at ==
        SimTime::from_seconds(2e-6));
}

TEST_CASE("switch adds the hop latency") {
  auto d = direct();
  auto s = d;
  s.topology = Topology::Switched;
  s.link.switch_hops = 1;
  auto latency = [](const ClusterConfig& c) {
    Simulator sim(c);
    sim.post_command(0, send_to(1, 0, 64, DataPath::Streamed));
    const auto r = sim.post_command(1, recv_from(0, 0, 64, DataPath::Streamed));
    sim.run_until();
    return secs(*sim.record(r).completed);
  };
  CHECK(latency(s) - latency(d) == doctest::Approx(1e-6).epsilon(1e-6));
}

TEST_CASE("simulated ping-ping matches the closed-form model") {
  for (auto topo : {Topology::Direct, Topology::Switched}) {
    for (auto path : {DataPath::Buffered, DataPath::Streamed}) {
      for (auto origin : {Scheduling::Host, Scheduling::PL}) {
        auto c = direct();
        c.topology = topo;
        c.link.switch_hops = topo == Topology::Switched ? 1 : 0;
        const TransferMode mode{path, origin};
        for (Bytes size = 64; size <= (Bytes{4} << 20); size *= 4) {
          Simulator sim(c);
          std::vector<CommandHandle> recvs;
          for (NodeId n : {0u, 1u}) {
            sim.add_rx_buffer(n, 1 - n);
            // buffered: the copy-out command waits behind the send, as a
            // blocking MPI-style exchange does
            const std::uint32_t recv_lane = path == DataPath::Buffered ? 0 : 1;
            sim.post_command(n, send_to(1 - n, 0, size, path, origin), PostOptions{.lane = 0});
            recvs.push_back(sim.post_command(n, recv_from(1 - n, 0, size, path, origin),
                                             PostOptions{.lane = recv_lane}));
          }
          sim.run_until();
          double got = 0;
          for (auto r : recvs) got = std::max(got, secs(*sim.record(r).completed));
          const double want =
              perfmodel::transfer_latency(size, mode, model_link(c), c.sched, c.mem);
          if (size >= 1024)
            CHECK(std::abs(got - want) / want <= 0.05);
          else
            CHECK(std::abs(got - want) <= 0.5e-6);
        }
      }
    }
  }
}
