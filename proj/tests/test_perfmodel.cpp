#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <limits>

#include "fpgacomm/perfmodel.hpp"

using namespace fpgacomm;
using namespace fpgacomm::perfmodel;

namespace {

LinkParams link_2us() {
  LinkParams l;
  l.raw_bandwidth = 12.5e9;
  l.base_latency = 2e-6;
  l.switch_hops = 0;
  l.per_hop_latency = 1e-6;
  l.frame_overhead = 66;
  l.mtu_payload = 1472;
  return l;
}

AppModelParams stall_case() {
  // e_core + d_ext = 6500, e_send + e_recv = 600, l_pipe = 100
  AppModelParams p;
  p.f = 256e6;
  p.flop_per_element = 100;
  p.e_total = 6500;
  p.e_core = 6400;
  p.d_ext = 100;
  p.e_send = 300;
  p.e_recv = 300;
  p.l_pipe = 100;
  return p;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("frames and wire bytes") {
  CHECK(frame_count(0, 1472) == 1);
  CHECK(frame_count(1, 1472) == 1);
  CHECK(frame_count(1472, 1472) == 1);
  CHECK(frame_count(1473, 1472) == 2);
  CHECK(frame_count(1048576, 1472) == 713);
  CHECK(wire_bytes(0, 1472, 66) == 66);
  CHECK(wire_bytes(1048576, 1472, 66) == 1048576 + 713 * 66);
}

TEST_CASE("link latency") {
  const auto l = link_2us();
  CHECK(link_latency(0, l) == doctest::Approx(2e-6 + 66 / 12.5e9).epsilon(1e-12));

  const double mib = link_latency(1048576, l);
  CHECK(mib == doctest::Approx(2e-6 + (1048576.0 + 713 * 66) / 12.5e9).epsilon(1e-12));
  CHECK(mib == doctest::Approx(89.65e-6).epsilon(1e-3));

  auto sw = l;
  sw.switch_hops = 1;
  CHECK(link_latency(1048576, sw) - mib == doctest::Approx(1e-6).epsilon(1e-9));
}

TEST_CASE("copy latency") {
  MemoryParams m{.mem_bandwidth = 14e9, .copy_setup_latency = 0.5e-6};
  CHECK(copy_latency(0, m) == 0.5e-6);
  CHECK(copy_latency(1048576, m) == doctest::Approx(0.5e-6 + 74.898e-6).epsilon(1e-4));
  MemoryParams unit{.mem_bandwidth = 14e9, .copy_setup_latency = 0};
  CHECK(copy_latency(14'000'000'000ULL, unit) == doctest::Approx(1.0));
}

TEST_CASE("transfer latency by mode") {
  LinkParams zero_link = link_2us();
  zero_link.base_latency = 0;
  zero_link.frame_overhead = 0;
  SchedulingParams sched{.host_invoke_latency = 30e-6, .pl_command_latency = 0.3e-6};
  MemoryParams mem{.mem_bandwidth = 1e300, .copy_setup_latency = 0};

  // l_c = 2us with a pure propagation link
  LinkParams l = zero_link;
  l.base_latency = 2e-6;
  const TransferMode buffered_host{DataPath::Buffered, Scheduling::Host};
  const TransferMode streamed_pl{DataPath::Streamed, Scheduling::PL};
  CHECK(transfer_latency(0, buffered_host, l, sched, mem) == doctest::Approx(62e-6));
  CHECK(transfer_latency(0, streamed_pl, l, sched, mem) == doctest::Approx(2.3e-6));
  CHECK(transfer_latency(0, streamed_pl, l, sched, mem) < 3e-6);

  SchedulingParams none{.host_invoke_latency = 0, .pl_command_latency = 0};
  CHECK(transfer_latency(0, streamed_pl, zero_link, none, mem) == 0.0);
}

TEST_CASE("streamed and PL never slower") {
  const auto l = link_2us();
  SchedulingParams sched;
  MemoryParams mem;
  for (Bytes s = 0; s <= (Bytes{4} << 20); s = s ? s * 4 : 64) {
    for (auto sch : {Scheduling::Host, Scheduling::PL}) {
      const TransferMode streamed{DataPath::Streamed, sch};
      const TransferMode buffered{DataPath::Buffered, sch};
      CHECK(transfer_latency(s, streamed, l, sched, mem) <=
            transfer_latency(s, buffered, l, sched, mem));
    }
    for (auto path : {DataPath::Buffered, DataPath::Streamed}) {
      const TransferMode pl{path, Scheduling::PL};
      const TransferMode host{path, Scheduling::Host};
      CHECK(transfer_latency(s, pl, l, sched, mem) <= transfer_latency(s, host, l, sched, mem));
    }
  }
}

TEST_CASE("buffered peak throughput") {
  CHECK(buffered_peak_throughput(14e9, 12.5e9) == doctest::Approx(6.6e9).epsilon(0.05 / 6.6));
  CHECK(buffered_peak_throughput(7e9, 7e9) == doctest::Approx(3.5e9));
  CHECK(buffered_peak_throughput(1e12, 12.5e9) == doctest::Approx(12.34e9).epsilon(1e-3));
  for (double a : {1e6, 3e9, 14e9, 1e12})
    for (double b : {2e6, 12.5e9, 5e11}) CHECK(buffered_peak_throughput(a, b) < std::min(a, b));
}

TEST_CASE("windowed throughput cap") {
  CHECK(windowed_throughput_cap(32768, 4e-6, 12.3e9) == doctest::Approx(8.192e9));
  CHECK(windowed_throughput_cap(1e30, 4e-6, 12.3e9) == 12.3e9);
  CHECK(windowed_throughput_cap(12.3e9 * 4e-6, 4e-6, 12.3e9) == doctest::Approx(12.3e9));
}

TEST_CASE("link goodput") {
  const auto l = link_2us();
  CHECK(link_goodput(l) == doctest::Approx(12.5e9 * 1472.0 / (1472.0 + 66.0)));
}

TEST_CASE("communication latency model") {
  AppModelParams p;
  p.f = 274e6;
  p.l_pingping = 3e-6;
  CHECK(comm_latency_model(p, 0.3e-6, 1e-6) == 3e-6);

  p.e_send = 512;
  p.e_recv = 512;
  p.n_max = 2;
  const double expected = 1024 / 274e6 + 4 * 0.3e-6 + 2 * 1e-6 + 3e-6;
  CHECK(comm_latency_model(p, 0.3e-6, 1e-6) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(comm_latency_model(p, 0.3e-6, 1e-6) == doctest::Approx(9.94e-6).epsilon(1e-3));

  // per-neighbor copy is the full copy latency of the halo message
  SchedulingParams sched{.host_invoke_latency = 30e-6, .pl_command_latency = 0.3e-6};
  MemoryParams mem{.mem_bandwidth = 14e9, .copy_setup_latency = 0.5e-6};
  const double with_copy = comm_latency_model(p, sched, mem, 14000);
  CHECK(with_copy == doctest::Approx(1024 / 274e6 + 4 * 0.3e-6 + 2 * (0.5e-6 + 1e-6) + 3e-6));
  CHECK(comm_latency_model(p, sched, mem, 14000, Scheduling::Host) > with_copy);

  for (double n = 1; n <= 64; n *= 2) {
    auto a = p;
    a.n_max = n;
    auto b = p;
    b.n_max = 2 * n;
    CHECK(comm_latency_model(a, 1e-9, 0) < comm_latency_model(b, 1e-9, 0));
    CHECK(comm_latency_model(a, 0, 1e-9) < comm_latency_model(b, 0, 1e-9));
  }
}

TEST_CASE("throughput model and stall fraction") {
  auto p = stall_case();
  const double compute_bound = p.f * p.flop_per_element * p.e_total / (6500 + 600 + 100);
  CHECK(app_throughput_model(p, 0) == doctest::Approx(compute_bound));
  CHECK(app_throughput_model(p, 6500 / p.f) == doctest::Approx(compute_bound));
  CHECK(stall_fraction(p, 0) == 0);
  CHECK(step_cycles(p, 0) == 7200);

  const double l_comm = 120e-6;
  CHECK(l_comm * p.f == doctest::Approx(30720));
  CHECK(step_cycles(p, l_comm) == doctest::Approx(31420));
  CHECK(stall_fraction(p, l_comm) == doctest::Approx((30720.0 - 6500) / 31420).epsilon(1e-12));
  CHECK(stall_fraction(p, l_comm) == doctest::Approx(0.771).epsilon(1e-3));
  CHECK(stall_fraction(p, l_comm) >= 0.70);
  CHECK(stall_fraction(p, l_comm) <= 0.85);

  double prev = 0;
  for (double l : {1e-3, 1e-2, 1.0, 100.0}) {
    const double s = stall_fraction(p, l);
    CHECK(s < 1.0);
    CHECK(s > prev);
    prev = s;
  }
  CHECK(prev > 0.999);
}

TEST_CASE("throughput monotone in l_comm and e_core") {
  auto p = stall_case();
  double prev = std::numeric_limits<double>::infinity();
  for (double l = 0; l <= 300e-6; l += 2.5e-6) {
    const double t = app_throughput_model(p, l);
    CHECK(t <= prev);
    prev = t;
  }
  // while the step is stall-bound, extra core work hides behind the wait
  const double l_comm = 200e-6;
  double prev_stalled = -1;
  for (double core = 1000; core <= 6400; core += 200) {
    auto q = p;
    q.e_core = core;
    const double t = app_throughput_model(q, l_comm);
    if (prev_stalled >= 0) CHECK(t >= prev_stalled);
    prev_stalled = t;
  }
}

TEST_CASE("pure functions are bitwise repeatable") {
  const auto l = link_2us();
  SchedulingParams sched;
  MemoryParams mem;
  auto p = stall_case();
  p.n_max = 5;
  p.l_pingping = 2.7e-6;
  for (Bytes s : {Bytes{0}, Bytes{777}, Bytes{1} << 20}) {
    const TransferMode m{DataPath::Buffered, Scheduling::Host};
    CHECK(same_bits(transfer_latency(s, m, l, sched, mem), transfer_latency(s, m, l, sched, mem)));
    CHECK(same_bits(comm_latency_model(p, sched, mem, s), comm_latency_model(p, sched, mem, s)));
  }
  CHECK(same_bits(app_throughput_model(p, 1e-4), app_throughput_model(p, 1e-4)));
  CHECK(same_bits(stall_fraction(p, 1e-4), stall_fraction(p, 1e-4)));
}
