#include <doctest.h>

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fpgacomm/beff.hpp"
#include "fpgacomm/presets.hpp"

using namespace fpgacomm;
using namespace fpgacomm::beff;

namespace {

BeffResult run_preset(const std::string& name, std::vector<Bytes> sizes, std::uint32_t nodes = 2,
                      std::optional<TransferMode> mode = std::nullopt) {
  const auto& p = presets::find(name);
  BeffConfig cfg;
  cfg.node_count = nodes;
  cfg.message_sizes = std::move(sizes);
  cfg.repetitions = 3;
  cfg.mode = mode.value_or(p.mode);
  return run_beff(cfg, p.cluster);
}

BeffRow row(BytesPerSecond throughput) {
  BeffRow r;
  r.throughput = throughput;
  return r;
}

}  // namespace

TEST_CASE("default sizes are powers of two from 64 B to 4 MiB") {
  const auto s = default_message_sizes();
  CHECK(s.front() == 64);
  CHECK(s.back() == Bytes{4} << 20);
  CHECK(s.size() == 17);
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] == 2 * s[i - 1]);
}

TEST_CASE("ring neighbors") {
  CHECK(ring_neighbors(0, 2) == std::vector<netsim::NodeId>{1});
  CHECK(ring_neighbors(1, 2) == std::vector<netsim::NodeId>{0});
  CHECK(ring_neighbors(0, 3) == std::vector<netsim::NodeId>{1, 2});
  CHECK(ring_neighbors(0, 4) == std::vector<netsim::NodeId>{1, 3});
  CHECK(ring_neighbors(3, 4) == std::vector<netsim::NodeId>{0, 2});
  CHECK(ring_neighbors(0, 1).empty());
}

TEST_CASE("aggregate is the mean throughput") {
  CHECK(beff_aggregate({row(5e9)}) == 5e9);
  CHECK(beff_aggregate({row(7e9), row(7e9), row(7e9)}) == doctest::Approx(7e9));
  CHECK(beff_aggregate({row(2e9), row(4e9)}) == doctest::Approx(3e9));
  CHECK_THROWS_AS(beff_aggregate({}), std::invalid_argument);
}

TEST_CASE("invalid configurations") {
  const auto& p = presets::find("direct-udp-pl");
  BeffConfig cfg;
  cfg.node_count = 1;
  CHECK_THROWS_AS(run_beff(cfg, p.cluster), netsim::ConfigError);
  cfg.node_count = 2;
  cfg.message_sizes = {128, 64};
  CHECK_THROWS_AS(run_beff(cfg, p.cluster), netsim::ConfigError);
  cfg.message_sizes = {};
  CHECK_THROWS_AS(run_beff(cfg, p.cluster), netsim::ConfigError);
  cfg.message_sizes = {64};
  cfg.repetitions = 0;
  CHECK_THROWS_AS(run_beff(cfg, p.cluster), netsim::ConfigError);
}

TEST_CASE("64 B latency regimes of the presets") {
  CHECK(run_preset("direct-udp-pl", {64}).rows[0].latency < 3e-6);
  for (const char* name : {"switch-udp-pl", "switch-tcp-pl", "switch-tcp-pl-optimized"}) {
    const double l = run_preset(name, {64}).rows[0].latency;
    CHECK(l >= 2.5e-6);
    CHECK(l <= 5e-6);
  }
  const double host = run_preset("buffered-host", {64}).rows[0].latency;
  CHECK(host >= 55e-6);
  CHECK(host <= 70e-6);
  CHECK(run_preset("mpi-pcie-baseline", {64}).rows[0].latency > 110e-6);
}

TEST_CASE("switch adds about one microsecond at every size") {
  const auto sizes = default_message_sizes();
  const auto d = run_preset("direct-udp-pl", sizes);
  const auto s = run_preset("switch-udp-pl", sizes);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    CAPTURE(sizes[i]);
    CHECK(s.rows[i].latency - d.rows[i].latency == doctest::Approx(1e-6).epsilon(0.3));
  }
}

TEST_CASE("latency grows with size and throughput stays physical") {
  for (const auto& p : presets::all()) {
    CAPTURE(p.name);
    const auto r = run_preset(p.name, default_message_sizes(), 3);
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      CHECK(r.rows[i].latency > 0);
      CHECK(r.rows[i].throughput <= 3 * 2 * p.cluster.link.raw_bandwidth);
      if (i) CHECK(r.rows[i].latency >= r.rows[i - 1].latency);
    }
    CHECK(r.b_eff == doctest::Approx(beff_aggregate(r.rows)));
  }
}

TEST_CASE("larger direct ring keeps per-pair latency") {
  const std::vector<Bytes> sizes{64, 4096, 262144, Bytes{4} << 20};
  for (const char* name : {"direct-udp-pl", "buffered-host"}) {
    const auto r4 = run_preset(name, sizes, 4);
    const auto r8 = run_preset(name, sizes, 8);
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      CHECK(r8.rows[i].latency == doctest::Approx(r4.rows[i].latency).epsilon(1e-9));
      CHECK(r8.rows[i].throughput == doctest::Approx(2 * r4.rows[i].throughput).epsilon(1e-9));
    }
  }
}

TEST_CASE("4 MiB throughput approaches the transport bound") {
  const Bytes big = Bytes{4} << 20;
  struct Case {
    const char* preset;
    TransferMode mode;
  };
  const TransferMode streamed{DataPath::Streamed, Scheduling::PL};
  const TransferMode buffered{DataPath::Buffered, Scheduling::PL};
  for (const auto& c : {Case{"direct-udp-pl", streamed}, Case{"direct-udp-pl", buffered},
                        Case{"switch-udp-pl", streamed}, Case{"switch-tcp-pl", streamed},
                        Case{"switch-tcp-pl-optimized", streamed}}) {
    CAPTURE(c.preset);
    const auto& p = presets::find(c.preset);
    const auto link = netsim::model_link(p.cluster);
    double bound = std::min(transport_throughput_bound(p.cluster), perfmodel::link_goodput(link));
    if (c.mode.path == DataPath::Buffered)
      bound = std::min(bound, perfmodel::buffered_peak_throughput(p.cluster.mem.mem_bandwidth,
                                                                  perfmodel::link_goodput(link)));
    const auto r = run_preset(c.preset, {big}, 2, c.mode);
    CHECK(r.rows[0].link_throughput == doctest::Approx(bound).epsilon(0.05));
  }
}

TEST_CASE("window scaling lifts TCP throughput") {
  const Bytes big = Bytes{4} << 20;
  const auto& tcp = presets::find("switch-tcp-pl");
  const auto plain = run_preset("switch-tcp-pl", {big});
  const double w_over_rtt = static_cast<double>(tcp.cluster.transport.effective_window() /
                                                tcp.cluster.transport.mss * tcp.cluster.transport.mss) /
                            windowed_rtt(tcp.cluster);
  CHECK(plain.rows[0].link_throughput == doctest::Approx(w_over_rtt).epsilon(0.05));
  CHECK(plain.rows[0].link_throughput == doctest::Approx(8.5e9).epsilon(0.05));
  CHECK(plain.max_inflight <= tcp.cluster.transport.effective_window());

  const auto opt = run_preset("switch-tcp-pl-optimized", {big});
  CHECK(opt.rows[0].link_throughput == doctest::Approx(12.3e9).epsilon(0.05));
}

TEST_CASE("closed-form latency tracks the simulation") {
  for (const auto& p : presets::all()) {
    for (auto path : {DataPath::Buffered, DataPath::Streamed}) {
      for (auto sched : {Scheduling::Host, Scheduling::PL}) {
        CAPTURE(p.name);
        const auto r = run_preset(p.name, default_message_sizes(), 2, TransferMode{path, sched});
        for (const auto& row : r.rows) {
          CAPTURE(row.size);
          if (row.size >= 1024)
            CHECK(row.rel_error <= 0.05);
          else
            CHECK(std::abs(row.latency - row.model_latency) <= 0.5e-6);
        }
      }
    }
  }
}

TEST_CASE("csv output") {
  const auto r = run_preset("direct-udp-pl", {64, 128});
  std::ostringstream a, b;
  write_beff_csv(a, r);
  write_model_error_csv(b, r);
  std::istringstream in(a.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "size_bytes,latency_s,throughput_Bps,model_latency_s,rel_error");
  std::string first;
  std::getline(in, first);
  CHECK(first.rfind("64,", 0) == 0);
  CHECK(b.str().rfind("size_bytes,sim_latency_s,model_latency_s,abs_error_s,rel_error\n", 0) == 0);

  std::ostringstream again;
  write_beff_csv(again, run_preset("direct-udp-pl", {64, 128}));
  CHECK(again.str() == a.str());
}
