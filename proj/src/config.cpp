#include "fpgacomm/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <type_traits>

#include <fmt/format.h>

#include "fpgacomm/presets.hpp"

namespace fpgacomm::config {

using nlohmann::json;

namespace {

std::string to_string(netsim::Topology t) {
  return t == netsim::Topology::Direct ? "direct" : "switched";
}
std::string to_string(netsim::TransportKind k) {
  return k == netsim::TransportKind::Datagram ? "datagram" : "windowed";
}
std::string to_string(DataPath p) { return p == DataPath::Buffered ? "buffered" : "streamed"; }
std::string to_string(Scheduling s) { return s == Scheduling::Host ? "host" : "pl"; }
std::string to_string(mesh::Side s) {
  switch (s) {
    case mesh::Side::South: return "south";
    case mesh::Side::East: return "east";
    case mesh::Side::North: return "north";
    case mesh::Side::West: return "west";
  }
  return "?";
}

netsim::Topology parse_topology(const std::string& s) {
  if (s == "direct") return netsim::Topology::Direct;
  if (s == "switched") return netsim::Topology::Switched;
  throw std::invalid_argument("expected 'direct' or 'switched'");
}
netsim::TransportKind parse_transport(const std::string& s) {
  if (s == "datagram") return netsim::TransportKind::Datagram;
  if (s == "windowed") return netsim::TransportKind::Windowed;
  throw std::invalid_argument("expected 'datagram' or 'windowed'");
}
DataPath parse_path(const std::string& s) {
  if (s == "buffered") return DataPath::Buffered;
  if (s == "streamed") return DataPath::Streamed;
  throw std::invalid_argument("expected 'buffered' or 'streamed'");
}
Scheduling parse_scheduling(const std::string& s) {
  if (s == "host") return Scheduling::Host;
  if (s == "pl") return Scheduling::PL;
  throw std::invalid_argument("expected 'host' or 'pl'");
}
}  // namespace

InitialCondition parse_initial_condition(const std::string& s) {
  if (s == "lake-at-rest") return InitialCondition::LakeAtRest;
  if (s == "dam-break") return InitialCondition::DamBreak;
  if (s == "tidal") return InitialCondition::Tidal;
  throw std::invalid_argument("expected 'lake-at-rest', 'dam-break' or 'tidal'");
}

namespace {

template <class T>
T convert(const json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
    if (v.is_number_integer()) {
      const auto i = v.get<std::int64_t>();
      if (std::is_unsigned_v<T> && i < 0) throw std::invalid_argument("expected a non-negative integer");
      return static_cast<T>(i);
    }
    throw std::invalid_argument("expected an integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw std::invalid_argument("expected a number");
    return v.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw std::invalid_argument("expected a string");
    return v.get<std::string>();
  } else {
    if (!v.is_array()) throw std::invalid_argument("expected an array");
    T out;
    for (const auto& item : v) out.push_back(convert<typename T::value_type>(item));
    return out;
  }
}

/// One JSON object being read; remembers which keys were consumed so that
/// leftovers can be reported.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(fmt::format("{} must be an object", path_));
  }

  template <class T>
  Reader& get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return *this;
    try {
      out = convert<T>(j_.at(key));
    } catch (const std::invalid_argument& e) {
      throw SchemaError(fmt::format("{}.{}: {}", path_, key, e.what()));
    }
    return *this;
  }

  template <class T, class Parse>
  Reader& get_enum(const char* key, T& out, Parse parse) {
    seen_.insert(key);
    if (!j_.contains(key)) return *this;
    try {
      out = parse(convert<std::string>(j_.at(key)));
    } catch (const std::invalid_argument& e) {
      throw SchemaError(fmt::format("{}.{}: {}", path_, key, e.what()));
    }
    return *this;
  }

  void sub(const char* key, const std::function<void(Reader&)>& body) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Reader r(j_.at(key), path_ + "." + key);
    body(r);
    r.finish();
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key()))
        throw SchemaError(fmt::format("unknown key '{}' in {}", item.key(), path_));
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_cluster(Reader& r, netsim::ClusterConfig& c) {
  r.get_enum("topology", c.topology, parse_topology);
  r.get("node_count", c.node_count);
  r.sub("link", [&](Reader& l) {
    l.get("raw_bandwidth", c.link.raw_bandwidth)
        .get("base_latency", c.link.base_latency)
        .get("switch_hops", c.link.switch_hops)
        .get("per_hop_latency", c.link.per_hop_latency);
  });
  r.sub("sched", [&](Reader& s) {
    s.get("host_invoke_latency", c.sched.host_invoke_latency)
        .get("pl_command_latency", c.sched.pl_command_latency);
  });
  r.sub("mem", [&](Reader& m) {
    m.get("mem_bandwidth", c.mem.mem_bandwidth).get("copy_setup_latency", c.mem.copy_setup_latency);
  });
  r.sub("transport", [&](Reader& t) {
    auto& tc = c.transport;
    t.get_enum("kind", tc.kind, parse_transport)
        .get("mtu_payload", tc.mtu_payload)
        .get("frame_overhead", tc.frame_overhead)
        .get("window_bytes", tc.window_bytes)
        .get("window_scaling", tc.window_scaling)
        .get("mss", tc.mss)
        .get("ack_latency", tc.ack_latency);
  });
  c.link.mtu_payload = c.transport.segment_payload();
  c.link.frame_overhead = c.transport.frame_overhead;
}

}  // namespace

std::string to_string(InitialCondition c) {
  switch (c) {
    case InitialCondition::LakeAtRest: return "lake-at-rest";
    case InitialCondition::DamBreak: return "dam-break";
    case InitialCondition::Tidal: return "tidal";
  }
  return "?";
}

ExperimentConfig from_preset(const std::string& name) {
  const auto& p = presets::find(name);
  ExperimentConfig cfg;
  cfg.preset = p.name;
  cfg.cluster = p.cluster;
  cfg.mode = p.mode;
  cfg.scheme = p.scheme;
  cfg.pipeline = p.pipeline;
  cfg.scaling.method = cfg.solve.method;
  return cfg;
}

ExperimentConfig resolve(const json& doc, const std::optional<std::string>& preset_override) {
  if (!doc.is_object()) throw SchemaError("configuration must be a JSON object");
  std::string preset = "direct-udp-pl";
  if (doc.contains("preset")) {
    if (!doc.at("preset").is_string()) throw SchemaError("config.preset: expected a string");
    preset = doc.at("preset").get<std::string>();
  }
  if (preset_override) preset = *preset_override;
  ExperimentConfig cfg;
  try {
    cfg = from_preset(preset);
  } catch (const netsim::ConfigError& e) {
    throw SchemaError(e.what());
  }

  Reader r(doc, "config");
  std::string ignored;
  r.get("preset", ignored);
  r.get("out_dir", cfg.out_dir);
  r.sub("cluster", [&](Reader& c) { read_cluster(c, cfg.cluster); });
  r.sub("mode", [&](Reader& m) {
    m.get_enum("path", cfg.mode.path, parse_path)
        .get_enum("scheduling", cfg.mode.scheduling, parse_scheduling);
  });
  r.sub("pipeline", [&](Reader& p) {
    p.get("f", cfg.pipeline.f)
        .get("l_pipe", cfg.pipeline.l_pipe)
        .get("d_ext", cfg.pipeline.d_ext)
        .get("flop_per_element", cfg.pipeline.flop_per_element)
        .get("bytes_per_element", cfg.bytes_per_element)
        .get_enum("halo_scheme", cfg.scheme, swe::parse_halo_scheme);
  });
  r.sub("beff", [&](Reader& b) {
    b.get("nodes", cfg.beff.nodes).get("sizes", cfg.beff.sizes).get("repetitions", cfg.beff.repetitions);
  });
  r.sub("swe", [&](Reader& s) {
    s.sub("solve", [&](Reader& v) {
      auto& so = cfg.solve;
      v.get("mesh_file", so.mesh_file)
          .get("nx", so.nx)
          .get("ny", so.ny)
          .get_enum("sea_side", so.sea_side, mesh::parse_side)
          .get("k", so.k)
          .get_enum("method", so.method, mesh::parse_partition_method)
          .get("steps", so.steps)
          .get("dt", so.dt)
          .get("g", so.g)
          .get("mean_depth", so.sea.mean_depth)
          .get("tide_amplitude", so.sea.amplitude)
          .get("tide_period", so.sea.period)
          .get_enum("initial", so.initial, parse_initial_condition)
          .get("snapshot_every", so.snapshot_every)
          .get("check_oracle", so.check_oracle);
    });
    s.sub("scaling", [&](Reader& v) {
      auto& sc = cfg.scaling;
      v.get_enum("kind", sc.kind, swe::parse_scaling_kind)
          .get("ks", sc.ks)
          .get("cells_per_part", sc.cells_per_part)
          .get("strong_nx", sc.strong_nx)
          .get("strong_ny", sc.strong_ny)
          .get_enum("method", sc.method, mesh::parse_partition_method)
          .get("steps", sc.steps);
    });
  });
  r.sub("model", [&](Reader& m) { m.get("sizes", cfg.model.sizes); });
  r.finish();
  return cfg;
}

ExperimentConfig load(const std::filesystem::path& path,
                      const std::optional<std::string>& preset_override) {
  std::ifstream in(path);
  if (!in) throw SchemaError(fmt::format("cannot open config file '{}'", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return resolve(doc, preset_override);
}

void validate(const ExperimentConfig& cfg) {
  try {
    netsim::ClusterConfig c = cfg.cluster;
    c.node_count = std::max<std::uint32_t>(c.node_count, 1);
    netsim::Simulator probe(c);
  } catch (const netsim::ConfigError& e) {
    throw SchemaError(e.what());
  }
  const auto& p = cfg.pipeline;
  if (!(p.f > 0)) throw SchemaError("pipeline.f must be > 0");
  if (p.l_pipe < 0 || p.d_ext < 0 || p.flop_per_element < 0)
    throw SchemaError("pipeline cycle counts must be >= 0");
  if (cfg.bytes_per_element < 32) throw SchemaError("pipeline.bytes_per_element must be >= 32");
  if (cfg.beff.repetitions < 1) throw SchemaError("beff.repetitions must be >= 1");
  if (cfg.beff.sizes.empty()) throw SchemaError("beff.sizes must not be empty");
  for (std::size_t i = 1; i < cfg.beff.sizes.size(); ++i)
    if (cfg.beff.sizes[i] <= cfg.beff.sizes[i - 1])
      throw SchemaError("beff.sizes must be strictly increasing");
  if (cfg.model.sizes.empty()) throw SchemaError("model.sizes must not be empty");
  if (cfg.solve.k < 1) throw SchemaError("swe.solve.k must be >= 1");
  if (cfg.solve.mesh_file.empty() && (cfg.solve.nx < 1 || cfg.solve.ny < 1))
    throw SchemaError("swe.solve.nx and ny must be >= 1");
  if (cfg.solve.dt < 0) throw SchemaError("swe.solve.dt must be >= 0");
  if (!(cfg.solve.sea.period > 0)) throw SchemaError("swe.solve.tide_period must be > 0");
  if (cfg.scaling.ks.empty()) throw SchemaError("swe.scaling.ks must not be empty");
  for (auto k : cfg.scaling.ks)
    if (k < 1) throw SchemaError("swe.scaling.ks entries must be >= 1");
  if (cfg.scaling.cells_per_part < 1) throw SchemaError("swe.scaling.cells_per_part must be >= 1");
  if (cfg.scaling.steps < 1) throw SchemaError("swe.scaling.steps must be >= 1");
}

json to_json(const ExperimentConfig& cfg) {
  const auto& c = cfg.cluster;
  const auto& t = c.transport;
  json j;
  j["preset"] = cfg.preset;
  j["out_dir"] = cfg.out_dir;
  j["cluster"] = {
      {"topology", to_string(c.topology)},
      {"node_count", c.node_count},
      {"link",
       {{"raw_bandwidth", c.link.raw_bandwidth},
        {"base_latency", c.link.base_latency},
        {"switch_hops", c.link.switch_hops},
        {"per_hop_latency", c.link.per_hop_latency}}},
      {"sched",
       {{"host_invoke_latency", c.sched.host_invoke_latency},
        {"pl_command_latency", c.sched.pl_command_latency}}},
      {"mem",
       {{"mem_bandwidth", c.mem.mem_bandwidth}, {"copy_setup_latency", c.mem.copy_setup_latency}}},
      {"transport",
       {{"kind", to_string(t.kind)},
        {"mtu_payload", t.mtu_payload},
        {"frame_overhead", t.frame_overhead},
        {"window_bytes", t.window_bytes},
        {"window_scaling", t.window_scaling},
        {"mss", t.mss},
        {"ack_latency", t.ack_latency}}}};
  j["mode"] = {{"path", to_string(cfg.mode.path)}, {"scheduling", to_string(cfg.mode.scheduling)}};
  j["pipeline"] = {{"f", cfg.pipeline.f},
                   {"l_pipe", cfg.pipeline.l_pipe},
                   {"d_ext", cfg.pipeline.d_ext},
                   {"flop_per_element", cfg.pipeline.flop_per_element},
                   {"bytes_per_element", cfg.bytes_per_element},
                   {"halo_scheme", swe::to_string(cfg.scheme)}};
  j["beff"] = {{"nodes", cfg.beff.nodes},
               {"sizes", cfg.beff.sizes},
               {"repetitions", cfg.beff.repetitions}};
  const auto& so = cfg.solve;
  j["swe"]["solve"] = {{"mesh_file", so.mesh_file},
                       {"nx", so.nx},
                       {"ny", so.ny},
                       {"sea_side", to_string(so.sea_side)},
                       {"k", so.k},
                       {"method", mesh::to_string(so.method)},
                       {"steps", so.steps},
                       {"dt", so.dt},
                       {"g", so.g},
                       {"mean_depth", so.sea.mean_depth},
                       {"tide_amplitude", so.sea.amplitude},
                       {"tide_period", so.sea.period},
                       {"initial", to_string(so.initial)},
                       {"snapshot_every", so.snapshot_every},
                       {"check_oracle", so.check_oracle}};
  const auto& sc = cfg.scaling;
  j["swe"]["scaling"] = {{"kind", swe::to_string(sc.kind)},
                         {"ks", sc.ks},
                         {"cells_per_part", sc.cells_per_part},
                         {"strong_nx", sc.strong_nx},
                         {"strong_ny", sc.strong_ny},
                         {"method", mesh::to_string(sc.method)},
                         {"steps", sc.steps}};
  j["model"] = {{"sizes", cfg.model.sizes}};
  return j;
}

}  // namespace fpgacomm::config
