#include "fpgacomm/cli.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "fpgacomm/beff.hpp"
#include "fpgacomm/config.hpp"
#include "fpgacomm/mesh.hpp"
#include "fpgacomm/presets.hpp"
#include "fpgacomm/swe.hpp"

namespace fpgacomm::cli {

namespace fs = std::filesystem;
using config::ExperimentConfig;
using config::SchemaError;

namespace {

struct Common {
  std::optional<std::string> preset;
  std::optional<std::string> config_file;
  std::optional<std::string> out_dir;
  std::optional<std::string> trace_file;
  bool dump_config = false;
};

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      if (item.front() == '-') throw std::invalid_argument(item);
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size())
      throw SchemaError(fmt::format("{}: '{}' is not a non-negative integer", what, item));
    out.push_back(static_cast<T>(v));
  }
  if (out.empty()) throw SchemaError(fmt::format("{}: empty sweep list", what));
  return out;
}

TransferMode parse_mode(const std::string& s) {
  if (s == "buffered-host") return {DataPath::Buffered, Scheduling::Host};
  if (s == "buffered-pl") return {DataPath::Buffered, Scheduling::PL};
  if (s == "streamed-host") return {DataPath::Streamed, Scheduling::Host};
  if (s == "streamed-pl") return {DataPath::Streamed, Scheduling::PL};
  throw SchemaError(fmt::format(
      "unknown mode '{}' (buffered-host, buffered-pl, streamed-host, streamed-pl)", s));
}

std::string mode_name(TransferMode m) {
  return fmt::format("{}-{}", m.path == DataPath::Buffered ? "buffered" : "streamed",
                     m.scheduling == Scheduling::Host ? "host" : "pl");
}

/// Applies a parser that throws std::invalid_argument, reporting as SchemaError.
template <class F>
auto checked(F&& f, const std::string& value) {
  try {
    return f(value);
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
}

ExperimentConfig resolve_common(const Common& c) {
  ExperimentConfig cfg;
  if (c.config_file) {
    cfg = config::load(*c.config_file, c.preset);
  } else {
    try {
      cfg = config::from_preset(c.preset.value_or("direct-udp-pl"));
    } catch (const netsim::ConfigError& e) {
      throw SchemaError(e.what());
    }
  }
  if (c.out_dir) cfg.out_dir = *c.out_dir;
  return cfg;
}

std::ofstream open_out(const ExperimentConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  const fs::path path = fs::path(cfg.out_dir) / name;
  std::ofstream out(path);
  if (!out) throw SchemaError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

struct Trace {
  std::ofstream file;
  std::ostream* get() { return file.is_open() ? &file : nullptr; }
};

Trace open_trace(const Common& c) {
  Trace t;
  if (c.trace_file) {
    t.file.open(*c.trace_file);
    if (!t.file) throw SchemaError(fmt::format("cannot write trace file '{}'", *c.trace_file));
  }
  return t;
}

bool dump(const Common& c, const ExperimentConfig& cfg, std::ostream& out) {
  if (!c.dump_config) return false;
  out << config::to_json(cfg).dump(2) << '\n';
  return true;
}

// ---------------------------------------------------------------------------

struct BeffFlags {
  std::optional<std::uint32_t> nodes;
  std::optional<std::string> sizes;
  std::optional<std::uint32_t> reps;
  std::optional<std::string> mode;
};

int cmd_beff(const Common& c, const BeffFlags& f, std::ostream& out) {
  ExperimentConfig cfg = resolve_common(c);
  if (f.nodes) cfg.beff.nodes = *f.nodes;
  if (f.sizes) cfg.beff.sizes = parse_list<Bytes>(*f.sizes, "--sizes");
  if (f.reps) cfg.beff.repetitions = *f.reps;
  if (f.mode) cfg.mode = parse_mode(*f.mode);
  if (cfg.beff.nodes < 2)
    throw SchemaError(fmt::format("--nodes must be >= 2 (got {})", cfg.beff.nodes));
  config::validate(cfg);
  if (dump(c, cfg, out)) return kOk;

  beff::BeffConfig bc{.node_count = cfg.beff.nodes,
                      .message_sizes = cfg.beff.sizes,
                      .repetitions = cfg.beff.repetitions,
                      .mode = cfg.mode};
  auto trace = open_trace(c);
  const auto result = beff::run_beff(bc, cfg.cluster, trace.get());
  {
    auto csv = open_out(cfg, "beff.csv");
    beff::write_beff_csv(csv, result);
    auto err = open_out(cfg, "beff_model_error.csv");
    beff::write_model_error_csv(err, result);
  }
  out << fmt::format("b_eff {} nodes, preset {}, mode {}\n", cfg.beff.nodes, cfg.preset,
                     mode_name(cfg.mode));
  out << fmt::format("{:>10} {:>14} {:>14} {:>16} {:>10}\n", "size_B", "latency_us", "model_us",
                     "link_GBps", "rel_err");
  for (const auto& r : result.rows)
    out << fmt::format("{:>10} {:>14.4f} {:>14.4f} {:>16.4f} {:>10.4f}\n", r.size,
                       r.latency * 1e6, r.model_latency * 1e6, r.link_throughput / 1e9,
                       r.rel_error);
  out << fmt::format("b_eff aggregate {:.4f} GB/s\n", result.b_eff / 1e9);
  return kOk;
}

// ---------------------------------------------------------------------------

struct SolveFlags {
  std::optional<std::uint32_t> k;
  std::optional<std::uint32_t> nx;
  std::optional<std::uint32_t> ny;
  std::optional<std::uint64_t> steps;
  std::optional<double> dt;
  std::optional<std::string> mesh_file;
  std::optional<std::string> method;
  std::optional<std::string> initial;
  std::optional<std::string> scheme;
  std::optional<std::uint64_t> snapshot_every;
  bool check_oracle = false;
};

std::vector<swe::State> initial_state(const mesh::Mesh& m, const config::SolveSection& s) {
  switch (s.initial) {
    case config::InitialCondition::LakeAtRest:
    case config::InitialCondition::Tidal:
      return swe::lake_at_rest(m, s.sea.mean_depth);
    case config::InitialCondition::DamBreak: {
      double xmin = INFINITY, xmax = -INFINITY;
      for (const auto& v : m.vertices()) {
        xmin = std::min(xmin, v.x);
        xmax = std::max(xmax, v.x);
      }
      return swe::dam_break(m, 0.5 * (xmin + xmax), 2.0 * s.sea.mean_depth, s.sea.mean_depth);
    }
  }
  return {};
}

int cmd_solve(const Common& c, const SolveFlags& f, std::ostream& out) {
  ExperimentConfig cfg = resolve_common(c);
  auto& s = cfg.solve;
  if (f.k) s.k = *f.k;
  if (f.nx) s.nx = *f.nx;
  if (f.ny) s.ny = *f.ny;
  if (f.steps) s.steps = *f.steps;
  if (f.dt) s.dt = *f.dt;
  if (f.mesh_file) s.mesh_file = *f.mesh_file;
  if (f.method) s.method = checked(mesh::parse_partition_method, *f.method);
  if (f.initial) s.initial = checked(config::parse_initial_condition, *f.initial);
  if (f.scheme) cfg.scheme = checked(swe::parse_halo_scheme, *f.scheme);
  if (f.snapshot_every) s.snapshot_every = *f.snapshot_every;
  if (f.check_oracle) s.check_oracle = true;
  config::validate(cfg);
  if (dump(c, cfg, out)) return kOk;

  const mesh::Mesh m =
      s.mesh_file.empty() ? mesh::generate_rect_mesh(s.nx, s.ny, s.sea_side) : mesh::load_mesh(s.mesh_file);
  const auto init = initial_state(m, s);
  swe::SolverConfig sc{.g = s.g, .dt = s.dt, .sea = s.sea};
  if (s.initial != config::InitialCondition::Tidal) sc.sea.amplitude = 0;
  if (sc.dt == 0) sc.dt = 0.5 * swe::max_stable_dt(m, init, sc.g);

  auto parts = mesh::partition(m, s.k, s.method);
  auto trace = open_trace(c);
  swe::DistributedOptions opt{.scheme = cfg.scheme,
                              .bytes_per_element = cfg.bytes_per_element,
                              .trace = trace.get()};
  swe::DistributedSolver solver(m, parts, cfg.cluster, sc, opt);
  solver.set_state(init);
  for (std::uint64_t i = 0; i < s.steps; ++i) {
    solver.step();
    if (s.snapshot_every && solver.steps_done() % s.snapshot_every == 0) {
      auto snap = open_out(cfg, fmt::format("state_{:06}.csv", solver.steps_done()));
      swe::write_snapshot_csv(snap, solver.gather());
    }
  }
  const auto final_state = solver.gather();
  {
    auto snap = open_out(cfg, "state_final.csv");
    swe::write_snapshot_csv(snap, final_state);
  }
  out << fmt::format("swe solve: {} elements, k={}, {} steps, dt={} s, mass {}\n",
                     m.element_count(), s.k, s.steps, sc.dt, swe::total_mass(m, final_state));
  if (s.check_oracle) {
    const auto ref = swe::run_reference(m, init, sc, s.steps);
    std::size_t differing = 0;
    for (std::size_t e = 0; e < ref.size(); ++e)
      if (std::memcmp(&ref[e], &final_state[e], sizeof(swe::State)) != 0) ++differing;
    if (differing) {
      out << fmt::format("oracle: MISMATCH in {} of {} elements\n", differing, ref.size());
      return kRuntimeError;
    }
    out << "oracle: bitwise match with the single-partition run\n";
  }
  return kOk;
}

struct ScalingFlags {
  std::optional<std::string> kind;
  std::optional<std::string> ks;
  std::optional<std::uint64_t> cells_per_part;
  std::optional<std::uint32_t> strong_nx;
  std::optional<std::uint32_t> strong_ny;
  std::optional<std::uint32_t> steps;
  std::optional<std::string> scheme;
  std::optional<std::string> method;
};

int cmd_scaling(const Common& c, const ScalingFlags& f, std::ostream& out) {
  ExperimentConfig cfg = resolve_common(c);
  auto& s = cfg.scaling;
  if (f.kind) s.kind = checked(swe::parse_scaling_kind, *f.kind);
  if (f.ks) s.ks = parse_list<std::uint32_t>(*f.ks, "--ks");
  if (f.cells_per_part) s.cells_per_part = *f.cells_per_part;
  if (f.strong_nx) s.strong_nx = *f.strong_nx;
  if (f.strong_ny) s.strong_ny = *f.strong_ny;
  if (f.steps) s.steps = *f.steps;
  if (f.method) s.method = checked(mesh::parse_partition_method, *f.method);
  if (f.scheme) cfg.scheme = checked(swe::parse_halo_scheme, *f.scheme);
  config::validate(cfg);
  if (dump(c, cfg, out)) return kOk;

  swe::ScalingConfig sc{.kind = s.kind,
                        .ks = s.ks,
                        .cells_per_part = s.cells_per_part,
                        .strong_nx = s.strong_nx,
                        .strong_ny = s.strong_ny,
                        .method = s.method,
                        .scheme = cfg.scheme,
                        .pipeline = cfg.pipeline,
                        .bytes_per_element = cfg.bytes_per_element,
                        .steps = s.steps};
  const auto rows = swe::run_scaling_experiment(sc, cfg.cluster);
  {
    auto csv = open_out(cfg, "scaling.csv");
    swe::write_scaling_csv(csv, rows);
  }
  out << fmt::format("{} scaling, preset {}, halo scheme {}\n", swe::to_string(s.kind), cfg.preset,
                     swe::to_string(cfg.scheme));
  out << fmt::format("{:>4} {:>6} {:>9} {:>12} {:>12} {:>10} {:>8}\n", "k", "n_max", "elements",
                     "sim_GFLOPs", "model_GFLOPs", "efficiency", "stall");
  for (const auto& r : rows)
    out << fmt::format("{:>4} {:>6} {:>9} {:>12.2f} {:>12.2f} {:>10.4f} {:>8.4f}\n", r.k, r.n_max,
                       r.elements, r.sim_flops / 1e9, r.model_flops / 1e9, r.efficiency,
                       r.stall_fraction);
  return kOk;
}

// ---------------------------------------------------------------------------

struct ModelFlags {
  std::optional<std::string> sizes;
  std::vector<double> buffered_peak;
};

int cmd_model(const Common& c, const ModelFlags& f, std::ostream& out) {
  ExperimentConfig cfg = resolve_common(c);
  if (f.sizes) cfg.model.sizes = parse_list<Bytes>(*f.sizes, "--sizes");
  config::validate(cfg);
  if (dump(c, cfg, out)) return kOk;

  if (!f.buffered_peak.empty()) {
    if (f.buffered_peak[0] <= 0 || f.buffered_peak[1] <= 0)
      throw SchemaError("--buffered-peak bandwidths must be > 0");
    const double peak = perfmodel::buffered_peak_throughput(f.buffered_peak[0], f.buffered_peak[1]);
    out << fmt::format("buffered peak throughput {} B/s ({:.3f} GB/s)\n", peak, peak / 1e9);
    return kOk;
  }

  const auto link = netsim::model_link(cfg.cluster);
  const TransferMode modes[] = {{DataPath::Buffered, Scheduling::Host},
                                {DataPath::Buffered, Scheduling::PL},
                                {DataPath::Streamed, Scheduling::Host},
                                {DataPath::Streamed, Scheduling::PL}};
  auto csv = open_out(cfg, "model.csv");
  csv << "size_bytes";
  for (auto m : modes) csv << ',' << mode_name(m) << "_s";
  csv << '\n';
  for (auto size : cfg.model.sizes) {
    csv << size;
    for (auto m : modes)
      csv << fmt::format(",{}", perfmodel::transfer_latency(size, m, link, cfg.cluster.sched,
                                                             cfg.cluster.mem));
    csv << '\n';
  }
  out << fmt::format("wrote {} rows to {}\n", cfg.model.sizes.size(),
                     (fs::path(cfg.out_dir) / "model.csv").string());
  return kOk;
}

// ---------------------------------------------------------------------------

struct MeshFlags {
  std::uint32_t nx = 32;
  std::uint32_t ny = 32;
  std::string sea_side = "west";
  std::optional<std::string> mesh_file;
  std::optional<std::string> out_file;
  std::uint32_t k = 2;
  std::string method = "bisection";
};

mesh::Mesh mesh_from(const MeshFlags& f) {
  if (f.mesh_file) return mesh::load_mesh(*f.mesh_file);
  return mesh::generate_rect_mesh(f.nx, f.ny, checked(mesh::parse_side, f.sea_side));
}

int cmd_mesh_generate(const Common& c, const MeshFlags& f, std::ostream& out) {
  ExperimentConfig cfg = resolve_common(c);
  if (f.nx < 1 || f.ny < 1) throw SchemaError("--nx and --ny must be >= 1");
  const auto m = mesh_from(MeshFlags{.nx = f.nx, .ny = f.ny, .sea_side = f.sea_side});
  const std::string name = f.out_file.value_or("mesh.txt");
  const fs::path path = f.out_file ? fs::path(name) : fs::path(cfg.out_dir) / name;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  mesh::save_mesh(path, m);
  out << fmt::format("wrote {} triangles to {}\n", m.element_count(), path.string());
  return kOk;
}

int cmd_mesh_partition(const Common& c, const MeshFlags& f, std::ostream& out) {
  ExperimentConfig cfg = resolve_common(c);
  const auto m = mesh_from(f);
  const auto parts = mesh::partition(m, f.k, checked(mesh::parse_partition_method, f.method));
  const auto report = mesh::partition_stats(parts, m, cfg.bytes_per_element, cfg.pipeline.d_ext);
  const fs::path path = f.out_file ? fs::path(*f.out_file) : fs::path(cfg.out_dir) / "partition_stats.csv";
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream csv(path);
  if (!csv) throw SchemaError(fmt::format("cannot write '{}'", path.string()));
  mesh::write_stats_csv(csv, report);
  const auto& w = report.worst;
  out << fmt::format("{} parts: n_max {}, largest part {}, max e_core {}, max e_send {}, "
                     "max e_recv {}, largest halo {} B\n",
                     f.k, w.n_max, w.max_size, w.max_e_core, w.max_e_send, w.max_e_recv,
                     w.largest_halo_bytes);
  return kOk;
}

int cmd_mesh_inspect(const MeshFlags& f, std::ostream& out) {
  const auto m = mesh_from(f);
  std::size_t land = 0, sea = 0, interior = 0;
  for (const auto& e : m.edges()) {
    if (!e.boundary())
      ++interior;
    else if (e.tag == mesh::BoundaryTag::Sea)
      ++sea;
    else
      ++land;
  }
  double area = 0;
  for (mesh::ElementId t = 0; t < m.element_count(); ++t) area += m.area(t);
  out << fmt::format("vertices {}\ntriangles {}\nedges {} (interior {}, land {}, sea {})\narea {}\n",
                     m.vertices().size(), m.element_count(), m.edges().size(), interior, land, sea,
                     area);
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulator and analytic models for FPGA-to-FPGA communication"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--preset", common.preset, "Cluster preset");
  app.add_option("--config", common.config_file, "JSON experiment configuration");
  app.add_option("--out-dir", common.out_dir, "Directory for CSV output");
  app.add_option("--trace", common.trace_file, "Write the simulator event trace to this file");
  app.add_flag("--dump-config", common.dump_config, "Print the resolved configuration and exit");

  BeffFlags beff_flags;
  auto* beff_cmd = app.add_subcommand("beff", "Ring ping-ping bandwidth/latency sweep");
  beff_cmd->add_option("--nodes", beff_flags.nodes, "Ring size (>= 2)");
  beff_cmd->add_option("--sizes", beff_flags.sizes, "Comma-separated message sizes in bytes");
  beff_cmd->add_option("--reps", beff_flags.reps, "Repetitions per size");
  beff_cmd->add_option("--mode", beff_flags.mode,
                       "buffered-host, buffered-pl, streamed-host or streamed-pl");

  auto* swe_cmd = app.add_subcommand("swe", "Shallow-water workload");
  swe_cmd->require_subcommand(1);
  SolveFlags solve_flags;
  auto* solve_cmd = swe_cmd->add_subcommand("solve", "Distributed solve with halo exchange");
  solve_cmd->add_option("--k", solve_flags.k, "Number of partitions");
  solve_cmd->add_option("--nx", solve_flags.nx);
  solve_cmd->add_option("--ny", solve_flags.ny);
  solve_cmd->add_option("--steps", solve_flags.steps);
  solve_cmd->add_option("--dt", solve_flags.dt, "Time step in seconds (0: half the CFL limit)");
  solve_cmd->add_option("--mesh", solve_flags.mesh_file, "Mesh file instead of a generated mesh");
  solve_cmd->add_option("--method", solve_flags.method, "bisection or greedy-bfs");
  solve_cmd->add_option("--initial", solve_flags.initial, "lake-at-rest, dam-break or tidal");
  solve_cmd->add_option("--scheme", solve_flags.scheme, "accl-hybrid, accl-streamed or host-mpi");
  solve_cmd->add_option("--snapshot-every", solve_flags.snapshot_every);
  solve_cmd->add_flag("--check-oracle", solve_flags.check_oracle,
                      "Compare against the single-partition solver bit for bit");
  ScalingFlags scaling_flags;
  auto* scaling_cmd = swe_cmd->add_subcommand("scaling", "Weak or strong scaling table");
  scaling_cmd->add_option("--kind", scaling_flags.kind, "weak or strong");
  scaling_cmd->add_option("--ks", scaling_flags.ks, "Comma-separated partition counts");
  scaling_cmd->add_option("--cells-per-part", scaling_flags.cells_per_part);
  scaling_cmd->add_option("--strong-nx", scaling_flags.strong_nx);
  scaling_cmd->add_option("--strong-ny", scaling_flags.strong_ny);
  scaling_cmd->add_option("--steps", scaling_flags.steps, "Simulated halo exchanges per point");
  scaling_cmd->add_option("--scheme", scaling_flags.scheme);
  scaling_cmd->add_option("--method", scaling_flags.method, "bisection or greedy-bfs");

  ModelFlags model_flags;
  auto* model_cmd = app.add_subcommand("model", "Evaluate the closed-form latency model");
  model_cmd->add_option("--sizes", model_flags.sizes, "Comma-separated message sizes in bytes");
  model_cmd->add_option("--buffered-peak", model_flags.buffered_peak,
                        "Memory and link bandwidth in B/s")
      ->expected(2);

  auto* mesh_cmd = app.add_subcommand("mesh", "Mesh generation, partitioning and inspection");
  mesh_cmd->require_subcommand(1);
  MeshFlags mesh_flags;
  auto* gen_cmd = mesh_cmd->add_subcommand("generate", "Write a rectangular mesh");
  gen_cmd->add_option("--nx", mesh_flags.nx);
  gen_cmd->add_option("--ny", mesh_flags.ny);
  gen_cmd->add_option("--sea-side", mesh_flags.sea_side, "south, east, north or west");
  gen_cmd->add_option("--out", mesh_flags.out_file);
  auto* part_cmd = mesh_cmd->add_subcommand("partition", "Partition and write per-part stats");
  part_cmd->add_option("--mesh", mesh_flags.mesh_file);
  part_cmd->add_option("--nx", mesh_flags.nx);
  part_cmd->add_option("--ny", mesh_flags.ny);
  part_cmd->add_option("--k", mesh_flags.k);
  part_cmd->add_option("--method", mesh_flags.method, "bisection or greedy-bfs");
  part_cmd->add_option("--out", mesh_flags.out_file);
  auto* inspect_cmd = mesh_cmd->add_subcommand("inspect", "Print mesh summary");
  inspect_cmd->add_option("--mesh", mesh_flags.mesh_file);
  inspect_cmd->add_option("--nx", mesh_flags.nx);
  inspect_cmd->add_option("--ny", mesh_flags.ny);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*beff_cmd) return cmd_beff(common, beff_flags, out);
    if (*solve_cmd) return cmd_solve(common, solve_flags, out);
    if (*scaling_cmd) return cmd_scaling(common, scaling_flags, out);
    if (*model_cmd) return cmd_model(common, model_flags, out);
    if (*gen_cmd) return cmd_mesh_generate(common, mesh_flags, out);
    if (*part_cmd) return cmd_mesh_partition(common, mesh_flags, out);
    if (*inspect_cmd) return cmd_mesh_inspect(mesh_flags, out);
  } catch (const SchemaError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const netsim::RecvMismatch& e) {
    err << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const netsim::ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const mesh::MeshError& e) {
    err << "mesh error: " << e.what() << '\n';
    return kConfigError;
  } catch (const mesh::PartitionError& e) {
    err << "partition error: " << e.what() << '\n';
    return kConfigError;
  } catch (const swe::CflViolation& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const swe::HaloMismatch& e) {
    err << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kConfigError;
}

}  // namespace fpgacomm::cli
