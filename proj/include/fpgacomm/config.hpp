#pragma once

// Experiment configuration: a preset, optionally overridden by a JSON file and
// command-line flags, fully resolved before anything runs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpgacomm/beff.hpp"
#include "fpgacomm/mesh.hpp"
#include "fpgacomm/netsim.hpp"
#include "fpgacomm/swe.hpp"

namespace fpgacomm::config {

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BeffSection {
  std::uint32_t nodes = 2;
  std::vector<Bytes> sizes = beff::default_message_sizes();
  std::uint32_t repetitions = 10;
};

enum class InitialCondition { LakeAtRest, DamBreak, Tidal };

struct SolveSection {
  std::string mesh_file;  // empty: generate nx * ny
  std::uint32_t nx = 32;
  std::uint32_t ny = 32;
  mesh::Side sea_side = mesh::Side::West;
  std::uint32_t k = 4;
  mesh::PartitionMethod method = mesh::PartitionMethod::CoordinateBisection;
  std::uint64_t steps = 100;
  /// 0 picks half of the CFL limit of the initial state.
  double dt = 0;
  double g = 9.81;
  swe::SeaForcing sea{.mean_depth = 1.0, .amplitude = 0.05, .period = 2.0};
  InitialCondition initial = InitialCondition::DamBreak;
  std::uint64_t snapshot_every = 0;
  bool check_oracle = false;
};

struct ScalingSection {
  swe::ScalingKind kind = swe::ScalingKind::Weak;
  std::vector<std::uint32_t> ks{1, 2, 4, 8, 16, 32, 48};
  std::uint64_t cells_per_part = 3250;
  std::uint32_t strong_nx = 232;
  std::uint32_t strong_ny = 232;
  mesh::PartitionMethod method = mesh::PartitionMethod::CoordinateBisection;
  std::uint32_t steps = 3;
};

struct ModelSection {
  std::vector<Bytes> sizes = beff::default_message_sizes();
};

struct ExperimentConfig {
  std::string preset = "direct-udp-pl";
  std::string out_dir = ".";
  netsim::ClusterConfig cluster;
  TransferMode mode;
  swe::HaloScheme scheme = swe::HaloScheme::AcclHybrid;
  swe::PipelineConfig pipeline;
  Bytes bytes_per_element = 32;
  BeffSection beff;
  SolveSection solve;
  ScalingSection scaling;
  ModelSection model;
};

/// Preset values for `name` with default workload sections.
ExperimentConfig from_preset(const std::string& name);

/// Resolves a JSON document: its "preset" (or `preset_override`) first, then
/// every other key on top. Unknown keys and wrong types raise SchemaError.
ExperimentConfig resolve(const nlohmann::json& doc,
                         const std::optional<std::string>& preset_override = std::nullopt);
ExperimentConfig load(const std::filesystem::path& path,
                      const std::optional<std::string>& preset_override = std::nullopt);

/// Range and consistency checks on the resolved configuration.
void validate(const ExperimentConfig& cfg);

nlohmann::json to_json(const ExperimentConfig& cfg);

std::string to_string(InitialCondition c);
InitialCondition parse_initial_condition(const std::string& s);

}  // namespace fpgacomm::config
