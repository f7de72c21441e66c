#pragma once

// Named parameter sets for the clusters and designs that get compared.

#include <string>
#include <vector>

#include "fpgacomm/netsim.hpp"
#include "fpgacomm/swe.hpp"

namespace fpgacomm::presets {

struct Preset {
  std::string name;
  /// Where each number comes from.
  std::string notes;
  netsim::ClusterConfig cluster;
  TransferMode mode;
  swe::HaloScheme scheme = swe::HaloScheme::AcclHybrid;
  swe::PipelineConfig pipeline;
};

const std::vector<Preset>& all();
/// Throws netsim::ConfigError listing the known names.
const Preset& find(const std::string& name);

}  // namespace fpgacomm::presets
