#pragma once

// Unstructured triangular meshes, their partitioning into per-FPGA parts, and
// the halo lists exchanged between neighboring parts every time step.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpgacomm/perfmodel.hpp"

namespace fpgacomm::mesh {

using ElementId = std::uint32_t;
using VertexId = std::uint32_t;
using PartId = std::uint32_t;

inline constexpr std::int64_t kNoElement = -1;

struct Point {
  double x = 0;
  double y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

enum class BoundaryTag { Land, Sea };
enum class Side { South, East, North, West };

/// Edge (a, b) as traversed counterclockwise by `left`; `right` is the
/// triangle on the other side or kNoElement on the domain boundary.
struct Edge {
  std::array<VertexId, 2> v{};
  std::int64_t left = kNoElement;
  std::int64_t right = kNoElement;
  BoundaryTag tag = BoundaryTag::Land;

  bool boundary() const { return right == kNoElement; }
};

using Triangle = std::array<VertexId, 3>;
/// Optional tag per triangle edge (v0v1, v1v2, v2v0); only boundary edges may
/// carry one. Untagged boundary edges are Land.
using EdgeTags = std::array<std::optional<BoundaryTag>, 3>;

class MeshError : public std::runtime_error {
 public:
  MeshError(const std::string& what, std::optional<std::size_t> line = std::nullopt);
  std::optional<std::size_t> line() const { return line_; }

 private:
  std::optional<std::size_t> line_;
};

class Mesh {
 public:
  /// Validates and builds the edge table. Throws MeshError naming the
  /// offending triangle.
  static Mesh build(std::vector<Point> vertices, std::vector<Triangle> triangles,
                    std::vector<EdgeTags> tags = {});

  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Edge>& edges() const { return edges_; }
  /// Edge ids of triangle `t` in local order (v0v1, v1v2, v2v0).
  const std::array<std::uint32_t, 3>& triangle_edges(ElementId t) const { return tri_edges_[t]; }
  std::size_t element_count() const { return triangles_.size(); }

  double area(ElementId t) const { return areas_[t]; }
  Point centroid(ElementId t) const;
  double perimeter(ElementId t) const;
  /// Edge-adjacent elements of `t`, ascending.
  std::vector<ElementId> neighbors(ElementId t) const;
  /// Tags of the three local edges as stored (boundary edges only).
  EdgeTags edge_tags(ElementId t) const;

  friend bool operator==(const Mesh& a, const Mesh& b) {
    return a.vertices_ == b.vertices_ && a.triangles_ == b.triangles_ &&
           a.tags_equal(b);
  }

 private:
  friend struct MeshBuilderAccess;
  bool tags_equal(const Mesh& other) const;

  std::vector<Point> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Edge> edges_;
  std::vector<std::array<std::uint32_t, 3>> tri_edges_;
  std::vector<double> areas_;
};

/// nx*ny rectangular cells of size dx*dy, each split into two triangles. The
/// diagonal direction is mirrored across both center lines so the mesh is
/// symmetric for even nx, ny. Boundary edges on `sea_side` are tagged Sea.
Mesh generate_rect_mesh(std::uint32_t nx, std::uint32_t ny, Side sea_side, double dx = 1.0,
                        double dy = 1.0);

/// Closed basin variant: every boundary edge is Land.
Mesh generate_closed_basin(std::uint32_t nx, std::uint32_t ny, double dx = 1.0, double dy = 1.0);

Mesh parse_mesh(std::istream& in);
Mesh load_mesh(const std::filesystem::path& path);
void write_mesh(std::ostream& out, const Mesh& mesh);
void save_mesh(const std::filesystem::path& path, const Mesh& mesh);

// ---------------------------------------------------------------------------

enum class PartitionMethod { CoordinateBisection, GreedyBFS };

struct NeighborHalo {
  PartId neighbor = 0;
  /// Local elements sent to `neighbor`, ascending global id.
  std::vector<ElementId> send;
  /// Remote elements expected from `neighbor`, in consumption order.
  std::vector<ElementId> recv;
};

struct Partitioning {
  std::uint32_t parts = 0;
  std::vector<PartId> assignment;
  /// Elements of each part, ascending.
  std::vector<std::vector<ElementId>> elements;
  /// Halo lists of each part, ordered by neighbor part id.
  std::vector<std::vector<NeighborHalo>> halos;
};

class PartitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Partitioning partition(const Mesh& mesh, std::uint32_t k, PartitionMethod method);

/// Builds element lists and halos from an explicit assignment.
Partitioning make_partitioning(const Mesh& mesh, std::vector<PartId> assignment, std::uint32_t k);

struct PartitionStats {
  PartId part = 0;
  std::uint64_t size = 0;
  std::uint64_t e_core = 0;
  std::uint64_t e_send = 0;
  std::uint64_t e_recv = 0;
  std::uint32_t neighbors = 0;
  double d_ext = 0;
  Bytes largest_halo_bytes = 0;
};

/// Partition-wise maxima; the throughput model is evaluated on this tuple.
struct WorstCase {
  std::uint32_t n_max = 0;
  std::uint64_t max_size = 0;
  std::uint64_t max_e_core = 0;
  std::uint64_t max_e_send = 0;
  std::uint64_t max_e_recv = 0;
  Bytes largest_halo_bytes = 0;
};

struct StatsReport {
  std::vector<PartitionStats> parts;
  WorstCase worst;
};

StatsReport partition_stats(const Partitioning& p, const Mesh& mesh, Bytes bytes_per_element = 32,
                            double d_ext = 0);

void write_stats_csv(std::ostream& out, const StatsReport& report);

std::string to_string(PartitionMethod m);
PartitionMethod parse_partition_method(const std::string& s);
Side parse_side(const std::string& s);

}  // namespace fpgacomm::mesh
