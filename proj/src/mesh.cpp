#include "fpgacomm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

namespace fpgacomm::mesh {

MeshError::MeshError(const std::string& what, std::optional<std::size_t> line)
    : std::runtime_error(line ? fmt::format("line {}: {}", *line, what) : what), line_(line) {}

namespace {

double signed_area(const Point& a, const Point& b, const Point& c) {
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

std::uint64_t edge_key(VertexId a, VertexId b) {
  const auto lo = std::min(a, b);
  const auto hi = std::max(a, b);
  return (static_cast<std::uint64_t>(lo) << 32) | hi;
}

char tag_char(BoundaryTag t) { return t == BoundaryTag::Sea ? 'S' : 'L'; }

Mesh build_impl(std::vector<Point> vertices, std::vector<Triangle> triangles,
                std::vector<EdgeTags> tags, const std::vector<std::size_t>* lines);

}  // namespace

Mesh Mesh::build(std::vector<Point> vertices, std::vector<Triangle> triangles,
                 std::vector<EdgeTags> tags) {
  return build_impl(std::move(vertices), std::move(triangles), std::move(tags), nullptr);
}

Point Mesh::centroid(ElementId t) const {
  const auto& tri = triangles_[t];
  const auto& a = vertices_[tri[0]];
  const auto& b = vertices_[tri[1]];
  const auto& c = vertices_[tri[2]];
  return {(a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0};
}

double Mesh::perimeter(ElementId t) const {
  double p = 0;
  for (auto e : tri_edges_[t]) {
    const auto& a = vertices_[edges_[e].v[0]];
    const auto& b = vertices_[edges_[e].v[1]];
    p += std::hypot(b.x - a.x, b.y - a.y);
  }
  return p;
}

std::vector<ElementId> Mesh::neighbors(ElementId t) const {
  std::vector<ElementId> out;
  for (auto e : tri_edges_[t]) {
    const auto& edge = edges_[e];
    if (edge.boundary()) continue;
    out.push_back(static_cast<ElementId>(edge.left == t ? edge.right : edge.left));
  }
  std::sort(out.begin(), out.end());
  return out;
}

EdgeTags Mesh::edge_tags(ElementId t) const {
  EdgeTags out;
  for (int k = 0; k < 3; ++k) {
    const auto& edge = edges_[tri_edges_[t][k]];
    if (edge.boundary()) out[k] = edge.tag;
  }
  return out;
}

bool Mesh::tags_equal(const Mesh& other) const {
  if (edges_.size() != other.edges_.size()) return false;
  for (std::size_t i = 0; i < edges_.size(); ++i)
    if (edges_[i].boundary() && edges_[i].tag != other.edges_[i].tag) return false;
  return true;
}

struct MeshBuilderAccess {
  static Mesh make(std::vector<Point> vertices, std::vector<Triangle> triangles,
                   std::vector<EdgeTags> tags, const std::vector<std::size_t>* lines) {
    auto where = [&](std::size_t t) -> std::optional<std::size_t> {
      if (lines) return (*lines)[t];
      return std::nullopt;
    };
    if (!tags.empty() && tags.size() != triangles.size())
      throw MeshError("edge tag list does not match triangle count");

    Mesh m;
    m.vertices_ = std::move(vertices);
    m.triangles_ = std::move(triangles);
    const auto nv = m.vertices_.size();
    const auto nt = m.triangles_.size();
    m.tri_edges_.resize(nt);
    m.areas_.resize(nt);

    std::map<std::array<VertexId, 3>, std::size_t> seen;
    std::unordered_map<std::uint64_t, std::uint32_t> edge_of;
    edge_of.reserve(nt * 2);

    for (std::size_t t = 0; t < nt; ++t) {
      const auto& tri = m.triangles_[t];
      for (auto v : tri)
        if (v >= nv)
          throw MeshError(fmt::format("triangle {} references missing vertex {}", t, v), where(t));
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
        throw MeshError(fmt::format("triangle {} repeats a vertex", t), where(t));
      const double area =
          signed_area(m.vertices_[tri[0]], m.vertices_[tri[1]], m.vertices_[tri[2]]);
      if (!(area > 0))
        throw MeshError(fmt::format("triangle {} is not counterclockwise", t), where(t));
      m.areas_[t] = area;

      auto sorted = tri;
      std::sort(sorted.begin(), sorted.end());
      auto [it, fresh] = seen.emplace(sorted, t);
      if (!fresh)
        throw MeshError(fmt::format("triangle {} duplicates triangle {}", t, it->second), where(t));

      for (int k = 0; k < 3; ++k) {
        const VertexId a = tri[k];
        const VertexId b = tri[(k + 1) % 3];
        auto [eit, created] = edge_of.emplace(edge_key(a, b), static_cast<std::uint32_t>(m.edges_.size()));
        if (created) {
          m.edges_.push_back(Edge{.v = {a, b}, .left = static_cast<std::int64_t>(t)});
        } else {
          auto& edge = m.edges_[eit->second];
          if (edge.right != kNoElement)
            throw MeshError(
                fmt::format("edge ({}, {}) of triangle {} is shared by more than two triangles", a, b, t),
                where(t));
          if (edge.v[0] == a)
            throw MeshError(fmt::format("triangle {} is oriented inconsistently with triangle {}", t,
                                        edge.left),
                            where(t));
          edge.right = static_cast<std::int64_t>(t);
        }
        m.tri_edges_[t][k] = eit->second;
      }
    }

    for (std::size_t t = 0; t < tags.size(); ++t)
      for (int k = 0; k < 3; ++k) {
        if (!tags[t][k]) continue;
        auto& edge = m.edges_[m.tri_edges_[t][k]];
        if (!edge.boundary())
          throw MeshError(fmt::format("triangle {} tags interior edge {}", t, k), where(t));
        edge.tag = *tags[t][k];
      }
    return m;
  }
};

namespace {

Mesh build_impl(std::vector<Point> vertices, std::vector<Triangle> triangles,
                std::vector<EdgeTags> tags, const std::vector<std::size_t>* lines) {
  return MeshBuilderAccess::make(std::move(vertices), std::move(triangles), std::move(tags), lines);
}

Mesh rect_mesh(std::uint32_t nx, std::uint32_t ny, std::optional<Side> sea_side, double dx,
               double dy) {
  if (nx == 0 || ny == 0) throw MeshError("rectangular mesh needs nx, ny >= 1");
  std::vector<Point> vertices;
  vertices.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
  for (std::uint32_t j = 0; j <= ny; ++j)
    for (std::uint32_t i = 0; i <= nx; ++i) vertices.push_back({i * dx, j * dy});

  auto vid = [nx](std::uint32_t i, std::uint32_t j) { return j * (nx + 1) + i; };
  std::vector<Triangle> triangles;
  std::vector<EdgeTags> tags;
  triangles.reserve(2ull * nx * ny);
  tags.reserve(2ull * nx * ny);

  auto side_tag = [&](Side s) { return sea_side && *sea_side == s ? BoundaryTag::Sea : BoundaryTag::Land; };
  // Tag of the straight edge between two corner vertices, if on the boundary.
  auto tag_for = [&](std::uint32_t ia, std::uint32_t ja, std::uint32_t ib,
                     std::uint32_t jb) -> std::optional<BoundaryTag> {
    if (ja == jb && ja == 0) return side_tag(Side::South);
    if (ja == jb && ja == ny) return side_tag(Side::North);
    if (ia == ib && ia == 0) return side_tag(Side::West);
    if (ia == ib && ia == nx) return side_tag(Side::East);
    return std::nullopt;
  };
  auto push = [&](std::array<std::pair<std::uint32_t, std::uint32_t>, 3> c) {
    Triangle tri;
    EdgeTags et;
    for (int k = 0; k < 3; ++k) {
      tri[k] = vid(c[k].first, c[k].second);
      const auto& p = c[k];
      const auto& q = c[(k + 1) % 3];
      et[k] = tag_for(p.first, p.second, q.first, q.second);
    }
    triangles.push_back(tri);
    tags.push_back(et);
  };

  for (std::uint32_t j = 0; j < ny; ++j)
    for (std::uint32_t i = 0; i < nx; ++i) {
      const bool slash = (2 * i < nx) == (2 * j < ny);
      if (slash) {
        push({{{i, j}, {i + 1, j}, {i + 1, j + 1}}});
        push({{{i, j}, {i + 1, j + 1}, {i, j + 1}}});
      } else {
        push({{{i, j}, {i + 1, j}, {i, j + 1}}});
        push({{{i + 1, j}, {i + 1, j + 1}, {i, j + 1}}});
      }
    }
  return Mesh::build(std::move(vertices), std::move(triangles), std::move(tags));
}

std::optional<BoundaryTag> parse_tag(const std::string& s, std::size_t line) {
  if (s == "L") return BoundaryTag::Land;
  if (s == "S") return BoundaryTag::Sea;
  if (s == "-") return std::nullopt;
  throw MeshError(fmt::format("unknown boundary tag '{}' (expected L, S or -)", s), line);
}

}  // namespace

Mesh generate_rect_mesh(std::uint32_t nx, std::uint32_t ny, Side sea_side, double dx, double dy) {
  return rect_mesh(nx, ny, sea_side, dx, dy);
}

Mesh generate_closed_basin(std::uint32_t nx, std::uint32_t ny, double dx, double dy) {
  return rect_mesh(nx, ny, std::nullopt, dx, dy);
}

Mesh parse_mesh(std::istream& in) {
  std::size_t line_no = 0;
  std::string line;
  auto next_line = [&]() -> std::optional<std::string> {
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r") != std::string::npos) return line;
    }
    return std::nullopt;
  };
  auto header = [&](const char* key) -> std::size_t {
    auto l = next_line();
    if (!l) throw MeshError(fmt::format("missing '{}' header", key), line_no);
    std::istringstream ss(*l);
    std::string word;
    long long n = -1;
    std::string rest;
    if (!(ss >> word >> n) || word != key || n < 0 || (ss >> rest))
      throw MeshError(fmt::format("expected '{} <count>'", key), line_no);
    return static_cast<std::size_t>(n);
  };

  const std::size_t nv = header("vertices");
  const std::size_t nt = header("triangles");
  std::vector<Point> vertices;
  vertices.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    auto l = next_line();
    if (!l) throw MeshError(fmt::format("expected {} vertices, found {}", nv, i), line_no);
    std::istringstream ss(*l);
    Point p;
    std::string rest;
    if (!(ss >> p.x >> p.y) || (ss >> rest) || !std::isfinite(p.x) || !std::isfinite(p.y))
      throw MeshError(fmt::format("vertex {}: expected 'x y'", i), line_no);
    vertices.push_back(p);
  }

  std::vector<Triangle> triangles;
  std::vector<EdgeTags> tags;
  std::vector<std::size_t> lines;
  triangles.reserve(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    auto l = next_line();
    if (!l) throw MeshError(fmt::format("expected {} triangles, found {}", nt, t), line_no);
    std::istringstream ss(*l);
    std::vector<std::string> tok;
    for (std::string w; ss >> w;) tok.push_back(w);
    if (tok.size() != 3 && tok.size() != 6)
      throw MeshError(fmt::format("triangle {}: expected 'v0 v1 v2 [t0 t1 t2]'", t), line_no);
    Triangle tri;
    for (int k = 0; k < 3; ++k) {
      std::size_t used = 0;
      long long v = -1;
      try {
        v = std::stoll(tok[k], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok[k].size() || v < 0 || v > 0xffffffffLL)
        throw MeshError(fmt::format("triangle {}: bad vertex index '{}'", t, tok[k]), line_no);
      tri[k] = static_cast<VertexId>(v);
    }
    EdgeTags et;
    if (tok.size() == 6)
      for (int k = 0; k < 3; ++k) et[k] = parse_tag(tok[3 + k], line_no);
    triangles.push_back(tri);
    tags.push_back(et);
    lines.push_back(line_no);
  }
  if (next_line()) throw MeshError("trailing content after the last triangle", line_no);
  return build_impl(std::move(vertices), std::move(triangles), std::move(tags), &lines);
}

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MeshError(fmt::format("cannot open mesh file '{}'", path.string()));
  return parse_mesh(in);
}

void write_mesh(std::ostream& out, const Mesh& mesh) {
  out << "vertices " << mesh.vertices().size() << '\n';
  out << "triangles " << mesh.triangles().size() << '\n';
  for (const auto& p : mesh.vertices()) out << fmt::format("{} {}\n", p.x, p.y);
  for (std::size_t t = 0; t < mesh.triangles().size(); ++t) {
    const auto& tri = mesh.triangles()[t];
    out << tri[0] << ' ' << tri[1] << ' ' << tri[2];
    const auto tags = mesh.edge_tags(static_cast<ElementId>(t));
    if (tags[0] || tags[1] || tags[2])
      for (const auto& tag : tags) out << ' ' << (tag ? tag_char(*tag) : '-');
    out << '\n';
  }
}

void save_mesh(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw MeshError(fmt::format("cannot write mesh file '{}'", path.string()));
  write_mesh(out, mesh);
}

// ---------------------------------------------------------------------------

namespace {

void bisect(const std::vector<Point>& centroid, std::vector<ElementId>& elems, std::size_t begin,
            std::size_t end, std::uint32_t k, PartId first, std::vector<PartId>& assignment) {
  if (k == 1) {
    for (std::size_t i = begin; i < end; ++i) assignment[elems[i]] = first;
    return;
  }
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (std::size_t i = begin; i < end; ++i) {
    const auto& c = centroid[elems[i]];
    xmin = std::min(xmin, c.x);
    xmax = std::max(xmax, c.x);
    ymin = std::min(ymin, c.y);
    ymax = std::max(ymax, c.y);
  }
  const bool along_x = (xmax - xmin) >= (ymax - ymin);
  std::sort(elems.begin() + static_cast<std::ptrdiff_t>(begin),
            elems.begin() + static_cast<std::ptrdiff_t>(end), [&](ElementId a, ElementId b) {
              const auto& ca = centroid[a];
              const auto& cb = centroid[b];
              const double pa = along_x ? ca.x : ca.y;
              const double pb = along_x ? cb.x : cb.y;
              if (pa != pb) return pa < pb;
              const double sa = along_x ? ca.y : ca.x;
              const double sb = along_x ? cb.y : cb.x;
              if (sa != sb) return sa < sb;
              return a < b;
            });
  const std::uint32_t k_low = k / 2;
  const std::size_t n = end - begin;
  const std::size_t n_low = (n * k_low + k / 2) / k;
  bisect(centroid, elems, begin, begin + n_low, k_low, first, assignment);
  bisect(centroid, elems, begin + n_low, end, k - k_low, first + k_low, assignment);
}

std::vector<PartId> greedy_bfs(const Mesh& mesh, std::uint32_t k) {
  const std::size_t n = mesh.element_count();
  constexpr PartId kUnassigned = ~PartId{0};
  std::vector<PartId> assignment(n, kUnassigned);
  std::size_t remaining = n;
  std::size_t lowest_free = 0;
  for (PartId p = 0; p < k; ++p) {
    const std::size_t target = remaining / (k - p);
    std::size_t taken = 0;
    std::deque<ElementId> frontier;
    while (taken < target) {
      if (frontier.empty()) {
        while (assignment[lowest_free] != kUnassigned) ++lowest_free;
        assignment[lowest_free] = p;
        ++taken;
        frontier.push_back(static_cast<ElementId>(lowest_free));
        continue;
      }
      const ElementId e = frontier.front();
      frontier.pop_front();
      for (auto nb : mesh.neighbors(e)) {
        if (taken == target) break;
        if (assignment[nb] != kUnassigned) continue;
        assignment[nb] = p;
        ++taken;
        frontier.push_back(nb);
      }
    }
    remaining -= taken;
  }
  return assignment;
}

}  // namespace

Partitioning partition(const Mesh& mesh, std::uint32_t k, PartitionMethod method) {
  const std::size_t n = mesh.element_count();
  if (k == 0) throw PartitionError("partition count must be >= 1");
  if (k > n)
    throw PartitionError(fmt::format("cannot split {} elements into {} parts", n, k));
  std::vector<PartId> assignment(n, 0);
  if (method == PartitionMethod::CoordinateBisection) {
    std::vector<Point> centroid(n);
    for (std::size_t e = 0; e < n; ++e) centroid[e] = mesh.centroid(static_cast<ElementId>(e));
    std::vector<ElementId> elems(n);
    std::iota(elems.begin(), elems.end(), 0);
    bisect(centroid, elems, 0, n, k, 0, assignment);
  } else {
    assignment = greedy_bfs(mesh, k);
  }
  return make_partitioning(mesh, std::move(assignment), k);
}

Partitioning make_partitioning(const Mesh& mesh, std::vector<PartId> assignment, std::uint32_t k) {
  if (assignment.size() != mesh.element_count())
    throw PartitionError("assignment size does not match element count");
  Partitioning p;
  p.parts = k;
  p.elements.resize(k);
  for (std::size_t e = 0; e < assignment.size(); ++e) {
    if (assignment[e] >= k)
      throw PartitionError(fmt::format("element {} assigned to part {} of {}", e, assignment[e], k));
    p.elements[assignment[e]].push_back(static_cast<ElementId>(e));
  }
  for (PartId q = 0; q < k; ++q)
    if (p.elements[q].empty()) throw PartitionError(fmt::format("part {} is empty", q));

  // boundary[p][q]: elements of p adjacent to part q
  std::vector<std::map<PartId, std::set<ElementId>>> boundary(k);
  for (const auto& edge : mesh.edges()) {
    if (edge.boundary()) continue;
    const auto l = static_cast<ElementId>(edge.left);
    const auto r = static_cast<ElementId>(edge.right);
    const PartId pl = assignment[l];
    const PartId pr = assignment[r];
    if (pl == pr) continue;
    boundary[pl][pr].insert(l);
    boundary[pr][pl].insert(r);
  }
  p.halos.resize(k);
  for (PartId q = 0; q < k; ++q)
    for (const auto& [nb, elems] : boundary[q]) {
      const auto& theirs = boundary[nb].at(q);
      p.halos[q].push_back(NeighborHalo{.neighbor = nb,
                                        .send = {elems.begin(), elems.end()},
                                        .recv = {theirs.begin(), theirs.end()}});
    }
  p.assignment = std::move(assignment);
  return p;
}

StatsReport partition_stats(const Partitioning& p, const Mesh& mesh, Bytes bytes_per_element,
                            double d_ext) {
  (void)mesh;
  StatsReport report;
  for (PartId q = 0; q < p.parts; ++q) {
    PartitionStats s;
    s.part = q;
    s.size = p.elements[q].size();
    s.d_ext = d_ext;
    s.neighbors = static_cast<std::uint32_t>(p.halos[q].size());
    std::set<ElementId> border;
    std::uint64_t largest = 0;
    for (const auto& h : p.halos[q]) {
      s.e_send += h.send.size();
      s.e_recv += h.recv.size();
      border.insert(h.send.begin(), h.send.end());
      largest = std::max<std::uint64_t>(largest, std::max(h.send.size(), h.recv.size()));
    }
    s.e_core = s.size - border.size();
    s.largest_halo_bytes = largest * bytes_per_element;

    auto& w = report.worst;
    w.n_max = std::max(w.n_max, s.neighbors);
    w.max_size = std::max(w.max_size, s.size);
    w.max_e_core = std::max(w.max_e_core, s.e_core);
    w.max_e_send = std::max(w.max_e_send, s.e_send);
    w.max_e_recv = std::max(w.max_e_recv, s.e_recv);
    w.largest_halo_bytes = std::max(w.largest_halo_bytes, s.largest_halo_bytes);
    report.parts.push_back(s);
  }
  return report;
}

void write_stats_csv(std::ostream& out, const StatsReport& report) {
  out << "part,size,e_core,e_send,e_recv,neighbors,d_ext,largest_halo_bytes\n";
  for (const auto& s : report.parts)
    out << fmt::format("{},{},{},{},{},{},{},{}\n", s.part, s.size, s.e_core, s.e_send, s.e_recv,
                       s.neighbors, s.d_ext, s.largest_halo_bytes);
}

std::string to_string(PartitionMethod m) {
  return m == PartitionMethod::CoordinateBisection ? "bisection" : "greedy-bfs";
}

PartitionMethod parse_partition_method(const std::string& s) {
  if (s == "bisection" || s == "coordinate-bisection") return PartitionMethod::CoordinateBisection;
  if (s == "greedy-bfs" || s == "bfs") return PartitionMethod::GreedyBFS;
  throw std::invalid_argument(fmt::format("unknown partition method '{}'", s));
}

Side parse_side(const std::string& s) {
  if (s == "south") return Side::South;
  if (s == "east") return Side::East;
  if (s == "north") return Side::North;
  if (s == "west") return Side::West;
  throw std::invalid_argument(fmt::format("unknown side '{}'", s));
}

}  // namespace fpgacomm::mesh
