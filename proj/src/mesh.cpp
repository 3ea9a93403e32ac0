#include "mqs/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mqs/csv.hpp"

namespace mqs {

std::string to_string(const RegionTag& tag) {
  switch (tag.kind) {
    case RegionKind::Grain:
      return "GRAIN(" + std::to_string(tag.grain) + ")";
    case RegionKind::Insulation:
      return "INSULATION";
    case RegionKind::InductorPos:
      return "INDUCTOR_POS";
    case RegionKind::InductorNeg:
      return "INDUCTOR_NEG";
    case RegionKind::Air:
      return "AIR";
    case RegionKind::SmcHomogenized:
      return "SMC";
  }
  return "AIR";
}

RegionTag parse_region_tag(const std::string& token) {
  if (token.rfind("GRAIN(", 0) == 0 && token.back() == ')') {
    int k = -1;
    const char* first = token.data() + 6;
    const char* last = token.data() + token.size() - 1;
    auto res = std::from_chars(first, last, k);
    if (res.ec != std::errc{} || res.ptr != last || k < 0)
      throw IoError("bad grain tag: " + token);
    return RegionTag::make_grain(k);
  }
  if (token == "INSULATION") return {RegionKind::Insulation, -1};
  if (token == "INDUCTOR_POS") return {RegionKind::InductorPos, -1};
  if (token == "INDUCTOR_NEG") return {RegionKind::InductorNeg, -1};
  if (token == "AIR") return {RegionKind::Air, -1};
  if (token == "SMC") return {RegionKind::SmcHomogenized, -1};
  throw IoError("unknown region tag: " + token);
}

std::string to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::GammaInf:
      return "GAMMA_INF";
    case BoundaryTag::GammaH:
      return "GAMMA_H";
    case BoundaryTag::GammaV:
      return "GAMMA_V";
    case BoundaryTag::CellLeft:
      return "CELL_LEFT";
    case BoundaryTag::CellRight:
      return "CELL_RIGHT";
    case BoundaryTag::CellBottom:
      return "CELL_BOTTOM";
    case BoundaryTag::CellTop:
      return "CELL_TOP";
  }
  return "GAMMA_INF";
}

BoundaryTag parse_boundary_tag(const std::string& token) {
  if (token == "GAMMA_INF") return BoundaryTag::GammaInf;
  if (token == "GAMMA_H") return BoundaryTag::GammaH;
  if (token == "GAMMA_V") return BoundaryTag::GammaV;
  if (token == "CELL_LEFT") return BoundaryTag::CellLeft;
  if (token == "CELL_RIGHT") return BoundaryTag::CellRight;
  if (token == "CELL_BOTTOM") return BoundaryTag::CellBottom;
  if (token == "CELL_TOP") return BoundaryTag::CellTop;
  throw IoError("unknown boundary tag: " + token);
}

double TriMesh::tri_area(int t) const {
  const auto& tr = tris[t];
  const Eigen::Vector2d& a = nodes[tr.v[0]];
  const Eigen::Vector2d& b = nodes[tr.v[1]];
  const Eigen::Vector2d& c = nodes[tr.v[2]];
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

Eigen::Vector2d TriMesh::centroid(int t) const {
  const auto& tr = tris[t];
  return (nodes[tr.v[0]] + nodes[tr.v[1]] + nodes[tr.v[2]]) / 3.0;
}

double TriMesh::total_area() const {
  double s = 0.0;
  for (int t = 0; t < static_cast<int>(tris.size()); ++t) s += tri_area(t);
  return s;
}

double TriMesh::region_area(const RegionTag& tag) const {
  double s = 0.0;
  for (int t = 0; t < static_cast<int>(tris.size()); ++t)
    if (tris[t].region == tag) s += tri_area(t);
  return s;
}

double TriMesh::grain_area() const {
  double s = 0.0;
  for (int t = 0; t < static_cast<int>(tris.size()); ++t)
    if (tris[t].region.is_grain()) s += tri_area(t);
  return s;
}

std::vector<int> TriMesh::grain_ids() const {
  std::set<int> ids;
  for (const auto& tr : tris)
    if (tr.region.is_grain()) ids.insert(tr.region.grain);
  return {ids.begin(), ids.end()};
}

int TriMesh::find_triangle(const Eigen::Vector2d& p, double tol) const {
  for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
    const auto& tr = tris[t];
    const Eigen::Vector2d& a = nodes[tr.v[0]];
    const Eigen::Vector2d& b = nodes[tr.v[1]];
    const Eigen::Vector2d& c = nodes[tr.v[2]];
    const double area2 = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    if (area2 <= 0.0) continue;
    const double l0 = ((b.x() - p.x()) * (c.y() - p.y()) - (c.x() - p.x()) * (b.y() - p.y())) / area2;
    const double l1 = ((c.x() - p.x()) * (a.y() - p.y()) - (a.x() - p.x()) * (c.y() - p.y())) / area2;
    const double l2 = 1.0 - l0 - l1;
    const double lo = -tol / std::sqrt(std::abs(area2));
    if (l0 >= lo && l1 >= lo && l2 >= lo) return t;
  }
  return -1;
}

void TriMesh::validate() const {
  const int nn = static_cast<int>(nodes.size());
  for (size_t t = 0; t < tris.size(); ++t) {
    for (int k = 0; k < 3; ++k) {
      const int v = tris[t].v[k];
      if (v < 0 || v >= nn) throw GeometryError("triangle " + std::to_string(t) + ": node index out of range");
    }
    if (tri_area(static_cast<int>(t)) <= 0.0)
      throw GeometryError("triangle " + std::to_string(t) + ": non-positive area");
  }

  // Edge conformity.
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& tr : tris) {
    for (int k = 0; k < 3; ++k) {
      int a = tr.v[k], b = tr.v[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edge_count[{a, b}];
    }
  }
  std::set<std::pair<int, int>> listed;
  for (const auto& be : bedges) {
    int a = be.n0, b = be.n1;
    if (a > b) std::swap(a, b);
    listed.insert({a, b});
  }
  for (const auto& [edge, count] : edge_count) {
    if (count > 2)
      throw GeometryError("edge shared by more than two triangles");
    if (count == 1 && !listed.count(edge))
      throw GeometryError("untagged boundary edge (" + std::to_string(edge.first) + "," +
                          std::to_string(edge.second) + ")");
    if (count == 2 && listed.count(edge))
      throw GeometryError("interior edge listed as boundary");
  }

  // Periodic pairing: compressed (masters are not slaves), slaves unique.
  std::set<int> slaves, masters;
  for (const auto& [s, m] : periodic) {
    if (s == m) throw GeometryError("periodic pair maps node to itself");
    if (!slaves.insert(s).second) throw GeometryError("node is slave of two masters");
    masters.insert(m);
  }
  for (int s : slaves)
    if (masters.count(s)) throw GeometryError("periodic constraint chain (slave used as master)");
}

void write_mesh(const TriMesh& mesh, std::ostream& os) {
  os << "tri-mesh v1\n";
  os << "nodes " << mesh.nodes.size() << "\n";
  for (size_t i = 0; i < mesh.nodes.size(); ++i)
    os << i << " " << format_double(mesh.nodes[i].x()) << " " << format_double(mesh.nodes[i].y()) << "\n";
  os << "elements " << mesh.tris.size() << "\n";
  for (size_t i = 0; i < mesh.tris.size(); ++i) {
    const auto& t = mesh.tris[i];
    os << i << " " << t.v[0] << " " << t.v[1] << " " << t.v[2] << " " << to_string(t.region) << "\n";
  }
  os << "bedges " << mesh.bedges.size() << "\n";
  for (size_t i = 0; i < mesh.bedges.size(); ++i) {
    const auto& e = mesh.bedges[i];
    os << i << " " << e.n0 << " " << e.n1 << " " << to_string(e.tag) << "\n";
  }
  if (!mesh.periodic.empty()) {
    os << "periodic " << mesh.periodic.size() << "\n";
    for (const auto& [s, m] : mesh.periodic) os << s << " " << m << "\n";
  }
}

void write_mesh(const TriMesh& mesh, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_mesh(mesh, os);
  if (!os) throw IoError("write failed: " + path);
}

namespace {

// Pulls the next whitespace-separated token, skipping '#' comments.
bool next_token(std::istream& is, std::string& tok) {
  while (is >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(is, rest);
      continue;
    }
    return true;
  }
  return false;
}

std::string expect_token(std::istream& is, const char* what) {
  std::string tok;
  if (!next_token(is, tok)) throw IoError(std::string("mesh file truncated, expected ") + what);
  return tok;
}

long expect_int(std::istream& is, const char* what) {
  const std::string tok = expect_token(is, what);
  long v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw IoError(std::string("bad integer for ") + what + ": " + tok);
  return v;
}

double expect_double(std::istream& is, const char* what) {
  const std::string tok = expect_token(is, what);
  return parse_double(tok, what);
}

}  // namespace

TriMesh read_mesh(std::istream& is) {
  std::string tok = expect_token(is, "header");
  if (tok != "tri-mesh") throw IoError("not a tri-mesh file");
  tok = expect_token(is, "version");
  if (tok != "v1") throw IoError("unsupported mesh version: " + tok);

  TriMesh mesh;
  if (expect_token(is, "nodes") != "nodes") throw IoError("expected 'nodes'");
  const long nn = expect_int(is, "node count");
  mesh.nodes.resize(nn);
  for (long i = 0; i < nn; ++i) {
    const long id = expect_int(is, "node id");
    if (id < 0 || id >= nn) throw IoError("node id out of range");
    const double x = expect_double(is, "x");
    const double y = expect_double(is, "y");
    mesh.nodes[id] = {x, y};
  }

  if (expect_token(is, "elements") != "elements") throw IoError("expected 'elements'");
  const long nt = expect_int(is, "element count");
  mesh.tris.resize(nt);
  for (long i = 0; i < nt; ++i) {
    const long id = expect_int(is, "element id");
    if (id < 0 || id >= nt) throw IoError("element id out of range");
    TriMesh::Tri t;
    for (int k = 0; k < 3; ++k) t.v[k] = static_cast<int>(expect_int(is, "element node"));
    t.region = parse_region_tag(expect_token(is, "region tag"));
    mesh.tris[id] = t;
  }

  if (expect_token(is, "bedges") != "bedges") throw IoError("expected 'bedges'");
  const long nb = expect_int(is, "bedge count");
  mesh.bedges.resize(nb);
  for (long i = 0; i < nb; ++i) {
    const long id = expect_int(is, "bedge id");
    if (id < 0 || id >= nb) throw IoError("bedge id out of range");
    TriMesh::BoundaryEdge e;
    e.n0 = static_cast<int>(expect_int(is, "bedge node"));
    e.n1 = static_cast<int>(expect_int(is, "bedge node"));
    e.tag = parse_boundary_tag(expect_token(is, "boundary tag"));
    mesh.bedges[id] = e;
  }

  std::string kw;
  if (next_token(is, kw)) {
    if (kw != "periodic") throw IoError("unexpected token: " + kw);
    const long np = expect_int(is, "periodic count");
    mesh.periodic.reserve(np);
    for (long i = 0; i < np; ++i) {
      const int s = static_cast<int>(expect_int(is, "slave id"));
      const int m = static_cast<int>(expect_int(is, "master id"));
      mesh.periodic.emplace_back(s, m);
    }
  }
  return mesh;
}

TriMesh read_mesh(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open mesh file: " + path);
  return read_mesh(is);
}

}  // namespace mqs
