#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "layerstack/errors.hpp"
#include "layerstack/mesh.hpp"

namespace layerstack {
namespace {

LayeredBoxSpec unit_box(std::vector<double> z, double h) {
  LayeredBoxSpec s;
  s.x_extent = {0.0, 1.0};
  s.y_extent = {0.0, 1.0};
  s.layer_z = std::move(z);
  s.h = h;
  return s;
}

LayeredBoxSpec pavement(double h) {
  LayeredBoxSpec s;
  s.x_extent = {0.0, 3.0};
  s.y_extent = {0.0, 6.0};
  s.layer_z = {2.3, 1.9, 1.2, 0.0};
  s.h = h;
  return s;
}

int tag_count(const MeshReport& r, FaceTag tag) { return r.faces_per_tag[static_cast<int>(tag)]; }

TEST(CellsForExtent, RealizedSpacingNeverExceedsRequest) {
  EXPECT_EQ(cells_for_extent(3.0, 0.3), 10);
  EXPECT_EQ(cells_for_extent(0.4, 0.3), 2);
  EXPECT_EQ(cells_for_extent(1.0, 1.0), 1);
  EXPECT_EQ(cells_for_extent(1.0, 2.0), 1);
  for (double h : {0.15, 0.25, 0.3, 0.375, 0.5, 1.0}) {
    for (double e : {0.4, 0.7, 1.2, 3.0, 6.0}) {
      const int n = cells_for_extent(e, h);
      EXPECT_LE(e / n, h * (1.0 + 1e-9)) << e << " " << h;
      if (n > 1) {
        EXPECT_GT(e / (n - 1), h) << e << " " << h;
      }
    }
  }
}

TEST(BuildMesh, SingleUnitCell) {
  const auto mesh = build_layered_box_mesh(unit_box({1.0, 0.0}, 1.0));
  ASSERT_EQ(mesh.layer_count(), 1);
  const auto& layer = mesh.layers[0];
  EXPECT_EQ(layer.node_count(), 8);
  EXPECT_EQ(layer.tets.size(), 6u);
  EXPECT_EQ(layer.faces.size(), 12u);
  double volume = 0.0;
  for (int t = 0; t < 6; ++t) {
    EXPECT_GT(layer.signed_volume(t), 0.0);
    volume += layer.signed_volume(t);
  }
  EXPECT_NEAR(volume, 1.0, 1e-14);
  const auto report = validate_mesh(mesh);
  EXPECT_TRUE(report.ok());
  EXPECT_EQ(report.boundary_faces, 12);
  EXPECT_EQ(tag_count(report, FaceTag::kLateral), 8);
  EXPECT_EQ(tag_count(report, FaceTag::kTop), 2);
  EXPECT_EQ(tag_count(report, FaceTag::kBottom), 2);
}

TEST(BuildMesh, TwoStackedCubesShareFourCorners) {
  const auto mesh = build_layered_box_mesh(unit_box({2.0, 1.0, 0.0}, 1.0));
  ASSERT_EQ(mesh.interface_count(), 1);
  const auto& pairs = mesh.interfaces[0];
  ASSERT_EQ(pairs.size(), 4u);
  for (const auto& [a, b] : pairs) {
    EXPECT_EQ(mesh.layers[0].nodes[a], mesh.layers[1].nodes[b]);
    EXPECT_DOUBLE_EQ(mesh.layers[0].nodes[a].z(), 1.0);
  }
  const auto report = validate_mesh(mesh);
  EXPECT_TRUE(report.ok());
  EXPECT_TRUE(report.pairing_bijective);
  EXPECT_EQ(tag_count(report, FaceTag::kContactUpper), 2);
  EXPECT_EQ(tag_count(report, FaceTag::kContactLower), 2);
}

TEST(BuildMesh, PavementNodeCountMatchesClosedForm) {
  for (double h : {0.3, 0.15}) {
    const auto mesh = build_layered_box_mesh(pavement(h));
    const int nx = cells_for_extent(3.0, h);
    const int ny = cells_for_extent(6.0, h);
    int expected = 0;
    for (double t : {0.4, 0.7, 1.2}) expected += (nx + 1) * (ny + 1) * (cells_for_extent(t, h) + 1);
    EXPECT_EQ(mesh.total_nodes(), expected) << h;
  }
  // h = 0.3: 11 x 21 grid, 2 + 3 + 4 cells through the layers.
  EXPECT_EQ(build_layered_box_mesh(pavement(0.3)).total_nodes(), 11 * 21 * (3 + 4 + 5));
}

TEST(BuildMesh, PavementMeshIsValid) {
  const auto mesh = build_layered_box_mesh(pavement(0.5));
  const auto report = validate_mesh(mesh);
  EXPECT_TRUE(report.ok()) << (report.violations.empty() ? "" : report.violations.front());
  EXPECT_GT(report.min_volume, 0.0);
  int tagged = 0;
  for (int c : report.faces_per_tag) tagged += c;
  EXPECT_EQ(tagged, report.boundary_faces);
  EXPECT_EQ(tag_count(report, FaceTag::kFree), 0);
}

TEST(BuildMesh, PairsAgreeInCoordinates) {
  const auto mesh = build_layered_box_mesh(pavement(0.5));
  for (int i = 0; i < mesh.interface_count(); ++i) {
    std::set<int> upper, lower;
    for (const auto& [a, b] : mesh.interfaces[i]) {
      const double gap = (mesh.layers[i].nodes[a] - mesh.layers[i + 1].nodes[b]).norm();
      EXPECT_LE(gap, 1e-12 * mesh.diameter);
      upper.insert(a);
      lower.insert(b);
    }
    EXPECT_EQ(upper.size(), mesh.interfaces[i].size());
    EXPECT_EQ(lower.size(), mesh.interfaces[i].size());
    EXPECT_EQ(upper.size(), mesh.layers[i].face_nodes(false).size());
  }
}

TEST(BuildMesh, LateralInterfaceNodesCarryBothFlags) {
  const auto mesh = build_layered_box_mesh(pavement(0.5));
  int lateral = 0;
  for (const auto& [a, b] : mesh.interfaces[0]) {
    const auto& p = mesh.layers[0].nodes[a];
    const bool on_side = p.x() == 0.0 || p.x() == 3.0 || p.y() == 0.0 || p.y() == 6.0;
    EXPECT_EQ(mesh.layers[0].has_flag(a, kOnLateral), on_side);
    EXPECT_TRUE(mesh.layers[0].has_flag(a, kOnInterfaceBelow));
    EXPECT_EQ(mesh.layers[1].has_flag(b, kOnLateral), on_side);
    EXPECT_TRUE(mesh.layers[1].has_flag(b, kOnInterfaceAbove));
    lateral += on_side ? 1 : 0;
  }
  EXPECT_EQ(lateral, 2 * (7 + 13) - 4);
}

TEST(BuildMesh, MirrorSymmetricForEvenCellCounts) {
  const auto mesh = build_layered_box_mesh(pavement(0.5));  // 6 x 12 cells
  for (const auto& layer : mesh.layers) {
    const auto key = [](const Vec3& p) {
      return std::array<long long, 3>{std::llround(p.x() * 1e9), std::llround(p.y() * 1e9), std::llround(p.z() * 1e9)};
    };
    std::set<std::array<long long, 3>> nodes;
    for (const auto& p : layer.nodes) nodes.insert(key(p));
    using Tet = std::array<std::array<long long, 3>, 4>;
    std::set<Tet> tets;
    const auto tet_key = [&](const std::array<int, 4>& t, bool reflect_x, bool reflect_y) {
      Tet k;
      for (int v = 0; v < 4; ++v) {
        Vec3 p = layer.nodes[t[v]];
        if (reflect_x) p.x() = 3.0 - p.x();
        if (reflect_y) p.y() = 6.0 - p.y();
        k[v] = key(p);
      }
      std::sort(k.begin(), k.end());
      return k;
    };
    for (const auto& t : layer.tets) tets.insert(tet_key(t, false, false));
    for (bool rx : {false, true}) {
      for (bool ry : {false, true}) {
        for (const auto& p : layer.nodes) {
          Vec3 r = p;
          if (rx) r.x() = 3.0 - r.x();
          if (ry) r.y() = 6.0 - r.y();
          EXPECT_TRUE(nodes.count(key(r)));
        }
        for (const auto& t : layer.tets) EXPECT_TRUE(tets.count(tet_key(t, rx, ry)));
      }
    }
  }
}

TEST(BuildMesh, RejectsInvalidSpecs) {
  EXPECT_THROW(build_layered_box_mesh(unit_box({1.0, 0.0}, 0.0)), InvalidInputError);
  EXPECT_THROW(build_layered_box_mesh(unit_box({1.0, 0.0}, -1.0)), InvalidInputError);
  EXPECT_THROW(build_layered_box_mesh(unit_box({0.0, 1.0}, 0.5)), InvalidInputError);
  EXPECT_THROW(build_layered_box_mesh(unit_box({1.0}, 0.5)), InvalidInputError);
  auto flat = unit_box({1.0, 0.0}, 0.5);
  flat.x_extent = {1.0, 1.0};
  EXPECT_THROW(build_layered_box_mesh(flat), InvalidInputError);
}

TEST(ValidateMesh, ReportsInvertedTet) {
  auto mesh = build_layered_box_mesh(unit_box({1.0, 0.0}, 1.0));
  std::swap(mesh.layers[0].tets[2][0], mesh.layers[0].tets[2][1]);
  const auto report = validate_mesh(mesh);
  EXPECT_FALSE(report.ok());
  EXPECT_LT(report.min_volume, 0.0);
}

TEST(ValidateMesh, ReportsBrokenPairing) {
  auto mesh = build_layered_box_mesh(unit_box({2.0, 1.0, 0.0}, 1.0));
  mesh.interfaces[0][1].second = mesh.interfaces[0][0].second;
  const auto report = validate_mesh(mesh);
  EXPECT_FALSE(report.ok());
  EXPECT_FALSE(report.pairing_bijective);
}

TEST(LocatePoint, ReproducesLinearFields) {
  const auto mesh = build_layered_box_mesh(pavement(0.5));
  const auto& layer = mesh.layers[1];
  const auto f = [](const Vec3& p) { return 1.0 + 2.0 * p.x() - 0.5 * p.y() + 3.0 * p.z(); };
  for (const Vec3& p : {Vec3(0.1, 0.2, 1.3), Vec3(2.9, 5.9, 1.85), Vec3(1.5, 3.0, 1.55), Vec3(0.0, 6.0, 1.9),
                       Vec3(2.26, 0.74, 1.21)}) {
    const auto loc = locate_point(layer, p);
    double value = 0.0;
    double sum = 0.0;
    for (int v = 0; v < 4; ++v) {
      EXPECT_GE(loc.weights[v], -1e-12);
      value += loc.weights[v] * f(layer.nodes[loc.nodes[v]]);
      sum += loc.weights[v];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_NEAR(value, f(p), 1e-12);
  }
  EXPECT_THROW(locate_point(layer, Vec3(1.0, 1.0, 2.0)), InvalidInputError);
}

}  // namespace
}  // namespace layerstack
