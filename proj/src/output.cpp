#include "layerstack/output.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "layerstack/errors.hpp"

namespace layerstack {

namespace {

std::string format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_points_and_cells(std::ostream& out, const std::vector<const LayerMesh*>& layers,
                            const std::vector<std::span<const double>>& fields, bool layer_scalar) {
  std::size_t points = 0;
  std::size_t cells = 0;
  for (const LayerMesh* l : layers) {
    points += l->nodes.size();
    cells += l->tets.size();
  }
  out << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << points << " double\n";
  for (const LayerMesh* l : layers) {
    for (const Vec3& p : l->nodes) out << format(p[0]) << ' ' << format(p[1]) << ' ' << format(p[2]) << '\n';
  }
  out << "CELLS " << cells << ' ' << 5 * cells << '\n';
  std::size_t offset = 0;
  for (const LayerMesh* l : layers) {
    for (const auto& t : l->tets) {
      out << 4;
      for (int v : t) out << ' ' << offset + static_cast<std::size_t>(v);
      out << '\n';
    }
    offset += l->nodes.size();
  }
  out << "CELL_TYPES " << cells << '\n';
  for (std::size_t k = 0; k < cells; ++k) out << "10\n";
  if (layer_scalar) {
    out << "CELL_DATA " << cells << '\n';
    out << "SCALARS layer int 1\nLOOKUP_TABLE default\n";
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t k = 0; k < layers[l]->tets.size(); ++k) out << l + 1 << '\n';
    }
  }
  out << "POINT_DATA " << points << '\n';
  out << "VECTORS displacement double\n";
  for (const auto& f : fields) {
    for (std::size_t k = 0; k + 2 < f.size(); k += 3) {
      out << format(f[k]) << ' ' << format(f[k + 1]) << ' ' << format(f[k + 2]) << '\n';
    }
  }
}

void write_vtk_file(const std::vector<const LayerMesh*>& layers, const std::vector<std::span<const double>>& fields,
                    const std::filesystem::path& path, const std::string& title, bool layer_scalar) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (fields[l].size() != static_cast<std::size_t>(layers[l]->dof_count())) {
      throw InvalidInputError("field size does not match the mesh for " + path.string());
    }
  }
  std::ostringstream out;
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\n";
  write_points_and_cells(out, layers, fields, layer_scalar);
  write_text_file(path, out.str());
}

}  // namespace

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

void write_vtk_layer(const LayerMesh& layer, std::span<const double> field, const std::filesystem::path& path,
                     const std::string& title) {
  write_vtk_file({&layer}, {field}, path, title, false);
}

std::vector<std::filesystem::path> write_vtk(const MultiLayerMesh& mesh, const std::vector<std::vector<double>>& fields,
                                             const std::filesystem::path& directory, const std::string& stem) {
  if (fields.size() != mesh.layers.size()) throw InvalidInputError("one field per layer is required");
  std::vector<std::filesystem::path> written;
  std::vector<const LayerMesh*> all;
  std::vector<std::span<const double>> all_fields;
  for (std::size_t l = 0; l < mesh.layers.size(); ++l) {
    const auto path = directory / (stem + "_layer" + std::to_string(l + 1) + ".vtk");
    write_vtk_layer(mesh.layers[l], fields[l], path, "layerstack displacement, layer " + std::to_string(l + 1));
    written.push_back(path);
    all.push_back(&mesh.layers[l]);
    all_fields.emplace_back(fields[l]);
  }
  const auto merged = directory / (stem + "_merged.vtk");
  write_vtk_file(all, all_fields, merged, "layerstack displacement, all layers", true);
  written.push_back(merged);
  return written;
}

void write_history_csv(const LdHistory& history, int interface_count, int layer_count,
                       const std::filesystem::path& path) {
  std::ostringstream out;
  out << "iter,rel_change,energy";
  for (int i = 1; i <= interface_count; ++i) out << ",lambda_norm_" << i;
  for (int l = 1; l <= layer_count; ++l) out << ",sweeps_layer_" << l;
  out << '\n';
  for (const auto& it : history.iterations) {
    out << it.iter << ',' << format(it.rel_change) << ',' << format(it.energy);
    for (int i = 0; i < interface_count; ++i) {
      out << ',' << (static_cast<std::size_t>(i) < it.interface_norms.size() ? format(it.interface_norms[i]) : "");
    }
    for (int l = 0; l < layer_count; ++l) {
      out << ',';
      if (static_cast<std::size_t>(l) < it.sweeps.size()) out << it.sweeps[l];
    }
    out << '\n';
  }
  if (history.diverged) {
    const auto& its = history.iterations;
    std::size_t first = its.empty() ? 0 : its.size() - 1;
    while (first > 0 && its[first].increment > its[first - 1].increment) --first;
    out << "# diverged";
    if (!its.empty()) {
      out << ": increment grew monotonically from iteration " << its[first].iter << " to " << its.back().iter;
    }
    if (!history.note.empty()) out << "; " << history.note;
    out << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace layerstack
