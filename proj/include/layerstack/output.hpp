#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "layerstack/ld.hpp"
#include "layerstack/mesh.hpp"

namespace layerstack {

// Legacy VTK 3.0 ASCII unstructured grid: tetrahedra (type 10) and a point vector "displacement".
// Values use 17 significant digits, so identical inputs give identical bytes. Throws IoError.
void write_vtk_layer(const LayerMesh& layer, std::span<const double> field, const std::filesystem::path& path,
                     const std::string& title = "layerstack displacement");

// One file per layer (<stem>_layer<k>.vtk, k from 1) plus <stem>_merged.vtk, which concatenates the
// layers' points and cells and carries a "layer" cell scalar. Returns the written paths.
std::vector<std::filesystem::path> write_vtk(const MultiLayerMesh& mesh, const std::vector<std::vector<double>>& fields,
                                             const std::filesystem::path& directory, const std::string& stem = "field");

// Header: iter,rel_change,energy,lambda_norm_1..m,sweeps_layer_1..n; one row per iteration.
// A diverged history ends with a '#' comment row naming the growing tail.
void write_history_csv(const LdHistory& history, int interface_count, int layer_count,
                       const std::filesystem::path& path);

// Writes text to a file, creating parent directories. Throws IoError with the path.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace layerstack
