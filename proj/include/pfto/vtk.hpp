/// @file vtk.hpp
/// @brief Legacy ASCII VTK output (unstructured grid, cell type 5).

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pfto/mesh.hpp"

namespace pfto {

struct VtkPointData {
  std::string name;
  const Eigen::VectorXd* data = nullptr;  // size V (scalar) or 2V (vector)
  bool is_vector = false;
};

/// Writes the mesh with nodal point data. P2 velocity fields must be
/// downsampled to vertices by the caller (vertex dofs are the leading block).
void write_vtk(const std::string& path, const Mesh& mesh,
               const std::vector<VtkPointData>& fields, const std::string& title = "pfto");

/// Extracts the vertex values (x,y interleaved) of a P2 vector field.
Eigen::VectorXd p2_vertex_values(const Mesh& mesh, const Eigen::VectorXd& u);

}  // namespace pfto
