#include "pfto/vtk.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace pfto {

Eigen::VectorXd p2_vertex_values(const Mesh& mesh, const Eigen::VectorXd& u) {
  const int nv = mesh.n_vertices();
  Eigen::VectorXd out(2 * nv);
  for (int i = 0; i < nv; ++i) {
    out[2 * i] = u[2 * i];
    out[2 * i + 1] = u[2 * i + 1];
  }
  return out;
}

void write_vtk(const std::string& path, const Mesh& mesh,
               const std::vector<VtkPointData>& fields, const std::string& title) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_vtk: cannot open " + path);
  os.precision(12);

  const int nv = mesh.n_vertices();
  const int nt = mesh.n_triangles();

  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << nv << " double\n";
  for (const auto& v : mesh.vertices) os << v.x() << " " << v.y() << " 0\n";
  os << "CELLS " << nt << " " << 4 * nt << "\n";
  for (const auto& t : mesh.triangles) os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  os << "CELL_TYPES " << nt << "\n";
  for (int t = 0; t < nt; ++t) os << "5\n";

  if (fields.empty()) return;
  os << "POINT_DATA " << nv << "\n";
  for (const auto& f : fields) {
    if (!f.data) continue;
    if (f.is_vector) {
      if (f.data->size() < 2 * nv) throw std::runtime_error("write_vtk: short vector field");
      os << "VECTORS " << f.name << " double\n";
      for (int i = 0; i < nv; ++i)
        os << (*f.data)[2 * i] << " " << (*f.data)[2 * i + 1] << " 0\n";
    } else {
      if (f.data->size() < nv) throw std::runtime_error("write_vtk: short scalar field");
      os << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
      for (int i = 0; i < nv; ++i) os << (*f.data)[i] << "\n";
    }
  }
}

}  // namespace pfto
