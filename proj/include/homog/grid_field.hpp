#pragma once

#include <string>

#include "homog/error.hpp"
#include "homog/types.hpp"

namespace homog {

enum class FieldLocation { Nodes, QuadraturePoints, Cells };

/// Complex vector- or matrix-valued samples on a mesh. Row p of `values`
/// holds the rows x cols entries at point p in row-major order.
struct GridField {
  std::string mesh_id;
  FieldLocation location = FieldLocation::Nodes;
  int rows = 1;
  int cols = 1;
  MatrixXc values;

  GridField() = default;
  GridField(std::string id, FieldLocation loc, int r, int c, Eigen::Index points)
      : mesh_id(std::move(id)), location(loc), rows(r), cols(c), values(MatrixXc::Zero(points, r * c)) {}

  Eigen::Index points() const { return values.rows(); }

  cplx& at(Eigen::Index p, int r, int c) { return values(p, r * cols + c); }
  cplx at(Eigen::Index p, int r, int c) const { return values(p, r * cols + c); }

  /// Entries at point p as a rows x cols matrix.
  SmallMat matrix(Eigen::Index p) const {
    SmallMat out(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) out(r, c) = at(p, r, c);
    return out;
  }

  bool finite() const { return values.allFinite(); }

  void require_compatible(const GridField& other) const {
    require(mesh_id == other.mesh_id && location == other.location && rows == other.rows && cols == other.cols &&
                points() == other.points(),
            ErrorCode::MeshMismatch, "fields '" + mesh_id + "' and '" + other.mesh_id + "' do not match");
  }
};

}  // namespace homog
