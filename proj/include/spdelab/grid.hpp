#ifndef SPDELAB_GRID_HPP
#define SPDELAB_GRID_HPP

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace spdelab {

using Eigen::Index;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Hilbert-space role of a grid function; selects the inner product.
enum class SpaceTag { L2, H1, Hminus1 };

enum class BoundaryCondition { Neumann, Dirichlet };

const char *to_string(SpaceTag tag);
const char *to_string(BoundaryCondition bc);

/// Uniform cell-centered grid on a box [0, L_1] x [0, L_2].
class Grid {
public:
  Grid() = default;
  Grid(double extent, int cells);
  Grid(std::array<double, 2> extent, std::array<int, 2> cells);

  int dim() const { return dim_; }
  int cells(int axis) const { return cells_[axis]; }
  double extent(int axis) const { return extent_[axis]; }
  double spacing(int axis) const { return extent_[axis] / cells_[axis]; }
  double max_spacing() const;
  double cell_volume() const;
  Index size() const;

  /// Coordinate of the cell center along an axis.
  double center(int axis, int i) const { return (i + 0.5) * spacing(axis); }
  Index index(int i, int j = 0) const { return i + Index(cells_[0]) * j; }
  /// Cell-center coordinates of a flat index.
  std::array<double, 2> position(Index k) const;

  bool operator==(const Grid &o) const;
  bool operator!=(const Grid &o) const { return !(*this == o); }

private:
  int dim_ = 1;
  std::array<double, 2> extent_{1.0, 1.0};
  std::array<int, 2> cells_{1, 1};
};

class GridFunction {
public:
  GridFunction() = default;
  explicit GridFunction(const Grid &grid, SpaceTag tag = SpaceTag::L2);
  GridFunction(const Grid &grid, Vector values, SpaceTag tag = SpaceTag::L2);

  /// Samples f at cell centers; the second coordinate is 0 in 1D.
  static GridFunction sample(const Grid &grid,
                             const std::function<double(double, double)> &f,
                             SpaceTag tag = SpaceTag::L2);
  static GridFunction constant(const Grid &grid, double c,
                               SpaceTag tag = SpaceTag::L2);

  const Grid &grid() const { return grid_; }
  SpaceTag tag() const { return tag_; }
  const Vector &values() const { return values_; }
  Vector &values() { return values_; }
  double operator[](Index k) const { return values_[k]; }
  Index size() const { return values_.size(); }

  GridFunction retagged(SpaceTag tag) const;
  bool finite() const { return values_.allFinite(); }

  GridFunction &operator+=(const GridFunction &o);
  GridFunction &operator-=(const GridFunction &o);
  GridFunction &operator*=(double s);

private:
  Grid grid_;
  Vector values_;
  SpaceTag tag_ = SpaceTag::L2;
};

GridFunction operator+(GridFunction a, const GridFunction &b);
GridFunction operator-(GridFunction a, const GridFunction &b);
GridFunction operator*(double s, GridFunction a);

/// Face-centered field: axis a holds (n_a + 1) * n_other values, boundary
/// faces included. Face i along x sits between cells i-1 and i.
struct VectorField {
  Grid grid;
  std::array<Vector, 2> faces;

  explicit VectorField(const Grid &g);
  int components() const { return grid.dim(); }
  Index face_index(int axis, int i, int j) const;
};

/// Throws UsageError unless both functions share grid and tag.
void check_compatible(const GridFunction &u, const GridFunction &v);

/// Inner product in the geometry named by the (shared) tag.
double inner(const GridFunction &u, const GridFunction &v);
double norm(const GridFunction &u);
double norm_sq(const GridFunction &u);
/// L^2 inner product of face fields with uniform cell-volume weights.
double inner(const VectorField &a, const VectorField &b);

VectorField gradient(const GridFunction &u, BoundaryCondition bc);
GridFunction divergence(const VectorField &F, BoundaryCondition bc);
GridFunction laplacian(const GridFunction &u, BoundaryCondition bc);

/// Assembled discrete Laplacian (negative semidefinite).
SparseMatrix laplacian_matrix(const Grid &grid, BoundaryCondition bc);

/// Factorization of K = -Laplacian_Dirichlet, the operator defining the
/// discrete H^{-1} geometry: (u, v)_{-1} = vol * u^T K^{-1} v.
class DirichletSolver {
public:
  explicit DirichletSolver(const Grid &grid);
  const SparseMatrix &stiffness() const { return stiffness_; }
  Vector solve(const Vector &rhs) const;
  Vector apply(const Vector &u) const { return stiffness_ * u; }

private:
  SparseMatrix stiffness_;
  Eigen::SimplicialLDLT<SparseMatrix> factor_;
};

/// Shared, lazily built solver per grid; safe to call from several threads.
std::shared_ptr<const DirichletSolver> dirichlet_solver(const Grid &grid);

/// Sparse difference operator grouped into radial blocks: group g owns rows
/// [offsets[g], offsets[g+1]) and enters an energy as
/// vol * weight[g] * psi(|rows_g u|).
struct DifferenceOperator {
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;
  std::vector<Index> offsets;
  Vector weight;
  /// Cell whose coefficient a(x) multiplies the group.
  std::vector<Index> cell;

  Index groups() const { return Index(offsets.size()) - 1; }
  Index group_size(Index g) const { return offsets[g + 1] - offsets[g]; }
};

/// Forward differences over interior faces, grouped by the cell to their
/// left/below (zero flux through the boundary).
DifferenceOperator neumann_gradient_operator(const Grid &grid);

} // namespace spdelab

#endif
