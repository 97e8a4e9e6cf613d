#include "spdelab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "spdelab/error.hpp"

namespace spdelab {

const char *to_string(SpaceTag tag) {
  switch (tag) {
  case SpaceTag::L2:
    return "L2";
  case SpaceTag::H1:
    return "H1";
  case SpaceTag::Hminus1:
    return "Hminus1";
  }
  return "?";
}

const char *to_string(BoundaryCondition bc) {
  return bc == BoundaryCondition::Neumann ? "neumann" : "dirichlet";
}

Grid::Grid(double extent, int cells) : dim_(1), extent_{extent, 1.0}, cells_{cells, 1} {
  require(extent > 0.0 && cells > 0, "grid needs positive extent and cell count");
}

Grid::Grid(std::array<double, 2> extent, std::array<int, 2> cells)
    : dim_(2), extent_(extent), cells_(cells) {
  require(extent[0] > 0.0 && extent[1] > 0.0 && cells[0] > 0 && cells[1] > 0,
          "grid needs positive extent and cell count");
}

double Grid::max_spacing() const {
  return dim_ == 1 ? spacing(0) : std::max(spacing(0), spacing(1));
}

double Grid::cell_volume() const {
  return dim_ == 1 ? spacing(0) : spacing(0) * spacing(1);
}

Index Grid::size() const { return dim_ == 1 ? cells_[0] : Index(cells_[0]) * cells_[1]; }

std::array<double, 2> Grid::position(Index k) const {
  const int i = int(k % cells_[0]);
  const int j = int(k / cells_[0]);
  return {center(0, i), dim_ == 2 ? center(1, j) : 0.0};
}

bool Grid::operator==(const Grid &o) const {
  if (dim_ != o.dim_)
    return false;
  for (int a = 0; a < dim_; ++a)
    if (cells_[a] != o.cells_[a] || extent_[a] != o.extent_[a])
      return false;
  return true;
}

GridFunction::GridFunction(const Grid &grid, SpaceTag tag)
    : grid_(grid), values_(Vector::Zero(grid.size())), tag_(tag) {}

GridFunction::GridFunction(const Grid &grid, Vector values, SpaceTag tag)
    : grid_(grid), values_(std::move(values)), tag_(tag) {
  require(values_.size() == grid_.size(), "value count does not match grid");
}

GridFunction GridFunction::sample(const Grid &grid,
                                  const std::function<double(double, double)> &f,
                                  SpaceTag tag) {
  GridFunction u(grid, tag);
  for (Index k = 0; k < grid.size(); ++k) {
    const auto x = grid.position(k);
    u.values_[k] = f(x[0], x[1]);
  }
  return u;
}

GridFunction GridFunction::constant(const Grid &grid, double c, SpaceTag tag) {
  return GridFunction(grid, Vector::Constant(grid.size(), c), tag);
}

GridFunction GridFunction::retagged(SpaceTag tag) const {
  GridFunction u = *this;
  u.tag_ = tag;
  return u;
}

void check_compatible(const GridFunction &u, const GridFunction &v) {
  if (u.grid() != v.grid())
    throw UsageError("grid functions live on different grids");
  if (u.tag() != v.tag())
    throw UsageError(std::string("space tags differ: ") + to_string(u.tag()) +
                     " vs " + to_string(v.tag()));
}

GridFunction &GridFunction::operator+=(const GridFunction &o) {
  check_compatible(*this, o);
  values_ += o.values_;
  return *this;
}

GridFunction &GridFunction::operator-=(const GridFunction &o) {
  check_compatible(*this, o);
  values_ -= o.values_;
  return *this;
}

GridFunction &GridFunction::operator*=(double s) {
  values_ *= s;
  return *this;
}

GridFunction operator+(GridFunction a, const GridFunction &b) { return a += b; }
GridFunction operator-(GridFunction a, const GridFunction &b) { return a -= b; }
GridFunction operator*(double s, GridFunction a) { return a *= s; }

VectorField::VectorField(const Grid &g) : grid(g) {
  if (g.dim() == 1) {
    faces[0] = Vector::Zero(g.cells(0) + 1);
  } else {
    faces[0] = Vector::Zero(Index(g.cells(0) + 1) * g.cells(1));
    faces[1] = Vector::Zero(Index(g.cells(0)) * (g.cells(1) + 1));
  }
}

Index VectorField::face_index(int axis, int i, int j) const {
  if (axis == 0)
    return i + Index(grid.cells(0) + 1) * j;
  return i + Index(grid.cells(0)) * j;
}

double inner(const GridFunction &u, const GridFunction &v) {
  check_compatible(u, v);
  const double vol = u.grid().cell_volume();
  switch (u.tag()) {
  case SpaceTag::L2:
    return vol * u.values().dot(v.values());
  case SpaceTag::H1: {
    const double l2 = vol * u.values().dot(v.values());
    return l2 + inner(gradient(u, BoundaryCondition::Neumann),
                      gradient(v, BoundaryCondition::Neumann));
  }
  case SpaceTag::Hminus1: {
    const auto solver = dirichlet_solver(u.grid());
    return vol * u.values().dot(solver->solve(v.values()));
  }
  }
  return 0.0;
}

double norm_sq(const GridFunction &u) { return std::max(0.0, inner(u, u)); }
double norm(const GridFunction &u) { return std::sqrt(norm_sq(u)); }

double inner(const VectorField &a, const VectorField &b) {
  if (a.grid != b.grid)
    throw UsageError("vector fields live on different grids");
  double s = 0.0;
  for (int ax = 0; ax < a.grid.dim(); ++ax)
    s += a.faces[ax].dot(b.faces[ax]);
  return a.grid.cell_volume() * s;
}

VectorField gradient(const GridFunction &u, BoundaryCondition bc) {
  const Grid &g = u.grid();
  VectorField F(g);
  const bool dirichlet = bc == BoundaryCondition::Dirichlet;
  const int nx = g.cells(0);
  const int ny = g.dim() == 2 ? g.cells(1) : 1;
  const auto &x = u.values();

  const double hx = g.spacing(0);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      double val = 0.0;
      if (i > 0 && i < nx)
        val = (x[g.index(i, j)] - x[g.index(i - 1, j)]) / hx;
      else if (dirichlet)
        val = i == 0 ? x[g.index(0, j)] / hx : -x[g.index(nx - 1, j)] / hx;
      F.faces[0][F.face_index(0, i, j)] = val;
    }
  }
  if (g.dim() == 2) {
    const double hy = g.spacing(1);
    for (int j = 0; j <= ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        double val = 0.0;
        if (j > 0 && j < ny)
          val = (x[g.index(i, j)] - x[g.index(i, j - 1)]) / hy;
        else if (dirichlet)
          val = j == 0 ? x[g.index(i, 0)] / hy : -x[g.index(i, ny - 1)] / hy;
        F.faces[1][F.face_index(1, i, j)] = val;
      }
    }
  }
  return F;
}

GridFunction divergence(const VectorField &F, BoundaryCondition bc) {
  const Grid &g = F.grid;
  GridFunction out(g);
  auto &d = out.values();
  const bool neumann = bc == BoundaryCondition::Neumann;
  const int nx = g.cells(0);
  const int ny = g.dim() == 2 ? g.cells(1) : 1;

  auto face = [&](int axis, int i, int j, int n_axis, int pos) {
    if (neumann && (pos == 0 || pos == n_axis))
      return 0.0;
    return F.faces[axis][F.face_index(axis, i, j)];
  };
  const double hx = g.spacing(0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      d[g.index(i, j)] = (face(0, i + 1, j, nx, i + 1) - face(0, i, j, nx, i)) / hx;
  if (g.dim() == 2) {
    const double hy = g.spacing(1);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        d[g.index(i, j)] += (face(1, i, j + 1, ny, j + 1) - face(1, i, j, ny, j)) / hy;
  }
  return out;
}

GridFunction laplacian(const GridFunction &u, BoundaryCondition bc) {
  return divergence(gradient(u, bc), bc).retagged(u.tag());
}

SparseMatrix laplacian_matrix(const Grid &g, BoundaryCondition bc) {
  const bool dirichlet = bc == BoundaryCondition::Dirichlet;
  const Index n = g.size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(std::size_t(n) * (1 + 2 * g.dim()));
  const int nx = g.cells(0);
  const int ny = g.dim() == 2 ? g.cells(1) : 1;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Index k = g.index(i, j);
      double diag = 0.0;
      for (int axis = 0; axis < g.dim(); ++axis) {
        const double w = 1.0 / (g.spacing(axis) * g.spacing(axis));
        const int pos = axis == 0 ? i : j;
        const int n_axis = axis == 0 ? nx : ny;
        for (int side : {-1, 1}) {
          const int q = pos + side;
          if (q >= 0 && q < n_axis) {
            const Index nb = axis == 0 ? g.index(q, j) : g.index(i, q);
            trip.emplace_back(k, nb, w);
            diag -= w;
          } else if (dirichlet) {
            diag -= w;
          }
        }
      }
      trip.emplace_back(k, k, diag);
    }
  }
  SparseMatrix L(n, n);
  L.setFromTriplets(trip.begin(), trip.end());
  return L;
}

DirichletSolver::DirichletSolver(const Grid &grid)
    : stiffness_(-laplacian_matrix(grid, BoundaryCondition::Dirichlet)) {
  factor_.compute(stiffness_);
  if (factor_.info() != Eigen::Success)
    throw NumericalError("Dirichlet Laplacian factorization failed", 0.0, 0);
}

Vector DirichletSolver::solve(const Vector &rhs) const { return factor_.solve(rhs); }

std::shared_ptr<const DirichletSolver> dirichlet_solver(const Grid &grid) {
  using Key = std::tuple<int, int, int, double, double>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const DirichletSolver>> cache;
  const Key key{grid.dim(), grid.cells(0), grid.dim() == 2 ? grid.cells(1) : 1,
                grid.extent(0), grid.dim() == 2 ? grid.extent(1) : 1.0};
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end())
    return it->second;
  auto solver = std::make_shared<const DirichletSolver>(grid);
  cache.emplace(key, solver);
  return solver;
}

DifferenceOperator neumann_gradient_operator(const Grid &g) {
  DifferenceOperator op;
  const int nx = g.cells(0);
  const int ny = g.dim() == 2 ? g.cells(1) : 1;
  std::vector<Eigen::Triplet<double>> trip;
  op.offsets.push_back(0);
  Index row = 0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Index k = g.index(i, j);
      const Index start = row;
      if (i + 1 < nx) {
        const double w = 1.0 / g.spacing(0);
        trip.emplace_back(row, g.index(i + 1, j), w);
        trip.emplace_back(row, k, -w);
        ++row;
      }
      if (g.dim() == 2 && j + 1 < ny) {
        const double w = 1.0 / g.spacing(1);
        trip.emplace_back(row, g.index(i, j + 1), w);
        trip.emplace_back(row, k, -w);
        ++row;
      }
      if (row > start) {
        op.offsets.push_back(row);
        op.cell.push_back(k);
      }
    }
  }
  op.matrix.resize(row, g.size());
  op.matrix.setFromTriplets(trip.begin(), trip.end());
  op.weight = Vector::Ones(op.groups());
  return op;
}

} // namespace spdelab
