#pragma once

#include <array>
#include <vector>

namespace rmgms {

enum class Axis { X, Y };

struct CoarseEdge {
  int index = 0;
  Axis normal = Axis::X;       // m_i is the positive axis direction
  std::vector<int> fine_edges; // ordered by increasing coordinate along the edge
  // Blocks of the neighborhood. For an interior edge blocks[0] lies on the
  // -m side and blocks[1] on the +m side.
  std::vector<int> blocks;
  bool boundary = false;
  // For a boundary edge: true if its single block lies on the +m side.
  bool block_on_plus_side = false;

  int J() const { return static_cast<int>(fine_edges.size()); }
};

// Uniform fine cells nested in uniform coarse blocks over (0,1)^2.
// Cells are numbered c = j*nx + i. Vertical edges (x-normal) come first:
// e = j*(nx+1) + i sits at x = i*hx; horizontal edges follow:
// e = nvert + j*nx + i sits at y = j*hy.
class GridHierarchy {
 public:
  GridHierarchy(int nx_f, int ny_f, int nx_c, int ny_c);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int ncx() const { return ncx_; }
  int ncy() const { return ncy_; }
  double hx() const { return 1.0 / nx_; }
  double hy() const { return 1.0 / ny_; }
  double Hx() const { return 1.0 / ncx_; }
  double Hy() const { return 1.0 / ncy_; }
  int rx() const { return nx_ / ncx_; }  // fine cells per block, x
  int ry() const { return ny_ / ncy_; }

  int num_cells() const { return nx_ * ny_; }
  int num_blocks() const { return ncx_ * ncy_; }
  int num_vertical_edges() const { return (nx_ + 1) * ny_; }
  int num_edges() const { return num_vertical_edges() + nx_ * (ny_ + 1); }
  double cell_area() const { return hx() * hy(); }

  int cell(int i, int j) const { return j * nx_ + i; }
  int vedge(int i, int j) const { return j * (nx_ + 1) + i; }
  int hedge(int i, int j) const { return num_vertical_edges() + j * nx_ + i; }

  std::array<double, 2> cell_center(int c) const;
  std::array<double, 2> edge_midpoint(int e) const;
  Axis edge_axis(int e) const { return e < num_vertical_edges() ? Axis::X : Axis::Y; }
  double edge_length(int e) const { return edge_axis(e) == Axis::X ? hy() : hx(); }
  bool is_boundary_edge(int e) const;
  // Cells on the -axis and +axis side of an edge; -1 outside the domain.
  std::array<int, 2> edge_cells(int e) const;
  // Edges of a cell ordered left, right, bottom, top.
  std::array<int, 4> cell_edges(int c) const;

  int block_of_cell(int c) const { return block_of_cell_[c]; }
  const std::vector<int>& block_cells(int b) const { return block_cells_[b]; }
  int block(int I, int J) const { return J * ncx_ + I; }

  const std::vector<CoarseEdge>& coarse_edges() const { return coarse_edges_; }
  int num_coarse_edges() const { return static_cast<int>(coarse_edges_.size()); }
  int num_interior_coarse_edges() const { return n_interior_coarse_; }
  // Coarse edge containing a fine edge, or -1.
  int coarse_edge_of(int e) const { return coarse_edge_of_edge_[e]; }

  // Fine edges touching the cells of the given blocks (sorted, unique).
  std::vector<int> edges_of_blocks(const std::vector<int>& blocks) const;

 private:
  int nx_, ny_, ncx_, ncy_;
  std::vector<int> block_of_cell_;
  std::vector<std::vector<int>> block_cells_;
  std::vector<CoarseEdge> coarse_edges_;
  std::vector<int> coarse_edge_of_edge_;
  int n_interior_coarse_ = 0;
};

}  // namespace rmgms
