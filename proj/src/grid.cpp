#include "rmgms/grid.hpp"

#include "rmgms/common.hpp"

#include <algorithm>
#include <string>

namespace rmgms {

GridHierarchy::GridHierarchy(int nx_f, int ny_f, int nx_c, int ny_c)
    : nx_(nx_f), ny_(ny_f), ncx_(nx_c), ncy_(ny_c) {
  if (nx_f <= 0 || ny_f <= 0 || nx_c <= 0 || ny_c <= 0)
    throw ConfigError("grid counts must be positive");
  if (nx_f % nx_c != 0 || ny_f % ny_c != 0)
    throw ConfigError("fine grid " + std::to_string(nx_f) + "x" + std::to_string(ny_f) +
                      " is not divisible by coarse grid " + std::to_string(nx_c) + "x" +
                      std::to_string(ny_c));

  const int rx_ = rx(), ry_ = ry();
  block_of_cell_.resize(num_cells());
  block_cells_.assign(num_blocks(), {});
  for (int j = 0; j < ny_; ++j)
    for (int i = 0; i < nx_; ++i) {
      const int b = block(i / rx_, j / ry_);
      block_of_cell_[cell(i, j)] = b;
      block_cells_[b].push_back(cell(i, j));
    }

  std::vector<CoarseEdge> interior, boundary;
  // x-normal coarse edges, row-major over (J, I).
  for (int J = 0; J < ncy_; ++J)
    for (int I = 0; I <= ncx_; ++I) {
      CoarseEdge ce;
      ce.normal = Axis::X;
      for (int j = J * ry_; j < (J + 1) * ry_; ++j) ce.fine_edges.push_back(vedge(I * rx_, j));
      if (I > 0) ce.blocks.push_back(block(I - 1, J));
      if (I < ncx_) ce.blocks.push_back(block(I, J));
      ce.boundary = ce.blocks.size() == 1;
      ce.block_on_plus_side = ce.boundary && I == 0;
      (ce.boundary ? boundary : interior).push_back(std::move(ce));
    }
  // y-normal coarse edges, row-major over (J, I).
  for (int J = 0; J <= ncy_; ++J)
    for (int I = 0; I < ncx_; ++I) {
      CoarseEdge ce;
      ce.normal = Axis::Y;
      for (int i = I * rx_; i < (I + 1) * rx_; ++i) ce.fine_edges.push_back(hedge(i, J * ry_));
      if (J > 0) ce.blocks.push_back(block(I, J - 1));
      if (J < ncy_) ce.blocks.push_back(block(I, J));
      ce.boundary = ce.blocks.size() == 1;
      ce.block_on_plus_side = ce.boundary && J == 0;
      (ce.boundary ? boundary : interior).push_back(std::move(ce));
    }
  n_interior_coarse_ = static_cast<int>(interior.size());
  coarse_edges_ = std::move(interior);
  coarse_edges_.insert(coarse_edges_.end(), boundary.begin(), boundary.end());

  coarse_edge_of_edge_.assign(num_edges(), -1);
  for (std::size_t k = 0; k < coarse_edges_.size(); ++k) {
    coarse_edges_[k].index = static_cast<int>(k);
    for (int e : coarse_edges_[k].fine_edges) coarse_edge_of_edge_[e] = static_cast<int>(k);
  }
}

std::array<double, 2> GridHierarchy::cell_center(int c) const {
  const int i = c % nx_, j = c / nx_;
  return {(i + 0.5) * hx(), (j + 0.5) * hy()};
}

std::array<double, 2> GridHierarchy::edge_midpoint(int e) const {
  if (e < num_vertical_edges()) {
    const int i = e % (nx_ + 1), j = e / (nx_ + 1);
    return {i * hx(), (j + 0.5) * hy()};
  }
  const int k = e - num_vertical_edges();
  const int i = k % nx_, j = k / nx_;
  return {(i + 0.5) * hx(), j * hy()};
}

bool GridHierarchy::is_boundary_edge(int e) const {
  const auto c = edge_cells(e);
  return c[0] < 0 || c[1] < 0;
}

std::array<int, 2> GridHierarchy::edge_cells(int e) const {
  if (e < num_vertical_edges()) {
    const int i = e % (nx_ + 1), j = e / (nx_ + 1);
    return {i > 0 ? cell(i - 1, j) : -1, i < nx_ ? cell(i, j) : -1};
  }
  const int k = e - num_vertical_edges();
  const int i = k % nx_, j = k / nx_;
  return {j > 0 ? cell(i, j - 1) : -1, j < ny_ ? cell(i, j) : -1};
}

std::array<int, 4> GridHierarchy::cell_edges(int c) const {
  const int i = c % nx_, j = c / nx_;
  return {vedge(i, j), vedge(i + 1, j), hedge(i, j), hedge(i, j + 1)};
}

std::vector<int> GridHierarchy::edges_of_blocks(const std::vector<int>& blocks) const {
  std::vector<int> out;
  for (int b : blocks)
    for (int c : block_cells_[b])
      for (int e : cell_edges(c)) out.push_back(e);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace rmgms
