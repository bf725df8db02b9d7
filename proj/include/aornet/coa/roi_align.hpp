#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "aornet/core/tape.hpp"
#include "aornet/data/types.hpp"

namespace aornet::coa {

using aornet::Mat;
using ad::Tape;
using data::GridBox;

// Region pooling over a token lattice. The whole operation is linear in the
// lattice values, so it is expressed as one constant sample-weight matrix per
// box (built here) times the H·W×d value matrix (a plain matmul on the tape).
// That keeps the backward pass free: the tape already differentiates matmul.
//
// Interpolation convention, pinned by the tests in test_roi_align.cpp:
//   * the value of cell (i, j) lives at integer coordinate (i, j);
//   * box coordinates are used as-is (no half-pixel shift);
//   * points outside [0, H−1]×[0, W−1] clamp to the border cell;
//   * each output bin averages sampling_ratio² bilinear point samples placed
//     at the centers of an even subdivision of the bin (ratio 2 → the bin's
//     quarter points).

namespace detail {

// Adds one bilinear point sample's cell weights into a weight row.
inline void add_point_sample(Mat& weights, Eigen::Index bin, double y, double x, int grid_h,
                             int grid_w, double coeff) {
  // Points far outside the lattice contribute nothing; boxes are validated to
  // lie inside, so this only matters for callers probing raw coordinates.
  if (y < -1.0 || y > double(grid_h) || x < -1.0 || x > double(grid_w)) return;
  if (y < 0.0) y = 0.0;
  if (x < 0.0) x = 0.0;
  int y0 = int(y);
  int x0 = int(x);
  int y1, x1;
  if (y0 >= grid_h - 1) {
    y0 = y1 = grid_h - 1;
    y = double(y0);
  } else {
    y1 = y0 + 1;
  }
  if (x0 >= grid_w - 1) {
    x0 = x1 = grid_w - 1;
    x = double(x0);
  } else {
    x1 = x0 + 1;
  }
  const double ly = y - y0, lx = x - x0;
  const double hy = 1.0 - ly, hx = 1.0 - lx;
  weights(bin, Eigen::Index(y0) * grid_w + x0) += coeff * hy * hx;
  weights(bin, Eigen::Index(y0) * grid_w + x1) += coeff * hy * lx;
  weights(bin, Eigen::Index(y1) * grid_w + x0) += coeff * ly * hx;
  weights(bin, Eigen::Index(y1) * grid_w + x1) += coeff * ly * lx;
}

}  // namespace detail

// The (out_res²)×(H·W) constant that maps flattened lattice values to pooled
// bin values for one box. Bins are emitted row-major (by, bx).
inline Mat roi_sample_matrix(const GridBox& box, int grid_h, int grid_w, int out_res,
                             int sampling_ratio = 2) {
  require(grid_h >= 1 && grid_w >= 1, "roi_align: empty lattice");
  require(out_res >= 1, "roi_align: out_res must be >= 1");
  require(sampling_ratio >= 1, "roi_align: sampling_ratio must be >= 1");
  if (!(box.x2 > box.x1) || !(box.y2 > box.y1))
    throw ValidationError("DEGENERATE_BOX: [" + std::to_string(box.x1) + ", " +
                          std::to_string(box.y1) + ", " + std::to_string(box.x2) + ", " +
                          std::to_string(box.y2) + "]");
  Mat weights = Mat::Zero(Eigen::Index(out_res) * out_res, Eigen::Index(grid_h) * grid_w);
  const double bin_h = (box.y2 - box.y1) / out_res;
  const double bin_w = (box.x2 - box.x1) / out_res;
  const double coeff = 1.0 / double(sampling_ratio * sampling_ratio);
  for (int by = 0; by < out_res; ++by)
    for (int bx = 0; bx < out_res; ++bx) {
      const Eigen::Index bin = Eigen::Index(by) * out_res + bx;
      for (int sy = 0; sy < sampling_ratio; ++sy)
        for (int sx = 0; sx < sampling_ratio; ++sx) {
          const double y = box.y1 + (by + (sy + 0.5) / sampling_ratio) * bin_h;
          const double x = box.x1 + (bx + (sx + 0.5) / sampling_ratio) * bin_w;
          detail::add_point_sample(weights, bin, y, x, grid_h, grid_w, coeff);
        }
    }
  return weights;
}

// Pools the box over an H·W×d lattice node (rows in y-major cell order).
// Returns an (out_res²)×d node, differentiable w.r.t. the lattice values.
inline int roi_align(Tape& t, int lattice, int grid_h, int grid_w, const GridBox& box, int out_res,
                     int sampling_ratio = 2) {
  require(t.val(lattice).rows() == Eigen::Index(grid_h) * grid_w,
          "roi_align: lattice has " + std::to_string(t.val(lattice).rows()) + " rows, expected " +
              std::to_string(grid_h * grid_w));
  Mat weights = roi_sample_matrix(box, grid_h, grid_w, out_res, sampling_ratio);
  return ad::matmul(t, t.input(std::move(weights)), lattice);
}

// Value-only variant for tooling that does not need gradients.
inline Mat roi_align_values(const Mat& lattice, int grid_h, int grid_w, const GridBox& box,
                            int out_res, int sampling_ratio = 2) {
  require(lattice.rows() == Eigen::Index(grid_h) * grid_w, "roi_align: lattice row count mismatch");
  return roi_sample_matrix(box, grid_h, grid_w, out_res, sampling_ratio) * lattice;
}

}  // namespace aornet::coa
