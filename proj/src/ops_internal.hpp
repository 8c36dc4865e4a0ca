#pragma once

#include <cstddef>
#include <vector>

#include "mixalign/tensor.hpp"

namespace mixalign::detail {

// Output of a broadcast with coalesced dims; strides are 0 on broadcast axes.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> dims;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
};

BroadcastPlan make_broadcast_plan(const Shape& a, const Shape& b);

// Calls f(out_offset, a_offset, b_offset, row_length, a_row_stride, b_row_stride)
// for every innermost row of the broadcast output.
template <typename F>
void for_each_row(const BroadcastPlan& plan, F&& f) {
  const std::size_t nd = plan.dims.size();
  const std::size_t n = plan.dims[nd - 1];
  const std::size_t sa = plan.stride_a[nd - 1];
  const std::size_t sb = plan.stride_b[nd - 1];
  std::size_t rows = 1;
  for (std::size_t i = 0; i + 1 < nd; ++i) rows *= plan.dims[i];
  std::vector<std::size_t> idx(nd, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    f(r * n, ia, ib, n, sa, sb);
    for (std::size_t d = nd - 1; d-- > 0;) {
      ++idx[d];
      ia += plan.stride_a[d];
      ib += plan.stride_b[d];
      if (idx[d] < plan.dims[d]) break;
      ia -= plan.stride_a[d] * plan.dims[d];
      ib -= plan.stride_b[d] * plan.dims[d];
      idx[d] = 0;
    }
  }
}

// Normalizes possibly-negative axes; empty means all. Sorted, unique.
std::vector<std::size_t> normalize_axes(const Axes& axes, std::size_t ndim);

}  // namespace mixalign::detail
