#pragma once

#include <cstddef>

namespace tunet {

// C(m, n) += sum_p A(m, p) * B(p, n) for an M x N block of C with row stride
// ldc. Operands are addressed through (row stride, column stride) pairs, so a
// transposed operand is just swapped strides. Every entry of C is updated as
// the scalar loop `c = c + a * b` over p ascending, without fused
// multiply-add, so results are bit-identical to that loop.
template <typename T>
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t p,
                     const T* a, std::size_t a_row, std::size_t a_col,
                     const T* b, std::size_t b_row, std::size_t b_col,
                     T* c, std::size_t ldc);

}  // namespace tunet
