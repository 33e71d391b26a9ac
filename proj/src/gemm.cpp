#include "tunet/gemm.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace tunet {
namespace {

constexpr std::size_t kVecBytes = 64;
constexpr std::size_t kMR = 6;
constexpr std::size_t kKC = 256;
constexpr std::size_t kMC = 96;
constexpr std::size_t kNC = 1024;

template <typename T>
struct Vec {
  typedef T type __attribute__((vector_size(kVecBytes)));
};

template <typename T>
constexpr std::size_t kLanes = kVecBytes / sizeof(T);

template <typename T>
constexpr std::size_t kNR = 2 * kLanes<T>;

// Packs an mc x kc block of A into kMR-row strips laid out [strip][p][row].
template <typename T>
void pack_a(std::size_t mc, std::size_t kc, const T* a, std::size_t rs, std::size_t cs, T* dst) {
  for (std::size_t r0 = 0; r0 < mc; r0 += kMR) {
    const std::size_t rows = std::min(kMR, mc - r0);
    for (std::size_t q = 0; q < kc; ++q) {
      for (std::size_t r = 0; r < kMR; ++r) *dst++ = r < rows ? a[(r0 + r) * rs + q * cs] : T{0};
    }
  }
}

// Packs a kc x nc block of B into kNR-column strips laid out [strip][p][col].
template <typename T>
void pack_b(std::size_t kc, std::size_t nc, const T* b, std::size_t rs, std::size_t cs, T* dst) {
  constexpr std::size_t nr = kNR<T>;
  for (std::size_t c0 = 0; c0 < nc; c0 += nr) {
    const std::size_t cols = std::min(nr, nc - c0);
    for (std::size_t q = 0; q < kc; ++q) {
      const T* src = b + q * rs + c0 * cs;
      if (cols == nr && cs == 1) {
        std::memcpy(dst, src, nr * sizeof(T));
        dst += nr;
        continue;
      }
      for (std::size_t j = 0; j < nr; ++j) *dst++ = j < cols ? src[j * cs] : T{0};
    }
  }
}

template <typename T>
void micro_kernel(std::size_t kc, const T* a, const T* b, T* c, std::size_t ldc, std::size_t rows,
                  std::size_t cols) {
  using V = typename Vec<T>::type;
  constexpr std::size_t lanes = kLanes<T>;
  constexpr std::size_t nr = kNR<T>;

  T tile[kMR * nr];
  const bool full = rows == kMR && cols == nr;
  T* cp = c;
  std::size_t ld = ldc;
  if (!full) {
    std::fill(tile, tile + kMR * nr, T{0});
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(c + r * ldc, cols, tile + r * nr);
    cp = tile;
    ld = nr;
  }

  V acc[kMR][2];
  for (std::size_t r = 0; r < kMR; ++r) {
    std::memcpy(&acc[r][0], cp + r * ld, sizeof(V));
    std::memcpy(&acc[r][1], cp + r * ld + lanes, sizeof(V));
  }
  for (std::size_t q = 0; q < kc; ++q) {
    V b0;
    V b1;
    std::memcpy(&b0, b + q * nr, sizeof(V));
    std::memcpy(&b1, b + q * nr + lanes, sizeof(V));
    const T* aq = a + q * kMR;
    for (std::size_t r = 0; r < kMR; ++r) {
      const T av = aq[r];
      acc[r][0] = acc[r][0] + av * b0;
      acc[r][1] = acc[r][1] + av * b1;
    }
  }
  for (std::size_t r = 0; r < kMR; ++r) {
    std::memcpy(cp + r * ld, &acc[r][0], sizeof(V));
    std::memcpy(cp + r * ld + lanes, &acc[r][1], sizeof(V));
  }
  if (!full) {
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(tile + r * nr, cols, c + r * ldc);
  }
}

}  // namespace

template <typename T>
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t p, const T* a, std::size_t a_row,
                     std::size_t a_col, const T* b, std::size_t b_row, std::size_t b_col, T* c,
                     std::size_t ldc) {
  if (m == 0 || n == 0 || p == 0) return;
  constexpr std::size_t nr = kNR<T>;
  thread_local std::vector<T> a_pack;
  thread_local std::vector<T> b_pack;
  a_pack.resize(((kMC + kMR - 1) / kMR) * kMR * kKC);
  b_pack.resize(((kNC + nr - 1) / nr) * nr * kKC);

  for (std::size_t jc = 0; jc < n; jc += kNC) {
    const std::size_t nc = std::min(kNC, n - jc);
    // p blocks ascend, so each C entry still sees its terms in order.
    for (std::size_t pc = 0; pc < p; pc += kKC) {
      const std::size_t kc = std::min(kKC, p - pc);
      pack_b(kc, nc, b + pc * b_row + jc * b_col, b_row, b_col, b_pack.data());
      for (std::size_t ic = 0; ic < m; ic += kMC) {
        const std::size_t mc = std::min(kMC, m - ic);
        pack_a(mc, kc, a + ic * a_row + pc * a_col, a_row, a_col, a_pack.data());
        for (std::size_t jr = 0; jr < nc; jr += nr) {
          for (std::size_t ir = 0; ir < mc; ir += kMR) {
            micro_kernel(kc, a_pack.data() + ir * kc, b_pack.data() + jr * kc, c + (ic + ir) * ldc + jc + jr,
                         ldc, std::min(kMR, mc - ir), std::min(nr, nc - jr));
          }
        }
      }
    }
  }
}

template void gemm_accumulate(std::size_t, std::size_t, std::size_t, const float*, std::size_t, std::size_t,
                              const float*, std::size_t, std::size_t, float*, std::size_t);
template void gemm_accumulate(std::size_t, std::size_t, std::size_t, const double*, std::size_t, std::size_t,
                              const double*, std::size_t, std::size_t, double*, std::size_t);

}  // namespace tunet
