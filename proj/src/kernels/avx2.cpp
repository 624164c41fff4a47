#include "injflow/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define INJFLOW_HAVE_AVX2 1
#else
#define INJFLOW_HAVE_AVX2 0
#endif

namespace injflow::kernels::avx2 {

#if INJFLOW_HAVE_AVX2

// Four points per lane group; the tail falls back to the scalar loop, which
// performs the same operations in the same order.

void squared_distances(const double* soa, std::size_t stride, std::size_t count, std::size_t dim,
                       const double* query, double* out)
{
    std::size_t j = 0;
    for (; j + 4 <= count; j += 4) {
        __m256d acc = _mm256_setzero_pd();
        for (std::size_t k = 0; k < dim; ++k) {
            const __m256d q = _mm256_set1_pd(query[k]);
            const __m256d p = _mm256_loadu_pd(soa + k * stride + j);
            const __m256d diff = _mm256_sub_pd(p, q);
            acc = _mm256_add_pd(acc, _mm256_mul_pd(diff, diff));
        }
        _mm256_storeu_pd(out + j, acc);
    }
    if (j < count) {
        scalar::squared_distances(soa + j, stride, count - j, dim, query, out + j);
    }
}

void project(const double* soa, std::size_t stride, std::size_t count, std::size_t dim,
             const double* direction, double* out)
{
    std::size_t j = 0;
    for (; j + 4 <= count; j += 4) {
        __m256d acc = _mm256_setzero_pd();
        for (std::size_t k = 0; k < dim; ++k) {
            const __m256d d = _mm256_set1_pd(direction[k]);
            const __m256d p = _mm256_loadu_pd(soa + k * stride + j);
            acc = _mm256_add_pd(acc, _mm256_mul_pd(p, d));
        }
        _mm256_storeu_pd(out + j, acc);
    }
    if (j < count) {
        scalar::project(soa + j, stride, count - j, dim, direction, out + j);
    }
}

#else

void squared_distances(const double* soa, std::size_t stride, std::size_t count, std::size_t dim,
                       const double* query, double* out)
{
    scalar::squared_distances(soa, stride, count, dim, query, out);
}

void project(const double* soa, std::size_t stride, std::size_t count, std::size_t dim,
             const double* direction, double* out)
{
    scalar::project(soa, stride, count, dim, direction, out);
}

#endif

} // namespace injflow::kernels::avx2
