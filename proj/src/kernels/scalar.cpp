#include "injflow/kernels.hpp"

namespace injflow::kernels::scalar {

void squared_distances(const double* soa, std::size_t stride, std::size_t count, std::size_t dim,
                       const double* query, double* out)
{
    for (std::size_t j = 0; j < count; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            const double diff = soa[k * stride + j] - query[k];
            acc = acc + diff * diff;
        }
        out[j] = acc;
    }
}

void project(const double* soa, std::size_t stride, std::size_t count, std::size_t dim,
             const double* direction, double* out)
{
    for (std::size_t j = 0; j < count; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            acc = acc + soa[k * stride + j] * direction[k];
        }
        out[j] = acc;
    }
}

} // namespace injflow::kernels::scalar
