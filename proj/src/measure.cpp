#include "injflow/measure.hpp"
#include "injflow/error.hpp"

#include <cmath>

namespace injflow {

bool EmpiricalMeasure::is_uniform() const noexcept
{
    if (weights.size() == 0) {
        return false;
    }
    const double expected = 1.0 / static_cast<double>(weights.size());
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        if (weights(i) != expected) {
            return false;
        }
    }
    return true;
}

EmpiricalMeasure uniform_measure(Mat points)
{
    require(points.cols() > 0, ErrorKind::InvalidArgument, "empirical measure needs at least one point");
    const auto n = points.cols();
    return EmpiricalMeasure{std::move(points), Vec::Constant(n, 1.0 / static_cast<double>(n))};
}

void validate(const EmpiricalMeasure& measure)
{
    require(measure.points.cols() > 0, ErrorKind::InvalidArgument, "empirical measure is empty");
    require(measure.points.cols() == measure.weights.size(), ErrorKind::InvalidArgument,
            "point and weight counts differ");
    require(measure.points.allFinite(), ErrorKind::InvalidArgument, "measure has non-finite points");
    require((measure.weights.array() >= 0.0).all(), ErrorKind::InvalidArgument, "negative weight");
    require(std::abs(measure.weights.sum() - 1.0) <= 1e-12, ErrorKind::InvalidArgument,
            "weights do not sum to one");
}

} // namespace injflow
