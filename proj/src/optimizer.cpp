#include "injflow/optimizer.hpp"
#include "injflow/error.hpp"

#include <cmath>

namespace injflow {

Adam::Adam(ParamList params, AdamOptions options) : params_(std::move(params)), options_(options)
{
    require(options_.learning_rate > 0.0, ErrorKind::InvalidConfig, "learning rate must be positive");
    for (const auto& ref : params_) {
        m_.push_back(Mat::Zero(ref.param->value.rows(), ref.param->value.cols()));
        v_.push_back(Mat::Zero(ref.param->value.rows(), ref.param->value.cols()));
    }
}

void Adam::zero_grad()
{
    for (auto& ref : params_) {
        ref.param->zero_grad();
    }
}

void Adam::step()
{
    ++t_;
    const double t = static_cast<double>(t_);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Parameter& p = *params_[k].param;
        m_[k] = options_.beta1 * m_[k] + (1.0 - options_.beta1) * p.grad;
        v_[k] = options_.beta2 * v_[k] + (1.0 - options_.beta2) * p.grad.cwiseProduct(p.grad);
        const Mat m_hat = m_[k] / c1;
        const Mat v_hat = v_[k] / c2;
        p.value.array() -= options_.learning_rate * m_hat.array() / (v_hat.array().sqrt() + options_.epsilon);
    }
}

void check_gradients(const ParamList& params)
{
    for (const auto& ref : params) {
        if (!all_finite(ref.param->grad)) {
            fail(ErrorKind::NumericError, "non-finite gradient in parameter " + ref.path);
        }
    }
}

} // namespace injflow
