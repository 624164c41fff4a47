#pragma once

#include "injflow/parameter.hpp"

#include <vector>

namespace injflow {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adaptive moment estimation over a fixed parameter list.
class Adam {
public:
    Adam(ParamList params, AdamOptions options = {});

    void zero_grad();
    // Applies one update from the accumulated gradients.
    void step();

    std::size_t step_count() const noexcept { return t_; }
    const ParamList& parameters() const noexcept { return params_; }

private:
    ParamList params_;
    AdamOptions options_;
    std::vector<Mat> m_;
    std::vector<Mat> v_;
    std::size_t t_ = 0;
};

// Throws numeric-error naming the first parameter with a non-finite gradient.
void check_gradients(const ParamList& params);

} // namespace injflow
