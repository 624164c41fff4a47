#pragma once

#include "injflow/flows.hpp"
#include "injflow/network.hpp"
#include "injflow/rng.hpp"
#include "injflow/training.hpp"

#include <string>
#include <vector>

namespace injflow::testing {

// Coupling or autoregressive layers whose subnets are far from zero.
std::unique_ptr<FlowLayer> random_layer(Eigen::Index dim, bool autoregressive, bool reverse, Rng& rng,
                                        double output_scale = 0.5);
FlowBlock random_block(Eigen::Index dim, std::size_t layers, Rng& rng, double output_scale = 0.5);

// Zero-pad, linear or injective ReLU (m = 2n, M empty) stages only.
InjectiveNetwork random_supported_network(Rng& rng);
// Any stage kind, including ReLU layers with extra rows and multi-block ReLU networks.
InjectiveNetwork random_network(Rng& rng, ExpansiveKind kind, Eigen::Index in_dim = 2);

// |a - b| / max(|a|, |b|, floor)
double relative_error(double a, double b, double floor = 1e-6);

struct GradientCheck {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    // Entries whose step was shrunk because the stencil crossed a kink.
    std::size_t refined = 0;
    std::string worst_path;
};

// Analytic gradients of `loss` versus central differences (step 1e-5) on up to
// `max_entries` parameter entries of the given stages. When the estimate at
// step h disagrees with the one at h/10 the stencil crosses a ReLU or sorting
// kink, and the step is shrunk until consecutive estimates agree.
GradientCheck check_network_gradients(InjectiveNetwork& net, const LossSpec& loss, const Mat& latent,
                                      const std::vector<std::size_t>& stages, std::size_t max_entries, Rng& rng);

std::string slurp(const std::string& path);

} // namespace injflow::testing
