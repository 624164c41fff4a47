#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace injflow::testing {

std::unique_ptr<FlowLayer> random_layer(Eigen::Index dim, bool autoregressive, bool reverse, Rng& rng,
                                        double output_scale)
{
    if (autoregressive || dim == 1) {
        std::vector<std::unique_ptr<Subnet>> cond;
        Vec c0(2);
        c0 << rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5);
        cond.push_back(AffineSubnet::constant(0, c0));
        for (Eigen::Index i = 1; i < dim; ++i) {
            cond.push_back(MlpSubnet::random(i, 2, 8, rng, output_scale));
        }
        return std::make_unique<AutoregressiveLayer>(std::move(cond));
    }
    const Eigen::Index split = (dim + 1) / 2;
    return std::make_unique<CouplingLayer>(dim, split, reverse, MlpSubnet::random(dim - split, split, 8, rng, output_scale),
                                           MlpSubnet::random(dim - split, split, 8, rng, output_scale));
}

FlowBlock random_block(Eigen::Index dim, std::size_t layers, Rng& rng, double output_scale)
{
    FlowBlock block(dim);
    for (std::size_t l = 0; l < layers; ++l) {
        block.push_back(random_layer(dim, rng.below(3) == 0, l % 2 == 1, rng, output_scale));
    }
    return block;
}

InjectiveNetwork random_supported_network(Rng& rng)
{
    Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(3));
    const std::size_t depth = 1 + rng.below(2);
    FlowBlock head = random_block(n, 1 + rng.below(2), rng);
    std::vector<ExpansiveLayer> expansive;
    std::vector<FlowBlock> flows;
    for (std::size_t l = 0; l < depth; ++l) {
        switch (rng.below(3)) {
        case 0: {
            const Eigen::Index m = n + 1 + static_cast<Eigen::Index>(rng.below(2));
            expansive.push_back(ExpansiveLayer::zero_pad(n, m));
            n = m;
            break;
        }
        case 1: {
            const Eigen::Index m = n + 1 + static_cast<Eigen::Index>(rng.below(2));
            expansive.push_back(ExpansiveLayer::linear(rng.normal_matrix(m, n)));
            n = m;
            break;
        }
        default:
            expansive.push_back(ExpansiveLayer::random_injective_relu(n, 2 * n, rng));
            n = 2 * n;
            break;
        }
        flows.push_back(random_block(n, 1 + rng.below(2), rng));
    }
    return InjectiveNetwork(std::move(head), std::move(expansive), std::move(flows));
}

InjectiveNetwork random_network(Rng& rng, ExpansiveKind kind, Eigen::Index in_dim)
{
    FlowBlock head = random_block(in_dim, 2, rng);
    std::vector<ExpansiveLayer> expansive;
    switch (kind) {
    case ExpansiveKind::ZeroPad:
        expansive.push_back(ExpansiveLayer::zero_pad(in_dim, in_dim + 1));
        break;
    case ExpansiveKind::Linear:
        expansive.push_back(ExpansiveLayer::linear(rng.normal_matrix(in_dim + 1, in_dim)));
        break;
    case ExpansiveKind::InjectiveRelu:
        expansive.push_back(ExpansiveLayer::random_injective_relu(in_dim, 2 * in_dim + 1, rng));
        break;
    case ExpansiveKind::InjectiveReluNetwork:
        expansive.push_back(ExpansiveLayer::random_injective_relu_network(in_dim, 2, rng));
        break;
    }
    const Eigen::Index m = expansive.back().out_dim();
    std::vector<FlowBlock> flows;
    flows.push_back(random_block(m, 2, rng));
    return InjectiveNetwork(std::move(head), std::move(expansive), std::move(flows));
}

double relative_error(double a, double b, double floor)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

GradientCheck check_network_gradients(InjectiveNetwork& net, const LossSpec& loss, const Mat& latent,
                                      const std::vector<std::size_t>& stages, std::size_t max_entries, Rng& rng)
{
    const GradientResult analytic = compute_gradients(net, loss, latent, stages);
    std::vector<Mat> grads;
    for (const auto& ref : analytic.params) {
        grads.push_back(ref.param->grad);
    }
    struct Entry {
        std::size_t param;
        Eigen::Index index;
    };
    std::vector<Entry> entries;
    for (std::size_t p = 0; p < analytic.params.size(); ++p) {
        for (Eigen::Index k = 0; k < analytic.params[p].param->value.size(); ++k) {
            entries.push_back({p, k});
        }
    }
    for (std::size_t i = entries.size(); i > 1; --i) {
        std::swap(entries[i - 1], entries[rng.below(i)]);
    }
    if (entries.size() > max_entries) {
        entries.resize(max_entries);
    }
    const auto objective = [&]() { return loss.evaluate(net.forward(latent)).value; };
    GradientCheck check;
    for (const auto& e : entries) {
        Parameter* param = analytic.params[e.param].param;
        const double orig = param->value.data()[e.index];
        const auto central = [&](double h) {
            param->value.data()[e.index] = orig + h;
            const double up = objective();
            param->value.data()[e.index] = orig - h;
            const double down = objective();
            param->value.data()[e.index] = orig;
            return (up - down) / (2.0 * h);
        };
        double h = 1e-5;
        double fd = central(h);
        while (h > 1e-8) {
            const double finer = central(h / 10.0);
            if (relative_error(fd, finer, 1e-2) <= 1e-5) {
                break;
            }
            h /= 10.0;
            fd = finer;
            ++check.refined;
        }
        const double err = relative_error(grads[e.param].data()[e.index], fd);
        ++check.checked;
        if (err > check.max_relative_error) {
            check.max_relative_error = err;
            check.worst_path = analytic.params[e.param].path + "[" + std::to_string(e.index) + "]";
        }
    }
    return check;
}

std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace injflow::testing
