#pragma once

#include "injflow/flows.hpp"
#include "injflow/parameter.hpp"
#include "injflow/rng.hpp"

#include <string>
#include <vector>

namespace injflow {

// Smallest singular value must exceed this fraction of the largest one.
inline constexpr double kRankTolerance = 1e-10;

enum class ExpansiveKind { ZeroPad, Linear, InjectiveRelu, InjectiveReluNetwork };

std::string to_string(ExpansiveKind kind);

struct InjectivityReport {
    bool ok = false;
    std::string detail;
};

// One ReLU(W x + b) block with W = [B; -D B; M] and b = [beta; -D beta; gamma].
// With beta = B c the block equals ReLU([B; -D B](x + c)) on its first 2n rows.
struct ReluBlock {
    Parameter b{"B", Mat()};
    Parameter d{"d", Mat()};
    Parameter m{"M", Mat()};
    Parameter beta{"beta", Mat()};
    Parameter gamma{"gamma", Mat()};

    Eigen::Index in_dim() const noexcept { return b.value.cols(); }
    Eigen::Index out_dim() const noexcept { return 2 * b.value.cols() + m.value.rows(); }

    Mat weight() const;
    Vec bias() const;
};

enum class Check { Strict, Deferred };

// Injective dimension-raising map R^n -> R^m, m > n.
class ExpansiveLayer {
public:
    static ExpansiveLayer zero_pad(Eigen::Index n, Eigen::Index m);
    static ExpansiveLayer linear(Mat w, Check check = Check::Strict);
    // D is given by its diagonal. M may have zero rows.
    static ExpansiveLayer injective_relu(Mat b, Vec d, Mat m = Mat(), Check check = Check::Strict);
    static ExpansiveLayer injective_relu(ReluBlock block, Check check = Check::Strict);
    static ExpansiveLayer injective_relu_network(std::vector<ReluBlock> blocks, Check check = Check::Strict);

    // Random instances: orthonormal columns; well-conditioned B with D in [0.5, 2].
    static ExpansiveLayer random_linear(Eigen::Index n, Eigen::Index m, Rng& rng);
    static ExpansiveLayer random_injective_relu(Eigen::Index n, Eigen::Index m, Rng& rng);
    // Widths n -> 2n -> 4n ... (`depth` blocks), with random offsets.
    static ExpansiveLayer random_injective_relu_network(Eigen::Index n, std::size_t depth, Rng& rng);

    ExpansiveKind kind() const noexcept { return kind_; }
    Eigen::Index in_dim() const noexcept { return n_; }
    Eigen::Index out_dim() const noexcept { return m_; }

    Vec apply(const Vec& x) const;
    Mat forward(const Mat& x) const;
    Mat forward(const Mat& x, CachePtr& cache) const;
    Mat backward(const Mat& grad_out, const Cache& cache);
    void collect(const std::string& prefix, ParamList& out);

    InjectivityReport validate_injectivity() const;
    LipschitzStep lipschitz_bound(double input_radius) const;

    // Linear kind: W. ZeroPad: the padding matrix [I; 0].
    Mat linear_weight() const;
    const std::vector<ReluBlock>& relu_blocks() const noexcept { return blocks_; }
    std::vector<ReluBlock>& relu_blocks() noexcept { return blocks_; }

    // Projects D onto d >= floor after an optimizer step.
    void enforce_constraints(double floor = 1e-4);

    nlohmann::json to_json() const;
    static ExpansiveLayer from_json(const nlohmann::json& j);

private:
    ExpansiveLayer(ExpansiveKind kind, Eigen::Index n, Eigen::Index m) : kind_(kind), n_(n), m_(m) {}
    void check_or_throw(Check check) const;

    ExpansiveKind kind_;
    Eigen::Index n_;
    Eigen::Index m_;
    Parameter w_{"W", Mat()};
    std::vector<ReluBlock> blocks_;
};

} // namespace injflow
