#pragma once

#include "injflow/parameter.hpp"
#include "injflow/rng.hpp"
#include "injflow/subnet.hpp"

#include <memory>
#include <vector>

namespace injflow {

// Log-scales are clamped to [-kLogScaleClamp, kLogScaleClamp] before exponentiation.
inline constexpr double kLogScaleClamp = 5.0;

struct LipschitzStep {
    double lipschitz = 1.0;
    double output_radius = 0.0;
};

// Bijective layer of fixed dimension with an exact inverse.
class FlowLayer {
public:
    virtual ~FlowLayer() = default;

    virtual Eigen::Index dim() const noexcept = 0;

    virtual Mat forward(const Mat& x) const = 0;
    virtual Mat inverse(const Mat& y) const = 0;
    // Per-column log |det dF/dx|.
    virtual Vec log_det_jacobian(const Mat& x) const = 0;

    virtual Mat forward(const Mat& x, CachePtr& cache) const = 0;
    virtual Mat backward(const Mat& grad_out, const Cache& cache) = 0;

    virtual void collect(const std::string& prefix, ParamList& out) = 0;

    // Lipschitz bound on the ball of radius `input_radius`, plus a bound on
    // the image radius of that ball.
    virtual LipschitzStep lipschitz_bound(double input_radius) const = 0;

    virtual nlohmann::json to_json() const = 0;
    virtual std::unique_ptr<FlowLayer> clone() const = 0;

    static std::unique_ptr<FlowLayer> from_json(const nlohmann::json& j);
};

// Affine coupling: z = P x, (a, b) = (z[0:d], z[d:n]),
// y = (a * exp(s(b)) + t(b), b), P the identity or the reversal.
class CouplingLayer final : public FlowLayer {
public:
    CouplingLayer(Eigen::Index dim, Eigen::Index split, bool reverse, std::unique_ptr<Subnet> scale,
                  std::unique_ptr<Subnet> shift);
    CouplingLayer(const CouplingLayer& other);
    CouplingLayer& operator=(const CouplingLayer&) = delete;

    static std::unique_ptr<CouplingLayer> random(Eigen::Index dim, bool reverse, Eigen::Index width, Rng& rng);

    Eigen::Index dim() const noexcept override { return dim_; }
    Eigen::Index split() const noexcept { return split_; }
    bool reversed() const noexcept { return reverse_; }

    Mat forward(const Mat& x) const override;
    Mat inverse(const Mat& y) const override;
    Vec log_det_jacobian(const Mat& x) const override;
    Mat forward(const Mat& x, CachePtr& cache) const override;
    Mat backward(const Mat& grad_out, const Cache& cache) override;
    void collect(const std::string& prefix, ParamList& out) override;
    LipschitzStep lipschitz_bound(double input_radius) const override;
    nlohmann::json to_json() const override;
    std::unique_ptr<FlowLayer> clone() const override;

private:
    Mat permute(const Mat& x) const;
    Mat log_scale(const Mat& b) const;

    Eigen::Index dim_;
    Eigen::Index split_;
    bool reverse_;
    std::unique_ptr<Subnet> scale_;
    std::unique_ptr<Subnet> shift_;
};

// Affine autoregressive map: y_i = x_i exp(s_i(x_{<i})) + t_i(x_{<i}), where
// conditioner i maps R^i to (s_i, t_i).
class AutoregressiveLayer final : public FlowLayer {
public:
    explicit AutoregressiveLayer(std::vector<std::unique_ptr<Subnet>> conditioners);
    AutoregressiveLayer(const AutoregressiveLayer& other);
    AutoregressiveLayer& operator=(const AutoregressiveLayer&) = delete;

    static std::unique_ptr<AutoregressiveLayer> identity(Eigen::Index dim);
    static std::unique_ptr<AutoregressiveLayer> random(Eigen::Index dim, Eigen::Index width, Rng& rng);

    Eigen::Index dim() const noexcept override { return static_cast<Eigen::Index>(conditioners_.size()); }

    Mat forward(const Mat& x) const override;
    Mat inverse(const Mat& y) const override;
    Vec log_det_jacobian(const Mat& x) const override;
    Mat forward(const Mat& x, CachePtr& cache) const override;
    Mat backward(const Mat& grad_out, const Cache& cache) override;
    void collect(const std::string& prefix, ParamList& out) override;
    LipschitzStep lipschitz_bound(double input_radius) const override;
    nlohmann::json to_json() const override;
    std::unique_ptr<FlowLayer> clone() const override;

private:
    std::vector<std::unique_ptr<Subnet>> conditioners_;
};

// Ordered composition of flow layers of one dimension. An empty block is the identity.
class FlowBlock {
public:
    explicit FlowBlock(Eigen::Index dim = 0) : dim_(dim) {}
    FlowBlock(const FlowBlock& other);
    FlowBlock& operator=(const FlowBlock& other);
    FlowBlock(FlowBlock&&) noexcept = default;
    FlowBlock& operator=(FlowBlock&&) noexcept = default;

    // Couplings with alternating identity/reversal permutations; dimension 1
    // falls back to autoregressive (scalar affine) layers.
    static FlowBlock coupling_stack(Eigen::Index dim, std::size_t layers, Eigen::Index width, Rng& rng);
    static FlowBlock autoregressive_stack(Eigen::Index dim, std::size_t layers, Eigen::Index width, Rng& rng);

    void push_back(std::unique_ptr<FlowLayer> layer);

    Eigen::Index dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return layers_.size(); }
    bool empty() const noexcept { return layers_.empty(); }
    const FlowLayer& layer(std::size_t i) const { return *layers_.at(i); }
    FlowLayer& layer(std::size_t i) { return *layers_.at(i); }

    Mat forward(const Mat& x) const;
    Mat inverse(const Mat& y) const;
    Vec log_det_jacobian(const Mat& x) const;
    Mat forward(const Mat& x, std::vector<CachePtr>& caches) const;
    Mat backward(const Mat& grad_out, const std::vector<CachePtr>& caches);
    void collect(const std::string& prefix, ParamList& out);
    LipschitzStep lipschitz_bound(double input_radius) const;

    nlohmann::json to_json() const;
    static FlowBlock from_json(const nlohmann::json& j);

private:
    Eigen::Index dim_;
    std::vector<std::unique_ptr<FlowLayer>> layers_;
};

} // namespace injflow
