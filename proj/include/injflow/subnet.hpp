#pragma once

#include "injflow/parameter.hpp"
#include "injflow/rng.hpp"

#include <memory>
#include <string>

namespace injflow {

// Conditioner network used inside coupling and autoregressive layers.
class Subnet {
public:
    virtual ~Subnet() = default;

    virtual Eigen::Index in_dim() const noexcept = 0;
    virtual Eigen::Index out_dim() const noexcept = 0;

    virtual Mat forward(const Mat& x) const = 0;
    virtual Mat forward(const Mat& x, CachePtr& cache) const = 0;
    // Accumulates parameter gradients; returns the gradient with respect to x.
    virtual Mat backward(const Mat& grad_out, const Cache& cache) = 0;

    virtual void collect(const std::string& prefix, ParamList& out) = 0;

    virtual double lipschitz_bound() const = 0;
    // Bound on ||output||_2 over inputs with ||x||_2 <= input_radius.
    virtual double output_bound(double input_radius) const = 0;

    virtual nlohmann::json to_json() const = 0;
    virtual std::unique_ptr<Subnet> clone() const = 0;

    static std::unique_ptr<Subnet> from_json(const nlohmann::json& j);
};

// x -> A x + c
class AffineSubnet final : public Subnet {
public:
    AffineSubnet(Mat a, Vec c);
    static std::unique_ptr<AffineSubnet> zeros(Eigen::Index in, Eigen::Index out);
    static std::unique_ptr<AffineSubnet> constant(Eigen::Index in, const Vec& c);

    Eigen::Index in_dim() const noexcept override { return a_.value.cols(); }
    Eigen::Index out_dim() const noexcept override { return a_.value.rows(); }

    Mat forward(const Mat& x) const override;
    Mat forward(const Mat& x, CachePtr& cache) const override;
    Mat backward(const Mat& grad_out, const Cache& cache) override;
    void collect(const std::string& prefix, ParamList& out) override;
    double lipschitz_bound() const override;
    double output_bound(double input_radius) const override;
    nlohmann::json to_json() const override;
    std::unique_ptr<Subnet> clone() const override;

    Parameter& weight() { return a_; }
    Parameter& bias() { return c_; }

private:
    Parameter a_;
    Parameter c_;
};

// Two tanh hidden layers: x -> W3 tanh(W2 tanh(W1 x + b1) + b2) + b3.
class MlpSubnet final : public Subnet {
public:
    inline static constexpr Eigen::Index kDefaultWidth = 32;

    MlpSubnet(Mat w1, Vec b1, Mat w2, Vec b2, Mat w3, Vec b3);
    // Glorot-scaled hidden weights; the output layer scaled by `output_scale`
    // so a fresh conditioner starts close to zero.
    static std::unique_ptr<MlpSubnet> random(Eigen::Index in, Eigen::Index out, Eigen::Index width, Rng& rng,
                                             double output_scale = 1e-2);

    Eigen::Index in_dim() const noexcept override { return w1_.value.cols(); }
    Eigen::Index out_dim() const noexcept override { return w3_.value.rows(); }
    Eigen::Index width() const noexcept { return w1_.value.rows(); }

    Mat forward(const Mat& x) const override;
    Mat forward(const Mat& x, CachePtr& cache) const override;
    Mat backward(const Mat& grad_out, const Cache& cache) override;
    void collect(const std::string& prefix, ParamList& out) override;
    double lipschitz_bound() const override;
    double output_bound(double input_radius) const override;
    nlohmann::json to_json() const override;
    std::unique_ptr<Subnet> clone() const override;

private:
    Parameter w1_, b1_, w2_, b2_, w3_, b3_;
};

} // namespace injflow
