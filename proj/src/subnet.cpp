#include "injflow/subnet.hpp"
#include "injflow/error.hpp"

#include <cmath>

namespace injflow {

namespace {

struct AffineCache final : Cache {
    Mat x;
};

struct MlpCache final : Cache {
    Mat x;
    Mat h1;
    Mat h2;
};

void check_bias(const Mat& w, const Vec& b, const char* what)
{
    require(w.rows() == b.size(), ErrorKind::InvalidArgument, std::string(what) + ": bias size mismatch");
}

} // namespace

std::unique_ptr<Subnet> Subnet::from_json(const nlohmann::json& j)
{
    const auto type = j.at("type").get<std::string>();
    if (type == "affine") {
        return std::make_unique<AffineSubnet>(matrix_from_json(j.at("A")), vector_from_json(j.at("c")));
    }
    if (type == "mlp") {
        return std::make_unique<MlpSubnet>(matrix_from_json(j.at("W1")), vector_from_json(j.at("b1")),
                                           matrix_from_json(j.at("W2")), vector_from_json(j.at("b2")),
                                           matrix_from_json(j.at("W3")), vector_from_json(j.at("b3")));
    }
    fail(ErrorKind::InvalidArgument, "unknown subnet type '" + type + "'");
}

AffineSubnet::AffineSubnet(Mat a, Vec c) : a_("A", std::move(a)), c_("c", std::move(c))
{
    check_bias(a_.value, c_.value, "affine subnet");
}

std::unique_ptr<AffineSubnet> AffineSubnet::zeros(Eigen::Index in, Eigen::Index out)
{
    return std::make_unique<AffineSubnet>(Mat::Zero(out, in), Vec::Zero(out));
}

std::unique_ptr<AffineSubnet> AffineSubnet::constant(Eigen::Index in, const Vec& c)
{
    return std::make_unique<AffineSubnet>(Mat::Zero(c.size(), in), c);
}

Mat AffineSubnet::forward(const Mat& x) const
{
    Mat out = a_.value * x;
    out.colwise() += c_.value.col(0);
    return out;
}

Mat AffineSubnet::forward(const Mat& x, CachePtr& cache) const
{
    auto c = std::make_unique<AffineCache>();
    c->x = x;
    cache = std::move(c);
    return forward(x);
}

Mat AffineSubnet::backward(const Mat& grad_out, const Cache& cache)
{
    const auto& c = static_cast<const AffineCache&>(cache);
    a_.grad.noalias() += grad_out * c.x.transpose();
    c_.grad += grad_out.rowwise().sum();
    return a_.value.transpose() * grad_out;
}

void AffineSubnet::collect(const std::string& prefix, ParamList& out)
{
    out.push_back({prefix + "A", &a_});
    out.push_back({prefix + "c", &c_});
}

double AffineSubnet::lipschitz_bound() const
{
    return spectral_norm(a_.value);
}

double AffineSubnet::output_bound(double input_radius) const
{
    return spectral_norm(a_.value) * input_radius + c_.value.norm();
}

nlohmann::json AffineSubnet::to_json() const
{
    return {{"type", "affine"}, {"A", matrix_to_json(a_.value)}, {"c", vector_to_json(c_.value.col(0))}};
}

std::unique_ptr<Subnet> AffineSubnet::clone() const
{
    return std::make_unique<AffineSubnet>(a_.value, c_.value.col(0));
}

MlpSubnet::MlpSubnet(Mat w1, Vec b1, Mat w2, Vec b2, Mat w3, Vec b3)
    : w1_("W1", std::move(w1)), b1_("b1", std::move(b1)), w2_("W2", std::move(w2)), b2_("b2", std::move(b2)),
      w3_("W3", std::move(w3)), b3_("b3", std::move(b3))
{
    check_bias(w1_.value, b1_.value, "mlp layer 1");
    check_bias(w2_.value, b2_.value, "mlp layer 2");
    check_bias(w3_.value, b3_.value, "mlp layer 3");
    require(w2_.value.cols() == w1_.value.rows() && w3_.value.cols() == w2_.value.rows(), ErrorKind::InvalidArgument,
            "mlp: inconsistent layer widths");
}

std::unique_ptr<MlpSubnet> MlpSubnet::random(Eigen::Index in, Eigen::Index out, Eigen::Index width, Rng& rng,
                                             double output_scale)
{
    auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
        const double scale = std::sqrt(2.0 / static_cast<double>(std::max<Eigen::Index>(rows + cols, 1)));
        return Mat(rng.normal_matrix(rows, cols) * scale);
    };
    Mat w3 = rng.normal_matrix(out, width) * (output_scale / std::sqrt(static_cast<double>(width)));
    return std::make_unique<MlpSubnet>(glorot(width, in), Vec::Zero(width), glorot(width, width), Vec::Zero(width),
                                       std::move(w3), Vec::Zero(out));
}

Mat MlpSubnet::forward(const Mat& x) const
{
    Mat h1 = w1_.value * x;
    h1.colwise() += b1_.value.col(0);
    h1 = h1.array().tanh();
    Mat h2 = w2_.value * h1;
    h2.colwise() += b2_.value.col(0);
    h2 = h2.array().tanh();
    Mat out = w3_.value * h2;
    out.colwise() += b3_.value.col(0);
    return out;
}

Mat MlpSubnet::forward(const Mat& x, CachePtr& cache) const
{
    auto c = std::make_unique<MlpCache>();
    c->x = x;
    c->h1 = w1_.value * x;
    c->h1.colwise() += b1_.value.col(0);
    c->h1 = c->h1.array().tanh();
    c->h2 = w2_.value * c->h1;
    c->h2.colwise() += b2_.value.col(0);
    c->h2 = c->h2.array().tanh();
    Mat out = w3_.value * c->h2;
    out.colwise() += b3_.value.col(0);
    cache = std::move(c);
    return out;
}

Mat MlpSubnet::backward(const Mat& grad_out, const Cache& cache)
{
    const auto& c = static_cast<const MlpCache&>(cache);
    w3_.grad.noalias() += grad_out * c.h2.transpose();
    b3_.grad += grad_out.rowwise().sum();
    Mat g2 = (w3_.value.transpose() * grad_out).array() * (1.0 - c.h2.array().square());
    w2_.grad.noalias() += g2 * c.h1.transpose();
    b2_.grad += g2.rowwise().sum();
    Mat g1 = (w2_.value.transpose() * g2).array() * (1.0 - c.h1.array().square());
    w1_.grad.noalias() += g1 * c.x.transpose();
    b1_.grad += g1.rowwise().sum();
    return w1_.value.transpose() * g1;
}

void MlpSubnet::collect(const std::string& prefix, ParamList& out)
{
    for (Parameter* p : {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_}) {
        out.push_back({prefix + p->name, p});
    }
}

double MlpSubnet::lipschitz_bound() const
{
    // tanh is 1-Lipschitz.
    return spectral_norm(w3_.value) * spectral_norm(w2_.value) * spectral_norm(w1_.value);
}

double MlpSubnet::output_bound(double input_radius) const
{
    // |tanh| <= 1 bounds the last hidden layer regardless of the input.
    const double saturated = spectral_norm(w3_.value) * std::sqrt(static_cast<double>(w3_.value.cols())) +
                             b3_.value.norm();
    const double at_origin = forward(Mat::Zero(in_dim(), 1)).norm();
    return std::min(saturated, at_origin + lipschitz_bound() * input_radius);
}

nlohmann::json MlpSubnet::to_json() const
{
    return {{"type", "mlp"},
            {"W1", matrix_to_json(w1_.value)}, {"b1", vector_to_json(b1_.value.col(0))},
            {"W2", matrix_to_json(w2_.value)}, {"b2", vector_to_json(b2_.value.col(0))},
            {"W3", matrix_to_json(w3_.value)}, {"b3", vector_to_json(b3_.value.col(0))}};
}

std::unique_ptr<Subnet> MlpSubnet::clone() const
{
    return std::make_unique<MlpSubnet>(w1_.value, b1_.value.col(0), w2_.value, b2_.value.col(0), w3_.value,
                                       b3_.value.col(0));
}

} // namespace injflow
