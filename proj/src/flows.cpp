#include "injflow/flows.hpp"
#include "injflow/error.hpp"

#include <cmath>

namespace injflow {

namespace {

Mat clamp_log_scale(const Mat& raw)
{
    return raw.cwiseMax(-kLogScaleClamp).cwiseMin(kLogScaleClamp);
}

// d clamp(s)/ds is 1 inside the clamp window and 0 outside.
Mat clamp_mask(const Mat& raw)
{
    return (raw.array().abs() <= kLogScaleClamp).cast<double>().matrix();
}

void check_finite(const Mat& m, const char* what)
{
    if (!m.allFinite()) {
        fail(ErrorKind::NumericError, std::string(what) + " produced a non-finite value");
    }
}

void check_rows(const Mat& x, Eigen::Index dim, const char* what)
{
    require(x.rows() == dim, ErrorKind::InvalidArgument,
            std::string(what) + ": expected dimension " + std::to_string(dim) + ", got " + std::to_string(x.rows()));
}

struct CouplingCache final : Cache {
    Mat a;
    Mat raw_s;
    Mat exp_s;
    CachePtr scale_cache;
    CachePtr shift_cache;
};

struct AutoregressiveCache final : Cache {
    Mat x;
    std::vector<CachePtr> conditioner_caches;
    Mat raw_s;
    Mat exp_s;
};

} // namespace

std::unique_ptr<FlowLayer> FlowLayer::from_json(const nlohmann::json& j)
{
    const auto type = j.at("type").get<std::string>();
    if (type == "coupling") {
        return std::make_unique<CouplingLayer>(j.at("dim").get<Eigen::Index>(), j.at("split").get<Eigen::Index>(),
                                               j.at("reverse").get<bool>(), Subnet::from_json(j.at("scale")),
                                               Subnet::from_json(j.at("shift")));
    }
    if (type == "autoregressive") {
        std::vector<std::unique_ptr<Subnet>> conds;
        for (const auto& c : j.at("conditioners")) {
            conds.push_back(Subnet::from_json(c));
        }
        return std::make_unique<AutoregressiveLayer>(std::move(conds));
    }
    fail(ErrorKind::InvalidArgument, "unknown flow layer type '" + type + "'");
}

// ---------------------------------------------------------------------------
// CouplingLayer

CouplingLayer::CouplingLayer(Eigen::Index dim, Eigen::Index split, bool reverse, std::unique_ptr<Subnet> scale,
                             std::unique_ptr<Subnet> shift)
    : dim_(dim), split_(split), reverse_(reverse), scale_(std::move(scale)), shift_(std::move(shift))
{
    require(dim >= 2, ErrorKind::InvalidArgument, "coupling layer needs dimension >= 2");
    require(split >= 1 && split < dim, ErrorKind::InvalidArgument, "coupling split must satisfy 1 <= d < n");
    require(scale_ && shift_, ErrorKind::InvalidArgument, "coupling layer needs scale and shift subnets");
    const Eigen::Index rest = dim - split;
    require(scale_->in_dim() == rest && shift_->in_dim() == rest && scale_->out_dim() == split &&
                shift_->out_dim() == split,
            ErrorKind::InvalidArgument, "coupling subnets must map R^(n-d) to R^d");
}

CouplingLayer::CouplingLayer(const CouplingLayer& other)
    : dim_(other.dim_), split_(other.split_), reverse_(other.reverse_), scale_(other.scale_->clone()),
      shift_(other.shift_->clone())
{
}

std::unique_ptr<CouplingLayer> CouplingLayer::random(Eigen::Index dim, bool reverse, Eigen::Index width, Rng& rng)
{
    const Eigen::Index split = (dim + 1) / 2;
    auto s = MlpSubnet::random(dim - split, split, width, rng);
    auto t = MlpSubnet::random(dim - split, split, width, rng);
    return std::make_unique<CouplingLayer>(dim, split, reverse, std::move(s), std::move(t));
}

Mat CouplingLayer::permute(const Mat& x) const
{
    // The reversal is its own inverse and transpose.
    return reverse_ ? Mat(x.colwise().reverse()) : x;
}

Mat CouplingLayer::log_scale(const Mat& b) const
{
    Mat raw = scale_->forward(b);
    check_finite(raw, "coupling scale subnet");
    return clamp_log_scale(raw);
}

Mat CouplingLayer::forward(const Mat& x) const
{
    check_rows(x, dim_, "coupling forward");
    Mat z = permute(x);
    const Mat b = z.bottomRows(dim_ - split_);
    const Mat s = log_scale(b);
    const Mat t = shift_->forward(b);
    check_finite(t, "coupling shift subnet");
    z.topRows(split_) = z.topRows(split_).cwiseProduct(s.array().exp().matrix()) + t;
    check_finite(z, "coupling forward");
    return z;
}

Mat CouplingLayer::inverse(const Mat& y) const
{
    check_rows(y, dim_, "coupling inverse");
    Mat z = y;
    const Mat b = z.bottomRows(dim_ - split_);
    const Mat s = log_scale(b);
    const Mat t = shift_->forward(b);
    check_finite(t, "coupling shift subnet");
    z.topRows(split_) = (z.topRows(split_) - t).cwiseProduct((-s).array().exp().matrix());
    check_finite(z, "coupling inverse");
    return permute(z);
}

Vec CouplingLayer::log_det_jacobian(const Mat& x) const
{
    check_rows(x, dim_, "coupling log-det");
    const Mat z = permute(x);
    return log_scale(z.bottomRows(dim_ - split_)).colwise().sum().transpose();
}

Mat CouplingLayer::forward(const Mat& x, CachePtr& cache) const
{
    check_rows(x, dim_, "coupling forward");
    auto c = std::make_unique<CouplingCache>();
    Mat z = permute(x);
    const Mat b = z.bottomRows(dim_ - split_);
    c->a = z.topRows(split_);
    c->raw_s = scale_->forward(b, c->scale_cache);
    check_finite(c->raw_s, "coupling scale subnet");
    c->exp_s = clamp_log_scale(c->raw_s).array().exp();
    const Mat t = shift_->forward(b, c->shift_cache);
    check_finite(t, "coupling shift subnet");
    z.topRows(split_) = c->a.cwiseProduct(c->exp_s) + t;
    cache = std::move(c);
    return z;
}

Mat CouplingLayer::backward(const Mat& grad_out, const Cache& cache)
{
    const auto& c = static_cast<const CouplingCache&>(cache);
    const Mat g_top = grad_out.topRows(split_);
    Mat g_z(dim_, grad_out.cols());
    g_z.topRows(split_) = g_top.cwiseProduct(c.exp_s);
    const Mat g_s = g_top.cwiseProduct(c.a).cwiseProduct(c.exp_s).cwiseProduct(clamp_mask(c.raw_s));
    g_z.bottomRows(dim_ - split_) = grad_out.bottomRows(dim_ - split_) + scale_->backward(g_s, *c.scale_cache) +
                                    shift_->backward(g_top, *c.shift_cache);
    return permute(g_z);
}

void CouplingLayer::collect(const std::string& prefix, ParamList& out)
{
    scale_->collect(prefix + "s.", out);
    shift_->collect(prefix + "t.", out);
}

LipschitzStep CouplingLayer::lipschitz_bound(double input_radius) const
{
    const double max_log_scale = std::min(kLogScaleClamp, scale_->output_bound(input_radius));
    const double max_scale = std::exp(max_log_scale);
    // Jacobian [[diag(e^s), diag(a e^s) Js + Jt], [0, I]] bounded block-wise.
    const double lip = std::max(max_scale, 1.0) + input_radius * max_scale * scale_->lipschitz_bound() +
                       shift_->lipschitz_bound();
    const double radius = max_scale * input_radius + shift_->output_bound(input_radius) + input_radius;
    return {lip, radius};
}

nlohmann::json CouplingLayer::to_json() const
{
    return {{"type", "coupling"}, {"dim", dim_}, {"split", split_}, {"reverse", reverse_},
            {"scale", scale_->to_json()}, {"shift", shift_->to_json()}};
}

std::unique_ptr<FlowLayer> CouplingLayer::clone() const
{
    return std::make_unique<CouplingLayer>(*this);
}

// ---------------------------------------------------------------------------
// AutoregressiveLayer

AutoregressiveLayer::AutoregressiveLayer(std::vector<std::unique_ptr<Subnet>> conditioners)
    : conditioners_(std::move(conditioners))
{
    require(!conditioners_.empty(), ErrorKind::InvalidArgument, "autoregressive layer needs dimension >= 1");
    for (std::size_t i = 0; i < conditioners_.size(); ++i) {
        require(conditioners_[i] && conditioners_[i]->in_dim() == static_cast<Eigen::Index>(i) &&
                    conditioners_[i]->out_dim() == 2,
                ErrorKind::InvalidArgument,
                "conditioner " + std::to_string(i) + " must map R^" + std::to_string(i) + " to (log-scale, shift)");
    }
}

AutoregressiveLayer::AutoregressiveLayer(const AutoregressiveLayer& other)
{
    for (const auto& c : other.conditioners_) {
        conditioners_.push_back(c->clone());
    }
}

std::unique_ptr<AutoregressiveLayer> AutoregressiveLayer::identity(Eigen::Index dim)
{
    std::vector<std::unique_ptr<Subnet>> conds;
    for (Eigen::Index i = 0; i < dim; ++i) {
        conds.push_back(AffineSubnet::zeros(i, 2));
    }
    return std::make_unique<AutoregressiveLayer>(std::move(conds));
}

std::unique_ptr<AutoregressiveLayer> AutoregressiveLayer::random(Eigen::Index dim, Eigen::Index width, Rng& rng)
{
    std::vector<std::unique_ptr<Subnet>> conds;
    for (Eigen::Index i = 0; i < dim; ++i) {
        if (i == 0) {
            // g_1 is a constant.
            conds.push_back(AffineSubnet::zeros(0, 2));
        } else {
            conds.push_back(MlpSubnet::random(i, 2, width, rng));
        }
    }
    return std::make_unique<AutoregressiveLayer>(std::move(conds));
}

Mat AutoregressiveLayer::forward(const Mat& x) const
{
    check_rows(x, dim(), "autoregressive forward");
    Mat y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < dim(); ++i) {
        const Mat st = conditioners_[static_cast<std::size_t>(i)]->forward(x.topRows(i));
        check_finite(st, "autoregressive conditioner");
        const Mat s = clamp_log_scale(st.row(0));
        y.row(i) = x.row(i).cwiseProduct(s.array().exp().matrix()) + st.row(1);
    }
    return y;
}

Mat AutoregressiveLayer::inverse(const Mat& y) const
{
    check_rows(y, dim(), "autoregressive inverse");
    Mat x(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < dim(); ++i) {
        // Coordinates 0..i-1 of x are already solved.
        const Mat st = conditioners_[static_cast<std::size_t>(i)]->forward(x.topRows(i));
        check_finite(st, "autoregressive conditioner");
        const Mat s = clamp_log_scale(st.row(0));
        x.row(i) = (y.row(i) - st.row(1)).cwiseProduct((-s).array().exp().matrix());
    }
    check_finite(x, "autoregressive inverse");
    return x;
}

Vec AutoregressiveLayer::log_det_jacobian(const Mat& x) const
{
    check_rows(x, dim(), "autoregressive log-det");
    Vec total = Vec::Zero(x.cols());
    for (Eigen::Index i = 0; i < dim(); ++i) {
        const Mat st = conditioners_[static_cast<std::size_t>(i)]->forward(x.topRows(i));
        total += clamp_log_scale(st.row(0)).transpose();
    }
    return total;
}

Mat AutoregressiveLayer::forward(const Mat& x, CachePtr& cache) const
{
    check_rows(x, dim(), "autoregressive forward");
    auto c = std::make_unique<AutoregressiveCache>();
    c->x = x;
    c->conditioner_caches.resize(conditioners_.size());
    c->raw_s.resize(dim(), x.cols());
    Mat y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < dim(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        const Mat st = conditioners_[k]->forward(x.topRows(i), c->conditioner_caches[k]);
        check_finite(st, "autoregressive conditioner");
        c->raw_s.row(i) = st.row(0);
        y.row(i) = x.row(i).cwiseProduct(clamp_log_scale(st.row(0)).array().exp().matrix()) + st.row(1);
    }
    c->exp_s = clamp_log_scale(c->raw_s).array().exp();
    cache = std::move(c);
    return y;
}

Mat AutoregressiveLayer::backward(const Mat& grad_out, const Cache& cache)
{
    const auto& c = static_cast<const AutoregressiveCache&>(cache);
    Mat g_x = grad_out.cwiseProduct(c.exp_s);
    const Mat mask = clamp_mask(c.raw_s);
    for (Eigen::Index i = dim() - 1; i >= 0; --i) {
        const auto k = static_cast<std::size_t>(i);
        Mat g_st(2, grad_out.cols());
        g_st.row(0) = grad_out.row(i).cwiseProduct(c.x.row(i)).cwiseProduct(c.exp_s.row(i)).cwiseProduct(mask.row(i));
        g_st.row(1) = grad_out.row(i);
        const Mat g_in = conditioners_[k]->backward(g_st, *c.conditioner_caches[k]);
        if (i > 0) {
            g_x.topRows(i) += g_in;
        }
    }
    return g_x;
}

void AutoregressiveLayer::collect(const std::string& prefix, ParamList& out)
{
    for (std::size_t i = 0; i < conditioners_.size(); ++i) {
        conditioners_[i]->collect(prefix + "g" + std::to_string(i) + ".", out);
    }
}

LipschitzStep AutoregressiveLayer::lipschitz_bound(double input_radius) const
{
    double diag = 0.0;
    double lower = 0.0;
    double radius_sq = 0.0;
    for (const auto& g : conditioners_) {
        const double bound = g->output_bound(input_radius);
        const double max_scale = std::exp(std::min(kLogScaleClamp, bound));
        const double lip = g->lipschitz_bound();
        diag = std::max(diag, max_scale);
        // Row i of the strictly lower part: x_i e^{s_i} grad s_i + grad t_i.
        const double row = input_radius * max_scale * lip + lip;
        lower += row * row;
        const double ri = max_scale * input_radius + bound;
        radius_sq += ri * ri;
    }
    return {diag + std::sqrt(lower), std::sqrt(radius_sq)};
}

nlohmann::json AutoregressiveLayer::to_json() const
{
    nlohmann::json conds = nlohmann::json::array();
    for (const auto& c : conditioners_) {
        conds.push_back(c->to_json());
    }
    return {{"type", "autoregressive"}, {"dim", dim()}, {"conditioners", conds}};
}

std::unique_ptr<FlowLayer> AutoregressiveLayer::clone() const
{
    return std::make_unique<AutoregressiveLayer>(*this);
}

// ---------------------------------------------------------------------------
// FlowBlock

FlowBlock::FlowBlock(const FlowBlock& other) : dim_(other.dim_)
{
    for (const auto& l : other.layers_) {
        layers_.push_back(l->clone());
    }
}

FlowBlock& FlowBlock::operator=(const FlowBlock& other)
{
    if (this != &other) {
        FlowBlock copy(other);
        *this = std::move(copy);
    }
    return *this;
}

FlowBlock FlowBlock::coupling_stack(Eigen::Index dim, std::size_t layers, Eigen::Index width, Rng& rng)
{
    if (dim == 1) {
        return autoregressive_stack(dim, layers, width, rng);
    }
    FlowBlock block(dim);
    for (std::size_t i = 0; i < layers; ++i) {
        block.push_back(CouplingLayer::random(dim, i % 2 == 1, width, rng));
    }
    return block;
}

FlowBlock FlowBlock::autoregressive_stack(Eigen::Index dim, std::size_t layers, Eigen::Index width, Rng& rng)
{
    FlowBlock block(dim);
    for (std::size_t i = 0; i < layers; ++i) {
        block.push_back(AutoregressiveLayer::random(dim, width, rng));
    }
    return block;
}

void FlowBlock::push_back(std::unique_ptr<FlowLayer> layer)
{
    require(layer != nullptr, ErrorKind::InvalidArgument, "null flow layer");
    if (dim_ == 0) {
        dim_ = layer->dim();
    }
    require(layer->dim() == dim_, ErrorKind::InvalidArgument, "flow block layers must share one dimension");
    layers_.push_back(std::move(layer));
}

Mat FlowBlock::forward(const Mat& x) const
{
    check_rows(x, dim_, "flow block forward");
    Mat h = x;
    for (const auto& l : layers_) {
        h = l->forward(h);
    }
    return h;
}

Mat FlowBlock::inverse(const Mat& y) const
{
    check_rows(y, dim_, "flow block inverse");
    Mat h = y;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        h = (*it)->inverse(h);
    }
    return h;
}

Vec FlowBlock::log_det_jacobian(const Mat& x) const
{
    check_rows(x, dim_, "flow block log-det");
    Vec total = Vec::Zero(x.cols());
    Mat h = x;
    for (const auto& l : layers_) {
        total += l->log_det_jacobian(h);
        h = l->forward(h);
    }
    return total;
}

Mat FlowBlock::forward(const Mat& x, std::vector<CachePtr>& caches) const
{
    check_rows(x, dim_, "flow block forward");
    caches.clear();
    caches.resize(layers_.size());
    Mat h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i]->forward(h, caches[i]);
    }
    return h;
}

Mat FlowBlock::backward(const Mat& grad_out, const std::vector<CachePtr>& caches)
{
    Mat g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        g = layers_[i]->backward(g, *caches[i]);
    }
    return g;
}

void FlowBlock::collect(const std::string& prefix, ParamList& out)
{
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i]->collect(prefix + "layer" + std::to_string(i) + ".", out);
    }
}

LipschitzStep FlowBlock::lipschitz_bound(double input_radius) const
{
    LipschitzStep total{1.0, input_radius};
    for (const auto& l : layers_) {
        const LipschitzStep step = l->lipschitz_bound(total.output_radius);
        total.lipschitz *= step.lipschitz;
        total.output_radius = step.output_radius;
    }
    return total;
}

nlohmann::json FlowBlock::to_json() const
{
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) {
        layers.push_back(l->to_json());
    }
    return {{"dim", dim_}, {"layers", layers}};
}

FlowBlock FlowBlock::from_json(const nlohmann::json& j)
{
    FlowBlock block(j.at("dim").get<Eigen::Index>());
    for (const auto& l : j.at("layers")) {
        block.push_back(FlowLayer::from_json(l));
    }
    return block;
}

} // namespace injflow
