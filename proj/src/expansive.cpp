#include "injflow/expansive.hpp"
#include "injflow/error.hpp"

#include <sstream>

namespace injflow {

namespace {

struct ReluCache final : Cache {
    std::vector<Mat> inputs;
    std::vector<Mat> preactivations;
};

struct InputCache final : Cache {
    Mat x;
};

ReluBlock make_block(Mat b, Vec d, Mat m, Vec beta, Vec gamma)
{
    ReluBlock block;
    const Eigen::Index n = b.cols();
    if (m.size() == 0) {
        m.resize(0, n);
    }
    if (beta.size() == 0) {
        beta = Vec::Zero(n);
    }
    if (gamma.size() == 0) {
        gamma = Vec::Zero(m.rows());
    }
    block.b = Parameter("B", std::move(b));
    block.d = Parameter("d", std::move(d));
    block.m = Parameter("M", std::move(m));
    block.beta = Parameter("beta", std::move(beta));
    block.gamma = Parameter("gamma", std::move(gamma));
    return block;
}

InjectivityReport check_block(const ReluBlock& block, std::size_t index)
{
    std::ostringstream where;
    where << "block " << index << ": ";
    const Mat& b = block.b.value;
    const Eigen::Index n = b.cols();
    if (b.rows() != n || n == 0) {
        return {false, where.str() + "B must be a non-empty square matrix"};
    }
    if (block.d.value.rows() != n || block.d.value.cols() != 1) {
        return {false, where.str() + "D must be an n-vector diagonal"};
    }
    if (block.m.value.cols() != n) {
        return {false, where.str() + "M must have n columns"};
    }
    if (block.beta.value.rows() != n || block.gamma.value.rows() != block.m.value.rows()) {
        return {false, where.str() + "offset sizes do not match the weights"};
    }
    if (!(block.d.value.array() > 0.0).all()) {
        return {false, where.str() + "D has a non-positive diagonal entry"};
    }
    const double smax = spectral_norm(b);
    const double smin = smallest_singular_value(b);
    if (!(smax > 0.0) || smin <= kRankTolerance * smax) {
        std::ostringstream s;
        s << where.str() << "B is singular (sigma_min=" << smin << ", sigma_max=" << smax << ")";
        return {false, s.str()};
    }
    return {true, where.str() + "B invertible, D positive"};
}

} // namespace

std::string to_string(ExpansiveKind kind)
{
    switch (kind) {
    case ExpansiveKind::ZeroPad: return "zero-pad";
    case ExpansiveKind::Linear: return "linear";
    case ExpansiveKind::InjectiveRelu: return "injective-relu";
    case ExpansiveKind::InjectiveReluNetwork: return "injective-relu-network";
    }
    return "unknown";
}

Mat ReluBlock::weight() const
{
    const Eigen::Index n = in_dim();
    Mat w(out_dim(), n);
    w.topRows(n) = b.value;
    w.middleRows(n, n) = -(d.value.col(0).asDiagonal() * b.value);
    w.bottomRows(m.value.rows()) = m.value;
    return w;
}

Vec ReluBlock::bias() const
{
    const Eigen::Index n = in_dim();
    Vec out(out_dim());
    out.head(n) = beta.value.col(0);
    out.segment(n, n) = -d.value.col(0).cwiseProduct(beta.value.col(0));
    out.tail(m.value.rows()) = gamma.value.col(0);
    return out;
}

ExpansiveLayer ExpansiveLayer::zero_pad(Eigen::Index n, Eigen::Index m)
{
    require(n >= 1 && m > n, ErrorKind::InvalidLayer, "zero padding needs 1 <= n < m");
    return ExpansiveLayer(ExpansiveKind::ZeroPad, n, m);
}

ExpansiveLayer ExpansiveLayer::linear(Mat w, Check check)
{
    ExpansiveLayer layer(ExpansiveKind::Linear, w.cols(), w.rows());
    layer.w_ = Parameter("W", std::move(w));
    layer.check_or_throw(check);
    return layer;
}

ExpansiveLayer ExpansiveLayer::injective_relu(Mat b, Vec d, Mat m, Check check)
{
    return injective_relu(make_block(std::move(b), std::move(d), std::move(m), Vec(), Vec()), check);
}

ExpansiveLayer ExpansiveLayer::injective_relu(ReluBlock block, Check check)
{
    ExpansiveLayer layer(ExpansiveKind::InjectiveRelu, block.in_dim(), block.out_dim());
    layer.blocks_.push_back(std::move(block));
    layer.check_or_throw(check);
    return layer;
}

ExpansiveLayer ExpansiveLayer::injective_relu_network(std::vector<ReluBlock> blocks, Check check)
{
    require(!blocks.empty(), ErrorKind::InvalidLayer, "ReLU network needs at least one block");
    ExpansiveLayer layer(ExpansiveKind::InjectiveReluNetwork, blocks.front().in_dim(), blocks.back().out_dim());
    layer.blocks_ = std::move(blocks);
    layer.check_or_throw(check);
    return layer;
}

ExpansiveLayer ExpansiveLayer::random_linear(Eigen::Index n, Eigen::Index m, Rng& rng)
{
    return linear(rng.orthonormal_columns(m, n));
}

ExpansiveLayer ExpansiveLayer::random_injective_relu(Eigen::Index n, Eigen::Index m, Rng& rng)
{
    require(m >= 2 * n, ErrorKind::InvalidLayer, "injective ReLU needs m >= 2n");
    Vec d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d(i) = rng.uniform(0.5, 2.0);
    }
    return injective_relu(rng.well_conditioned(n), d, rng.normal_matrix(m - 2 * n, n));
}

ExpansiveLayer ExpansiveLayer::random_injective_relu_network(Eigen::Index n, std::size_t depth, Rng& rng)
{
    require(depth >= 1, ErrorKind::InvalidLayer, "ReLU network depth must be positive");
    std::vector<ReluBlock> blocks;
    Eigen::Index width = n;
    for (std::size_t l = 0; l < depth; ++l) {
        Vec d(width);
        for (Eigen::Index i = 0; i < width; ++i) {
            d(i) = rng.uniform(0.5, 2.0);
        }
        blocks.push_back(make_block(rng.well_conditioned(width), d, Mat(0, width), rng.normal_vector(width) * 0.5,
                                    Vec()));
        width *= 2;
    }
    return injective_relu_network(std::move(blocks));
}

void ExpansiveLayer::check_or_throw(Check check) const
{
    if (check == Check::Strict) {
        const auto report = validate_injectivity();
        require(report.ok, ErrorKind::InvalidLayer, to_string(kind_) + ": " + report.detail);
    }
}

Mat ExpansiveLayer::linear_weight() const
{
    switch (kind_) {
    case ExpansiveKind::ZeroPad: return Mat::Identity(m_, n_);
    case ExpansiveKind::Linear: return w_.value;
    default: fail(ErrorKind::UnsupportedLayer, to_string(kind_) + " has no linear weight");
    }
}

Vec ExpansiveLayer::apply(const Vec& x) const
{
    return forward(Mat(x)).col(0);
}

Mat ExpansiveLayer::forward(const Mat& x) const
{
    require(x.rows() == n_, ErrorKind::InvalidArgument,
            to_string(kind_) + ": expected input dimension " + std::to_string(n_) + ", got " + std::to_string(x.rows()));
    switch (kind_) {
    case ExpansiveKind::ZeroPad: {
        Mat y = Mat::Zero(m_, x.cols());
        y.topRows(n_) = x;
        return y;
    }
    case ExpansiveKind::Linear: return w_.value * x;
    case ExpansiveKind::InjectiveRelu:
    case ExpansiveKind::InjectiveReluNetwork: {
        Mat h = x;
        for (const auto& block : blocks_) {
            Mat z = block.weight() * h;
            z.colwise() += block.bias();
            h = z.cwiseMax(0.0);
        }
        return h;
    }
    }
    return {};
}

Mat ExpansiveLayer::forward(const Mat& x, CachePtr& cache) const
{
    if (kind_ == ExpansiveKind::ZeroPad || kind_ == ExpansiveKind::Linear) {
        auto c = std::make_unique<InputCache>();
        c->x = x;
        cache = std::move(c);
        return forward(x);
    }
    require(x.rows() == n_, ErrorKind::InvalidArgument, to_string(kind_) + ": input dimension mismatch");
    auto c = std::make_unique<ReluCache>();
    Mat h = x;
    for (const auto& block : blocks_) {
        c->inputs.push_back(h);
        Mat z = block.weight() * h;
        z.colwise() += block.bias();
        h = z.cwiseMax(0.0);
        c->preactivations.push_back(std::move(z));
    }
    cache = std::move(c);
    return h;
}

Mat ExpansiveLayer::backward(const Mat& grad_out, const Cache& cache)
{
    switch (kind_) {
    case ExpansiveKind::ZeroPad: return grad_out.topRows(n_);
    case ExpansiveKind::Linear: {
        const auto& c = static_cast<const InputCache&>(cache);
        w_.grad.noalias() += grad_out * c.x.transpose();
        return w_.value.transpose() * grad_out;
    }
    case ExpansiveKind::InjectiveRelu:
    case ExpansiveKind::InjectiveReluNetwork: break;
    }
    const auto& c = static_cast<const ReluCache&>(cache);
    Mat g = grad_out;
    for (std::size_t l = blocks_.size(); l-- > 0;) {
        auto& block = blocks_[l];
        const Mat& x = c.inputs[l];
        const Mat& z = c.preactivations[l];
        const Eigen::Index n = block.in_dim();
        const Eigen::Index extra = block.m.value.rows();
        const Mat gz = g.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
        const Vec d = block.d.value.col(0);
        const Mat u = z.topRows(n);
        const Mat g_mid = gz.middleRows(n, n);
        const Mat g_bot = gz.bottomRows(extra);
        const Mat du = gz.topRows(n) - d.asDiagonal() * g_mid;
        block.d.grad -= (u.cwiseProduct(g_mid)).rowwise().sum();
        block.b.grad.noalias() += du * x.transpose();
        block.beta.grad += du.rowwise().sum();
        block.m.grad.noalias() += g_bot * x.transpose();
        block.gamma.grad += g_bot.rowwise().sum();
        g = block.b.value.transpose() * du + block.m.value.transpose() * g_bot;
    }
    return g;
}

void ExpansiveLayer::collect(const std::string& prefix, ParamList& out)
{
    if (kind_ == ExpansiveKind::Linear) {
        out.push_back({prefix + "W", &w_});
        return;
    }
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const std::string p = kind_ == ExpansiveKind::InjectiveRelu ? prefix : prefix + "block" + std::to_string(l) + ".";
        auto& block = blocks_[l];
        for (Parameter* param : {&block.b, &block.d, &block.m, &block.beta, &block.gamma}) {
            if (param->value.size() > 0) {
                out.push_back({p + param->name, param});
            }
        }
    }
}

InjectivityReport ExpansiveLayer::validate_injectivity() const
{
    if (m_ <= n_) {
        return {false, "not expansive: m=" + std::to_string(m_) + " <= n=" + std::to_string(n_)};
    }
    switch (kind_) {
    case ExpansiveKind::ZeroPad: return {true, "zero padding is injective"};
    case ExpansiveKind::Linear: {
        const double smax = spectral_norm(w_.value);
        const double smin = smallest_singular_value(w_.value);
        std::ostringstream s;
        s << "sigma_min=" << smin << ", sigma_max=" << smax;
        if (!(smax > 0.0) || smin <= kRankTolerance * smax) {
            return {false, "rank deficient: " + s.str()};
        }
        return {true, "full column rank: " + s.str()};
    }
    case ExpansiveKind::InjectiveRelu: {
        if (blocks_.size() != 1) {
            return {false, "expected exactly one block"};
        }
        return check_block(blocks_.front(), 0);
    }
    case ExpansiveKind::InjectiveReluNetwork: {
        Eigen::Index width = n_;
        for (std::size_t l = 0; l < blocks_.size(); ++l) {
            const auto& block = blocks_[l];
            if (block.in_dim() != width) {
                return {false, "block " + std::to_string(l) + ": input width does not match previous output"};
            }
            const auto report = check_block(block, l);
            if (!report.ok) {
                return report;
            }
            if (block.out_dim() < 2 * block.in_dim()) {
                return {false, "block " + std::to_string(l) + ": width does not double"};
            }
            width = block.out_dim();
        }
        return {true, std::to_string(blocks_.size()) + " blocks in [B; -DB; M] form with doubling widths"};
    }
    }
    return {false, "unknown kind"};
}

LipschitzStep ExpansiveLayer::lipschitz_bound(double input_radius) const
{
    switch (kind_) {
    case ExpansiveKind::ZeroPad: return {1.0, input_radius};
    case ExpansiveKind::Linear: {
        const double l = spectral_norm(w_.value);
        return {l, l * input_radius};
    }
    case ExpansiveKind::InjectiveRelu:
    case ExpansiveKind::InjectiveReluNetwork: break;
    }
    LipschitzStep total{1.0, input_radius};
    for (const auto& block : blocks_) {
        // ReLU is 1-Lipschitz and |ReLU(z)| <= |z|.
        const double l = spectral_norm(block.weight());
        total.lipschitz *= l;
        total.output_radius = l * total.output_radius + block.bias().norm();
    }
    return total;
}

void ExpansiveLayer::enforce_constraints(double floor)
{
    for (auto& block : blocks_) {
        block.d.value = block.d.value.cwiseMax(floor);
    }
}

nlohmann::json ExpansiveLayer::to_json() const
{
    nlohmann::json j{{"kind", to_string(kind_)}, {"n", n_}, {"m", m_}};
    auto block_json = [](const ReluBlock& b) {
        return nlohmann::json{{"B", matrix_to_json(b.b.value)},
                              {"D", vector_to_json(b.d.value.col(0))},
                              {"M", matrix_to_json(b.m.value)},
                              {"beta", vector_to_json(b.beta.value.col(0))},
                              {"gamma", vector_to_json(b.gamma.value.col(0))}};
    };
    switch (kind_) {
    case ExpansiveKind::ZeroPad: j["matrices"] = nlohmann::json::object(); break;
    case ExpansiveKind::Linear: j["matrices"] = {{"W", matrix_to_json(w_.value)}}; break;
    case ExpansiveKind::InjectiveRelu: j["matrices"] = block_json(blocks_.front()); break;
    case ExpansiveKind::InjectiveReluNetwork: {
        auto arr = nlohmann::json::array();
        for (const auto& b : blocks_) {
            arr.push_back(block_json(b));
        }
        j["matrices"] = arr;
        break;
    }
    }
    return j;
}

ExpansiveLayer ExpansiveLayer::from_json(const nlohmann::json& j)
{
    try {
        const auto kind = j.at("kind").get<std::string>();
        const auto n = j.at("n").get<Eigen::Index>();
        const auto m = j.at("m").get<Eigen::Index>();
        auto read_block = [](const nlohmann::json& b) {
            return make_block(matrix_from_json(b.at("B")), vector_from_json(b.at("D")), matrix_from_json(b.at("M")),
                              vector_from_json(b.at("beta")), vector_from_json(b.at("gamma")));
        };
        ExpansiveLayer layer = [&] {
            if (kind == "zero-pad") {
                return zero_pad(n, m);
            }
            if (kind == "linear") {
                return linear(matrix_from_json(j.at("matrices").at("W")));
            }
            if (kind == "injective-relu") {
                return injective_relu(read_block(j.at("matrices")));
            }
            if (kind == "injective-relu-network") {
                std::vector<ReluBlock> blocks;
                for (const auto& b : j.at("matrices")) {
                    blocks.push_back(read_block(b));
                }
                return injective_relu_network(std::move(blocks));
            }
            fail(ErrorKind::InvalidArgument, "unknown expansive kind '" + kind + "'");
        }();
        require(layer.in_dim() == n && layer.out_dim() == m, ErrorKind::InvalidArgument,
                "expansive layer dimensions disagree with its matrices");
        return layer;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidArgument, std::string("malformed expansive layer: ") + e.what());
    }
}

} // namespace injflow
