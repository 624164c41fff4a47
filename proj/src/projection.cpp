#include "injflow/projection.hpp"
#include "injflow/error.hpp"

#include <cmath>

namespace injflow::projection {

std::string ReluProjectionWorkspace::pattern() const
{
    std::string out;
    out.reserve(static_cast<std::size_t>(delta.size()));
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
        out.push_back(delta(i) ? '1' : '0');
    }
    return out;
}

ReluProjectionWorkspace relu_workspace(const Vec& y)
{
    require(y.size() % 2 == 0 && y.size() > 0, ErrorKind::InvalidArgument, "relu_workspace: y must lie in R^{2n}");
    const Eigen::Index n = y.size() / 2;
    ReluProjectionWorkspace ws;
    ws.c.resize(2 * n);
    ws.delta.resize(n);
    ws.selection = Mat::Zero(n, 2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double top = y(i);
        const double bottom = y(i + n);
        ws.c(i) = std::max(top - bottom, 0.0);
        ws.c(i + n) = std::max(bottom - top, 0.0);
        ws.delta(i) = ws.c(i + n) > 0.0 ? 1 : 0;
        ws.selection(i, ws.delta(i) ? i + n : i) = 1.0;
        if (std::abs(top - bottom) <= kTieTolerance * std::max(1.0, std::abs(top))) {
            ws.tie_indices.push_back(i);
            if (top > 0.0) {
                ++ws.positive_ties;
            }
        }
    }
    return ws;
}

namespace {

Vec relu_apply(const Mat& b, const Vec& d, const Vec& x)
{
    const Vec u = b * x;
    Vec out(2 * u.size());
    out.head(u.size()) = u.cwiseMax(0.0);
    out.tail(u.size()) = (-d.cwiseProduct(u)).cwiseMax(0.0);
    return out;
}

} // namespace

ProjectionResult relu_pseudo_inverse(const Mat& b, const Vec& d, const Vec& y)
{
    const Eigen::Index n = b.cols();
    require(b.rows() == n && d.size() == n, ErrorKind::InvalidArgument, "relu_pseudo_inverse: B must be n x n, D n");
    require(y.size() == 2 * n, ErrorKind::InvalidArgument, "relu_pseudo_inverse: y must lie in R^{2n}");
    require((d.array() > 0.0).all(), ErrorKind::InvalidArgument, "relu_pseudo_inverse: D must be positive");

    const ReluProjectionWorkspace ws = relu_workspace(y);
    // M_y W = (I - Delta - Delta D) B: row i of B scaled by 1 or -d_i.
    Vec row_scale(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        row_scale(i) = ws.delta(i) ? -d(i) : 1.0;
    }
    const Mat system = row_scale.asDiagonal() * b;
    const Vec rhs = ws.selection * y.cwiseMax(0.0);
    Eigen::FullPivLU<Mat> lu(system);
    if (!lu.isInvertible()) {
        fail(ErrorKind::InternalError, "M_y W is singular; B is not invertible");
    }

    ProjectionResult result;
    result.x = lu.solve(rhs);
    result.y_hat = relu_apply(b, d, result.x);
    result.residual = (y - result.y_hat).norm();
    result.tie_flag = !ws.tie_indices.empty();
    result.minimizer_count = std::size_t{1} << ws.positive_ties;
    return result;
}

ProjectionResult linear_pseudo_inverse(const Mat& w, const Vec& y)
{
    require(w.rows() == y.size(), ErrorKind::InvalidArgument, "linear_pseudo_inverse: dimension mismatch");
    const double smax = spectral_norm(w);
    if (!(smax > 0.0) || smallest_singular_value(w) <= kRankTolerance * smax) {
        fail(ErrorKind::InvalidLayer, "linear_pseudo_inverse: W is rank deficient");
    }
    const Mat gram = w.transpose() * w;
    Eigen::LDLT<Mat> ldlt(gram);
    ProjectionResult result;
    result.x = ldlt.solve(w.transpose() * y);
    result.y_hat = w * result.x;
    result.residual = (y - result.y_hat).norm();
    return result;
}

bool supports_projection(const ExpansiveLayer& layer) noexcept
{
    switch (layer.kind()) {
    case ExpansiveKind::ZeroPad:
    case ExpansiveKind::Linear: return true;
    case ExpansiveKind::InjectiveRelu: return layer.relu_blocks().front().m.value.rows() == 0;
    case ExpansiveKind::InjectiveReluNetwork: return false;
    }
    return false;
}

ProjectionResult expansive_pseudo_inverse(const ExpansiveLayer& layer, const Vec& y)
{
    if (!supports_projection(layer)) {
        fail(ErrorKind::UnsupportedLayer,
             "no closed-form projection for " + to_string(layer.kind()) + " with m=" + std::to_string(layer.out_dim()) +
                 ", n=" + std::to_string(layer.in_dim()));
    }
    switch (layer.kind()) {
    case ExpansiveKind::ZeroPad: {
        ProjectionResult r;
        r.x = y.head(layer.in_dim());
        r.y_hat = Vec::Zero(y.size());
        r.y_hat.head(layer.in_dim()) = r.x;
        r.residual = y.tail(y.size() - layer.in_dim()).norm();
        return r;
    }
    case ExpansiveKind::Linear: return linear_pseudo_inverse(layer.linear_weight(), y);
    default: break;
    }
    // ReLU(W x + [beta; -D beta]) = ReLU(W (x + c)) with B c = beta.
    const auto& block = layer.relu_blocks().front();
    const Mat& b = block.b.value;
    const Vec d = block.d.value.col(0);
    ProjectionResult r = relu_pseudo_inverse(b, d, y);
    const Vec beta = block.beta.value.col(0);
    if (beta.squaredNorm() > 0.0) {
        r.x -= Eigen::FullPivLU<Mat>(b).solve(beta);
        r.y_hat = layer.apply(r.x);
        r.residual = (y - r.y_hat).norm();
    }
    return r;
}

ProjectionResult project_to_range(const InjectiveNetwork& net, const Vec& y)
{
    require(y.size() == net.out_dim(), ErrorKind::InvalidArgument,
            "project_to_range: expected dimension " + std::to_string(net.out_dim()));
    Mat h = y;
    bool tie = false;
    std::size_t minimizers = 1;
    for (std::size_t s = net.stage_count(); s-- > 0;) {
        try {
            if (InjectiveNetwork::is_flow_stage(s)) {
                h = net.flow(s).inverse(h);
            } else {
                const ProjectionResult r = expansive_pseudo_inverse(net.expansive(s), h.col(0));
                tie = tie || r.tie_flag;
                minimizers *= r.minimizer_count;
                h = r.x;
            }
        } catch (const Error& e) {
            throw e.stage() ? e : e.with_stage(static_cast<int>(s));
        }
    }
    ProjectionResult result;
    result.x = h.col(0);
    result.y_hat = net.forward(result.x);
    result.residual = (y - result.y_hat).norm();
    result.tie_flag = tie;
    result.minimizer_count = minimizers;
    return result;
}

std::vector<std::string> map_projection_regions(const Mat& b, const Vec& d, const geometry::CompactSampleSet& grid)
{
    require(grid.dim() == 2 * b.cols() && d.size() == b.cols(), ErrorKind::InvalidArgument,
            "map_projection_regions: grid must live in R^{2n}");
    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(grid.size()));
    for (Eigen::Index j = 0; j < grid.size(); ++j) {
        labels.push_back(relu_workspace(grid.points.col(j)).pattern());
    }
    return labels;
}

} // namespace injflow::projection
