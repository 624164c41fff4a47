#include "injflow/metrics.hpp"
#include "injflow/error.hpp"
#include "injflow/kernels.hpp"
#include "injflow/optimizer.hpp"
#include "injflow/projection.hpp"
#include "injflow/rng.hpp"
#include "injflow/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace injflow {

namespace {

void require_points(const Mat& points, const char* what)
{
    require(points.cols() > 0, ErrorKind::InvalidArgument, std::string(what) + ": empty point set");
}

// For every query, the W sample whose image under g is closest.
Mat nearest_preimages(const Mat& w_samples, const Mat& images, const Mat& queries)
{
    const kernels::PointBlock block(images);
    const auto hits = kernels::nearest(block, queries);
    Mat out(w_samples.rows(), queries.cols());
    for (Eigen::Index j = 0; j < queries.cols(); ++j) {
        out.col(j) = w_samples.col(static_cast<Eigen::Index>(hits[static_cast<std::size_t>(j)].index));
    }
    return out;
}

double max_column_distance(const Mat& a, const Mat& b)
{
    return (a - b).colwise().norm().maxCoeff();
}

// Shrinks an affine candidate toward the box centre until its image fits.
CandidateMap fit_into_box(CandidateMap h, const Mat& x, const Box& box)
{
    const Mat image = h.apply(x);
    if (box.contains(image)) {
        return h;
    }
    const Vec centre = 0.5 * (box.lo + box.hi);
    double scale = 1.0;
    for (Eigen::Index j = 0; j < image.cols(); ++j) {
        for (Eigen::Index i = 0; i < image.rows(); ++i) {
            const double offset = image(i, j) - centre(i);
            const double half = 0.5 * (box.hi(i) - box.lo(i));
            if (std::abs(offset) > half) {
                scale = std::min(scale, half / std::abs(offset));
            }
        }
    }
    scale *= 1.0 - 1e-12;
    h.a *= scale;
    h.c = centre + scale * (h.c - centre);
    return h;
}

bool fits(const CandidateMap& h, const Mat& x, const EvaluableMap& g)
{
    return !g.domain || g.domain->contains(h.apply(x));
}

// Gradient refinement of h = F(a x + c) against mean |g(h(x)) - f(x)|^2.
std::optional<CandidateMap> refine_small_flow(const CandidateMap& start, const Mat& x, const Mat& fx,
                                              const EvaluableMap& g, std::uint64_t seed)
{
    if (g.network == nullptr) {
        return std::nullopt;
    }
    InjectiveNetwork net = *g.network;
    Rng rng(seed);
    CandidateMap h = start;
    h.kind = "small-flow";
    h.flow = FlowBlock::coupling_stack(g.in_dim, 2, 16, rng);
    ParamList params;
    h.flow->collect("flow.", params);
    Adam adam(params, AdamOptions{1e-2});
    const Mat base = h.a * x + h.c.replicate(1, x.cols());
    const double n = static_cast<double>(x.cols());
    for (int step = 0; step < 300; ++step) {
        adam.zero_grad();
        std::vector<CachePtr> caches;
        const Mat w = h.flow->forward(base, caches);
        InjectiveNetwork::Tape tape;
        const Mat out = net.forward(w, tape);
        const Mat grad_out = 2.0 * (out - fx) / n;
        const Mat grad_w = net.backward(grad_out, tape, 0);
        h.flow->backward(grad_w, caches);
        check_gradients(params);
        adam.step();
    }
    return h;
}

} // namespace

double directed_supinf(const Mat& F, const Mat& G)
{
    require_points(F, "directed_supinf");
    require_points(G, "directed_supinf");
    require(F.rows() == G.rows(), ErrorKind::InvalidArgument, "directed_supinf: dimension mismatch");
    const kernels::PointBlock block(G);
    double worst = 0.0;
    for (const auto& hit : kernels::nearest(block, F)) {
        worst = std::max(worst, hit.squared_distance);
    }
    return std::sqrt(worst);
}

bool Box::contains(const Mat& points, double tolerance) const
{
    if (points.rows() != lo.size()) {
        return false;
    }
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            const double slack = tolerance * std::max(1.0, std::abs(points(i, j)));
            if (!(points(i, j) >= lo(i) - slack && points(i, j) <= hi(i) + slack)) {
                return false;
            }
        }
    }
    return true;
}

Box Box::bounding(const Mat& points)
{
    require_points(points, "Box::bounding");
    return Box{points.rowwise().minCoeff(), points.rowwise().maxCoeff()};
}

Mat EvaluableMap::operator()(const Mat& w) const
{
    require(w.rows() == in_dim, ErrorKind::InvalidArgument, "evaluable map: input dimension mismatch");
    return eval(w);
}

EvaluableMap network_map(const InjectiveNetwork& net, std::optional<Box> domain)
{
    EvaluableMap g;
    g.in_dim = net.in_dim();
    g.out_dim = net.out_dim();
    g.eval = [&net](const Mat& w) { return net.forward(w); };
    bool projectable = true;
    for (std::size_t s = 1; s < net.stage_count(); s += 2) {
        projectable = projectable && projection::supports_projection(net.expansive(s));
    }
    if (projectable) {
        g.preimage = [&net](const Mat& y) {
            Mat out(net.in_dim(), y.cols());
            for (Eigen::Index j = 0; j < y.cols(); ++j) {
                out.col(j) = projection::project_to_range(net, y.col(j)).x;
            }
            return out;
        };
    }
    g.domain = std::move(domain);
    g.network = &net;
    return g;
}

EvaluableMap identity_map(Eigen::Index dim, std::optional<Box> domain)
{
    EvaluableMap g;
    g.in_dim = dim;
    g.out_dim = dim;
    g.eval = [](const Mat& w) { return w; };
    g.preimage = [](const Mat& y) { return y; };
    g.domain = std::move(domain);
    return g;
}

Mat CandidateMap::apply(const Mat& x) const
{
    require(x.rows() == a.cols(), ErrorKind::InvalidArgument, "candidate map: input dimension mismatch");
    Mat w = a * x + c.replicate(1, x.cols());
    if (flow) {
        w = flow->forward(w);
    }
    return w;
}

nlohmann::json CandidateMap::to_json() const
{
    nlohmann::json j{{"kind", kind}, {"A", matrix_to_json(a)}, {"c", vector_to_json(c)}};
    if (flow) {
        j["flow"] = flow->to_json();
    }
    return j;
}

CandidateMap CandidateMap::affine(Mat a, Vec c, std::string kind)
{
    require(a.rows() == c.size(), ErrorKind::InvalidArgument, "affine candidate: shape mismatch");
    CandidateMap h;
    h.kind = std::move(kind);
    h.a = std::move(a);
    h.c = std::move(c);
    return h;
}

CandidateMap CandidateMap::identity_embedding(Eigen::Index in_dim, Eigen::Index out_dim)
{
    return affine(Mat::Identity(out_dim, in_dim), Vec::Zero(out_dim), "identity-embedding");
}

double embedding_gap_upper(const Mat& x, const Mat& fx, const EvaluableMap& g, const CandidateMap& h)
{
    require_points(x, "embedding_gap_upper");
    require(x.cols() == fx.cols(), ErrorKind::InvalidArgument, "embedding_gap_upper: pair count mismatch");
    require(fx.rows() == g.out_dim, ErrorKind::InvalidArgument, "embedding_gap_upper: ambient dimension mismatch");
    const Mat w = h.apply(x);
    require(w.rows() == g.in_dim, ErrorKind::InvalidArgument, "embedding_gap_upper: candidate output dimension mismatch");
    if (g.domain && !g.domain->contains(w)) {
        fail(ErrorKind::InvalidCandidate, "candidate '" + h.kind + "' maps outside the domain box of g");
    }
    return max_column_distance(g(w), fx);
}

AlignmentFit fit_candidate_alignment(const Mat& x, const Mat& fx, const EvaluableMap& g, const Mat& w_samples,
                                     CandidateFamily family, std::uint64_t seed)
{
    require_points(x, "fit_candidate_alignment");
    require_points(w_samples, "fit_candidate_alignment");
    require(x.cols() == fx.cols(), ErrorKind::InvalidArgument, "fit_candidate_alignment: pair count mismatch");
    require(w_samples.rows() == g.in_dim, ErrorKind::InvalidArgument, "fit_candidate_alignment: W dimension mismatch");
    const Eigen::Index n = x.rows();
    const Eigen::Index o = g.in_dim;
    const Mat gw = g(w_samples);

    if (x.cols() == 1) {
        const kernels::PointBlock block(gw);
        const auto hit = kernels::nearest(block, fx).front();
        AlignmentFit fit;
        fit.candidate = CandidateMap::affine(Mat::Zero(o, n), w_samples.col(static_cast<Eigen::Index>(hit.index)),
                                             "constant");
        fit.upper = std::sqrt(hit.squared_distance);
        fit.incumbent_upper = fit.upper;
        return fit;
    }

    Mat design(n + 1, x.cols());
    design.topRows(n) = x;
    design.row(n).setOnes();
    require(x.cols() >= n + 1, ErrorKind::InvalidArgument, "fit_candidate_alignment: need at least dim+1 pairs");
    {
        const Eigen::JacobiSVD<Mat> svd(design);
        const Vec s = svd.singularValues();
        require(s(s.size() - 1) > kRankTolerance * s(0), ErrorKind::InvalidArgument,
                "fit_candidate_alignment: rank-deficient regression on the parameter samples");
    }

    AlignmentFit fit;
    CandidateMap incumbent = CandidateMap::identity_embedding(n, o);
    std::optional<double> incumbent_upper;
    if (fits(incumbent, x, g)) {
        incumbent_upper = embedding_gap_upper(x, fx, g, incumbent);
    }

    const Mat targets = g.preimage ? g.preimage(fx) : nearest_preimages(w_samples, gw, fx);
    const Mat coef = design.transpose().colPivHouseholderQr().solve(targets.transpose()).transpose();
    CandidateMap affine = CandidateMap::affine(coef.leftCols(n), coef.col(n));
    if (g.domain) {
        affine = fit_into_box(std::move(affine), x, *g.domain);
    }
    const double affine_upper = embedding_gap_upper(x, fx, g, affine);

    if (incumbent_upper && *incumbent_upper <= affine_upper) {
        fit.candidate = incumbent;
        fit.upper = *incumbent_upper;
    } else {
        fit.candidate = affine;
        fit.upper = affine_upper;
    }
    fit.incumbent_upper = incumbent_upper.value_or(std::numeric_limits<double>::infinity());

    if (family == CandidateFamily::SmallFlow) {
        if (auto refined = refine_small_flow(fit.candidate, x, fx, g, seed); refined && fits(*refined, x, g)) {
            const double upper = embedding_gap_upper(x, fx, g, *refined);
            if (upper < fit.upper) {
                fit.candidate = std::move(*refined);
                fit.upper = upper;
            }
        }
    }
    return fit;
}

EmbeddingGapEstimate estimate_embedding_gap(const Mat& x, const Mat& fx, const EvaluableMap& g, const Mat& w_samples,
                                            CandidateFamily family, std::uint64_t seed)
{
    AlignmentFit fit = fit_candidate_alignment(x, fx, g, w_samples, family, seed);
    const Mat hx = fit.candidate.apply(x);
    Mat w_all(w_samples.rows(), w_samples.cols() + hx.cols());
    w_all << w_samples, hx;
    EmbeddingGapEstimate est;
    est.lower = directed_supinf(fx, g(w_all));
    est.upper = fit.upper;
    est.candidate = std::move(fit.candidate);
    est.sample_count = w_samples.cols();
    return est;
}

nlohmann::json BoundCheckReport::to_json() const
{
    return {{"w2", w2}, {"bound", bound}, {"tolerance", tolerance}, {"passed", passed}, {"method", method}};
}

BoundCheckReport wasserstein_bound_check(const Mat& x, const Mat& fx, const Vec& weights, const EvaluableMap& g,
                                         const EmbeddingGapEstimate& gap, double tolerance, std::uint64_t seed)
{
    require(std::isfinite(gap.upper), ErrorKind::InvalidArgument, "wasserstein_bound_check: gap.upper must be finite");
    const EmpiricalMeasure f_measure{fx, weights};
    const EmpiricalMeasure g_measure{g(gap.candidate.apply(x)), weights};
    BoundCheckReport report;
    if (f_measure.size() + g_measure.size() <= transport::kExactBudget) {
        report.w2 = transport::wasserstein2_exact(f_measure, g_measure);
        report.method = "exact";
    } else {
        report.w2 = transport::wasserstein2_sliced(f_measure, g_measure, kSlicedProjections, seed);
        report.method = "sliced";
    }
    report.bound = gap.upper;
    report.tolerance = tolerance;
    report.passed = report.w2 <= gap.upper + tolerance;
    return report;
}

} // namespace injflow
