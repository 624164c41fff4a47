#pragma once

#include "injflow/flows.hpp"
#include "injflow/measure.hpp"
#include "injflow/network.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace injflow {

// max over columns of F of the distance to the closest column of G.
double directed_supinf(const Mat& F, const Mat& G);

struct Box {
    Vec lo;
    Vec hi;

    bool contains(const Mat& points, double tolerance = 1e-12) const;
    static Box bounding(const Mat& points);
};

// A map g: W -> R^m. `preimage` (optional) returns some w with g(w) close to a
// query; `network` (optional, non-owning) enables gradient-based refinement.
struct EvaluableMap {
    Eigen::Index in_dim = 0;
    Eigen::Index out_dim = 0;
    std::function<Mat(const Mat&)> eval;
    std::function<Mat(const Mat&)> preimage;
    std::optional<Box> domain;
    const InjectiveNetwork* network = nullptr;

    Mat operator()(const Mat& w) const;
};

// Uses the layer-wise projection as preimage when every expansive layer supports it.
EvaluableMap network_map(const InjectiveNetwork& net, std::optional<Box> domain = std::nullopt);
EvaluableMap identity_map(Eigen::Index dim, std::optional<Box> domain = std::nullopt);

enum class CandidateFamily { Affine, SmallFlow };

// Candidate h: K -> W, x -> flow(a x + c) (flow omitted for affine candidates).
struct CandidateMap {
    std::string kind;
    Mat a;
    Vec c;
    std::optional<FlowBlock> flow;

    Mat apply(const Mat& x) const;
    nlohmann::json to_json() const;

    static CandidateMap affine(Mat a, Vec c, std::string kind = "affine");
    // x -> (x, 0) or the leading coordinates of x.
    static CandidateMap identity_embedding(Eigen::Index in_dim, Eigen::Index out_dim);
};

// sup over pairs of |g(h(x)) - f(x)|. Throws invalid-candidate when h leaves g's domain box.
double embedding_gap_upper(const Mat& x, const Mat& fx, const EvaluableMap& g, const CandidateMap& h);

struct EmbeddingGapEstimate {
    double lower = 0.0;
    double upper = 0.0;
    CandidateMap candidate;
    Eigen::Index sample_count = 0;
};

struct AlignmentFit {
    CandidateMap candidate;
    double upper = 0.0;
    double incumbent_upper = 0.0;
};

// Minimizes the empirical upper bound over the family, starting from the
// identity-embedding incumbent; never returns a worse candidate. With a single
// pair the candidate is the constant map to the best W sample.
AlignmentFit fit_candidate_alignment(const Mat& x, const Mat& fx, const EvaluableMap& g, const Mat& w_samples,
                                     CandidateFamily family = CandidateFamily::Affine, std::uint64_t seed = 0);

// [lower, upper]: lower is the directed sup-inf from f-samples to g evaluated
// on the W samples together with the candidate's image points.
EmbeddingGapEstimate estimate_embedding_gap(const Mat& x, const Mat& fx, const EvaluableMap& g, const Mat& w_samples,
                                            CandidateFamily family = CandidateFamily::Affine, std::uint64_t seed = 0);

struct BoundCheckReport {
    double w2 = 0.0;
    double bound = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string method;

    nlohmann::json to_json() const;
};

inline constexpr std::size_t kSlicedProjections = 128;

// mu_o = h#mu on W; compares W2(f#mu, g#mu_o) with gap.upper + tolerance.
// Exact W2 within the solver budget, sliced otherwise.
BoundCheckReport wasserstein_bound_check(const Mat& x, const Mat& fx, const Vec& weights, const EvaluableMap& g,
                                         const EmbeddingGapEstimate& gap, double tolerance = 0.01,
                                         std::uint64_t seed = 0);

} // namespace injflow
