#pragma once

#include "injflow/expansive.hpp"
#include "injflow/flows.hpp"
#include "injflow/geometry.hpp"

#include <string>
#include <vector>

namespace injflow {

// T_L o R_L o ... o T_1 o R_1 o T_0. Stages are indexed in evaluation order:
// 0 is T_0, 2l-1 is R_l and 2l is T_l.
class InjectiveNetwork {
public:
    struct Tape {
        std::vector<std::vector<CachePtr>> flow_caches;
        std::vector<CachePtr> expansive_caches;
    };

    // Throws invalid-argument on dimension mismatches and invalid-layer when
    // an expansive layer fails its injectivity check.
    InjectiveNetwork(FlowBlock head, std::vector<ExpansiveLayer> expansive, std::vector<FlowBlock> flows);

    std::size_t depth() const noexcept { return expansive_.size(); }
    std::size_t stage_count() const noexcept { return 1 + 2 * expansive_.size(); }
    Eigen::Index in_dim() const noexcept { return head_.dim(); }
    Eigen::Index out_dim() const noexcept { return flows_.empty() ? head_.dim() : flows_.back().dim(); }
    // n_0, ..., n_L
    std::vector<Eigen::Index> dims() const;

    static bool is_flow_stage(std::size_t stage) noexcept { return stage % 2 == 0; }
    const FlowBlock& flow(std::size_t stage) const;
    FlowBlock& flow(std::size_t stage);
    const ExpansiveLayer& expansive(std::size_t stage) const;
    ExpansiveLayer& expansive(std::size_t stage);

    Vec forward(const Vec& x) const;
    Mat forward(const Mat& x) const;
    // Stages [first, last) only.
    Mat forward_stages(const Mat& x, std::size_t first, std::size_t last) const;

    Mat forward(const Mat& x, Tape& tape) const;
    // Back-propagates to every stage >= `stop_stage`; returns d/dx at the input
    // of `stop_stage`. Parameter gradients accumulate into the stages' Parameters.
    Mat backward(const Mat& grad_out, const Tape& tape, std::size_t stop_stage = 0);

    ParamList parameters(std::size_t stage);
    ParamList parameters(const std::vector<std::size_t>& stages);
    ParamList parameters();

    // Product of per-stage bounds on inputs with norm <= input_radius.
    double lipschitz_bound(double input_radius) const;

    nlohmann::json to_json() const;
    static InjectiveNetwork from_json(const nlohmann::json& j);

private:
    FlowBlock head_;
    std::vector<ExpansiveLayer> expansive_;
    std::vector<FlowBlock> flows_;
};

// max over sample pairs of |E(x) - E(x')| / |x - x'|, skipping pairs closer than 1e-9.
double lipschitz_estimate(const InjectiveNetwork& net, const geometry::CompactSampleSet& samples);
double lipschitz_estimate(const Mat& inputs, const Mat& outputs);

void save_checkpoint(const InjectiveNetwork& net, const std::string& path);
InjectiveNetwork load_checkpoint(const std::string& path);

} // namespace injflow
