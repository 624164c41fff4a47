#include "injflow/network.hpp"
#include "injflow/error.hpp"
#include "injflow/kernels.hpp"

#include <cmath>
#include <fstream>

namespace injflow {

namespace {

template <typename F>
auto at_stage(std::size_t stage, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const Error& e) {
        if (e.stage()) {
            throw;
        }
        throw e.with_stage(static_cast<int>(stage));
    }
}

} // namespace

InjectiveNetwork::InjectiveNetwork(FlowBlock head, std::vector<ExpansiveLayer> expansive, std::vector<FlowBlock> flows)
    : head_(std::move(head)), expansive_(std::move(expansive)), flows_(std::move(flows))
{
    require(expansive_.size() == flows_.size(), ErrorKind::InvalidArgument,
            "each expansive layer must be followed by a flow block");
    require(head_.dim() >= 1, ErrorKind::InvalidArgument, "latent dimension must be positive");
    Eigen::Index current = head_.dim();
    for (std::size_t l = 0; l < expansive_.size(); ++l) {
        const auto& r = expansive_[l];
        const int stage = static_cast<int>(2 * l + 1);
        if (r.in_dim() != current) {
            throw Error(ErrorKind::InvalidArgument,
                        "expansive input dimension " + std::to_string(r.in_dim()) + " != " + std::to_string(current),
                        stage);
        }
        if (r.out_dim() < current) {
            throw Error(ErrorKind::InvalidArgument, "stage dimensions must be non-decreasing", stage);
        }
        const auto report = r.validate_injectivity();
        if (!report.ok) {
            throw Error(ErrorKind::InvalidLayer, report.detail, stage);
        }
        if (flows_[l].dim() != r.out_dim()) {
            throw Error(ErrorKind::InvalidArgument, "flow block dimension does not match the expansive output",
                        stage + 1);
        }
        current = r.out_dim();
    }
}

std::vector<Eigen::Index> InjectiveNetwork::dims() const
{
    std::vector<Eigen::Index> out{head_.dim()};
    for (const auto& f : flows_) {
        out.push_back(f.dim());
    }
    return out;
}

const FlowBlock& InjectiveNetwork::flow(std::size_t stage) const
{
    require(stage < stage_count() && is_flow_stage(stage), ErrorKind::InvalidArgument,
            "stage " + std::to_string(stage) + " is not a flow block");
    return stage == 0 ? head_ : flows_[stage / 2 - 1];
}

FlowBlock& InjectiveNetwork::flow(std::size_t stage)
{
    return const_cast<FlowBlock&>(std::as_const(*this).flow(stage));
}

const ExpansiveLayer& InjectiveNetwork::expansive(std::size_t stage) const
{
    require(stage < stage_count() && !is_flow_stage(stage), ErrorKind::InvalidArgument,
            "stage " + std::to_string(stage) + " is not an expansive layer");
    return expansive_[stage / 2];
}

ExpansiveLayer& InjectiveNetwork::expansive(std::size_t stage)
{
    return const_cast<ExpansiveLayer&>(std::as_const(*this).expansive(stage));
}

Vec InjectiveNetwork::forward(const Vec& x) const
{
    return forward(Mat(x)).col(0);
}

Mat InjectiveNetwork::forward(const Mat& x) const
{
    return forward_stages(x, 0, stage_count());
}

Mat InjectiveNetwork::forward_stages(const Mat& x, std::size_t first, std::size_t last) const
{
    require(first <= last && last <= stage_count(), ErrorKind::InvalidArgument, "bad stage range");
    Mat h = x;
    for (std::size_t s = first; s < last; ++s) {
        h = at_stage(s, [&] { return is_flow_stage(s) ? flow(s).forward(h) : expansive(s).forward(h); });
    }
    return h;
}

Mat InjectiveNetwork::forward(const Mat& x, Tape& tape) const
{
    tape.flow_caches.clear();
    tape.flow_caches.resize(1 + flows_.size());
    tape.expansive_caches.clear();
    tape.expansive_caches.resize(expansive_.size());
    Mat h = x;
    for (std::size_t s = 0; s < stage_count(); ++s) {
        h = at_stage(s, [&] {
            return is_flow_stage(s) ? flow(s).forward(h, tape.flow_caches[s / 2])
                                    : expansive(s).forward(h, tape.expansive_caches[s / 2]);
        });
    }
    return h;
}

Mat InjectiveNetwork::backward(const Mat& grad_out, const Tape& tape, std::size_t stop_stage)
{
    Mat g = grad_out;
    for (std::size_t s = stage_count(); s-- > stop_stage;) {
        g = at_stage(s, [&] {
            return is_flow_stage(s) ? flow(s).backward(g, tape.flow_caches[s / 2])
                                    : expansive(s).backward(g, *tape.expansive_caches[s / 2]);
        });
        if (!g.allFinite()) {
            throw Error(ErrorKind::NumericError, "non-finite gradient", static_cast<int>(s));
        }
    }
    return g;
}

ParamList InjectiveNetwork::parameters(std::size_t stage)
{
    ParamList out;
    const std::string prefix = "stage" + std::to_string(stage) + ".";
    if (is_flow_stage(stage)) {
        flow(stage).collect(prefix, out);
    } else {
        expansive(stage).collect(prefix, out);
    }
    return out;
}

ParamList InjectiveNetwork::parameters(const std::vector<std::size_t>& stages)
{
    ParamList out;
    for (std::size_t s : stages) {
        auto p = parameters(s);
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

ParamList InjectiveNetwork::parameters()
{
    std::vector<std::size_t> all(stage_count());
    for (std::size_t s = 0; s < all.size(); ++s) {
        all[s] = s;
    }
    return parameters(all);
}

double InjectiveNetwork::lipschitz_bound(double input_radius) const
{
    LipschitzStep total{1.0, input_radius};
    for (std::size_t s = 0; s < stage_count(); ++s) {
        const LipschitzStep step = is_flow_stage(s) ? flow(s).lipschitz_bound(total.output_radius)
                                                    : expansive(s).lipschitz_bound(total.output_radius);
        total.lipschitz *= step.lipschitz;
        total.output_radius = step.output_radius;
    }
    return total.lipschitz;
}

nlohmann::json InjectiveNetwork::to_json() const
{
    nlohmann::json stages = nlohmann::json::array();
    for (std::size_t s = 0; s < stage_count(); ++s) {
        if (is_flow_stage(s)) {
            stages.push_back({{"stage", s}, {"type", "flow"}, {"block", flow(s).to_json()}});
        } else {
            stages.push_back({{"stage", s}, {"type", "expansive"}, {"layer", expansive(s).to_json()}});
        }
    }
    nlohmann::json dims_json = nlohmann::json::array();
    for (auto d : dims()) {
        dims_json.push_back(d);
    }
    return {{"format", "injflow-checkpoint"}, {"version", 1}, {"dims", dims_json}, {"stages", stages}};
}

InjectiveNetwork InjectiveNetwork::from_json(const nlohmann::json& j)
{
    try {
        require(j.at("format").get<std::string>() == "injflow-checkpoint", ErrorKind::InvalidArgument,
                "not an injflow checkpoint");
        const auto& stages = j.at("stages");
        require(stages.is_array() && stages.size() % 2 == 1, ErrorKind::InvalidArgument,
                "checkpoint must list an odd number of stages");
        FlowBlock head = FlowBlock::from_json(stages.at(0).at("block"));
        std::vector<ExpansiveLayer> expansive;
        std::vector<FlowBlock> flows;
        for (std::size_t s = 1; s < stages.size(); s += 2) {
            expansive.push_back(at_stage(s, [&] { return ExpansiveLayer::from_json(stages.at(s).at("layer")); }));
            flows.push_back(at_stage(s + 1, [&] { return FlowBlock::from_json(stages.at(s + 1).at("block")); }));
        }
        return InjectiveNetwork(std::move(head), std::move(expansive), std::move(flows));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidArgument, std::string("malformed checkpoint: ") + e.what());
    }
}

double lipschitz_estimate(const Mat& inputs, const Mat& outputs)
{
    require(inputs.cols() == outputs.cols(), ErrorKind::InvalidArgument, "input/output counts differ");
    const kernels::PointBlock in_block(inputs);
    const kernels::PointBlock out_block(outputs);
    const auto n = static_cast<std::size_t>(inputs.cols());
    std::vector<double> din(n);
    std::vector<double> dout(n);
    Vec q_in(inputs.rows());
    Vec q_out(outputs.rows());
    double best = 0.0;
    std::size_t usable = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        q_in = inputs.col(static_cast<Eigen::Index>(i));
        q_out = outputs.col(static_cast<Eigen::Index>(i));
        kernels::squared_distances(in_block, q_in.data(), din.data());
        kernels::squared_distances(out_block, q_out.data(), dout.data());
        for (std::size_t j = i + 1; j < n; ++j) {
            if (din[j] < 1e-18) {
                continue;
            }
            ++usable;
            best = std::max(best, std::sqrt(dout[j] / din[j]));
        }
    }
    require(usable >= 1, ErrorKind::InvalidArgument, "lipschitz_estimate needs at least two distinct samples");
    return best;
}

double lipschitz_estimate(const InjectiveNetwork& net, const geometry::CompactSampleSet& samples)
{
    require(samples.size() >= 2, ErrorKind::InvalidArgument, "lipschitz_estimate needs at least two samples");
    return lipschitz_estimate(samples.points, net.forward(samples.points));
}

void save_checkpoint(const InjectiveNetwork& net, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::InvalidArgument, "cannot write checkpoint " + path);
    out << net.to_json().dump(1) << '\n';
}

InjectiveNetwork load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::InvalidArgument, "cannot read checkpoint " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidArgument, std::string("malformed checkpoint: ") + e.what());
    }
    return InjectiveNetwork::from_json(j);
}

} // namespace injflow
