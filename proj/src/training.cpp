#include "injflow/training.hpp"
#include "injflow/error.hpp"
#include "injflow/kernels.hpp"
#include "injflow/metrics.hpp"
#include "injflow/optimizer.hpp"
#include "injflow/rng.hpp"
#include "injflow/transport.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

namespace injflow {

namespace {

void require_batch(const Mat& m, const char* what)
{
    require(m.cols() > 0, ErrorKind::InvalidArgument, std::string(what) + ": empty batch");
}

// Sorted order of a projection; ties keep index order.
std::vector<Eigen::Index> argsort(const Vec& values)
{
    std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return values(a) < values(b); });
    return order;
}

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v)
{
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

std::vector<std::size_t> complement(const std::vector<std::size_t>& stages, std::size_t count)
{
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < count; ++s) {
        if (std::find(stages.begin(), stages.end(), s) == stages.end()) {
            out.push_back(s);
        }
    }
    return out;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback)
{
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidConfig, std::string("config key '") + key + "': " + e.what());
    }
}

double weight_for(const TrainingConfig& config, LossKind kind)
{
    return kind == LossKind::Density ? config.density_weight : config.manifold_weight;
}

} // namespace

std::string to_string(LossKind kind)
{
    switch (kind) {
    case LossKind::Manifold:
        return "manifold";
    case LossKind::Density:
        return "density";
    case LossKind::Paired:
        return "paired";
    }
    return "unknown";
}

LossKind loss_kind_from_string(const std::string& name)
{
    if (name == "manifold") {
        return LossKind::Manifold;
    }
    if (name == "density") {
        return LossKind::Density;
    }
    if (name == "paired") {
        return LossKind::Paired;
    }
    fail(ErrorKind::InvalidConfig, "unknown loss '" + name + "' (expected manifold, density or paired)");
}

LossValue chamfer_loss(const Mat& output, const Mat& target)
{
    require_batch(output, "manifold loss");
    require_batch(target, "manifold loss");
    require(output.rows() == target.rows(), ErrorKind::InvalidArgument, "manifold loss: dimension mismatch");
    LossValue lv;
    lv.grad = Mat::Zero(output.rows(), output.cols());
    const double nt = static_cast<double>(target.cols());
    const double no = static_cast<double>(output.cols());

    const kernels::PointBlock out_block(output);
    const auto to_output = kernels::nearest(out_block, target);
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
        const auto& hit = to_output[static_cast<std::size_t>(j)];
        const auto i = static_cast<Eigen::Index>(hit.index);
        lv.value += hit.squared_distance / nt;
        lv.grad.col(i) += 2.0 * (output.col(i) - target.col(j)) / nt;
    }
    const kernels::PointBlock target_block(target);
    const auto to_target = kernels::nearest(target_block, output);
    for (Eigen::Index i = 0; i < output.cols(); ++i) {
        const auto& hit = to_target[static_cast<std::size_t>(i)];
        lv.value += hit.squared_distance / no;
        lv.grad.col(i) += 2.0 * (output.col(i) - target.col(static_cast<Eigen::Index>(hit.index))) / no;
    }
    return lv;
}

LossValue sliced_w2_loss(const Mat& output, const EmpiricalMeasure& target, const Mat& directions)
{
    require_batch(output, "density loss");
    require_batch(target.points, "density loss");
    validate(target);
    require(output.rows() == target.dim() && directions.rows() == output.rows(), ErrorKind::InvalidArgument,
            "density loss: dimension mismatch");
    require(directions.cols() > 0, ErrorKind::InvalidArgument, "density loss: no projection directions");
    LossValue lv;
    lv.grad = Mat::Zero(output.rows(), output.cols());
    const double u = 1.0 / static_cast<double>(output.cols());
    const double scale = 1.0 / static_cast<double>(directions.cols());
    const kernels::PointBlock out_block(output);
    const kernels::PointBlock target_block(target.points);
    Vec grad_p(output.cols());
    for (Eigen::Index k = 0; k < directions.cols(); ++k) {
        const Vec dir = directions.col(k);
        const Vec p = kernels::project(out_block, dir);
        const Vec q = kernels::project(target_block, dir);
        const auto op = argsort(p);
        const auto oq = argsort(q);
        grad_p.setZero();
        std::size_t a = 0;
        std::size_t b = 0;
        double wa = u;
        double wb = target.weights(oq[0]);
        double cost = 0.0;
        while (a < op.size() && b < oq.size()) {
            const double m = std::min(wa, wb);
            const Eigen::Index i = op[a];
            const double diff = p(i) - q(oq[b]);
            cost += m * diff * diff;
            grad_p(i) += 2.0 * m * diff;
            wa -= m;
            wb -= m;
            if (wa <= 1e-15 && ++a < op.size()) {
                wa = u;
            }
            if (wb <= 1e-15 && ++b < oq.size()) {
                wb = target.weights(oq[b]);
            }
        }
        lv.value += scale * cost;
        lv.grad.noalias() += scale * dir * grad_p.transpose();
    }
    return lv;
}

LossValue paired_loss(const Mat& output, const Mat& target)
{
    require_batch(output, "paired loss");
    require(output.rows() == target.rows() && output.cols() == target.cols(), ErrorKind::InvalidArgument,
            "paired loss: shape mismatch");
    const double n = static_cast<double>(output.cols());
    const Mat diff = output - target;
    return LossValue{diff.squaredNorm() / n, 2.0 * diff / n};
}

double manifold_loss(const InjectiveNetwork& net, const Mat& latent, const Mat& target)
{
    require_batch(latent, "manifold loss");
    return chamfer_loss(net.forward(latent), target).value;
}

double density_loss(const InjectiveNetwork& net, const Mat& latent, const EmpiricalMeasure& target,
                    const Mat& directions)
{
    require_batch(latent, "density loss");
    return sliced_w2_loss(net.forward(latent), target, directions).value;
}

LossValue LossSpec::evaluate(const Mat& output) const
{
    LossValue lv;
    switch (kind) {
    case LossKind::Manifold:
        lv = chamfer_loss(output, target);
        break;
    case LossKind::Density: {
        require_batch(target, "density loss");
        const Vec w = target_weights.size() > 0
                          ? target_weights
                          : Vec::Constant(target.cols(), 1.0 / static_cast<double>(target.cols()));
        lv = sliced_w2_loss(output, EmpiricalMeasure{target, w}, directions);
        break;
    }
    case LossKind::Paired:
        lv = paired_loss(output, target);
        break;
    }
    lv.value *= weight;
    lv.grad *= weight;
    return lv;
}

GradientResult compute_gradients(InjectiveNetwork& net, const LossSpec& loss, const Mat& latent,
                                 const std::vector<std::size_t>& stages)
{
    require(!stages.empty(), ErrorKind::InvalidArgument, "compute_gradients: no trainable stages");
    for (auto& ref : net.parameters()) {
        ref.param->zero_grad();
    }
    InjectiveNetwork::Tape tape;
    const Mat out = net.forward(latent, tape);
    const LossValue lv = loss.evaluate(out);
    net.backward(lv.grad, tape, *std::min_element(stages.begin(), stages.end()));
    GradientResult result;
    result.loss = lv.value;
    result.params = net.parameters(stages);
    check_gradients(result.params);
    return result;
}

void TrainingConfig::validate() const
{
    require(!phases.empty(), ErrorKind::InvalidConfig, "training config has no phases");
    require(batch_size > 0, ErrorKind::InvalidConfig, "batch_size must be positive");
    require(lipschitz_log_interval > 0, ErrorKind::InvalidConfig, "lipschitz_log_interval must be positive");
    require(n_projections > 0, ErrorKind::InvalidConfig, "n_projections must be positive");
    require(eval_samples >= 2, ErrorKind::InvalidConfig, "eval_samples must be at least 2");
    require(manifold_weight > 0.0 && density_weight > 0.0, ErrorKind::InvalidConfig, "loss weights must be positive");
    std::set<std::size_t> seen;
    for (std::size_t p = 0; p < phases.size(); ++p) {
        const auto& phase = phases[p];
        const std::string where = "phase " + std::to_string(p) + ": ";
        require(!phase.stages.empty(), ErrorKind::InvalidConfig, where + "no trainable stages");
        require(phase.steps > 0, ErrorKind::InvalidConfig, where + "steps must be positive");
        require(phase.learning_rate > 0.0, ErrorKind::InvalidConfig, where + "learning_rate must be positive");
        for (std::size_t s : sorted_unique(phase.stages)) {
            require(seen.insert(s).second, ErrorKind::InvalidConfig,
                    where + "stage " + std::to_string(s) + " is trainable here but frozen by an earlier phase");
        }
    }
}

void TrainingConfig::validate(const InjectiveNetwork& net) const
{
    validate();
    for (const auto& phase : phases) {
        for (std::size_t s : phase.stages) {
            require(s < net.stage_count(), ErrorKind::InvalidConfig,
                    "stage " + std::to_string(s) + " does not exist (network has " +
                        std::to_string(net.stage_count()) + " stages)");
        }
    }
}

nlohmann::json TrainingConfig::to_json() const
{
    nlohmann::json ph = nlohmann::json::array();
    for (const auto& p : phases) {
        ph.push_back({{"stages", p.stages},
                      {"loss", injflow::to_string(p.loss)},
                      {"steps", p.steps},
                      {"learning_rate", p.learning_rate}});
    }
    return {{"phases", ph},
            {"batch_size", batch_size},
            {"seed", seed},
            {"loss_weights", {{"manifold", manifold_weight}, {"density", density_weight}}},
            {"lipschitz_log_interval", lipschitz_log_interval},
            {"n_projections", n_projections},
            {"eval_samples", eval_samples}};
}

TrainingConfig& TrainingConfig::merge(const nlohmann::json& j)
{
    require(j.is_object(), ErrorKind::InvalidConfig, "training config must be a JSON object");
    if (j.contains("phases")) {
        require(j.at("phases").is_array(), ErrorKind::InvalidConfig, "'phases' must be an array");
        phases.clear();
        for (const auto& p : j.at("phases")) {
            require(p.is_object(), ErrorKind::InvalidConfig, "each phase must be an object");
            PhaseConfig phase;
            phase.stages = get_or<std::vector<std::size_t>>(p, "stages", {});
            phase.loss = loss_kind_from_string(get_or<std::string>(p, "loss", "manifold"));
            phase.steps = get_or<std::size_t>(p, "steps", 0);
            phase.learning_rate = get_or<double>(p, "learning_rate", 1e-3);
            phases.push_back(std::move(phase));
        }
    }
    batch_size = get_or(j, "batch_size", batch_size);
    seed = get_or(j, "seed", seed);
    if (j.contains("loss_weights")) {
        const auto& w = j.at("loss_weights");
        require(w.is_object(), ErrorKind::InvalidConfig, "'loss_weights' must be an object");
        manifold_weight = get_or(w, "manifold", manifold_weight);
        density_weight = get_or(w, "density", density_weight);
    }
    lipschitz_log_interval = get_or(j, "lipschitz_log_interval", lipschitz_log_interval);
    n_projections = get_or(j, "n_projections", n_projections);
    eval_samples = get_or(j, "eval_samples", eval_samples);
    return *this;
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j)
{
    TrainingConfig c;
    c.merge(j);
    c.validate();
    return c;
}

void TrainingTrace::write_csv(std::ostream& out) const
{
    out << "phase,step,loss,directed_supinf,sliced_w2,lipschitz_estimate\n";
    for (const auto& r : records) {
        out << r.phase << ',' << r.step << ',' << geometry::format_double(r.loss) << ','
            << geometry::format_double(r.directed_supinf) << ',' << geometry::format_double(r.sliced_w2) << ','
            << geometry::format_double(r.lipschitz_estimate) << '\n';
    }
}

void TrainingTrace::write_csv(const std::string& path) const
{
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::InvalidArgument, "cannot write '" + path + "'");
    write_csv(out);
}

namespace {

nlohmann::json record_json(const TraceRecord& r)
{
    return {{"phase", r.phase},
            {"step", r.step},
            {"loss", r.loss},
            {"directed_supinf", r.directed_supinf},
            {"sliced_w2", r.sliced_w2},
            {"lipschitz_estimate", r.lipschitz_estimate}};
}

} // namespace

nlohmann::json TrainingTrace::to_json() const
{
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : records) {
        recs.push_back(record_json(r));
    }
    nlohmann::json ph = nlohmann::json::array();
    for (const auto& p : phases) {
        ph.push_back({{"stages", p.stages},
                      {"loss", injflow::to_string(p.loss)},
                      {"steps", p.steps},
                      {"frozen_parameters_unchanged", p.frozen_hash_before == p.frozen_hash_after},
                      {"final", record_json(p.final)}});
    }
    return {{"records", recs}, {"phases", ph}};
}

EvaluationSet make_evaluation_set(const geometry::ManifoldTarget& target, std::size_t count, std::uint64_t seed)
{
    EvaluationSet eval;
    eval.latent = geometry::sample_domain(target, count, seed, geometry::Sampling::Grid).points;
    eval.target = target.apply(eval.latent);
    eval.directions = transport::random_directions(target.ambient_dim, kEvalProjections, seed);
    return eval;
}

TraceRecord evaluate_record(const InjectiveNetwork& net, const EvaluationSet& eval, LossKind loss)
{
    TraceRecord r;
    const Mat out = net.forward(eval.latent);
    const EmpiricalMeasure out_measure = uniform_measure(out);
    const EmpiricalMeasure target_measure = uniform_measure(eval.target);
    switch (loss) {
    case LossKind::Manifold:
        r.loss = chamfer_loss(out, eval.target).value;
        break;
    case LossKind::Density:
        r.loss = sliced_w2_loss(out, target_measure, eval.directions).value;
        break;
    case LossKind::Paired:
        r.loss = paired_loss(out, eval.target).value;
        break;
    }
    r.directed_supinf = directed_supinf(eval.target, out);
    r.sliced_w2 = transport::wasserstein2_sliced(out_measure, target_measure, eval.directions);
    r.lipschitz_estimate = lipschitz_estimate(eval.latent, out);
    require(std::isfinite(r.loss) && std::isfinite(r.directed_supinf) && std::isfinite(r.sliced_w2) &&
                std::isfinite(r.lipschitz_estimate),
            ErrorKind::NumericError, "non-finite training diagnostics");
    return r;
}

TrainingTrace run_layerwise(InjectiveNetwork& net, const geometry::ManifoldTarget& target,
                            const TrainingConfig& config)
{
    config.validate(net);
    require(net.in_dim() == target.intrinsic_dim && net.out_dim() == target.ambient_dim, ErrorKind::InvalidConfig,
            "network dimensions do not match target '" + target.name + "'");
    Rng rng(config.seed);
    const EvaluationSet eval = make_evaluation_set(target, config.eval_samples, config.seed);

    TrainingTrace trace;
    std::size_t global_step = 0;
    TraceRecord initial = evaluate_record(net, eval, config.phases.front().loss);
    initial.phase = 0;
    trace.records.push_back(initial);

    for (std::size_t p = 0; p < config.phases.size(); ++p) {
        const PhaseConfig& phase = config.phases[p];
        const auto stages = sorted_unique(phase.stages);
        const auto frozen = complement(stages, net.stage_count());
        PhaseSummary summary;
        summary.stages = stages;
        summary.loss = phase.loss;
        summary.steps = phase.steps;
        summary.frozen_hash_before = hash_parameters(net.parameters(frozen));

        Adam adam(net.parameters(stages), AdamOptions{phase.learning_rate});
        LossSpec spec;
        spec.kind = phase.loss;
        spec.weight = weight_for(config, phase.loss);
        for (std::size_t k = 1; k <= phase.steps; ++k) {
            const Mat batch =
                geometry::sample_domain(target, config.batch_size, rng.fork_seed(), geometry::Sampling::Random).points;
            spec.target = target.apply(batch);
            if (phase.loss == LossKind::Density) {
                spec.directions = transport::random_directions(target.ambient_dim, config.n_projections,
                                                               rng.fork_seed());
            }
            compute_gradients(net, spec, batch, stages);
            adam.step();
            for (std::size_t s : stages) {
                if (!InjectiveNetwork::is_flow_stage(s)) {
                    net.expansive(s).enforce_constraints();
                }
            }
            ++global_step;
            if (k % config.lipschitz_log_interval == 0 || k == phase.steps) {
                TraceRecord r = evaluate_record(net, eval, phase.loss);
                r.phase = p;
                r.step = global_step;
                trace.records.push_back(r);
            }
        }
        summary.frozen_hash_after = hash_parameters(net.parameters(frozen));
        summary.final = trace.records.back();
        trace.phases.push_back(summary);
    }
    return trace;
}

ObstructionConfig ObstructionConfig::defaults()
{
    ObstructionConfig c;
    c.training.phases = {PhaseConfig{{1}, LossKind::Density, 1000, 3e-3}, PhaseConfig{{2}, LossKind::Density, 6000, 1e-3}};
    c.training.batch_size = 256;
    c.training.lipschitz_log_interval = 100;
    c.training.n_projections = 64;
    c.training.eval_samples = 256;
    return c;
}

nlohmann::json ObstructionConfig::to_json() const
{
    return {{"training", training.to_json()},
            {"coupling_layers", coupling_layers},
            {"width", width},
            {"control_radius", control_radius},
            {"control_tilt", control_tilt},
            {"trefoil_scale", trefoil_scale},
            {"lipschitz_ceiling", lipschitz_ceiling},
            {"blowup_factor", blowup_factor},
            {"control_w2_threshold", control_w2_threshold},
            {"treatment_w2_threshold", treatment_w2_threshold}};
}

ObstructionConfig ObstructionConfig::from_json(const nlohmann::json& j)
{
    require(j.is_object(), ErrorKind::InvalidConfig, "obstruction config must be a JSON object");
    ObstructionConfig c = defaults();
    if (j.contains("training")) {
        c.training.merge(j.at("training"));
    }
    c.coupling_layers = get_or(j, "coupling_layers", c.coupling_layers);
    c.width = get_or(j, "width", c.width);
    c.control_radius = get_or(j, "control_radius", c.control_radius);
    c.control_tilt = get_or(j, "control_tilt", c.control_tilt);
    c.trefoil_scale = get_or(j, "trefoil_scale", c.trefoil_scale);
    c.lipschitz_ceiling = get_or(j, "lipschitz_ceiling", c.lipschitz_ceiling);
    c.blowup_factor = get_or(j, "blowup_factor", c.blowup_factor);
    c.control_w2_threshold = get_or(j, "control_w2_threshold", c.control_w2_threshold);
    c.treatment_w2_threshold = get_or(j, "treatment_w2_threshold", c.treatment_w2_threshold);
    require(c.coupling_layers >= 1 && c.width >= 1, ErrorKind::InvalidConfig, "network size must be positive");
    c.training.validate();
    return c;
}

InjectiveNetwork make_extendable_network(const ObstructionConfig& config, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<ExpansiveLayer> expansive;
    expansive.push_back(ExpansiveLayer::random_linear(2, 3, rng));
    std::vector<FlowBlock> flows;
    flows.push_back(FlowBlock::coupling_stack(3, config.coupling_layers, config.width, rng));
    return InjectiveNetwork(FlowBlock(2), std::move(expansive), std::move(flows));
}

nlohmann::json ObstructionResult::to_json(const ObstructionConfig& config) const
{
    return {{"control_final_lipschitz", control_final_lipschitz},
            {"control_final_sliced_w2", control_final_sliced_w2},
            {"control_passed", control_passed},
            {"treatment_min_sliced_w2", treatment_min_sliced_w2},
            {"treatment_max_lipschitz", treatment_max_lipschitz},
            {"treatment_qualifying_steps", treatment_qualifying_steps},
            {"treatment_passed", treatment_passed},
            {"design_constants",
             {{"lipschitz_ceiling", config.lipschitz_ceiling},
              {"blowup_factor", config.blowup_factor},
              {"control_w2_threshold", config.control_w2_threshold},
              {"treatment_w2_threshold", config.treatment_w2_threshold},
              {"note", "experiment-design constants chosen for a desk-scale run"}}}};
}

ObstructionResult run_obstruction_experiment(const ObstructionConfig& config)
{
    const InjectiveNetwork initial = make_extendable_network(config, config.training.seed);
    ObstructionResult result;

    InjectiveNetwork control_net = initial;
    result.control =
        run_layerwise(control_net, geometry::planar_circle_target(config.control_radius, config.control_tilt),
                      config.training);
    InjectiveNetwork treatment_net = initial;
    result.treatment = run_layerwise(treatment_net, geometry::trefoil_target(config.trefoil_scale), config.training);

    const TraceRecord& last = result.control.records.back();
    result.control_final_lipschitz = last.lipschitz_estimate;
    result.control_final_sliced_w2 = last.sliced_w2;
    result.control_passed =
        last.sliced_w2 <= config.control_w2_threshold && last.lipschitz_estimate <= config.lipschitz_ceiling;

    result.treatment_min_sliced_w2 = std::numeric_limits<double>::infinity();
    result.treatment_passed = true;
    for (const auto& r : result.treatment.records) {
        result.treatment_min_sliced_w2 = std::min(result.treatment_min_sliced_w2, r.sliced_w2);
        result.treatment_max_lipschitz = std::max(result.treatment_max_lipschitz, r.lipschitz_estimate);
        if (r.sliced_w2 < config.treatment_w2_threshold) {
            ++result.treatment_qualifying_steps;
            if (r.lipschitz_estimate < config.blowup_factor * result.control_final_lipschitz) {
                result.treatment_passed = false;
            }
        }
    }
    return result;
}

} // namespace injflow
