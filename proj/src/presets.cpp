#include "injflow/presets.hpp"
#include "injflow/error.hpp"
#include "injflow/geometry.hpp"
#include "injflow/projection.hpp"
#include "injflow/reference/oracles.hpp"
#include "injflow/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace injflow::presets {

namespace {

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

void require_object(const nlohmann::json& j, const std::string& what)
{
    require(j.is_object(), ErrorKind::InvalidConfig, what + " config must be a JSON object");
}

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::InvalidArgument, "cannot write '" + path.string() + "'");
    return out;
}

nlohmann::json gap_step_json(const GapStep& s)
{
    return {{"coefficient", s.coefficient},
            {"lower", s.gap.lower},
            {"upper", s.gap.upper},
            {"sample_count", s.gap.sample_count},
            {"candidate", s.gap.candidate.to_json()},
            {"bound_check", s.bound.to_json()}};
}

PresetOutput gap_visualization_preset(const PresetOptions& opt)
{
    const auto config = GapVisualizationConfig::from_json(opt.config);
    const auto steps = run_gap_visualization(config, opt.seed);
    PresetOutput out;
    Table intervals{{"step", "coefficient", "lower", "upper", "w2", "bound_passed"}, {}};
    nlohmann::json step_json = nlohmann::json::array();
    bool monotone = true;
    bool bounds_ok = true;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto& s = steps[i];
        const std::string stem = "step" + std::to_string(i + 1);
        out.files.push_back(Table::points(s.f_samples).write(opt.out, stem + "_f", opt.format));
        out.files.push_back(Table::points(s.g_samples).write(opt.out, stem + "_g", opt.format));
        intervals.rows.push_back({static_cast<double>(i + 1), s.coefficient, s.gap.lower, s.gap.upper, s.bound.w2,
                                  s.bound.passed ? 1.0 : 0.0});
        step_json.push_back(gap_step_json(s));
        if (i > 0) {
            monotone = monotone && s.gap.upper < steps[i - 1].gap.upper && s.gap.lower <= steps[i - 1].gap.lower;
        }
        bounds_ok = bounds_ok && s.bound.passed;
    }
    out.files.push_back(intervals.write(opt.out, "gap_intervals", opt.format));
    out.metrics = {{"steps", step_json},
                   {"monotone_decreasing", monotone},
                   {"bound_checks_passed", bounds_ok},
                   {"final_lower", steps.back().gap.lower},
                   {"final_upper", steps.back().gap.upper}};
    return out;
}

PresetOutput layerwise_toy_preset(const PresetOptions& opt)
{
    const auto config = LayerwiseToyConfig::from_json(opt.config, opt.seed);
    const auto result = run_layerwise_toy(config);
    PresetOutput out;
    out.files.push_back(Table::trace(result.trace).write(opt.out, "trace", opt.format));
    const auto eval = make_evaluation_set(geometry::toy_curve_target(), config.training.eval_samples,
                                          config.training.seed);
    out.files.push_back(Table::points(eval.target).write(opt.out, "target_samples", opt.format));
    out.files.push_back(Table::points(result.net.forward(eval.latent)).write(opt.out, "model_samples", opt.format));
    open_out(opt.out / "checkpoint.json") << result.net.to_json().dump(1) << '\n';
    out.files.push_back("checkpoint.json");
    out.metrics = {{"phase1_directed_supinf", result.phase1_directed_supinf},
                   {"phase2_sliced_w2", result.phase2_sliced_w2},
                   {"frozen_parameters_unchanged", result.frozen_unchanged},
                   {"phases", result.trace.to_json()["phases"]},
                   {"config", config.training.to_json()}};
    return out;
}

PresetOutput obstruction_preset(const PresetOptions& opt)
{
    nlohmann::json cfg = opt.config;
    require_object(cfg, "trefoil-obstruction");
    cfg["training"]["seed"] = opt.seed;
    const auto config = ObstructionConfig::from_json(cfg);
    const auto result = run_obstruction_experiment(config);
    PresetOutput out;
    out.files.push_back(Table::trace(result.control).write(opt.out, "control_trace", opt.format));
    out.files.push_back(Table::trace(result.treatment).write(opt.out, "treatment_trace", opt.format));
    out.metrics = result.to_json(config);
    out.metrics["config"] = config.to_json();
    return out;
}

PresetOutput projection_bench_preset(const PresetOptions& opt)
{
    const auto config = ProjectionBenchConfig::from_json(opt.config);
    const auto result = run_projection_bench(config, opt.seed);
    PresetOutput out;
    out.files.push_back(result.instances.write(opt.out, "instances", opt.format));
    out.files.push_back(result.ties.write(opt.out, "ties", opt.format));
    out.files.push_back(projection_regions().write(opt.out, "regions", opt.format));
    out.metrics = {{"n", config.n},
                   {"trials", config.trials},
                   {"tie_trials", config.tie_trials},
                   {"oracle_gap_max", result.oracle_gap_max},
                   {"preimage_error_max", result.preimage_error_max},
                   {"tie_multiplicity_ok", result.ties_ok}};
    return out;
}

} // namespace

Table Table::points(const Mat& points, const std::string& prefix)
{
    Table t;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        t.columns.push_back(prefix + std::to_string(i));
    }
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
        t.rows.emplace_back(points.col(j).data(), points.col(j).data() + points.rows());
    }
    return t;
}

Table Table::trace(const TrainingTrace& trace)
{
    Table t{{"phase", "step", "loss", "directed_supinf", "sliced_w2", "lipschitz_estimate"}, {}};
    for (const auto& r : trace.records) {
        t.rows.push_back({static_cast<double>(r.phase), static_cast<double>(r.step), r.loss, r.directed_supinf,
                          r.sliced_w2, r.lipschitz_estimate});
    }
    return t;
}

std::string Table::write(const std::filesystem::path& dir, const std::string& stem, Format format) const
{
    const std::string name = stem + (format == Format::Csv ? ".csv" : ".json");
    auto out = open_out(dir / name);
    if (format == Format::Csv) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            out << (c ? "," : "") << columns[c];
        }
        out << '\n';
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                out << (c ? "," : "") << geometry::format_double(row[c]);
            }
            out << '\n';
        }
    } else {
        out << nlohmann::json{{"columns", columns}, {"rows", rows}}.dump() << '\n';
    }
    return name;
}

const std::vector<std::string>& preset_names()
{
    static const std::vector<std::string> names{"gap-visualization", "layerwise-toy", "trefoil-obstruction",
                                                "projection-bench"};
    return names;
}

bool is_preset(const std::string& name)
{
    const auto& names = preset_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

PresetOutput run_preset(const std::string& name, const PresetOptions& options)
{
    require(is_preset(name), ErrorKind::InvalidArgument, "unknown preset '" + name + "'");
    std::filesystem::create_directories(options.out);
    if (name == "gap-visualization") {
        return gap_visualization_preset(options);
    }
    if (name == "layerwise-toy") {
        return layerwise_toy_preset(options);
    }
    if (name == "trefoil-obstruction") {
        return obstruction_preset(options);
    }
    return projection_bench_preset(options);
}

GapVisualizationConfig GapVisualizationConfig::from_json(const nlohmann::json& j)
{
    require_object(j, "gap-visualization");
    GapVisualizationConfig c;
    c.k_samples = get_or(j, "k_samples", c.k_samples);
    c.w_samples = get_or(j, "w_samples", c.w_samples);
    c.coefficients = get_or(j, "coefficients", c.coefficients);
    c.w_lo = get_or(j, "w_lo", c.w_lo);
    c.w_hi = get_or(j, "w_hi", c.w_hi);
    c.a = get_or(j, "a", c.a);
    c.b = get_or(j, "b", c.b);
    c.tolerance = get_or(j, "tolerance", c.tolerance);
    require(c.k_samples >= 2 && c.w_samples >= 2 && !c.coefficients.empty() && c.w_lo < c.w_hi && c.a != 0.0,
            ErrorKind::InvalidConfig, "gap-visualization: invalid sample counts, coefficients or domain");
    return c;
}

std::vector<GapStep> run_gap_visualization(const GapVisualizationConfig& config, std::uint64_t seed)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const Mat x = geometry::sample_interval(config.k_samples, 0.0, 1.0, seed).points;
    Mat fx(2, x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        fx(0, j) = x(0, j);
        fx(1, j) = 0.5 * std::sin(two_pi * x(0, j));
    }
    Vec lo(1);
    Vec hi(1);
    lo << config.w_lo;
    hi << config.w_hi;
    const Mat w = geometry::sample_box_grid(lo, hi, config.w_samples).points;
    const Vec weights = Vec::Constant(x.cols(), 1.0 / static_cast<double>(x.cols()));

    std::vector<GapStep> steps;
    for (double coefficient : config.coefficients) {
        EvaluableMap g;
        g.in_dim = 1;
        g.out_dim = 2;
        g.eval = [coefficient, a = config.a, b = config.b](const Mat& s) {
            Mat out(2, s.cols());
            for (Eigen::Index j = 0; j < s.cols(); ++j) {
                const double u = a * s(0, j) + b;
                out(0, j) = u;
                out(1, j) = coefficient * 0.5 * std::sin(two_pi * u);
            }
            return out;
        };
        g.domain = Box{lo, hi};
        GapStep step;
        step.coefficient = coefficient;
        step.f_samples = fx;
        step.g_samples = g(w);
        step.gap = estimate_embedding_gap(x, fx, g, w);
        step.bound = wasserstein_bound_check(x, fx, weights, g, step.gap, config.tolerance, seed);
        steps.push_back(std::move(step));
    }
    return steps;
}

LayerwiseToyConfig LayerwiseToyConfig::defaults(std::uint64_t seed)
{
    LayerwiseToyConfig c;
    c.training.seed = seed;
    c.training.lipschitz_log_interval = 100;
    c.training.phases = {PhaseConfig{{3, 4}, LossKind::Manifold, 2000, 3e-3},
                         PhaseConfig{{0, 1, 2}, LossKind::Density, 2000, 3e-3}};
    return c;
}

LayerwiseToyConfig LayerwiseToyConfig::from_json(const nlohmann::json& j, std::uint64_t seed)
{
    require_object(j, "layerwise-toy");
    LayerwiseToyConfig c = defaults(seed);
    if (j.contains("training")) {
        c.training.merge(j.at("training"));
    }
    c.training.seed = seed;
    c.coupling_layers = get_or(j, "coupling_layers", c.coupling_layers);
    c.width = get_or(j, "width", c.width);
    require(c.coupling_layers >= 1 && c.width >= 1, ErrorKind::InvalidConfig, "network size must be positive");
    c.training.validate();
    return c;
}

InjectiveNetwork make_layerwise_toy_network(const LayerwiseToyConfig& config, std::uint64_t seed)
{
    Rng rng(seed);
    FlowBlock head = FlowBlock::autoregressive_stack(1, 2, config.width, rng);
    std::vector<ExpansiveLayer> expansive;
    std::vector<FlowBlock> flows;
    expansive.push_back(ExpansiveLayer::random_linear(1, 2, rng));
    flows.push_back(FlowBlock::coupling_stack(2, config.coupling_layers, config.width, rng));
    expansive.push_back(ExpansiveLayer::random_linear(2, 3, rng));
    flows.push_back(FlowBlock::coupling_stack(3, config.coupling_layers, config.width, rng));
    return InjectiveNetwork(std::move(head), std::move(expansive), std::move(flows));
}

LayerwiseToyResult run_layerwise_toy(const LayerwiseToyConfig& config)
{
    InjectiveNetwork net = make_layerwise_toy_network(config, config.training.seed);
    TrainingTrace trace = run_layerwise(net, geometry::toy_curve_target(), config.training);
    LayerwiseToyResult result{std::move(net), std::move(trace)};
    result.phase1_directed_supinf = result.trace.phases.front().final.directed_supinf;
    result.phase2_sliced_w2 = result.trace.phases.back().final.sliced_w2;
    result.frozen_unchanged = std::all_of(result.trace.phases.begin(), result.trace.phases.end(), [](const auto& p) {
        return p.frozen_hash_before == p.frozen_hash_after;
    });
    return result;
}

ProjectionBenchConfig ProjectionBenchConfig::from_json(const nlohmann::json& j)
{
    require_object(j, "projection-bench");
    ProjectionBenchConfig c;
    c.n = get_or(j, "n", c.n);
    c.trials = get_or(j, "trials", c.trials);
    c.tie_trials = get_or(j, "tie_trials", c.tie_trials);
    require(c.n >= 1 && c.n <= 8, ErrorKind::InvalidConfig, "projection-bench: n must be in [1, 8]");
    require(c.trials >= 1, ErrorKind::InvalidConfig, "projection-bench: trials must be positive");
    return c;
}

ProjectionBenchResult run_projection_bench(const ProjectionBenchConfig& config, std::uint64_t seed)
{
    Rng rng(seed);
    const Eigen::Index n = config.n;
    ProjectionBenchResult result;
    result.instances.columns = {"trial", "residual", "oracle_min", "gap", "preimage_error"};
    result.ties.columns = {"trial", "ties", "expected_minimizers", "oracle_minimizers", "matched"};
    auto draw_layer = [&](Mat& b, Vec& d) {
        b = rng.well_conditioned(n);
        d.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            d(i) = rng.uniform(0.5, 2.0);
        }
    };
    for (std::size_t t = 0; t < config.trials; ++t) {
        Mat b;
        Vec d;
        draw_layer(b, d);
        const Vec y = rng.normal_vector(2 * n);
        const auto res = projection::relu_pseudo_inverse(b, d, y);
        const auto oracle = reference::relu_least_squares(b, d, y);
        double preimage_error = std::numeric_limits<double>::infinity();
        for (const auto& m : oracle.minimizers) {
            preimage_error = std::min(preimage_error, (m - res.x).norm());
        }
        const double gap = res.residual - oracle.min_residual;
        result.oracle_gap_max = std::max(result.oracle_gap_max, gap);
        result.preimage_error_max = std::max(result.preimage_error_max, preimage_error);
        result.instances.rows.push_back(
            {static_cast<double>(t), res.residual, oracle.min_residual, gap, preimage_error});
    }
    for (std::size_t t = 0; t < config.tie_trials; ++t) {
        Mat b;
        Vec d;
        draw_layer(b, d);
        Vec y = rng.normal_vector(2 * n);
        const auto ties = static_cast<Eigen::Index>(1 + rng.below(static_cast<std::uint64_t>(n)));
        for (Eigen::Index i = 0; i < ties; ++i) {
            y(i) = std::abs(y(i)) + 0.1;
            y(i + n) = y(i);
        }
        const auto res = projection::relu_pseudo_inverse(b, d, y);
        const auto oracle = reference::relu_least_squares(b, d, y);
        const double expected = std::ldexp(1.0, static_cast<int>(ties));
        bool matched = false;
        for (const auto& m : oracle.minimizers) {
            matched = matched || (m - res.x).norm() <= 1e-6;
        }
        const bool ok = res.tie_flag && static_cast<double>(oracle.minimizers.size()) == expected &&
                        static_cast<double>(res.minimizer_count) == expected && matched;
        result.ties_ok = result.ties_ok && ok;
        result.ties.rows.push_back({static_cast<double>(t), static_cast<double>(ties), expected,
                                    static_cast<double>(oracle.minimizers.size()), matched ? 1.0 : 0.0});
    }
    return result;
}

Table projection_regions(std::size_t per_axis)
{
    Vec lo = Vec::Constant(2, -2.0);
    Vec hi = Vec::Constant(2, 2.0);
    const auto grid = geometry::sample_box_grid(lo, hi, per_axis);
    const auto labels = projection::map_projection_regions(Mat::Identity(1, 1), Vec::Ones(1), grid);
    Table t{{"y0", "y1", "pattern"}, {}};
    for (Eigen::Index j = 0; j < grid.size(); ++j) {
        t.rows.push_back({grid.points(0, j), grid.points(1, j), std::stod(labels[static_cast<std::size_t>(j)])});
    }
    return t;
}

} // namespace injflow::presets
