#include "injflow/error.hpp"
#include "injflow/geometry.hpp"
#include "injflow/metrics.hpp"
#include "injflow/network.hpp"
#include "injflow/presets.hpp"
#include "injflow/projection.hpp"
#include "injflow/transport.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using namespace injflow;
using nlohmann::json;

constexpr int kExitNumeric = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    json record;
    UsageError(const std::string& msg, json rec) : std::runtime_error(msg), record(std::move(rec)) {}
};

json error_record(const std::string& kind, const std::string& message)
{
    return {{"error", kind}, {"message", message}};
}

int report(const json& record, int code)
{
    std::cerr << record.dump() << '\n';
    return code;
}

json load_config(const std::string& path)
{
    if (path.empty()) {
        return json::object();
    }
    std::ifstream in(path);
    if (!in) {
        throw UsageError("cannot read config", error_record("invalid-config", "cannot read config file '" + path + "'"));
    }
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    try {
        json j = json::parse(text);
        if (!j.is_object()) {
            throw UsageError("config", error_record("invalid-config", "config file must contain a JSON object"));
        }
        return j;
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        std::size_t column = 1;
        const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        for (std::size_t i = 0; i < end; ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        json rec = error_record("invalid-config", std::string("malformed config: ") + e.what());
        rec["file"] = path;
        rec["line"] = line;
        rec["column"] = column;
        throw UsageError("config", rec);
    }
}

bool all_finite_json(const json& j)
{
    if (j.is_number_float()) {
        return std::isfinite(j.get<double>());
    }
    if (j.is_null()) {
        return false;
    }
    if (j.is_structured()) {
        for (const auto& v : j) {
            if (!all_finite_json(v)) {
                return false;
            }
        }
    }
    return true;
}

presets::Format parse_format(const std::string& s)
{
    return s == "json" ? presets::Format::Json : presets::Format::Csv;
}

struct RunArgs {
    std::string preset;
    std::uint64_t seed = 1;
    std::string out = "out";
    std::string config;
    std::string checkpoint;
    std::string format = "csv";
    std::optional<std::size_t> n;
    std::optional<std::size_t> trials;
};

int run_command(const RunArgs& args)
{
    if (!presets::is_preset(args.preset)) {
        std::string names;
        for (const auto& p : presets::preset_names()) {
            names += (names.empty() ? "" : ", ") + p;
        }
        return report(error_record("usage-error", "unknown preset '" + args.preset + "' (expected one of " + names + ")"),
                      kExitUsage);
    }
    if ((args.n || args.trials) && args.preset != "projection-bench") {
        return report(error_record("usage-error", "--n and --trials apply to projection-bench only"), kExitUsage);
    }
    presets::PresetOptions opt;
    opt.seed = args.seed;
    opt.out = args.out;
    opt.format = parse_format(args.format);
    opt.config = load_config(args.config);
    if (args.n) {
        opt.config["n"] = *args.n;
    }
    if (args.trials) {
        opt.config["trials"] = *args.trials;
    }
    const auto start = std::chrono::steady_clock::now();
    presets::PresetOutput output = presets::run_preset(args.preset, opt);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!args.checkpoint.empty()) {
        if (args.preset != "layerwise-toy") {
            return report(error_record("usage-error", "--checkpoint applies to layerwise-toy only"), kExitUsage);
        }
        std::filesystem::copy_file(opt.out / "checkpoint.json", args.checkpoint,
                                   std::filesystem::copy_options::overwrite_existing);
    }
    if (!all_finite_json(output.metrics)) {
        return report(error_record("numeric-error", "preset produced non-finite metrics"), kExitNumeric);
    }
    json summary{{"preset", args.preset},
                 {"seed", args.seed},
                 {"wall_time", wall},
                 {"format", args.format},
                 {"files", output.files},
                 {"metrics", output.metrics}};
    std::ofstream(opt.out / "summary.json") << summary.dump(1) << '\n';
    return 0;
}

struct ProjectArgs {
    std::string checkpoint;
    std::string input;
    std::string out;
    std::string format = "csv";
};

int project_command(const ProjectArgs& args)
{
    const InjectiveNetwork net = load_checkpoint(args.checkpoint);
    const Mat queries = geometry::read_csv(args.input);
    require(queries.rows() == net.out_dim(), ErrorKind::InvalidArgument,
            "query dimension " + std::to_string(queries.rows()) + " does not match network output dimension " +
                std::to_string(net.out_dim()));
    presets::Table table;
    for (const char* prefix : {"query", "preimage", "rangepoint"}) {
        const Eigen::Index dim = std::string(prefix) == "preimage" ? net.in_dim() : net.out_dim();
        for (Eigen::Index i = 0; i < dim; ++i) {
            table.columns.push_back(prefix + std::to_string(i));
        }
    }
    table.columns.push_back("residual");
    table.columns.push_back("tie_flag");
    for (Eigen::Index j = 0; j < queries.cols(); ++j) {
        const Vec y = queries.col(j);
        const auto res = projection::project_to_range(net, y);
        std::vector<double> row(y.data(), y.data() + y.size());
        row.insert(row.end(), res.x.data(), res.x.data() + res.x.size());
        row.insert(row.end(), res.y_hat.data(), res.y_hat.data() + res.y_hat.size());
        row.push_back(res.residual);
        row.push_back(res.tie_flag ? 1.0 : 0.0);
        table.rows.push_back(std::move(row));
    }
    const std::filesystem::path out = args.out.empty() ? std::filesystem::path("out") : std::filesystem::path(args.out);
    std::filesystem::create_directories(out);
    table.write(out, "projection", parse_format(args.format));
    return 0;
}

struct GapArgs {
    std::string checkpoint;
    std::string target;
    std::string w_samples;
    std::string out;
    std::string family = "affine";
    bool exact = false;
    bool sliced = false;
    std::uint64_t seed = 1;
};

int gap_command(const GapArgs& args)
{
    const InjectiveNetwork net = load_checkpoint(args.checkpoint);
    const Mat target = geometry::read_csv(args.target);
    const Mat w = geometry::read_csv(args.w_samples);
    require(target.rows() == net.out_dim() && w.rows() == net.in_dim(), ErrorKind::InvalidArgument,
            "sample dimensions do not match the checkpoint");
    const EvaluableMap g = network_map(net, Box::bounding(w));
    const auto family = args.family == "small-flow" ? CandidateFamily::SmallFlow : CandidateFamily::Affine;
    const auto gap = estimate_embedding_gap(target, target, g, w, family, args.seed);
    const EmpiricalMeasure f_measure = uniform_measure(target);
    const EmpiricalMeasure g_measure = uniform_measure(g(gap.candidate.apply(target)));
    const bool use_exact =
        args.exact || (!args.sliced && f_measure.size() + g_measure.size() <= transport::kExactBudget);
    json result{{"lower", gap.lower}, {"upper", gap.upper}, {"sample_count", gap.sample_count},
                {"candidate", gap.candidate.to_json()}};
    if (use_exact) {
        result["w2_exact"] = transport::wasserstein2_exact(f_measure, g_measure);
    } else {
        result["w2_sliced"] = transport::wasserstein2_sliced(f_measure, g_measure, kSlicedProjections, args.seed);
    }
    result["bound_check"] =
        wasserstein_bound_check(target, target, f_measure.weights, g, gap, 0.01, args.seed).to_json();
    if (args.out.empty()) {
        std::cout << result.dump(1) << '\n';
    } else {
        std::ofstream(args.out) << result.dump(1) << '\n';
    }
    return 0;
}

int exit_code_for(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::InvalidConfig:
        return kExitUsage;
    default:
        return kExitNumeric;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Injective flow networks: experiments, range projection and embedding-gap diagnostics"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run an experiment preset");
    run_cmd->add_option("preset", run.preset, "gap-visualization | layerwise-toy | trefoil-obstruction | projection-bench")
        ->required();
    run_cmd->add_option("--seed", run.seed, "Random seed");
    run_cmd->add_option("--out", run.out, "Output directory (default ./out)");
    run_cmd->add_option("--config", run.config, "JSON config file; flags override its values");
    run_cmd->add_option("--checkpoint", run.checkpoint, "Also write the trained network here (layerwise-toy)");
    run_cmd->add_option("--format", run.format, "Table format")->check(CLI::IsMember({"csv", "json"}));
    run_cmd->add_option("--n", run.n, "Latent dimension (projection-bench)");
    run_cmd->add_option("--trials", run.trials, "Number of random instances (projection-bench)");

    ProjectArgs project;
    auto* project_cmd = app.add_subcommand("project", "Project query points onto a network's range");
    project_cmd->add_option("--checkpoint", project.checkpoint, "Network checkpoint (JSON)")->required();
    project_cmd->add_option("--input", project.input, "CSV of query points")->required();
    project_cmd->add_option("--out", project.out, "Output directory (default ./out)");
    project_cmd->add_option("--format", project.format, "Table format")->check(CLI::IsMember({"csv", "json"}));

    GapArgs gap;
    auto* gap_cmd = app.add_subcommand("gap", "Embedding-gap interval and W2 bound check");
    gap_cmd->add_option("--checkpoint", gap.checkpoint, "Network g (JSON checkpoint)")->required();
    gap_cmd->add_option("--target", gap.target, "CSV of target manifold samples")->required();
    gap_cmd->add_option("--w-samples", gap.w_samples, "CSV of latent domain samples W")->required();
    gap_cmd->add_option("--out", gap.out, "Write the JSON result here instead of stdout");
    gap_cmd->add_option("--family", gap.family, "Candidate family")->check(CLI::IsMember({"affine", "small-flow"}));
    gap_cmd->add_option("--seed", gap.seed, "Random seed");
    auto* exact = gap_cmd->add_flag("--exact", gap.exact, "Force the exact W2 solver");
    auto* sliced = gap_cmd->add_flag("--sliced", gap.sliced, "Force the sliced W2 estimator");
    exact->excludes(sliced);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report(error_record("usage-error", e.what()), kExitUsage);
    }

    try {
        if (*run_cmd) {
            return run_command(run);
        }
        if (*project_cmd) {
            return project_command(project);
        }
        return gap_command(gap);
    } catch (const UsageError& e) {
        return report(e.record, kExitUsage);
    } catch (const Error& e) {
        json rec = error_record(std::string(to_string(e.kind())), e.message());
        if (e.stage()) {
            rec["stage"] = *e.stage();
        }
        return report(rec, exit_code_for(e.kind()));
    } catch (const std::exception& e) {
        return report(error_record("internal-error", e.what()), kExitNumeric);
    }
}
