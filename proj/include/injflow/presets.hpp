#pragma once

#include "injflow/metrics.hpp"
#include "injflow/network.hpp"
#include "injflow/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace injflow::presets {

enum class Format { Csv, Json };

// Numeric table written as CSV (header + %.17g) or JSON {columns, rows}.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    static Table points(const Mat& points, const std::string& prefix = "x");
    static Table trace(const TrainingTrace& trace);
    // Writes `<stem>.csv` or `<stem>.json`; returns the file name.
    std::string write(const std::filesystem::path& dir, const std::string& stem, Format format) const;
};

struct PresetOptions {
    std::uint64_t seed = 1;
    std::filesystem::path out = "out";
    Format format = Format::Csv;
    nlohmann::json config = nlohmann::json::object();
};

struct PresetOutput {
    nlohmann::json metrics = nlohmann::json::object();
    std::vector<std::string> files;
};

const std::vector<std::string>& preset_names();
bool is_preset(const std::string& name);
// Runs the preset and writes its data files into options.out.
PresetOutput run_preset(const std::string& name, const PresetOptions& options);

// Gap visualization: f(t) = (t, 0.5 sin 2 pi t) on K = [0, 1] against
// g_i(s) = (a s + b, c_i 0.5 sin(2 pi (a s + b))) on W = [w_lo, w_hi].
struct GapVisualizationConfig {
    std::size_t k_samples = 200;
    std::size_t w_samples = 1000;
    std::vector<double> coefficients{0.0, 0.5, 1.0};
    double w_lo = -0.25;
    double w_hi = 1.25;
    double a = 0.8;
    double b = 0.1;
    double tolerance = 0.01;

    static GapVisualizationConfig from_json(const nlohmann::json& j);
};

struct GapStep {
    double coefficient = 0.0;
    Mat f_samples;
    Mat g_samples;
    EmbeddingGapEstimate gap;
    BoundCheckReport bound;
};

std::vector<GapStep> run_gap_visualization(const GapVisualizationConfig& config, std::uint64_t seed);

struct LayerwiseToyConfig {
    TrainingConfig training;
    std::size_t coupling_layers = 4;
    Eigen::Index width = 32;

    static LayerwiseToyConfig defaults(std::uint64_t seed);
    static LayerwiseToyConfig from_json(const nlohmann::json& j, std::uint64_t seed);
};

// T_0 (1-D) -> R_1 linear 1->2 -> T_1 couplings -> R_2 linear 2->3 -> T_2 couplings.
InjectiveNetwork make_layerwise_toy_network(const LayerwiseToyConfig& config, std::uint64_t seed);

struct LayerwiseToyResult {
    InjectiveNetwork net;
    TrainingTrace trace;
    double phase1_directed_supinf = 0.0;
    double phase2_sliced_w2 = 0.0;
    bool frozen_unchanged = false;
};

LayerwiseToyResult run_layerwise_toy(const LayerwiseToyConfig& config);

struct ProjectionBenchConfig {
    Eigen::Index n = 3;
    std::size_t trials = 500;
    std::size_t tie_trials = 50;

    static ProjectionBenchConfig from_json(const nlohmann::json& j);
};

struct ProjectionBenchResult {
    Table instances;  // trial, residual, oracle_min, gap, preimage_error
    Table ties;       // trial, ties, expected_minimizers, oracle_minimizers, matched
    double oracle_gap_max = 0.0;
    double preimage_error_max = 0.0;
    bool ties_ok = true;
};

// Random well-conditioned B, positive diagonal D and Gaussian queries, compared
// with the brute-force oracle.
ProjectionBenchResult run_projection_bench(const ProjectionBenchConfig& config, std::uint64_t seed);

// Sign-pattern labels of a grid over [-2, 2]^2 for B = D = [1].
Table projection_regions(std::size_t per_axis = 100);

} // namespace injflow::presets
