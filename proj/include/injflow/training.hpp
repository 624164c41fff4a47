#pragma once

#include "injflow/geometry.hpp"
#include "injflow/measure.hpp"
#include "injflow/network.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace injflow {

enum class LossKind { Manifold, Density, Paired };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

// Loss value and its gradient with respect to the network outputs.
struct LossValue {
    double value = 0.0;
    Mat grad;
};

// Symmetric squared Chamfer distance: mean over targets of the squared distance
// to the closest output plus mean over outputs of the squared distance to the
// closest target.
LossValue chamfer_loss(const Mat& output, const Mat& target);
// Mean over directions (columns, unit norm) of the squared 1-D W2 between the
// projected uniform output batch and the projected target measure.
LossValue sliced_w2_loss(const Mat& output, const EmpiricalMeasure& target, const Mat& directions);
// Mean over the batch of |output_j - target_j|^2.
LossValue paired_loss(const Mat& output, const Mat& target);

double manifold_loss(const InjectiveNetwork& net, const Mat& latent, const Mat& target);
double density_loss(const InjectiveNetwork& net, const Mat& latent, const EmpiricalMeasure& target,
                    const Mat& directions);

struct LossSpec {
    LossKind kind = LossKind::Manifold;
    Mat target;
    Vec target_weights;  // density loss only; empty means uniform
    Mat directions;      // density loss only
    double weight = 1.0;

    LossValue evaluate(const Mat& output) const;
};

struct GradientResult {
    double loss = 0.0;
    ParamList params;
};

// Reverse pass through every stage >= min(stages). Gradients of the listed
// stages' parameters are left in Parameter::grad. Throws numeric-error with
// the parameter path when a gradient is not finite.
GradientResult compute_gradients(InjectiveNetwork& net, const LossSpec& loss, const Mat& latent,
                                 const std::vector<std::size_t>& stages);

struct PhaseConfig {
    std::vector<std::size_t> stages;
    LossKind loss = LossKind::Manifold;
    std::size_t steps = 1;
    double learning_rate = 1e-3;
};

struct TrainingConfig {
    std::vector<PhaseConfig> phases;
    std::size_t batch_size = 256;
    std::uint64_t seed = 0;
    double manifold_weight = 1.0;
    double density_weight = 1.0;
    std::size_t lipschitz_log_interval = 50;
    std::size_t n_projections = 64;
    std::size_t eval_samples = 512;

    // Throws invalid-config on bad values, unknown stages or phases sharing a stage.
    void validate(const InjectiveNetwork& net) const;
    void validate() const;

    nlohmann::json to_json() const;
    // Missing keys keep their defaults; wrong types or values throw invalid-config.
    static TrainingConfig from_json(const nlohmann::json& j);
    TrainingConfig& merge(const nlohmann::json& overrides);
};

struct TraceRecord {
    std::size_t phase = 0;
    std::size_t step = 0;
    double loss = 0.0;
    double directed_supinf = 0.0;
    double sliced_w2 = 0.0;
    double lipschitz_estimate = 0.0;
};

struct PhaseSummary {
    std::vector<std::size_t> stages;
    LossKind loss = LossKind::Manifold;
    std::size_t steps = 0;
    std::uint64_t frozen_hash_before = 0;
    std::uint64_t frozen_hash_after = 0;
    TraceRecord final;
};

struct TrainingTrace {
    std::vector<TraceRecord> records;
    std::vector<PhaseSummary> phases;

    void write_csv(std::ostream& out) const;
    void write_csv(const std::string& path) const;
    nlohmann::json to_json() const;
};

inline constexpr std::size_t kEvalProjections = 128;

// Fixed evaluation data for trace records: a latent grid and f on the same grid.
struct EvaluationSet {
    Mat latent;
    Mat target;
    Mat directions;
};

EvaluationSet make_evaluation_set(const geometry::ManifoldTarget& target, std::size_t count, std::uint64_t seed);

TraceRecord evaluate_record(const InjectiveNetwork& net, const EvaluationSet& eval, LossKind loss);

// Runs the phase schedule. Each step draws a batch from the uniform law on K
// and compares E(x) with f(x). Records are taken before training and after
// every `lipschitz_log_interval` steps and at the end of every phase.
TrainingTrace run_layerwise(InjectiveNetwork& net, const geometry::ManifoldTarget& target,
                            const TrainingConfig& config);

struct ObstructionConfig {
    TrainingConfig training;
    std::size_t coupling_layers = 8;
    Eigen::Index width = 32;
    double control_radius = 2.0;
    double control_tilt = 0.5;
    double trefoil_scale = 1.0;
    // Experiment-design constants.
    double lipschitz_ceiling = 20.0;
    double blowup_factor = 10.0;
    double control_w2_threshold = 0.05;
    double treatment_w2_threshold = 0.1;

    static ObstructionConfig defaults();
    nlohmann::json to_json() const;
    static ObstructionConfig from_json(const nlohmann::json& j);
};

struct ObstructionResult {
    TrainingTrace control;
    TrainingTrace treatment;
    double control_final_lipschitz = 0.0;
    double control_final_sliced_w2 = 0.0;
    double treatment_min_sliced_w2 = 0.0;
    double treatment_max_lipschitz = 0.0;
    bool control_passed = false;
    // Steps of the treatment trace with sliced_w2 below its threshold.
    std::size_t treatment_qualifying_steps = 0;
    bool treatment_passed = false;

    nlohmann::json to_json(const ObstructionConfig& config) const;
};

// R: R^2 -> R^3 full-rank linear followed by a coupling block.
InjectiveNetwork make_extendable_network(const ObstructionConfig& config, std::uint64_t seed);

// Trains the same initial network with identical budgets toward the planar
// circle (control) and the trefoil (treatment).
ObstructionResult run_obstruction_experiment(const ObstructionConfig& config);

} // namespace injflow
