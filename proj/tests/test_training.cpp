#include "injflow/error.hpp"
#include "injflow/metrics.hpp"
#include "injflow/optimizer.hpp"
#include "injflow/training.hpp"
#include "injflow/transport.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace injflow;

namespace {

Mat cols(std::initializer_list<std::initializer_list<double>> points)
{
    const auto dim = static_cast<Eigen::Index>(points.begin()->size());
    Mat m(dim, static_cast<Eigen::Index>(points.size()));
    Eigen::Index j = 0;
    for (const auto& p : points) {
        Eigen::Index i = 0;
        for (double v : p) {
            m(i++, j) = v;
        }
        ++j;
    }
    return m;
}

geometry::ManifoldTarget interval_target(std::string name, int ambient, std::function<Vec(const Vec&)> map)
{
    geometry::ManifoldTarget t;
    t.name = std::move(name);
    t.intrinsic_dim = 1;
    t.ambient_dim = ambient;
    t.domain = geometry::DomainKind::Interval;
    t.map = std::move(map);
    return t;
}

FlowBlock trainable_identity(Eigen::Index dim)
{
    FlowBlock block(dim);
    block.push_back(AutoregressiveLayer::identity(dim));
    return block;
}

InjectiveNetwork padded_identity()
{
    std::vector<ExpansiveLayer> exp;
    exp.push_back(ExpansiveLayer::zero_pad(1, 2));
    std::vector<FlowBlock> flows;
    flows.push_back(trainable_identity(2));
    return InjectiveNetwork(trainable_identity(1), std::move(exp), std::move(flows));
}

LossSpec make_loss(LossKind kind, const Mat& target, Rng& rng)
{
    LossSpec spec;
    spec.kind = kind;
    spec.target = target;
    if (kind == LossKind::Density) {
        spec.directions = transport::random_directions(target.rows(), 16, rng.below(1000));
    }
    return spec;
}

std::vector<std::size_t> all_stages(const InjectiveNetwork& net)
{
    std::vector<std::size_t> stages(net.stage_count());
    for (std::size_t s = 0; s < stages.size(); ++s) {
        stages[s] = s;
    }
    return stages;
}

TrainingConfig toy_config()
{
    TrainingConfig config;
    config.phases = {PhaseConfig{{1, 2}, LossKind::Manifold, 40, 1e-2}, PhaseConfig{{0}, LossKind::Density, 40, 1e-2}};
    config.batch_size = 32;
    config.seed = 11;
    config.lipschitz_log_interval = 10;
    config.eval_samples = 64;
    config.n_projections = 16;
    return config;
}

InjectiveNetwork toy_network(std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<ExpansiveLayer> exp;
    exp.push_back(ExpansiveLayer::random_linear(1, 3, rng));
    std::vector<FlowBlock> flows;
    flows.push_back(FlowBlock::coupling_stack(3, 2, 8, rng));
    return InjectiveNetwork(FlowBlock::autoregressive_stack(1, 1, 8, rng), std::move(exp), std::move(flows));
}

} // namespace

TEST_CASE("chamfer loss examples")
{
    Rng rng(1);
    const Mat x = rng.normal_matrix(2, 10);
    Mat shuffled = x;
    shuffled.col(0).swap(shuffled.col(7));
    CHECK(chamfer_loss(x, shuffled).value == 0.0);
    CHECK(chamfer_loss(cols({{0, 0}}), cols({{3, 4}})).value == 50.0);
    CHECK_THROWS_AS(chamfer_loss(Mat(2, 0), x), Error);
}

TEST_CASE("zero chamfer loss forces coverage")
{
    Rng rng(2);
    for (int k = 0; k < 20; ++k) {
        const Mat target = rng.normal_matrix(3, 15);
        Mat output = target;
        for (Eigen::Index j = 0; j < output.cols(); ++j) {
            output.col(j).swap(output.col(static_cast<Eigen::Index>(rng.below(15))));
        }
        REQUIRE(chamfer_loss(output, target).value == 0.0);
        CHECK(directed_supinf(target, output) == 0.0);
    }
}

TEST_CASE("sliced loss examples")
{
    Rng rng(3);
    const Mat x = rng.normal_matrix(2, 30);
    const Mat dirs = transport::random_directions(2, 32, 5);
    CHECK(sliced_w2_loss(x, uniform_measure(x), dirs).value == 0.0);
    const Mat line = rng.normal_matrix(1, 64);
    const double c = 0.75;
    const Mat shifted = line.array() + c;
    const Mat one = Mat::Ones(1, 1);
    CHECK(sliced_w2_loss(shifted, uniform_measure(line), one).value == doctest::Approx(c * c).epsilon(1e-12));
    CHECK_THROWS_AS(sliced_w2_loss(Mat(1, 0), uniform_measure(line), one), Error);
}

TEST_CASE("loss names")
{
    CHECK(loss_kind_from_string("manifold") == LossKind::Manifold);
    CHECK(loss_kind_from_string("density") == LossKind::Density);
    CHECK(to_string(LossKind::Paired) == "paired");
    try {
        loss_kind_from_string("likelihood");
        FAIL("expected invalid config");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidConfig);
    }
}

TEST_CASE("density loss fits a linear map")
{
    const auto target = interval_target("line", 1, [](const Vec& x) { return Vec(2.0 * x.array() + 1.0); });
    InjectiveNetwork net(trainable_identity(1), {}, {});
    TrainingConfig config;
    config.phases = {PhaseConfig{{0}, LossKind::Density, 2000, 1e-2}};
    config.batch_size = 128;
    config.seed = 3;
    config.lipschitz_log_interval = 100;
    config.eval_samples = 256;
    config.n_projections = 1;
    const auto trace = run_layerwise(net, target, config);
    REQUIRE(trace.records.size() >= 2);
    CHECK(trace.records.back().loss < 1e-3);
    CHECK(trace.records.back().loss < trace.records.front().loss);
}

TEST_CASE("gradients vanish at a perfect fit")
{
    Rng rng(4);
    for (auto kind : {LossKind::Manifold, LossKind::Density, LossKind::Paired}) {
        auto net = testing::random_network(rng, ExpansiveKind::Linear);
        const Mat latent = rng.normal_matrix(net.in_dim(), 20);
        const auto loss = make_loss(kind, net.forward(latent), rng);
        const auto result = compute_gradients(net, loss, latent, all_stages(net));
        CHECK(result.loss <= 1e-24);
        for (const auto& ref : result.params) {
            CHECK(ref.param->grad.isZero(1e-10));
        }
    }
}

TEST_CASE("linear layer gradient matches the closed form")
{
    Rng rng(5);
    std::vector<ExpansiveLayer> exp;
    exp.push_back(ExpansiveLayer::random_linear(2, 4, rng));
    std::vector<FlowBlock> flows;
    flows.emplace_back(4);
    InjectiveNetwork net(FlowBlock(2), std::move(exp), std::move(flows));
    const Mat x = rng.normal_matrix(2, 25);
    const Mat y = rng.normal_matrix(4, 25);
    LossSpec loss;
    loss.kind = LossKind::Paired;
    loss.target = y;
    const auto result = compute_gradients(net, loss, x, {1});
    REQUIRE(result.params.size() == 1);
    const Mat w = net.expansive(1).linear_weight();
    const Mat expected = 2.0 / 25.0 * (w * x - y) * x.transpose();
    CHECK((result.params.front().param->grad - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("analytic gradients match central differences")
{
    Rng rng(6);
    for (auto exp_kind : {ExpansiveKind::ZeroPad, ExpansiveKind::Linear, ExpansiveKind::InjectiveRelu,
                          ExpansiveKind::InjectiveReluNetwork}) {
        for (auto loss_kind : {LossKind::Manifold, LossKind::Density, LossKind::Paired}) {
            for (int setting = 0; setting < 10; ++setting) {
                auto net = testing::random_network(rng, exp_kind);
                const Mat latent = rng.normal_matrix(net.in_dim(), 12);
                const auto loss = make_loss(loss_kind, rng.normal_matrix(net.out_dim(), 12), rng);
                const auto check = testing::check_network_gradients(net, loss, latent, all_stages(net), 100, rng);
                INFO(to_string(exp_kind), " ", to_string(loss_kind), " ", check.worst_path);
                CHECK(check.checked > 0);
                CHECK(check.max_relative_error <= 1e-4);
            }
        }
    }
}

TEST_CASE("gradients of a sub-range of stages leave the others untouched")
{
    Rng rng(7);
    auto net = testing::random_network(rng, ExpansiveKind::Linear);
    const Mat latent = rng.normal_matrix(net.in_dim(), 10);
    const auto loss = make_loss(LossKind::Paired, rng.normal_matrix(net.out_dim(), 10), rng);
    const auto result = compute_gradients(net, loss, latent, {2});
    for (const auto& ref : result.params) {
        CHECK(ref.path.rfind("stage2", 0) == 0);
    }
    for (const auto& ref : net.parameters(0)) {
        CHECK(ref.param->grad.isZero(0.0));
    }
}

TEST_CASE("non-finite gradients are reported with their path")
{
    Parameter p{"w", Mat::Ones(1, 1)};
    p.grad = Mat::Constant(1, 1, std::nan(""));
    ParamList params{{"stage0.w", &p}};
    try {
        check_gradients(params);
        FAIL("expected numeric error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NumericError);
        CHECK(e.message().find("stage0.w") != std::string::npos);
    }
}

TEST_CASE("training configs are validated")
{
    const auto net = toy_network(1);
    auto config = toy_config();
    CHECK_NOTHROW(config.validate(net));
    auto kind_of = [&](const TrainingConfig& c) {
        try {
            c.validate(net);
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::InternalError;
    };
    auto overlap = config;
    overlap.phases[1].stages = {0, 2};
    CHECK(kind_of(overlap) == ErrorKind::InvalidConfig);
    auto unknown = config;
    unknown.phases[0].stages = {7};
    CHECK(kind_of(unknown) == ErrorKind::InvalidConfig);
    auto no_steps = config;
    no_steps.phases[0].steps = 0;
    CHECK(kind_of(no_steps) == ErrorKind::InvalidConfig);
    auto bad_lr = config;
    bad_lr.phases[0].learning_rate = -1.0;
    CHECK(kind_of(bad_lr) == ErrorKind::InvalidConfig);
    auto no_batch = config;
    no_batch.batch_size = 0;
    CHECK(kind_of(no_batch) == ErrorKind::InvalidConfig);
}

TEST_CASE("training configs round-trip through JSON")
{
    const auto config = toy_config();
    const auto back = TrainingConfig::from_json(nlohmann::json::parse(config.to_json().dump()));
    CHECK(back.to_json() == config.to_json());
    auto merged = config;
    merged.merge(nlohmann::json{{"batch_size", 7}, {"loss_weights", {{"density", 0.5}}}});
    CHECK(merged.batch_size == 7);
    CHECK(merged.density_weight == 0.5);
    CHECK(merged.manifold_weight == config.manifold_weight);
    CHECK_THROWS_AS(TrainingConfig::from_json(nlohmann::json{{"batch_size", "many"}}), Error);
    CHECK_THROWS_AS(TrainingConfig::from_json(nlohmann::json{{"phases", {{{"stages", {0}}, {"loss", "gan"}}}}}),
                    Error);
}

TEST_CASE("identity target is fitted from the first record")
{
    const auto target = interval_target("flat", 2, [](const Vec& x) {
        Vec y = Vec::Zero(2);
        y(0) = x(0);
        return y;
    });
    auto net = padded_identity();
    TrainingConfig config;
    config.phases = {PhaseConfig{{1, 2}, LossKind::Manifold, 5, 1e-3}};
    config.batch_size = 32;
    config.lipschitz_log_interval = 5;
    config.eval_samples = 64;
    const auto trace = run_layerwise(net, target, config);
    REQUIRE_FALSE(trace.records.empty());
    CHECK(trace.records.front().step == 0);
    CHECK(trace.records.front().loss <= 1e-6);
    CHECK(trace.records.front().directed_supinf <= 1e-6);
}

TEST_CASE("the density phase leaves frozen stages bit-identical")
{
    const auto target = geometry::toy_curve_target();
    const auto config = toy_config();
    auto net = toy_network(2);
    const auto trace = run_layerwise(net, target, config);
    REQUIRE(trace.phases.size() == 2);
    CHECK(trace.phases[1].frozen_hash_before == trace.phases[1].frozen_hash_after);

    auto phase_one_only = config;
    phase_one_only.phases.resize(1);
    auto reference_net = toy_network(2);
    run_layerwise(reference_net, target, phase_one_only);
    CHECK(hash_parameters(net.parameters({1, 2})) == hash_parameters(reference_net.parameters({1, 2})));
    CHECK(net.to_json()["stages"][2] == reference_net.to_json()["stages"][2]);
    CHECK(hash_parameters(net.parameters(0)) != hash_parameters(reference_net.parameters(0)));
}

TEST_CASE("training is reproducible under a seed")
{
    const auto target = geometry::toy_curve_target();
    auto a = toy_network(3);
    auto b = toy_network(3);
    std::ostringstream csv_a;
    std::ostringstream csv_b;
    run_layerwise(a, target, toy_config()).write_csv(csv_a);
    run_layerwise(b, target, toy_config()).write_csv(csv_b);
    CHECK(csv_a.str() == csv_b.str());
    CHECK(csv_a.str().rfind("phase,step,loss,directed_supinf,sliced_w2,lipschitz_estimate\n", 0) == 0);
}

TEST_CASE("trace records are finite with increasing steps")
{
    const auto target = geometry::toy_curve_target();
    auto net = toy_network(4);
    const auto trace = run_layerwise(net, target, toy_config());
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        const auto& r = trace.records[i];
        CHECK(std::isfinite(r.loss));
        CHECK(std::isfinite(r.directed_supinf));
        CHECK(std::isfinite(r.sliced_w2));
        CHECK(std::isfinite(r.lipschitz_estimate));
        if (i > 0) {
            CHECK(r.step > trace.records[i - 1].step);
        }
    }
}

TEST_CASE("short obstruction run produces finite paired traces")
{
    auto config = ObstructionConfig::defaults();
    config.coupling_layers = 2;
    config.width = 8;
    config.training.phases[0].steps = 20;
    config.training.phases[1].steps = 20;
    config.training.batch_size = 32;
    config.training.lipschitz_log_interval = 10;
    config.training.eval_samples = 64;
    const auto result = run_obstruction_experiment(config);
    for (const auto* trace : {&result.control, &result.treatment}) {
        REQUIRE(trace->records.size() >= 3);
        for (std::size_t i = 0; i < trace->records.size(); ++i) {
            CHECK(std::isfinite(trace->records[i].sliced_w2));
            CHECK(std::isfinite(trace->records[i].lipschitz_estimate));
            if (i > 0) {
                CHECK(trace->records[i].step > trace->records[i - 1].step);
            }
        }
    }
    const auto j = result.to_json(config);
    CHECK(j.contains("design_constants"));
    const auto net = make_extendable_network(config, 1);
    CHECK(net.in_dim() == 2);
    CHECK(net.out_dim() == 3);
    CHECK(net.expansive(1).kind() == ExpansiveKind::Linear);
}
