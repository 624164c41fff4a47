#pragma once

#include "injflow/linalg.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace injflow {

// A trainable tensor plus the gradient accumulated by backward passes.
struct Parameter {
    std::string name;
    Mat value;
    Mat grad;

    Parameter() = default;
    Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct ParamRef {
    std::string path;
    Parameter* param = nullptr;
};

using ParamList = std::vector<ParamRef>;

std::uint64_t hash_parameters(const ParamList& params);

// Intermediate values kept by a forward pass for the matching backward pass.
struct Cache {
    virtual ~Cache() = default;
};

using CachePtr = std::unique_ptr<Cache>;

nlohmann::json matrix_to_json(const Mat& m);
Mat matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vec& v);
Vec vector_from_json(const nlohmann::json& j);

} // namespace injflow
