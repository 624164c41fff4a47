#include "injflow/parameter.hpp"
#include "injflow/error.hpp"

namespace injflow {

std::uint64_t hash_parameters(const ParamList& params)
{
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& ref : params) {
        const auto& v = ref.param->value;
        h = hash_bytes(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())), h);
    }
    return h;
}

nlohmann::json matrix_to_json(const Mat& m)
{
    return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", flatten_row_major(m)}};
}

Mat matrix_from_json(const nlohmann::json& j)
{
    try {
        const auto rows = j.at("rows").get<Eigen::Index>();
        const auto cols = j.at("cols").get<Eigen::Index>();
        const auto data = j.at("data").get<std::vector<double>>();
        require(rows >= 0 && cols >= 0 && static_cast<Eigen::Index>(data.size()) == rows * cols,
                ErrorKind::InvalidArgument, "matrix size does not match its data");
        return from_row_major(data, rows, cols);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidArgument, std::string("malformed matrix: ") + e.what());
    }
}

nlohmann::json vector_to_json(const Vec& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

Vec vector_from_json(const nlohmann::json& j)
{
    try {
        const auto data = j.get<std::vector<double>>();
        return Eigen::Map<const Vec>(data.data(), static_cast<Eigen::Index>(data.size()));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidArgument, std::string("malformed vector: ") + e.what());
    }
}

} // namespace injflow
