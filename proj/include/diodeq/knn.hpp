#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "diodeq/regression.hpp"

namespace diodeq {

// Minkowski distance (sum |x_i-y_i|^p)^(1/p); p = inf gives Chebyshev.
double minkowski_distance(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double p);

struct KnnConfig {
    std::size_t k = 4;
    double p = 2.0;  // Minkowski exponent, >= 1 or infinity
    enum class Weighting { Uniform, InverseDistance };
    enum class Search { Brute, KdTree };
    Weighting weighting = Weighting::InverseDistance;
    Search search = Search::Brute;

    void validate() const;
    nlohmann::json to_json() const;
    static KnnConfig from_json(const nlohmann::json& j);
};

// Lazy learner: fit stores the data verbatim. Predictions use the k
// nearest neighbours under the configured metric with distance ties broken
// by the lower training index; brute force and the kd-tree return
// identical neighbour sets. A query at zero distance from any stored row
// short-circuits to the mean target of all zero-distance rows.
class KnnRegressor : public Regressor {
public:
    KnnRegressor() = default;
    explicit KnnRegressor(KnnConfig config) : config_(std::move(config)) {}

    void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) override;
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override;
    bool fitted() const override { return fitted_; }

    const KnnConfig& config() const { return config_; }
    std::size_t train_size() const { return static_cast<std::size_t>(train_X_.rows()); }

    // (index, distance) pairs of the k nearest neighbours, tie rule applied.
    std::vector<std::pair<std::size_t, double>> neighbours(const Eigen::VectorXd& query) const;

    nlohmann::json to_json() const;
    static KnnRegressor from_json(const nlohmann::json& j);

private:
    struct KdNode {
        std::size_t point = 0;
        int axis = 0;
        std::int32_t left = -1;
        std::int32_t right = -1;
    };

    void build_kdtree();
    std::int32_t build_kdtree(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi,
                              int depth);
    void kd_search(std::int32_t node, const Eigen::VectorXd& query,
                   std::vector<std::pair<double, std::size_t>>& heap) const;

    KnnConfig config_;
    Eigen::MatrixXd train_X_;
    Eigen::VectorXd train_y_;
    std::vector<KdNode> nodes_;
    std::int32_t root_ = -1;
    bool fitted_ = false;
};

} // namespace diodeq
