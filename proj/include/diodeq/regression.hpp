#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "diodeq/errors.hpp"

namespace diodeq {

struct FitReport {
    std::optional<double> train_mse;
    std::optional<double> test_mse;
    std::optional<double> validation_mse;
    std::optional<double> r2;
    double wall_time_seconds = 0.0;
    std::string model_id;
    nlohmann::json hyperparameters = nlohmann::json::object();

    nlohmann::json to_json() const;
    static FitReport from_json(const nlohmann::json& j);
};

// Common contract every regression engine implements.
class Regressor {
public:
    virtual ~Regressor() = default;

    virtual void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) = 0;
    virtual Eigen::VectorXd predict(const Eigen::MatrixXd& X) const = 0;
    virtual bool fitted() const = 0;

protected:
    void require_fitted() const {
        if (!fitted())
            throw Error("predict called before fit");
    }
};

double mse(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);
double r2_score(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);

// omega = (X^T X)^(-1) X^T Y, computed through a rank-revealing QR.
Eigen::VectorXd linear_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// Closed-form linear model; prepends an intercept column by default.
class LinearBaseline : public Regressor {
public:
    explicit LinearBaseline(bool add_intercept = true) : add_intercept_(add_intercept) {}

    void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) override;
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override;
    bool fitted() const override { return fitted_; }

    const Eigen::VectorXd& coefficients() const { return coef_; }

private:
    Eigen::MatrixXd augment(const Eigen::MatrixXd& X) const;
    bool add_intercept_ = true;
    bool fitted_ = false;
    Eigen::VectorXd coef_;
};

using RegressorFactory = std::function<std::unique_ptr<Regressor>()>;
using ConfigFactory = std::function<std::unique_ptr<Regressor>(const nlohmann::json&)>;

struct CrossValResult {
    std::vector<double> fold_mse;
    double mean_mse = 0.0;
};

// k-fold cross validation: fold i is validated by a model trained on the
// remaining folds. Deterministic for a fixed seed.
CrossValResult cross_validate(const RegressorFactory& make, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y, std::size_t k, std::uint64_t seed);

struct GridSearchResult {
    nlohmann::json best_params;
    std::size_t best_index = 0;
    double best_mean_mse = 0.0;
    std::vector<double> grid_mean_mse;  // +inf where a combination failed
    FitReport report;
};

// Exhaustive search over `grid`; fitness is the mean fold MSE, ties broken
// by grid order (first wins). Failed combinations score +inf; if every
// combination fails the aggregate error is thrown.
GridSearchResult grid_search(const ConfigFactory& make, const std::string& family,
                             const std::vector<nlohmann::json>& grid,
                             const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             std::size_t k, std::uint64_t seed);

} // namespace diodeq
