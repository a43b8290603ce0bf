#include "diodeq/regression.hpp"

#include <cmath>
#include <limits>

#include "diodeq/dataset.hpp"

namespace diodeq {

nlohmann::json FitReport::to_json() const {
    nlohmann::json j;
    if (train_mse) j["train_mse"] = *train_mse;
    if (test_mse) j["test_mse"] = *test_mse;
    if (validation_mse) j["validation_mse"] = *validation_mse;
    if (r2) j["r2"] = *r2;
    j["wall_time_seconds"] = wall_time_seconds;
    j["model"] = model_id;
    j["hyperparameters"] = hyperparameters;
    return j;
}

FitReport FitReport::from_json(const nlohmann::json& j) {
    FitReport r;
    if (j.contains("train_mse")) r.train_mse = j["train_mse"].get<double>();
    if (j.contains("test_mse")) r.test_mse = j["test_mse"].get<double>();
    if (j.contains("validation_mse")) r.validation_mse = j["validation_mse"].get<double>();
    if (j.contains("r2")) r.r2 = j["r2"].get<double>();
    r.wall_time_seconds = j.value("wall_time_seconds", 0.0);
    r.model_id = j.value("model", "");
    r.hyperparameters = j.value("hyperparameters", nlohmann::json::object());
    return r;
}

double mse(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
    if (y_true.size() != y_pred.size())
        throw DimensionError("mse: length mismatch");
    if (y_true.size() == 0)
        throw EmptyDatasetError("mse of empty vectors");
    return (y_true - y_pred).squaredNorm() / static_cast<double>(y_true.size());
}

double r2_score(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
    if (y_true.size() != y_pred.size())
        throw DimensionError("r2_score: length mismatch");
    if (y_true.size() < 2)
        throw EmptyDatasetError("r2_score needs at least 2 samples");
    const double mean = y_true.mean();
    const double ss_tot = (y_true.array() - mean).matrix().squaredNorm();
    if (!(ss_tot > 0.0))
        throw DegenerateError("r2_score on a zero-variance target");
    const double ss_res = (y_true - y_pred).squaredNorm();
    return 1.0 - ss_res / ss_tot;
}

Eigen::VectorXd linear_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() != y.size())
        throw DimensionError("linear_least_squares: row count mismatch");
    if (X.rows() < X.cols())
        throw SingularMatrixError("linear_least_squares: fewer rows than unknowns");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols())
        throw SingularMatrixError("linear_least_squares: rank-deficient design matrix");
    return qr.solve(y);
}

Eigen::MatrixXd LinearBaseline::augment(const Eigen::MatrixXd& X) const {
    if (!add_intercept_) return X;
    Eigen::MatrixXd out(X.rows(), X.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(X.cols()) = X;
    return out;
}

void LinearBaseline::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    coef_ = linear_least_squares(augment(X), y);
    fitted_ = true;
}

Eigen::VectorXd LinearBaseline::predict(const Eigen::MatrixXd& X) const {
    require_fitted();
    const Eigen::MatrixXd A = augment(X);
    if (A.cols() != coef_.size())
        throw DimensionError("linear baseline: feature count mismatch");
    return A * coef_;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
    return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& y, const std::vector<std::size_t>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
        out(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(idx[i]));
    return out;
}

} // namespace

CrossValResult cross_validate(const RegressorFactory& make, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y, std::size_t k, std::uint64_t seed) {
    const auto folds = kfold_indices(static_cast<std::size_t>(X.rows()), k, seed);
    CrossValResult res;
    res.fold_mse.reserve(k);
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<std::size_t> train_idx;
        train_idx.reserve(static_cast<std::size_t>(X.rows()) - folds[f].size());
        for (std::size_t g = 0; g < folds.size(); ++g)
            if (g != f)
                train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
        try {
            auto model = make();
            model->fit(take_rows(X, train_idx), take(y, train_idx));
            const Eigen::VectorXd pred = model->predict(take_rows(X, folds[f]));
            res.fold_mse.push_back(mse(take(y, folds[f]), pred));
        } catch (const Error& e) {
            throw Error("fold " + std::to_string(f) + ": " + e.what());
        }
    }
    double sum = 0.0;
    for (double v : res.fold_mse) sum += v;
    res.mean_mse = sum / static_cast<double>(res.fold_mse.size());
    return res;
}

GridSearchResult grid_search(const ConfigFactory& make, const std::string& family,
                             const std::vector<nlohmann::json>& grid,
                             const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             std::size_t k, std::uint64_t seed) {
    if (grid.empty())
        throw DomainError("grid search over an empty grid");

    GridSearchResult out;
    out.grid_mean_mse.reserve(grid.size());
    std::string failures;
    for (const auto& cfg : grid) {
        double score = std::numeric_limits<double>::infinity();
        try {
            score = cross_validate([&] { return make(cfg); }, X, y, k, seed).mean_mse;
        } catch (const Error& e) {
            failures += std::string(failures.empty() ? "" : "; ") + e.what();
        }
        out.grid_mean_mse.push_back(score);
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < out.grid_mean_mse.size(); ++i)
        if (out.grid_mean_mse[i] < out.grid_mean_mse[best]) best = i;
    if (std::isinf(out.grid_mean_mse[best]))
        throw Error("every grid combination failed: " + failures);

    out.best_index = best;
    out.best_params = grid[best];
    out.best_mean_mse = out.grid_mean_mse[best];
    out.report.model_id = family;
    out.report.hyperparameters = grid[best];
    out.report.validation_mse = out.best_mean_mse;
    return out;
}

} // namespace diodeq
