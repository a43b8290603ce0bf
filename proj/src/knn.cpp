#include "diodeq/knn.hpp"

#include <algorithm>
#include <cmath>

namespace diodeq {

double minkowski_distance(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double p) {
    if (x.size() != y.size())
        throw DimensionError("minkowski_distance: dimension mismatch");
    if (!(p >= 1.0))
        throw DomainError("Minkowski exponent must be >= 1");
    const Eigen::ArrayXd d = (x - y).array().abs();
    if (std::isinf(p))
        return d.size() ? d.maxCoeff() : 0.0;
    if (p == 1.0) return d.sum();
    if (p == 2.0) return std::sqrt((d * d).sum());
    return std::pow(d.pow(p).sum(), 1.0 / p);
}

void KnnConfig::validate() const {
    if (k < 1) throw DomainError("k must be >= 1");
    if (!(p >= 1.0)) throw DomainError("Minkowski exponent must be >= 1");
}

nlohmann::json KnnConfig::to_json() const {
    nlohmann::json j;
    j["k"] = k;
    if (std::isinf(p))
        j["p"] = "inf";
    else
        j["p"] = p;
    j["weighting"] = weighting == Weighting::Uniform ? "uniform" : "inverse-distance";
    j["search"] = search == Search::Brute ? "brute" : "kd-tree";
    return j;
}

KnnConfig KnnConfig::from_json(const nlohmann::json& j) {
    KnnConfig c;
    c.k = j.value("k", std::size_t{4});
    if (j.contains("p")) {
        if (j["p"].is_string())
            c.p = std::numeric_limits<double>::infinity();
        else
            c.p = j["p"].get<double>();
    }
    const std::string w = j.value("weighting", "inverse-distance");
    if (w == "uniform")
        c.weighting = Weighting::Uniform;
    else if (w == "inverse-distance")
        c.weighting = Weighting::InverseDistance;
    else
        throw SchemaError("unknown knn weighting: " + w);
    const std::string s = j.value("search", "brute");
    if (s == "brute")
        c.search = Search::Brute;
    else if (s == "kd-tree")
        c.search = Search::KdTree;
    else
        throw SchemaError("unknown knn search: " + s);
    c.validate();
    return c;
}

void KnnRegressor::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    config_.validate();
    if (X.rows() != y.size())
        throw DimensionError("knn fit: row count mismatch");
    if (X.rows() == 0)
        throw EmptyDatasetError("knn fit on empty data");
    if (static_cast<std::size_t>(X.rows()) < config_.k)
        throw DomainError("knn fit: k = " + std::to_string(config_.k) + " exceeds " +
                          std::to_string(X.rows()) + " training rows");
    train_X_ = X;
    train_y_ = y;
    nodes_.clear();
    root_ = -1;
    if (config_.search == KnnConfig::Search::KdTree)
        build_kdtree();
    fitted_ = true;
}

void KnnRegressor::build_kdtree() {
    std::vector<std::size_t> idx(train_size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    nodes_.reserve(idx.size());
    root_ = build_kdtree(idx, 0, idx.size(), 0);
}

std::int32_t KnnRegressor::build_kdtree(std::vector<std::size_t>& idx, std::size_t lo,
                                        std::size_t hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % static_cast<int>(train_X_.cols());
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                     idx.begin() + static_cast<std::ptrdiff_t>(mid),
                     idx.begin() + static_cast<std::ptrdiff_t>(hi),
                     [&](std::size_t a, std::size_t b) {
                         const double va = train_X_(static_cast<Eigen::Index>(a), axis);
                         const double vb = train_X_(static_cast<Eigen::Index>(b), axis);
                         return va < vb || (va == vb && a < b);
                     });
    const auto node_id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(KdNode{idx[mid], axis, -1, -1});
    const std::int32_t left = build_kdtree(idx, lo, mid, depth + 1);
    const std::int32_t right = build_kdtree(idx, mid + 1, hi, depth + 1);
    nodes_[static_cast<std::size_t>(node_id)].left = left;
    nodes_[static_cast<std::size_t>(node_id)].right = right;
    return node_id;
}

namespace {

// heap entries are (distance, index); the "worst" entry is the largest
// distance, larger index on ties, so popping it preserves the tie rule.
struct WorseFirst {
    bool operator()(const std::pair<double, std::size_t>& a,
                    const std::pair<double, std::size_t>& b) const {
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    }
};

} // namespace

void KnnRegressor::kd_search(std::int32_t node, const Eigen::VectorXd& query,
                             std::vector<std::pair<double, std::size_t>>& heap) const {
    if (node < 0) return;
    const KdNode& nd = nodes_[static_cast<std::size_t>(node)];
    const Eigen::VectorXd point = train_X_.row(static_cast<Eigen::Index>(nd.point)).transpose();
    const double dist = minkowski_distance(query, point, config_.p);

    const std::pair<double, std::size_t> cand{dist, nd.point};
    if (heap.size() < config_.k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), WorseFirst{});
    } else if (WorseFirst{}(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), WorseFirst{});
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), WorseFirst{});
    }

    const double split = train_X_(static_cast<Eigen::Index>(nd.point), nd.axis);
    const double delta = query(nd.axis) - split;
    const std::int32_t near = delta < 0.0 ? nd.left : nd.right;
    const std::int32_t far = delta < 0.0 ? nd.right : nd.left;
    kd_search(near, query, heap);
    // the axis distance lower-bounds every Minkowski metric with p >= 1;
    // <= keeps tied neighbours reachable so both search paths agree
    if (heap.size() < config_.k || std::abs(delta) <= heap.front().first)
        kd_search(far, query, heap);
}

std::vector<std::pair<std::size_t, double>>
KnnRegressor::neighbours(const Eigen::VectorXd& query) const {
    require_fitted();
    if (query.size() != train_X_.cols())
        throw DimensionError("knn query dimension mismatch");

    std::vector<std::pair<double, std::size_t>> best;
    if (config_.search == KnnConfig::Search::KdTree) {
        best.reserve(config_.k + 1);
        kd_search(root_, query, best);
    } else {
        best.reserve(train_size());
        for (std::size_t i = 0; i < train_size(); ++i) {
            const double d = minkowski_distance(
                query, train_X_.row(static_cast<Eigen::Index>(i)).transpose(), config_.p);
            best.emplace_back(d, i);
        }
    }
    std::sort(best.begin(), best.end());
    best.resize(std::min<std::size_t>(config_.k, best.size()));

    std::vector<std::pair<std::size_t, double>> out;
    out.reserve(best.size());
    for (const auto& [d, i] : best) out.emplace_back(i, d);
    return out;
}

Eigen::VectorXd KnnRegressor::predict(const Eigen::MatrixXd& X) const {
    require_fitted();
    if (X.cols() != train_X_.cols())
        throw DimensionError("knn predict: feature count mismatch");

    Eigen::VectorXd out(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        const Eigen::VectorXd query = X.row(r).transpose();
        const auto nn = neighbours(query);

        if (!nn.empty() && nn.front().second == 0.0) {
            // exact match: average every zero-distance training row
            double sum = 0.0;
            std::size_t cnt = 0;
            for (std::size_t i = 0; i < train_size(); ++i) {
                if (minkowski_distance(query, train_X_.row(static_cast<Eigen::Index>(i)).transpose(),
                                       config_.p) == 0.0) {
                    sum += train_y_(static_cast<Eigen::Index>(i));
                    ++cnt;
                }
            }
            out(r) = sum / static_cast<double>(cnt);
            continue;
        }

        if (config_.weighting == KnnConfig::Weighting::Uniform) {
            double sum = 0.0;
            for (const auto& [i, d] : nn) sum += train_y_(static_cast<Eigen::Index>(i));
            out(r) = sum / static_cast<double>(nn.size());
        } else {
            double wsum = 0.0, acc = 0.0;
            for (const auto& [i, d] : nn) {
                const double w = 1.0 / d;
                wsum += w;
                acc += w * train_y_(static_cast<Eigen::Index>(i));
            }
            out(r) = acc / wsum;
        }
    }
    return out;
}

nlohmann::json KnnRegressor::to_json() const {
    require_fitted();
    nlohmann::json j;
    j["config"] = config_.to_json();
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < train_X_.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < train_X_.cols(); ++c) row.push_back(train_X_(r, c));
        rows.push_back(row);
    }
    j["train_features"] = rows;
    j["train_targets"] = std::vector<double>(train_y_.data(), train_y_.data() + train_y_.size());
    return j;
}

KnnRegressor KnnRegressor::from_json(const nlohmann::json& j) {
    KnnRegressor model(KnnConfig::from_json(j.at("config")));
    const auto& rows = j.at("train_features");
    const auto y = j.at("train_targets").get<std::vector<double>>();
    if (rows.size() != y.size())
        throw SchemaError("knn model: feature/target row mismatch");
    if (rows.empty())
        throw SchemaError("knn model: empty training data");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto row = rows[r].get<std::vector<double>>();
        if (row.size() != static_cast<std::size_t>(X.cols()))
            throw SchemaError("knn model: ragged feature rows");
        for (std::size_t c = 0; c < row.size(); ++c)
            X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    model.fit(X, yv);
    return model;
}

} // namespace diodeq
