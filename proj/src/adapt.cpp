#include "amcmc/adapt.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>

#include "amcmc/errors.hpp"

namespace amcmc {

namespace {

constexpr int kStateVersion = 1;

std::optional<DenseSymMatrix> invert_spd(const DenseSymMatrix& m) {
    const Index n = m.size();
    SparseLowerTriangular chol;
    try {
        chol = dense_chol(m);
    } catch (const FactorizationError&) {
        return std::nullopt;
    }
    DenseSymMatrix inv(n);
    Vector e = Vector::Zero(n);
    for (Index k = 0; k < n; ++k) {
        e[k] = 1.0;
        const Vector col = solve_lower_transpose(chol, solve_lower(chol, e));
        e[k] = 0.0;
        for (Index i = k; i < n; ++i) inv(i, k) = col[i];
    }
    return inv;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_std(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> packed_to_std(const DenseSymMatrix& m) {
    auto p = m.packed();
    return {p.begin(), p.end()};
}

DenseSymMatrix packed_from_std(Index n, const std::vector<double>& v) {
    DenseSymMatrix m(n);
    if (v.size() != m.packed().size()) throw std::invalid_argument("checkpoint: packed matrix has wrong length");
    std::ranges::copy(v, m.packed().begin());
    return m;
}

void check_finite(const Vector& v, const char* what) {
    if (!v.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite input");
}

}  // namespace

Vector mean_update(const Vector& mean, const Vector& x, std::uint64_t i) {
    if (mean.size() != x.size()) throw std::invalid_argument("mean_update: size mismatch");
    const double fi = static_cast<double>(i);
    return (fi / (fi + 1.0)) * mean + (1.0 / (fi + 1.0)) * x;
}

/*------------------------------------------------------------------------------
 *  Adaptation base
 *----------------------------------------------------------------------------*/
void Adaptation::update(const Vector& x) {
    if (frozen_) return;
    if (x.size() != mean_.size()) throw std::invalid_argument("Adaptation::update: size mismatch");
    check_finite(x, "Adaptation::update");
    mean_ = mean_update(mean_, x, count_);
    absorb(x - mean_);
}

Eigen::MatrixXd Adaptation::proposal_precision() const {
    return ready() ? precision_impl() : Eigen::MatrixXd::Identity(dim(), dim());
}

Eigen::MatrixXd Adaptation::proposal_covariance() const {
    return ready() ? covariance_impl() : Eigen::MatrixXd::Identity(dim(), dim());
}

nlohmann::json Adaptation::base_json() const {
    return {{"kind", std::string(kind())},
            {"version", kStateVersion},
            {"count", count_},
            {"mean", to_std(mean_)},
            {"frozen", frozen_},
            {"warmup", options_.warmup},
            {"ridge_initial", options_.ridge}};
}

void Adaptation::load_base_json(const nlohmann::json& j) {
    if (j.at("version").get<int>() != kStateVersion) {
        throw std::invalid_argument("adaptation state: unsupported version " + j.at("version").dump());
    }
    count_ = j.at("count").get<std::uint64_t>();
    mean_ = from_std(j.at("mean").get<std::vector<double>>());
    frozen_ = j.at("frozen").get<bool>();
    options_.warmup = j.at("warmup").get<std::uint64_t>();
    options_.ridge = j.at("ridge_initial").get<double>();
}

Vector scaling_apply(const Adaptation& adaptation, ScalingOp op, const Vector& v) {
    switch (op) {
        case ScalingOp::sample_noise: return adaptation.sample_noise(v);
        case ScalingOp::precondition_gradient: return adaptation.precondition_gradient(v);
        case ScalingOp::whiten: return adaptation.whiten(v);
    }
    throw std::invalid_argument("scaling_apply: unknown op");
}

std::unique_ptr<Adaptation> adaptation_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "covariance") return std::make_unique<CovarianceAdaptation>(CovarianceAdaptation::from_json(j));
    if (kind == "precision") return std::make_unique<PrecisionAdaptation>(PrecisionAdaptation::from_json(j));
    throw std::invalid_argument("adaptation state: unknown kind '" + kind + "'");
}

/*------------------------------------------------------------------------------
 *  CovarianceAdaptation
 *----------------------------------------------------------------------------*/
CovarianceAdaptation::CovarianceAdaptation(Index n, AdaptOptions options)
    : Adaptation(options), cov_(n), chol_(SparseLowerTriangular::dense(n)), ridge_(options.ridge) {
    if (!(options.ridge > 0.0)) throw std::invalid_argument("CovarianceAdaptation: ridge must be positive");
    mean_ = Vector::Zero(n);
    const double root = std::sqrt(ridge_);
    for (Index j = 0; j < n; ++j) chol_.values(j)[0] = root;
}

CovarianceAdaptation CovarianceAdaptation::from_moments(const Vector& mean, const DenseSymMatrix& covariance,
                                                        std::uint64_t count, AdaptOptions options) {
    const auto n = static_cast<Index>(mean.size());
    if (covariance.size() != n) throw std::invalid_argument("CovarianceAdaptation::from_moments: size mismatch");
    CovarianceAdaptation a(n, options);
    a.mean_ = mean;
    a.cov_ = covariance;
    a.count_ = count;
    a.ridge_ = options.ridge / static_cast<double>(std::max<std::uint64_t>(count, 1));
    a.refactorize();
    a.refactorizations_ = 0;
    return a;
}

std::unique_ptr<Adaptation> CovarianceAdaptation::clone() const {
    return std::make_unique<CovarianceAdaptation>(*this);
}

void CovarianceAdaptation::cov_update(const Vector& centered) {
    const Index n = dim();
    if (centered.size() != n) throw std::invalid_argument("cov_update: size mismatch");
    check_finite(centered, "cov_update");

    // First sample: the ridge is the prior term and is kept at full weight.
    const double i = static_cast<double>(count_);
    const double decay = count_ == 0 ? 1.0 : i / (i + 1.0);
    const double weight = 1.0 / (i + 1.0);
    const double cov_decay = i / (i + 1.0);

    auto packed = cov_.packed();
    std::size_t p = 0;
    for (Index r = 0; r < n; ++r) {
        const double ur = weight * centered[r];
        for (Index c = 0; c <= r; ++c, ++p) packed[p] = cov_decay * packed[p] + ur * centered[c];
    }
    ridge_ *= decay;
    ++count_;

    try {
        chol_rank1_update(chol_, decay, weight, centered);
        if (!chol_.has_positive_diagonal()) throw FactorizationError("cov_update: factor lost positivity");
    } catch (const FactorizationError&) {
        refactorize();
    }
}

void CovarianceAdaptation::refactorize() {
    const Index n = dim();
    const double trace = cov_.trace();
    double eps = trace > 0.0 ? 1e-6 * trace / static_cast<double>(n) : options_.ridge;
    for (int attempt = 0; attempt < 60; ++attempt) {
        DenseSymMatrix m = cov_;
        for (Index k = 0; k < n; ++k) m(k, k) += ridge_;
        try {
            chol_ = dense_chol(m);
            ++refactorizations_;
            return;
        } catch (const FactorizationError&) {
            ridge_ += eps;
            eps *= 2.0;
        }
    }
    throw FactorizationError("CovarianceAdaptation: could not refactorize the covariance");
}

Vector CovarianceAdaptation::noise_impl(const Vector& z) const { return chol_.multiply(z); }

Vector CovarianceAdaptation::precondition_impl(const Vector& g) const {
    return chol_.multiply(chol_.multiply_transpose(g));
}

Vector CovarianceAdaptation::whiten_impl(const Vector& g) const { return chol_.multiply_transpose(g); }

Eigen::MatrixXd CovarianceAdaptation::covariance_impl() const {
    const Eigen::MatrixXd c = chol_.to_dense();
    return c * c.transpose();
}

Eigen::MatrixXd CovarianceAdaptation::precision_impl() const {
    const Eigen::MatrixXd c = chol_.to_dense();
    const Eigen::MatrixXd cinv = c.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(dim(), dim()));
    return cinv.transpose() * cinv;
}

nlohmann::json CovarianceAdaptation::to_json() const {
    auto j = base_json();
    j["covariance"] = packed_to_std(cov_);
    std::vector<double> factor;
    factor.reserve(chol_.nnz());
    for (Index c = 0; c < dim(); ++c) {
        auto v = chol_.values(c);
        factor.insert(factor.end(), v.begin(), v.end());
    }
    j["factor"] = std::move(factor);
    j["ridge"] = ridge_;
    j["refactorizations"] = refactorizations_;
    return j;
}

CovarianceAdaptation CovarianceAdaptation::from_json(const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != "covariance") throw std::invalid_argument("not a covariance state");
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto n = static_cast<Index>(mean.size());
    AdaptOptions opts;
    opts.warmup = j.at("warmup").get<std::uint64_t>();
    opts.ridge = j.at("ridge_initial").get<double>();
    CovarianceAdaptation a(n, opts);
    a.load_base_json(j);
    a.cov_ = packed_from_std(n, j.at("covariance").get<std::vector<double>>());
    const auto factor = j.at("factor").get<std::vector<double>>();
    if (factor.size() != a.chol_.nnz()) throw std::invalid_argument("checkpoint: factor has wrong length");
    std::size_t p = 0;
    for (Index c = 0; c < n; ++c) {
        for (auto& v : a.chol_.values(c)) v = factor[p++];
    }
    a.ridge_ = j.at("ridge").get<double>();
    a.refactorizations_ = j.at("refactorizations").get<std::uint64_t>();
    return a;
}

/*------------------------------------------------------------------------------
 *  PrecisionAdaptation
 *----------------------------------------------------------------------------*/
PrecisionAdaptation::PrecisionAdaptation(Permutation perm, std::vector<std::vector<Index>> regressors,
                                         AdaptOptions options)
    : Adaptation(options), perm_(std::move(perm)) {
    const Index n = perm_.size();
    if (static_cast<Index>(regressors.size()) != n) {
        throw std::invalid_argument("PrecisionAdaptation: need one regressor set per coordinate");
    }
    if (!(options.ridge > 0.0)) throw std::invalid_argument("PrecisionAdaptation: ridge must be positive");

    std::vector<std::vector<Index>> columns(static_cast<std::size_t>(n));
    rows_.resize(static_cast<std::size_t>(n));
    std::size_t widest = 0;
    for (Index j = 0; j < n; ++j) {
        auto& a = regressors[static_cast<std::size_t>(j)];
        std::ranges::sort(a);
        a.erase(std::unique(a.begin(), a.end()), a.end());
        if (!a.empty() && (a.front() <= j || a.back() >= n)) {
            throw std::invalid_argument("PrecisionAdaptation: regressors of row " + std::to_string(j) +
                                        " must lie in (" + std::to_string(j) + ", " + std::to_string(n) + ")");
        }
        const auto m = static_cast<Index>(a.size());
        auto& row = rows_[static_cast<std::size_t>(j)];
        row.row = j;
        row.gram = DenseSymMatrix(m);
        row.gram_inv = DenseSymMatrix::identity(m, 1.0 / options.ridge);
        row.cross = Vector::Zero(m + 1);
        row.ridged = true;
        row.next_release = static_cast<std::uint64_t>(m) + 2;
        row.next_refresh = 0;
        auto& col = columns[static_cast<std::size_t>(j)];
        col.push_back(j);
        col.insert(col.end(), a.begin(), a.end());
        row.regressors = std::move(a);
        widest = std::max(widest, row.regressors.size());
    }
    factor_ = SparseLowerTriangular(SparsityPattern::from_lists(std::move(columns)));
    mean_ = Vector::Zero(n);
    u_.resize(widest);
    work_.resize(widest);
    beta_.resize(widest);
    initialize_factor();
}

void PrecisionAdaptation::initialize_factor() {
    // Before any data the second moment is ridge*I, so L = I / sqrt(ridge).
    const Index n = dim();
    d_ = Vector::Constant(n, options_.ridge);
    const double diag = 1.0 / std::sqrt(options_.ridge);
    for (Index j = 0; j < n; ++j) {
        auto v = factor_.values(j);
        std::ranges::fill(v, 0.0);
        v[0] = diag;
    }
    stats_.min_d = options_.ridge;
}

PrecisionAdaptation PrecisionAdaptation::full(Index n, AdaptOptions options) {
    std::vector<std::vector<Index>> a(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
        for (Index k = j + 1; k < n; ++k) a[static_cast<std::size_t>(j)].push_back(k);
    }
    return PrecisionAdaptation(Permutation::identity(n), std::move(a), options);
}

PrecisionAdaptation PrecisionAdaptation::diagonal(Index n, AdaptOptions options) {
    return PrecisionAdaptation(Permutation::identity(n), std::vector<std::vector<Index>>(static_cast<std::size_t>(n)),
                               options);
}

std::unique_ptr<Adaptation> PrecisionAdaptation::clone() const {
    return std::make_unique<PrecisionAdaptation>(*this);
}

void PrecisionAdaptation::l_update(const Vector& centered) {
    if (centered.size() != dim()) throw std::invalid_argument("l_update: size mismatch");
    check_finite(centered, "l_update");
    const Vector z = perm_.to_permuted(centered);
    const std::uint64_t i = ++count_;
    double min_d = std::numeric_limits<double>::infinity();
    for (auto& row : rows_) {
        update_row(row, z, i);
        min_d = std::min(min_d, d_[row.row]);
    }
    stats_.min_d = min_d;
}

void PrecisionAdaptation::update_row(RowRegressionState& row, const Vector& z, std::uint64_t i) {
    const auto m = static_cast<Index>(row.regressors.size());
    const Index j = row.row;
    const double fi = static_cast<double>(i);
    const double decay = (fi - 1.0) / fi;
    const double weight = 1.0 / fi;
    const double zj = z[j];

    for (Index k = 0; k < m; ++k) u_[static_cast<std::size_t>(k)] = z[row.regressors[static_cast<std::size_t>(k)]];

    // Running moments of (X_A, X_j).
    for (Index k = 0; k < m; ++k) row.cross[k] = decay * row.cross[k] + weight * u_[static_cast<std::size_t>(k)] * zj;
    row.cross[m] = decay * row.cross[m] + weight * zj * zj;
    auto g = row.gram.packed();
    std::size_t p = 0;
    for (Index r = 0; r < m; ++r) {
        const double ur = weight * u_[static_cast<std::size_t>(r)];
        for (Index c = 0; c <= r; ++c, ++p) g[p] = decay * g[p] + ur * u_[static_cast<std::size_t>(c)];
    }

    // Inverse of the (possibly ridged) Gram block.
    bool refreshed = false;
    if (row.ridged && i >= row.next_release) {
        refreshed = try_release(row, i);
        if (!refreshed) row.next_release = 2 * i;
    }
    if (!refreshed && !row.ridged && i >= row.next_refresh) {
        reinvert(row, i);
        row.next_refresh = 2 * i;
        ++stats_.refreshes;
        refreshed = true;
    }
    if (!refreshed && m > 0) {
        const double sm_decay = i == 1 ? 1.0 : decay;
        const double root_w = std::sqrt(weight);
        for (Index k = 0; k < m; ++k) u_[static_cast<std::size_t>(k)] *= root_w;
        try {
            sherman_morrison_update_inplace(row.gram_inv, sm_decay, {u_.data(), static_cast<std::size_t>(m)},
                                            {work_.data(), static_cast<std::size_t>(m)});
        } catch (const UpdateDegenerateError&) {
            ++stats_.sm_fallbacks;
            reinvert(row, i);
        }
    }

    // Regression coefficients and conditional variance.
    const double ridge_now = row.ridged ? options_.ridge / fi : 0.0;
    auto gi = row.gram_inv.packed();
    std::fill(beta_.begin(), beta_.begin() + m, 0.0);
    p = 0;
    for (Index r = 0; r < m; ++r) {
        double acc = 0.0;
        for (Index c = 0; c < r; ++c, ++p) {
            acc += gi[p] * row.cross[c];
            beta_[static_cast<std::size_t>(c)] += gi[p] * row.cross[r];
        }
        beta_[static_cast<std::size_t>(r)] += acc + gi[p++] * row.cross[r];
    }
    const double sjj = row.cross[m] + ridge_now;
    double explained = 0.0;
    for (Index k = 0; k < m; ++k) explained += row.cross[k] * beta_[static_cast<std::size_t>(k)];
    double d = sjj - explained;
    const double tol = 1e-10 * sjj;
    if (!(d > tol)) {
        ++stats_.clamp_events;
        d = std::max(tol, std::numeric_limits<double>::min());
    }
    assert(d > 0.0);
    d_[j] = d;

    // Column j of L = (1, -beta) / sqrt(D_jj).
    const double s = 1.0 / std::sqrt(d);
    auto col = factor_.values(j);
    col[0] = s;
    for (Index k = 0; k < m; ++k) col[static_cast<std::size_t>(k) + 1] = -beta_[static_cast<std::size_t>(k)] * s;
}

bool PrecisionAdaptation::try_release(RowRegressionState& row, std::uint64_t i) {
    const auto m = static_cast<Index>(row.regressors.size());
    DenseSymMatrix block(m + 1);
    for (Index r = 0; r < m; ++r) {
        for (Index c = 0; c <= r; ++c) block(r, c) = row.gram(r, c);
        block(m, r) = row.cross[r];
    }
    block(m, m) = row.cross[m];
    SparseLowerTriangular chol;
    try {
        chol = dense_chol(block);
    } catch (const FactorizationError&) {
        return false;
    }
    for (Index k = 0; k <= m; ++k) {
        const double piv = chol.diagonal(k);
        if (!(piv * piv > 1e-10 * block(k, k))) return false;
    }
    auto inv = invert_spd(row.gram);
    if (!inv) return false;
    row.gram_inv = std::move(*inv);
    row.ridged = false;
    row.next_refresh = 2 * i;
    return true;
}

void PrecisionAdaptation::reinvert(RowRegressionState& row, std::uint64_t i) {
    const auto m = static_cast<Index>(row.regressors.size());
    if (!row.ridged) {
        if (auto inv = invert_spd(row.gram)) {
            row.gram_inv = std::move(*inv);
            return;
        }
        row.ridged = true;
        row.next_release = 2 * i;
    }
    DenseSymMatrix ridged = row.gram;
    const double r = options_.ridge / static_cast<double>(i);
    for (Index k = 0; k < m; ++k) ridged(k, k) += r;
    auto inv = invert_spd(ridged);
    if (!inv) throw FactorizationError("l_update: ridged Gram block of row " + std::to_string(row.row) + " is singular");
    row.gram_inv = std::move(*inv);
}

Vector PrecisionAdaptation::noise_impl(const Vector& z) const {
    return perm_.to_original(solve_lower_transpose(factor_, z));
}

Vector PrecisionAdaptation::precondition_impl(const Vector& g) const {
    return perm_.to_original(solve_lower_transpose(factor_, solve_lower(factor_, perm_.to_permuted(g))));
}

Vector PrecisionAdaptation::whiten_impl(const Vector& g) const {
    return solve_lower(factor_, perm_.to_permuted(g));
}

Eigen::MatrixXd PrecisionAdaptation::precision_impl() const {
    const Eigen::MatrixXd l = factor_.to_dense();
    const Eigen::MatrixXd qp = l * l.transpose();
    const Index n = dim();
    Eigen::MatrixXd q(n, n);
    for (Index a = 0; a < n; ++a) {
        for (Index b = 0; b < n; ++b) q(perm_.forward(a), perm_.forward(b)) = qp(a, b);
    }
    return q;
}

Eigen::MatrixXd PrecisionAdaptation::covariance_impl() const {
    const Eigen::MatrixXd q = precision_impl();
    return q.llt().solve(Eigen::MatrixXd::Identity(dim(), dim()));
}

nlohmann::json PrecisionAdaptation::to_json() const {
    auto j = base_json();
    j["permutation"] = std::vector<Index>(perm_.forward().begin(), perm_.forward().end());
    auto rows = nlohmann::json::array();
    for (const auto& r : rows_) {
        rows.push_back({{"regressors", r.regressors},
                        {"gram", packed_to_std(r.gram)},
                        {"gram_inv", packed_to_std(r.gram_inv)},
                        {"cross", to_std(r.cross)},
                        {"ridged", r.ridged},
                        {"next_release", r.next_release},
                        {"next_refresh", r.next_refresh}});
    }
    j["rows"] = std::move(rows);
    std::vector<double> factor;
    factor.reserve(factor_.nnz());
    for (Index c = 0; c < dim(); ++c) {
        auto v = factor_.values(c);
        factor.insert(factor.end(), v.begin(), v.end());
    }
    j["factor"] = std::move(factor);
    j["conditional_variances"] = to_std(d_);
    j["stats"] = {{"clamp_events", stats_.clamp_events},
                  {"sm_fallbacks", stats_.sm_fallbacks},
                  {"refreshes", stats_.refreshes},
                  {"min_d", stats_.min_d}};
    return j;
}

PrecisionAdaptation PrecisionAdaptation::from_json(const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != "precision") throw std::invalid_argument("not a precision state");
    auto perm = Permutation::from_forward(j.at("permutation").get<std::vector<Index>>());
    const auto& rows = j.at("rows");
    if (static_cast<Index>(rows.size()) != perm.size()) throw std::invalid_argument("checkpoint: row count mismatch");
    std::vector<std::vector<Index>> regressors;
    for (const auto& r : rows) regressors.push_back(r.at("regressors").get<std::vector<Index>>());
    AdaptOptions opts;
    opts.warmup = j.at("warmup").get<std::uint64_t>();
    opts.ridge = j.at("ridge_initial").get<double>();
    PrecisionAdaptation a(std::move(perm), std::move(regressors), opts);
    a.load_base_json(j);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        auto& row = a.rows_[k];
        const auto m = static_cast<Index>(row.regressors.size());
        row.gram = packed_from_std(m, r.at("gram").get<std::vector<double>>());
        row.gram_inv = packed_from_std(m, r.at("gram_inv").get<std::vector<double>>());
        row.cross = from_std(r.at("cross").get<std::vector<double>>());
        if (row.cross.size() != m + 1) throw std::invalid_argument("checkpoint: cross vector has wrong length");
        row.ridged = r.at("ridged").get<bool>();
        row.next_release = r.at("next_release").get<std::uint64_t>();
        row.next_refresh = r.at("next_refresh").get<std::uint64_t>();
    }
    const auto factor = j.at("factor").get<std::vector<double>>();
    if (factor.size() != a.factor_.nnz()) throw std::invalid_argument("checkpoint: factor has wrong length");
    std::size_t p = 0;
    for (Index c = 0; c < a.dim(); ++c) {
        for (auto& v : a.factor_.values(c)) v = factor[p++];
    }
    a.d_ = from_std(j.at("conditional_variances").get<std::vector<double>>());
    const auto& s = j.at("stats");
    a.stats_.clamp_events = s.at("clamp_events").get<std::uint64_t>();
    a.stats_.sm_fallbacks = s.at("sm_fallbacks").get<std::uint64_t>();
    a.stats_.refreshes = s.at("refreshes").get<std::uint64_t>();
    a.stats_.min_d = s.at("min_d").get<double>();
    return a;
}

}  // namespace amcmc
