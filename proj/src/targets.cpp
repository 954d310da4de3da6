#include "amcmc/targets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

namespace amcmc {

namespace {

using Triplet = Eigen::Triplet<double>;

Eigen::MatrixXd dense_inverse_spd(const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) throw std::runtime_error("matrix is not positive definite");
    return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

bool parse_double(std::string_view s, double& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

SparsityPattern pattern_of(const SparseMatrix& m) {
    std::vector<std::pair<Index, Index>> edges;
    for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(m, r); it; ++it) {
            if (it.value() != 0.0 && it.row() != it.col()) {
                edges.emplace_back(static_cast<Index>(it.row()), static_cast<Index>(it.col()));
            }
        }
    }
    return SparsityPattern::from_edges(static_cast<Index>(m.rows()), edges);
}

/*------------------------------------------------------------------------------
 *  GaussianTarget
 *----------------------------------------------------------------------------*/
GaussianTarget::GaussianTarget(Vector mean, SparseMatrix precision, std::string name)
    : mean_(std::move(mean)), precision_(std::move(precision)), name_(std::move(name)) {
    if (precision_.rows() != mean_.size() || precision_.cols() != mean_.size()) {
        throw std::invalid_argument("GaussianTarget: precision/mean size mismatch");
    }
    precision_.makeCompressed();
}

GaussianTarget GaussianTarget::ar1(Index n, double rho) {
    if (n < 1 || !(std::abs(rho) < 1.0)) throw std::invalid_argument("GaussianTarget::ar1: need n >= 1, |rho| < 1");
    const double s = 1.0 / (1.0 - rho * rho);
    std::vector<Triplet> t;
    for (Index i = 0; i < n; ++i) {
        const bool edge = (i == 0 || i == n - 1);
        t.emplace_back(i, i, (edge ? 1.0 : 1.0 + rho * rho) * s);
        if (i + 1 < n) {
            t.emplace_back(i, i + 1, -rho * s);
            t.emplace_back(i + 1, i, -rho * s);
        }
    }
    if (n == 1) t = {Triplet(0, 0, 1.0)};
    SparseMatrix q(n, n);
    q.setFromTriplets(t.begin(), t.end());
    return GaussianTarget(Vector::Zero(n), std::move(q), "ar1_gaussian");
}

GaussianTarget GaussianTarget::independent(const Vector& sd) {
    const auto n = static_cast<Index>(sd.size());
    std::vector<Triplet> t;
    for (Index i = 0; i < n; ++i) {
        if (!(sd[i] > 0.0)) throw std::invalid_argument("GaussianTarget::independent: sd must be positive");
        t.emplace_back(i, i, 1.0 / (sd[i] * sd[i]));
    }
    SparseMatrix q(n, n);
    q.setFromTriplets(t.begin(), t.end());
    return GaussianTarget(Vector::Zero(n), std::move(q), "iid_gaussian");
}

GaussianTarget GaussianTarget::from_covariance(const Vector& mean, const Eigen::MatrixXd& covariance) {
    const Eigen::MatrixXd q = dense_inverse_spd(covariance);
    SparseMatrix sq = q.sparseView();
    return GaussianTarget(mean, std::move(sq), "gaussian");
}

double GaussianTarget::log_density(const Vector& x) const {
    const Vector d = x - mean_;
    return -0.5 * d.dot(precision_ * d);
}

Vector GaussianTarget::grad_log_density(const Vector& x) const {
    const Vector d = x - mean_;
    return -(precision_ * d);
}

std::optional<DenseSymMatrix> GaussianTarget::analytic_covariance() const {
    return DenseSymMatrix::from_eigen(dense_inverse_spd(Eigen::MatrixXd(precision_)));
}

/*------------------------------------------------------------------------------
 *  LatticeGmrfPosterior
 *----------------------------------------------------------------------------*/
SparseMatrix lattice_laplacian(Index side) {
    const Index n = side * side;
    std::vector<Triplet> t;
    for (Index r = 0; r < side; ++r) {
        for (Index c = 0; c < side; ++c) {
            const Index i = r * side + c;
            double degree = 0.0;
            auto link = [&](Index rr, Index cc) {
                if (rr < 0 || cc < 0 || rr >= side || cc >= side) return;
                t.emplace_back(i, rr * side + cc, -1.0);
                degree += 1.0;
            };
            link(r - 1, c);
            link(r + 1, c);
            link(r, c - 1);
            link(r, c + 1);
            t.emplace_back(i, i, degree);
        }
    }
    SparseMatrix g(n, n);
    g.setFromTriplets(t.begin(), t.end());
    return g;
}

LatticeGmrfPosterior::LatticeGmrfPosterior(const LatticeGmrfParams& params) : params_(params) {
    if (params.side < 3) throw std::invalid_argument("lattice_gmrf: side must be >= 3");
    if (params.alpha != 1 && params.alpha != 2) throw std::invalid_argument("lattice_gmrf: alpha must be 1 or 2");
    if (!(params.kappa2 > 0.0)) throw std::invalid_argument("lattice_gmrf: kappa2 must be positive");
    if (!(params.sigma_obs > 0.0)) throw std::invalid_argument("lattice_gmrf: sigma_obs must be positive");
    const Index n = params.side * params.side;
    const Index k = params.n_obs < 0 ? std::max<Index>(1, n / 4) : params.n_obs;
    if (k > n) {
        throw std::invalid_argument("lattice_gmrf: n_obs = " + std::to_string(k) + " exceeds the " +
                                    std::to_string(n) + " lattice nodes");
    }
    params_.n_obs = k;

    SparseMatrix id(n, n);
    id.setIdentity();
    SparseMatrix kmat = params.kappa2 * id + lattice_laplacian(params.side);
    if (params.alpha == 1) {
        prior_precision_ = kmat;
    } else {
        prior_precision_ = SparseMatrix(kmat.transpose()) * kmat;
    }
    prior_precision_.prune(0.0);
    prior_precision_.makeCompressed();

    std::mt19937_64 rng(params.seed);
    std::vector<Index> nodes(static_cast<std::size_t>(n));
    std::iota(nodes.begin(), nodes.end(), Index{0});
    // Partial Fisher-Yates: the first k entries become a uniform subset.
    for (Index i = 0; i < k; ++i) {
        std::uniform_int_distribution<Index> pick(i, n - 1);
        std::swap(nodes[static_cast<std::size_t>(i)], nodes[static_cast<std::size_t>(pick(rng))]);
    }
    nodes.resize(static_cast<std::size_t>(k));
    std::ranges::sort(nodes);
    nodes_ = nodes;

    std::vector<Triplet> at;
    for (Index r = 0; r < k; ++r) at.emplace_back(r, nodes_[static_cast<std::size_t>(r)], 1.0);
    obs_ = SparseMatrix(k, n);
    obs_.setFromTriplets(at.begin(), at.end());

    // Simulate a field from the prior and observe it.
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt{Eigen::SparseMatrix<double>(prior_precision_)};
    if (llt.info() != Eigen::Success) throw std::runtime_error("lattice_gmrf: prior precision not SPD");
    std::normal_distribution<double> normal;
    Vector z(n);
    for (Index i = 0; i < n; ++i) z[i] = normal(rng);
    const Vector w = llt.matrixU().solve(z);
    const Vector field = llt.permutationPinv() * w;
    y_ = obs_ * field;
    for (Index r = 0; r < k; ++r) y_[r] += params.sigma_obs * normal(rng);
}

LatticeGmrfPosterior build_lattice_gmrf(const LatticeGmrfParams& params) { return LatticeGmrfPosterior(params); }

double LatticeGmrfPosterior::log_density(const Vector& x) const {
    const Vector r = y_ - obs_ * x;
    const double s2 = params_.sigma_obs * params_.sigma_obs;
    return -0.5 * r.squaredNorm() / s2 - 0.5 * x.dot(prior_precision_ * x);
}

Vector LatticeGmrfPosterior::grad_log_density(const Vector& x) const {
    const Vector r = y_ - obs_ * x;
    const double s2 = params_.sigma_obs * params_.sigma_obs;
    return (obs_.transpose() * r) / s2 - prior_precision_ * x;
}

SparseMatrix LatticeGmrfPosterior::posterior_precision() const {
    const double s2 = params_.sigma_obs * params_.sigma_obs;
    SparseMatrix p = prior_precision_ + SparseMatrix(obs_.transpose() * obs_) / s2;
    p.makeCompressed();
    return p;
}

Vector LatticeGmrfPosterior::posterior_mean() const {
    const double s2 = params_.sigma_obs * params_.sigma_obs;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt{Eigen::SparseMatrix<double>(posterior_precision())};
    const Vector rhs = (obs_.transpose() * y_) / s2;
    return llt.solve(rhs);
}

std::optional<DenseSymMatrix> LatticeGmrfPosterior::analytic_covariance() const {
    return DenseSymMatrix::from_eigen(dense_inverse_spd(Eigen::MatrixXd(posterior_precision())));
}

/*------------------------------------------------------------------------------
 *  Spline data
 *----------------------------------------------------------------------------*/
XyData load_xy_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open data file '" + path.string() + "'");
    XyData data;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto comma = line.find(',');
        double t = 0.0;
        double y = 0.0;
        const bool ok = comma != std::string::npos && line.find(',', comma + 1) == std::string::npos &&
                        parse_double(std::string_view(line).substr(0, comma), t) &&
                        parse_double(std::string_view(line).substr(comma + 1), y);
        if (!ok) {
            if (line_no == 1 && data.t.empty()) continue;  // header
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": expected two numeric columns 't,y'");
        }
        data.t.push_back(t);
        data.y.push_back(y);
    }
    return data;
}

XyData synthetic_spline_data(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    XyData d;
    d.t.reserve(count);
    d.y.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double t = 60.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(count);
        const double mean = 3.0 * std::sin(t / 6.0) * std::exp(-std::pow((t - 25.0) / 15.0, 2));
        const double sd = 0.2 + 0.8 * std::exp(-std::pow((t - 30.0) / 8.0, 2));
        d.t.push_back(t);
        d.y.push_back(mean + sd * normal(rng));
    }
    return d;
}

/*------------------------------------------------------------------------------
 *  SplinePosterior
 *----------------------------------------------------------------------------*/
SparseMatrix linear_interpolation_matrix(const std::vector<double>& t, Index n, double t0, double h) {
    std::vector<Triplet> trip;
    for (std::size_t r = 0; r < t.size(); ++r) {
        const double s = (t[r] - t0) / h;
        auto j = static_cast<Index>(std::floor(s));
        j = std::clamp<Index>(j, 0, n - 1);
        if (j == n - 1) {
            trip.emplace_back(static_cast<Index>(r), j, 1.0);
            continue;
        }
        const double f = s - static_cast<double>(j);
        if (1.0 - f != 0.0) trip.emplace_back(static_cast<Index>(r), j, 1.0 - f);
        if (f != 0.0) trip.emplace_back(static_cast<Index>(r), j + 1, f);
    }
    SparseMatrix a(static_cast<Eigen::Index>(t.size()), n);
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
}

SparseMatrix rw2_precision(Index n, double h, double ridge) {
    std::vector<Triplet> trip;
    for (Index r = 0; r + 2 < n; ++r) {
        trip.emplace_back(r, r, 1.0);
        trip.emplace_back(r, r + 1, -2.0);
        trip.emplace_back(r, r + 2, 1.0);
    }
    SparseMatrix d(std::max<Index>(n - 2, 0), n);
    d.setFromTriplets(trip.begin(), trip.end());
    SparseMatrix q = SparseMatrix(d.transpose()) * d / (h * h * h);
    SparseMatrix id(n, n);
    id.setIdentity();
    q += ridge * id;
    q.prune(0.0);
    q.makeCompressed();
    return q;
}

SplinePosterior::SplinePosterior(Index n_basis, XyData data) : n_(n_basis), data_(std::move(data)) {
    if (data_.t.size() != data_.y.size()) throw std::invalid_argument("spline: t and y lengths differ");
    if (data_.t.size() < 3) throw std::invalid_argument("spline: need at least 3 data points");
    if (n_basis < 3) throw std::invalid_argument("spline: n_basis must be >= 3");
    const auto [lo, hi] = std::ranges::minmax(data_.t);
    if (!(hi > lo)) throw std::invalid_argument("spline: data locations must span a positive range");
    t0_ = lo;
    h_ = (hi - lo) / static_cast<double>(n_basis - 1);
    obs_ = linear_interpolation_matrix(data_.t, n_basis, t0_, h_);
    q_ = rw2_precision(n_basis, h_);
}

SplinePosterior build_spline(Index n_basis, XyData data) { return SplinePosterior(n_basis, std::move(data)); }

double SplinePosterior::log_density(const Vector& theta) const {
    if (theta.size() != dim()) throw std::invalid_argument("spline: parameter size mismatch");
    const auto x = theta.segment(0, n_);
    const auto v = theta.segment(n_, n_);
    const double log_tx = theta[2 * n_];
    const double log_tv = theta[2 * n_ + 1];
    const double tx = std::exp(log_tx);
    const double tv = std::exp(log_tv);
    const Eigen::Map<const Vector> y(data_.y.data(), static_cast<Eigen::Index>(data_.y.size()));

    const Vector r = y - obs_ * x;
    const Vector av = obs_ * v;
    double data_term = 0.0;
    for (Eigen::Index k = 0; k < r.size(); ++k) data_term += std::exp(-2.0 * av[k]) * r[k] * r[k];
    const double half_n = 0.5 * static_cast<double>(n_);
    return -0.5 * data_term - av.sum() - 0.5 * tx * x.dot(q_ * x) - 0.5 * tv * v.dot(q_ * v) +
           (half_n + 1.0) * (log_tx + log_tv) - tx - tv;
}

Vector SplinePosterior::grad_log_density(const Vector& theta) const {
    if (theta.size() != dim()) throw std::invalid_argument("spline: parameter size mismatch");
    const auto x = theta.segment(0, n_);
    const auto v = theta.segment(n_, n_);
    const double tx = std::exp(theta[2 * n_]);
    const double tv = std::exp(theta[2 * n_ + 1]);
    const Eigen::Map<const Vector> y(data_.y.data(), static_cast<Eigen::Index>(data_.y.size()));

    const Vector r = y - obs_ * x;
    const Vector av = obs_ * v;
    Vector wr(r.size());
    Vector wr2(r.size());
    for (Eigen::Index k = 0; k < r.size(); ++k) {
        const double w = std::exp(-2.0 * av[k]);
        wr[k] = w * r[k];
        wr2[k] = w * r[k] * r[k] - 1.0;
    }
    const Vector qx = q_ * x;
    const Vector qv = q_ * v;
    const double half_n = 0.5 * static_cast<double>(n_);

    Vector g(dim());
    g.segment(0, n_) = obs_.transpose() * wr - tx * qx;
    g.segment(n_, n_) = obs_.transpose() * wr2 - tv * qv;
    g[2 * n_] = -0.5 * tx * x.dot(qx) + half_n - tx + 1.0;
    g[2 * n_ + 1] = -0.5 * tv * v.dot(qv) + half_n - tv + 1.0;
    return g;
}

SparsityPattern SplinePosterior::dependence_pattern() const {
    const Index n = n_;
    SparsityPattern p(dim());
    // Random-walk couplings within each field.
    for (Eigen::Index r = 0; r < q_.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(q_, r); it; ++it) {
            const auto i = static_cast<Index>(it.row());
            const auto j = static_cast<Index>(it.col());
            if (i == j || it.value() == 0.0) continue;
            p.add_edge(i, j);
            p.add_edge(n + i, n + j);
        }
    }
    // Couplings through shared observations: x-x, v-v and x-v.
    for (Eigen::Index k = 0; k < obs_.outerSize(); ++k) {
        std::vector<Index> cols;
        for (SparseMatrix::InnerIterator it(obs_, k); it; ++it) cols.push_back(static_cast<Index>(it.col()));
        for (Index a : cols) {
            for (Index b : cols) {
                p.add_edge(a, b);
                p.add_edge(n + a, n + b);
                p.add_edge(a, n + b);
            }
        }
    }
    // Precision parameters touch every coordinate of their field.
    for (Index i = 0; i < n; ++i) {
        p.add_edge(2 * n, i);
        p.add_edge(2 * n + 1, n + i);
    }
    return p;
}

}  // namespace amcmc
