#include "hjmcal/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace hjmcal::calib {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream seed for purpose `stream` under run seed `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream));
}

ModelParams uniform_theta(const ThetaBox& box, std::mt19937_64& rng) {
    ParamVector v{};
    for (std::size_t d = 0; d < v.size(); ++d)
        v[d] = box.lower[d] + (box.upper[d] - box.lower[d]) * nn::uniform01(rng);
    return from_vector(v);
}

double sigmoid(double u) {
    return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

// Loss over a subset of observation cells and its gradient in theta.
struct Evaluation {
    double loss = 0.0;
    ParamVector grad{};
};
using Objective = std::function<Evaluation(const ModelParams&, const std::vector<Eigen::Index>&)>;

struct RunOutcome {
    ModelParams theta;
    double initial_loss = 0.0;
    double best_loss = 0.0;
    std::vector<double> trace;
};

RunOutcome run_adam(const Objective& objective, Eigen::Index cells, const ThetaBox& box,
                    const CalibrationConfig& cfg, const ModelParams& start, std::uint64_t seed) {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(cells));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    auto full_loss = [&](const ModelParams& theta) {
        const double value = objective(theta, all).loss;
        if (!std::isfinite(value)) throw std::runtime_error("calibration loss became non-finite");
        return value;
    };

    RunOutcome out;
    out.theta = start;
    out.initial_loss = full_loss(start);
    out.best_loss = out.initial_loss;
    out.trace.reserve(static_cast<std::size_t>(cfg.epochs) + 1);
    out.trace.push_back(out.initial_loss);

    const ParamVector u0 = latent_from_theta(box, start);
    Eigen::VectorXd u = Eigen::Map<const Eigen::VectorXd>(u0.data(), static_cast<Eigen::Index>(u0.size()));
    nn::AdamState adam = nn::AdamState::for_size(u.size(), cfg.lr);
    std::mt19937_64 rng(seed);
    std::vector<Eigen::Index> order = all;
    const Eigen::Index batch = cfg.batch_size > 0 ? cfg.batch_size : cells;

    auto current_theta = [&] {
        ParamVector uv{};
        for (std::size_t d = 0; d < uv.size(); ++d) uv[d] = u[static_cast<Eigen::Index>(d)];
        return theta_from_latent(box, uv);
    };

    std::vector<Eigen::Index> subset;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) nn::fisher_yates(order, rng);
        for (Eigen::Index startc = 0; startc < cells; startc += batch) {
            const Eigen::Index m = std::min(batch, cells - startc);
            subset.assign(order.begin() + startc, order.begin() + startc + m);
            const Evaluation ev = objective(current_theta(), subset);
            if (!std::isfinite(ev.loss)) throw std::runtime_error("calibration loss became non-finite");
            Eigen::VectorXd gu(u.size());
            for (Eigen::Index d = 0; d < u.size(); ++d) {
                const double s = sigmoid(u[d]);
                const auto ud = static_cast<std::size_t>(d);
                gu[d] = ev.grad[ud] * (box.upper[ud] - box.lower[ud]) * s * (1.0 - s);
            }
            nn::adam_step(u, gu, adam);
        }
        const ModelParams theta = current_theta();
        const double value = full_loss(theta);
        out.trace.push_back(value);
        if (value < out.best_loss) {
            out.best_loss = value;
            out.theta = theta;
        }
    }
    return out;
}

RunOutcome run_with_restarts(const Objective& objective, Eigen::Index cells, const ThetaBox& box,
                             const CalibrationConfig& cfg, std::optional<ModelParams> init) {
    cfg.validate();
    box.validate();
    const ModelParams first = init.value_or(box.midpoint());
    require(box.contains(first), "initial parameters must lie strictly inside the box");
    RunOutcome best = run_adam(objective, cells, box, cfg, first, derive_seed(cfg.seed, 0));
    std::mt19937_64 starts(derive_seed(cfg.seed, 1000));
    for (int r = 1; r < cfg.restarts; ++r) {
        const ModelParams start = uniform_theta(box, starts);
        RunOutcome run = run_adam(objective, cells, box, cfg, start,
                                  derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
        if (run.best_loss < best.best_loss) best = std::move(run);
    }
    return best;
}

void check_grid_network(const nn::Network& net, const PriceGrid& observed) {
    require(net.input_dim() == static_cast<int>(ModelParams::size), "grid network must take 7 inputs");
    require(net.output_dim() == observed.size(), "grid network output size does not match the price grid");
}

Eigen::VectorXd theta_column(const ModelParams& theta) {
    const ParamVector v = to_vector(theta);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Objective for a network that maps theta to every cell at once.
Objective grid_objective(const nn::Network& net, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                         nn::LossKind kind) {
    return [&net, lower, upper, kind](const ModelParams& theta, const std::vector<Eigen::Index>& cells) {
        const Eigen::VectorXd x = theta_column(theta);
        const Eigen::VectorXd pred = nn::forward(net, x);
        const auto m = static_cast<Eigen::Index>(cells.size());
        Eigen::MatrixXd p(m, 1), lo(m, 1), hi(m, 1);
        for (Eigen::Index i = 0; i < m; ++i) {
            const Eigen::Index c = cells[static_cast<std::size_t>(i)];
            p(i, 0) = pred[c];
            lo(i, 0) = lower[c];
            hi(i, 0) = upper[c];
        }
        Evaluation ev;
        Eigen::MatrixXd g;
        if (kind == nn::LossKind::mse) {
            ev.loss = nn::loss_mse(p, lo);
            g = nn::loss_mse_grad(p, lo);
        } else {
            ev.loss = nn::loss_bidask(p, lo, hi);
            g = nn::loss_bidask_grad(p, lo, hi);
        }
        Eigen::MatrixXd out_grad = Eigen::MatrixXd::Zero(pred.size(), 1);
        for (Eigen::Index i = 0; i < m; ++i) out_grad(cells[static_cast<std::size_t>(i)], 0) += g(i, 0);
        const nn::Gradients back = nn::backward(net, x, out_grad, false);
        for (std::size_t d = 0; d < ev.grad.size(); ++d) ev.grad[d] = back.inputs(static_cast<Eigen::Index>(d), 0);
        return ev;
    };
}

PriceGrid network_grid(const nn::Network& net, const ModelParams& theta, Eigen::Index rows, Eigen::Index cols) {
    return unflatten(nn::forward(net, theta_column(theta)), rows, cols);
}

PriceGrid outside_band(const PriceGrid& pred, const BidAskGrid& bands) {
    return ((pred.array() < bands.bid.array()) || (pred.array() > bands.ask.array())).cast<double>().matrix();
}

}  // namespace

void ThetaBox::validate() const {
    for (std::size_t d = 0; d < lower.size(); ++d) {
        require(std::isfinite(lower[d]) && std::isfinite(upper[d]), "box bounds must be finite");
        require(lower[d] < upper[d], std::string("box lower bound must be below upper bound for ") + kParamNames[d]);
    }
    // Every point of the box has to be a valid parameter vector.
    require(lower[0] >= 0.0, "box must have a >= 0");
    require(lower[1] > 0.0 && lower[2] > 0.0 && lower[6] > 0.0, "box must have b, k, alpha3 > 0");
}

ModelParams ThetaBox::midpoint() const {
    ParamVector v{};
    for (std::size_t d = 0; d < v.size(); ++d) v[d] = 0.5 * (lower[d] + upper[d]);
    return from_vector(v);
}

bool ThetaBox::contains(const ModelParams& theta) const {
    const ParamVector v = to_vector(theta);
    for (std::size_t d = 0; d < v.size(); ++d)
        if (!(v[d] > lower[d] && v[d] < upper[d])) return false;
    return true;
}

std::vector<std::pair<double, double>> ThetaBox::ranges() const {
    std::vector<std::pair<double, double>> out;
    for (std::size_t d = 0; d < lower.size(); ++d) out.emplace_back(lower[d], upper[d]);
    return out;
}

void ContractGrid::validate() const {
    require(!taus.empty() && !strikes.empty(), "contract grid axes must be nonempty");
    require(std::is_sorted(taus.begin(), taus.end(), std::less_equal<>()) &&
                std::adjacent_find(taus.begin(), taus.end()) == taus.end(),
            "maturities must be strictly increasing");
    require(std::adjacent_find(strikes.begin(), strikes.end(), std::greater_equal<>()) == strikes.end(),
            "strikes must be strictly increasing");
    require(taus.front() >= 0.0 && strikes.front() > 0.0 && delivery_len > 0.0,
            "contract grid values must be positive");
}

ContractSpec ContractGrid::contract(Eigen::Index i, Eigen::Index j) const {
    const double tau = taus.at(static_cast<std::size_t>(i));
    return ContractSpec{strikes.at(static_cast<std::size_t>(j)), tau, tau, delivery_len};
}

void LambdaRanges::validate() const {
    require(tau_lo >= 0.0 && tau_lo < tau_hi, "maturity range must satisfy 0 <= lo < hi");
    require(strike_lo > 0.0 && strike_lo < strike_hi, "strike range must satisfy 0 < lo < hi");
}

void BidAskGrid::validate() const {
    require(bid.rows() == ask.rows() && bid.cols() == ask.cols(), "bid and ask grids differ in shape");
    require((bid.array() > 0.0).all(), "bids must be positive");
    require((bid.array() <= ask.array()).all(), "bid exceeds ask");
}

ParamVector to_vector(const ModelParams& theta) {
    return theta.to_array();
}

ModelParams from_vector(const ParamVector& v) {
    return ModelParams::from_array(v);
}

std::vector<ModelParams> sample_theta(const ThetaBox& box, int n, int grid_points_per_dim, std::uint64_t seed) {
    box.validate();
    require(n >= 1, "sample count must be at least 1");
    require(grid_points_per_dim == 0 || grid_points_per_dim >= 2, "grid_points_per_dim must be 0 or >= 2");
    const int g = grid_points_per_dim == 0 ? std::max(n, 2) : grid_points_per_dim;

    std::mt19937_64 rng(seed);
    std::vector<ParamVector> values(static_cast<std::size_t>(n));
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(g));
    for (std::size_t d = 0; d < ModelParams::size; ++d) {
        const double lo = box.lower[d];
        const double step = (box.upper[d] - lo) / (g - 1);
        for (int filled = 0; filled < n;) {
            std::iota(perm.begin(), perm.end(), Eigen::Index{0});
            nn::fisher_yates(perm, rng);
            for (int i = 0; i < g && filled < n; ++i, ++filled) {
                const auto idx = perm[static_cast<std::size_t>(i)];
                values[static_cast<std::size_t>(filled)][d] =
                    idx == g - 1 ? box.upper[d] : lo + step * static_cast<double>(idx);
            }
        }
    }
    std::vector<ModelParams> out;
    out.reserve(values.size());
    for (const auto& v : values) out.push_back(from_vector(v));
    return out;
}

PriceGrid price_grid(const ModelParams& theta, const ContractGrid& grid, const MarketConfig& market) {
    PriceGrid prices(grid.rows(), grid.cols());
    for (Eigen::Index i = 0; i < grid.rows(); ++i)
        for (Eigen::Index j = 0; j < grid.cols(); ++j) prices(i, j) = call_price(theta, grid.contract(i, j), market);
    return prices;
}

SplitDataset<GridSample> gen_grid_dataset(const ThetaBox& box, const ContractGrid& grid, int n_train,
                                          int n_test, std::uint64_t seed, int grid_points_per_dim) {
    box.validate();
    grid.validate();
    require(n_train >= 1 && n_test >= 1, "dataset sizes must be at least 1");
    SplitDataset<GridSample> out;
    std::mt19937_64 redraw(derive_seed(seed, 3));
    auto build = [&](int n, std::uint64_t stream, std::vector<GridSample>& dest) {
        dest.reserve(static_cast<std::size_t>(n));
        for (ModelParams theta : sample_theta(box, n, grid_points_per_dim, derive_seed(seed, stream))) {
            PriceGrid prices = price_grid(theta, grid);
            while (prices.minCoeff() < kPriceFloor) {
                ++out.regenerated;
                theta = uniform_theta(box, redraw);
                prices = price_grid(theta, grid);
            }
            dest.push_back({theta, std::move(prices)});
        }
    };
    build(n_train, 1, out.train);
    build(n_test, 2, out.test);
    return out;
}

SplitDataset<PointwiseSample> gen_pointwise_dataset(const ThetaBox& box, const LambdaRanges& ranges,
                                                    int n_train, int n_test, std::uint64_t seed,
                                                    double delivery_len, int grid_points_per_dim) {
    box.validate();
    ranges.validate();
    require(n_train >= 1 && n_test >= 1, "dataset sizes must be at least 1");
    require(delivery_len > 0.0, "delivery length must be positive");
    SplitDataset<PointwiseSample> out;
    std::mt19937_64 redraw(derive_seed(seed, 3));
    auto draw_lambda = [&](std::mt19937_64& rng, PointwiseSample& s) {
        s.tau = ranges.tau_lo + (ranges.tau_hi - ranges.tau_lo) * nn::uniform01(rng);
        s.strike = ranges.strike_lo + (ranges.strike_hi - ranges.strike_lo) * nn::uniform01(rng);
    };
    auto price_of = [&](const PointwiseSample& s) {
        return call_price(s.theta, ContractSpec{s.strike, s.tau, s.tau, delivery_len}, MarketConfig{});
    };
    auto build = [&](int n, std::uint64_t stream, std::vector<PointwiseSample>& dest) {
        std::mt19937_64 lambda_rng(derive_seed(seed, stream + 10));
        dest.reserve(static_cast<std::size_t>(n));
        for (const ModelParams& theta : sample_theta(box, n, grid_points_per_dim, derive_seed(seed, stream))) {
            PointwiseSample s;
            s.theta = theta;
            draw_lambda(lambda_rng, s);
            s.price = price_of(s);
            while (s.price < kPriceFloor) {
                ++out.regenerated;
                s.theta = uniform_theta(box, redraw);
                draw_lambda(redraw, s);
                s.price = price_of(s);
            }
            dest.push_back(s);
        }
    };
    build(n_train, 1, out.train);
    build(n_test, 2, out.test);
    return out;
}

std::pair<int, int> cluster_assign(double tau, double strike) {
    // Maturity edges 1/12, k/12 + 1/24 (k = 1..6), 1; strike edges 31.6,
    // 31.7, 31.9, ..., 33.1, 33.2.
    static const std::array<double, 8> tau_edges = {1.0 / 12,  3.0 / 24,  5.0 / 24,  7.0 / 24,
                                                    9.0 / 24, 11.0 / 24, 13.0 / 24, 1.0};
    static const std::array<double, 10> strike_edges = {31.6, 31.7, 31.9, 32.1, 32.3,
                                                        32.5, 32.7, 32.9, 33.1, 33.2};
    auto locate = [](double v, const auto& edges, const char* what) {
        if (!(v >= edges.front() && v <= edges.back()))
            throw std::invalid_argument(std::string(what) + " outside the pointwise range");
        if (v == edges.back()) return static_cast<int>(edges.size()) - 2;
        const auto it = std::upper_bound(edges.begin(), edges.end(), v);
        return static_cast<int>(it - edges.begin()) - 1;
    };
    return {locate(tau, tau_edges, "maturity"), locate(strike, strike_edges, "strike")};
}

Eigen::VectorXd flatten(const PriceGrid& grid) {
    Eigen::VectorXd flat(grid.size());
    for (Eigen::Index i = 0; i < grid.rows(); ++i)
        for (Eigen::Index j = 0; j < grid.cols(); ++j) flat[i * grid.cols() + j] = grid(i, j);
    return flat;
}

PriceGrid unflatten(const Eigen::VectorXd& flat, Eigen::Index rows, Eigen::Index cols) {
    require(flat.size() == rows * cols, "flat grid has the wrong length");
    PriceGrid grid(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) grid(i, j) = flat[i * cols + j];
    return grid;
}

nn::Dataset to_dataset(const std::vector<GridSample>& samples) {
    require(!samples.empty(), "no samples");
    const auto n = static_cast<Eigen::Index>(samples.size());
    nn::Dataset data;
    data.inputs.resize(static_cast<Eigen::Index>(ModelParams::size), n);
    data.targets.resize(samples.front().prices.size(), n);
    for (Eigen::Index s = 0; s < n; ++s) {
        const auto& sample = samples[static_cast<std::size_t>(s)];
        data.inputs.col(s) = theta_column(sample.theta);
        data.targets.col(s) = flatten(sample.prices);
    }
    return data;
}

nn::Dataset to_dataset(const std::vector<PointwiseSample>& samples) {
    require(!samples.empty(), "no samples");
    const auto n = static_cast<Eigen::Index>(samples.size());
    nn::Dataset data;
    data.inputs.resize(static_cast<Eigen::Index>(ModelParams::size) + 2, n);
    data.targets.resize(1, n);
    for (Eigen::Index s = 0; s < n; ++s) {
        const auto& sample = samples[static_cast<std::size_t>(s)];
        data.inputs.col(s).head(ModelParams::size) = theta_column(sample.theta);
        data.inputs(ModelParams::size, s) = sample.tau;
        data.inputs(ModelParams::size + 1, s) = sample.strike;
        data.targets(0, s) = sample.price;
    }
    return data;
}

nn::Network make_grid_network(const ThetaBox& box, std::uint64_t seed, int outputs) {
    nn::Network net = nn::Network::zeros({7, 30, 30, 30, outputs}, nn::Activation::relu);
    net.input_norm = box.ranges();
    nn::init_glorot(net, seed);
    return net;
}

nn::Network make_pointwise_network(const ThetaBox& box, const LambdaRanges& ranges, std::uint64_t seed) {
    nn::Network net = nn::Network::zeros({9, 30, 30, 30, 1}, nn::Activation::elu);
    net.input_norm = box.ranges();
    net.input_norm.emplace_back(ranges.tau_lo, ranges.tau_hi);
    net.input_norm.emplace_back(ranges.strike_lo, ranges.strike_hi);
    nn::init_glorot(net, seed);
    return net;
}

std::vector<Observation> grid_to_observations(const GridSample& sample, const ContractGrid& grid) {
    require(sample.prices.rows() == grid.rows() && sample.prices.cols() == grid.cols(),
            "sample does not match the contract grid");
    std::vector<Observation> out;
    for (Eigen::Index i = 0; i < grid.rows(); ++i)
        for (Eigen::Index j = 0; j < grid.cols(); ++j)
            out.push_back({grid.taus[static_cast<std::size_t>(i)], grid.strikes[static_cast<std::size_t>(j)],
                           sample.prices(i, j)});
    return out;
}

void CalibrationConfig::validate() const {
    require(epochs >= 0, "epochs must be nonnegative");
    require(batch_size >= 0, "batch_size must be nonnegative");
    require(lr >= 0.0 && std::isfinite(lr), "learning rate must be finite and nonnegative");
    require(restarts >= 1, "restarts must be at least 1");
}

ModelParams theta_from_latent(const ThetaBox& box, const ParamVector& u) {
    ParamVector v{};
    for (std::size_t d = 0; d < v.size(); ++d)
        v[d] = box.lower[d] + (box.upper[d] - box.lower[d]) * sigmoid(u[d]);
    return from_vector(v);
}

ParamVector latent_from_theta(const ThetaBox& box, const ModelParams& theta) {
    const ParamVector v = to_vector(theta);
    ParamVector u{};
    for (std::size_t d = 0; d < v.size(); ++d) {
        const double p = (v[d] - box.lower[d]) / (box.upper[d] - box.lower[d]);
        require(p > 0.0 && p < 1.0, "parameters must lie strictly inside the box");
        u[d] = std::log(p / (1.0 - p));
    }
    return u;
}

CalibrationResult calibrate_grid(const nn::Network& net, const PriceGrid& observed, const ThetaBox& box,
                                 const ContractGrid& grid, const CalibrationConfig& cfg,
                                 std::optional<ModelParams> init, std::optional<ModelParams> truth) {
    net.validate();
    check_grid_network(net, observed);
    require(observed.rows() == grid.rows() && observed.cols() == grid.cols(),
            "observed prices do not match the contract grid");
    require((observed.array() > 0.0).all() && observed.allFinite(), "observed prices must be positive");

    const Eigen::VectorXd target = flatten(observed);
    const RunOutcome run =
        run_with_restarts(grid_objective(net, target, target, nn::LossKind::mse), target.size(), box, cfg, init);

    CalibrationResult result;
    result.theta_hat = run.theta;
    result.loss_trace = run.trace;
    result.initial_loss = run.initial_loss;
    result.final_loss = run.best_loss;
    result.price_rel_err = metrics(price_grid(run.theta, grid), observed);
    result.fit_rel_err = metrics(network_grid(net, run.theta, grid.rows(), grid.cols()), observed);
    if (truth) result.param_rel_err = param_metrics(run.theta, *truth);
    return result;
}

CalibrationResult calibrate_bidask(const nn::Network& net, const BidAskGrid& bands, const ThetaBox& box,
                                   const ContractGrid& grid, const CalibrationConfig& cfg,
                                   std::optional<ModelParams> init, std::optional<ModelParams> truth) {
    net.validate();
    bands.validate();
    check_grid_network(net, bands.bid);
    require(bands.bid.rows() == grid.rows() && bands.bid.cols() == grid.cols(),
            "bid-ask grid does not match the contract grid");

    const Eigen::VectorXd bid = flatten(bands.bid);
    const Eigen::VectorXd ask = flatten(bands.ask);
    const RunOutcome run =
        run_with_restarts(grid_objective(net, bid, ask, nn::LossKind::bidask), bid.size(), box, cfg, init);
    const ModelParams start = init.value_or(box.midpoint());

    CalibrationResult result;
    result.theta_hat = run.theta;
    result.loss_trace = run.trace;
    result.initial_loss = run.initial_loss;
    result.final_loss = run.best_loss;
    const PriceGrid mid = 0.5 * (bands.bid + bands.ask);
    const PriceGrid reference = truth ? price_grid(*truth, grid) : mid;
    const PriceGrid fitted = network_grid(net, run.theta, grid.rows(), grid.cols());
    result.price_rel_err = metrics(price_grid(run.theta, grid), reference);
    result.fit_rel_err = metrics(fitted, reference);
    result.mismatch_before = outside_band(network_grid(net, start, grid.rows(), grid.cols()), bands);
    result.mismatch_after = outside_band(fitted, bands);
    if (truth) result.param_rel_err = param_metrics(run.theta, *truth);
    return result;
}

CalibrationResult calibrate_pointwise(const nn::Network& net, const std::vector<Observation>& observations,
                                      const ThetaBox& box, const CalibrationConfig& cfg,
                                      std::optional<ModelParams> init, std::optional<ModelParams> truth,
                                      double delivery_len) {
    net.validate();
    require(net.input_dim() == static_cast<int>(ModelParams::size) + 2 && net.output_dim() == 1,
            "pointwise network must map 9 inputs to 1 output");
    require(!observations.empty(), "no observations");
    for (const auto& o : observations) require(o.price > 0.0 && std::isfinite(o.price), "observed prices must be positive");

    const auto n = static_cast<Eigen::Index>(observations.size());
    Objective objective = [&](const ModelParams& theta, const std::vector<Eigen::Index>& cells) {
        const auto m = static_cast<Eigen::Index>(cells.size());
        Eigen::MatrixXd x(ModelParams::size + 2, m);
        Eigen::MatrixXd y(1, m);
        const Eigen::VectorXd th = theta_column(theta);
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto& o = observations[static_cast<std::size_t>(cells[static_cast<std::size_t>(i)])];
            x.col(i).head(ModelParams::size) = th;
            x(ModelParams::size, i) = o.tau;
            x(ModelParams::size + 1, i) = o.strike;
            y(0, i) = o.price;
        }
        const nn::Gradients g = nn::grad(net, x, y, nn::LossKind::mse, {}, false);
        Evaluation ev;
        ev.loss = g.loss;
        const Eigen::VectorXd total = g.inputs.topRows(ModelParams::size).rowwise().sum();
        for (std::size_t d = 0; d < ev.grad.size(); ++d) ev.grad[d] = total[static_cast<Eigen::Index>(d)];
        return ev;
    };
    const RunOutcome run = run_with_restarts(objective, n, box, cfg, init);

    CalibrationResult result;
    result.theta_hat = run.theta;
    result.loss_trace = run.trace;
    result.initial_loss = run.initial_loss;
    result.final_loss = run.best_loss;

    PriceGrid model_sum = PriceGrid::Zero(7, 9), fit_sum = PriceGrid::Zero(7, 9), count = PriceGrid::Zero(7, 9);
    for (const auto& o : observations) {
        const auto [r, c] = cluster_assign(o.tau, o.strike);
        const double model = call_price(run.theta, ContractSpec{o.strike, o.tau, o.tau, delivery_len}, {});
        Eigen::VectorXd x(ModelParams::size + 2);
        x.head(ModelParams::size) = theta_column(run.theta);
        x[ModelParams::size] = o.tau;
        x[ModelParams::size + 1] = o.strike;
        const double fit = nn::forward(net, x)[0];
        model_sum(r, c) += std::abs(model - o.price) / o.price;
        fit_sum(r, c) += std::abs(fit - o.price) / o.price;
        count(r, c) += 1.0;
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    result.price_rel_err = (count.array() > 0.0).select(model_sum.array() / count.array(), nan);
    result.fit_rel_err = (count.array() > 0.0).select(fit_sum.array() / count.array(), nan);
    if (truth) result.param_rel_err = param_metrics(run.theta, *truth);
    return result;
}

BidAskGrid make_bidask(const PriceGrid& prices, double spread_lo, double spread_hi) {
    require(spread_lo > 0.0 && spread_lo <= 1.0 && spread_hi >= 1.0 && std::isfinite(spread_hi),
            "spreads must satisfy 0 < lo <= 1 <= hi");
    require((prices.array() > 0.0).all(), "prices must be positive");
    return BidAskGrid{spread_lo * prices, spread_hi * prices};
}

PriceGrid metrics(const PriceGrid& predicted, const PriceGrid& truth) {
    require(predicted.rows() == truth.rows() && predicted.cols() == truth.cols(), "grid shapes differ");
    require((truth.array() != 0.0).all(), "relative error undefined for zero truth values");
    return ((predicted - truth).array().abs() / truth.array().abs()).matrix();
}

ParamVector param_metrics(const ModelParams& theta_hat, const ModelParams& theta_true) {
    const ParamVector est = to_vector(theta_hat);
    const ParamVector tru = to_vector(theta_true);
    ParamVector out{};
    for (std::size_t d = 0; d < out.size(); ++d) {
        require(tru[d] != 0.0, std::string("relative error undefined for zero ") + kParamNames[d]);
        out[d] = std::abs(est[d] - tru[d]) / std::abs(tru[d]);
    }
    return out;
}

GridSummary summarize(const std::vector<PriceGrid>& errors) {
    require(!errors.empty(), "nothing to summarise");
    const auto rows = errors.front().rows();
    const auto cols = errors.front().cols();
    PriceGrid sum = PriceGrid::Zero(rows, cols);
    PriceGrid count = PriceGrid::Zero(rows, cols);
    PriceGrid mx = PriceGrid::Constant(rows, cols, -std::numeric_limits<double>::infinity());
    for (const auto& e : errors) {
        require(e.rows() == rows && e.cols() == cols, "error grids differ in shape");
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) {
                if (std::isnan(e(i, j))) continue;
                sum(i, j) += e(i, j);
                count(i, j) += 1.0;
                mx(i, j) = std::max(mx(i, j), e(i, j));
            }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    GridSummary out;
    out.mean = (count.array() > 0.0).select(sum.array() / count.array(), nan);
    out.max = (count.array() > 0.0).select(mx, nan);
    return out;
}

ParamSummary summarize(const std::vector<ParamVector>& errors) {
    require(!errors.empty(), "nothing to summarise");
    ParamSummary out;
    std::vector<double> column(errors.size());
    for (std::size_t d = 0; d < ModelParams::size; ++d) {
        for (std::size_t r = 0; r < errors.size(); ++r) column[r] = errors[r][d];
        out.mean[d] = std::accumulate(column.begin(), column.end(), 0.0) / static_cast<double>(column.size());
        std::sort(column.begin(), column.end());
        const std::size_t mid = column.size() / 2;
        out.median[d] = column.size() % 2 ? column[mid] : 0.5 * (column[mid - 1] + column[mid]);
    }
    return out;
}

}  // namespace hjmcal::calib
