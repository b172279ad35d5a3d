#pragma once

#include "hjmcal/hjm_pricing.hpp"
#include "hjmcal/neural_net.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace hjmcal::calib {

using ParamVector = std::array<double, ModelParams::size>;

// 7 x 9 prices, rows indexed by maturity and columns by strike.
using PriceGrid = Eigen::MatrixXd;

inline constexpr const char* kParamNames[ModelParams::size] = {"a",      "b",      "k",     "alpha0",
                                                              "alpha1", "alpha2", "alpha3"};

struct ThetaBox {
    ParamVector lower{0.2, 0.5, 8.0, 34.2, -1.5, 0.2, 4.5};
    ParamVector upper{0.5, 0.8, 9.0, 34.7, -1.0, 1.2, 5.0};

    void validate() const;
    ModelParams midpoint() const;
    bool contains(const ModelParams& theta) const;
    // (lo, hi) pairs for network input normalisation.
    std::vector<std::pair<double, double>> ranges() const;
};

struct ContractGrid {
    std::vector<double> taus{1.0 / 12, 2.0 / 12, 3.0 / 12, 4.0 / 12, 5.0 / 12, 6.0 / 12, 1.0};
    std::vector<double> strikes{31.6, 31.8, 32.0, 32.2, 32.4, 32.6, 32.8, 33.0, 33.2};
    double delivery_len = 1.0 / 12;

    void validate() const;
    Eigen::Index rows() const { return static_cast<Eigen::Index>(taus.size()); }
    Eigen::Index cols() const { return static_cast<Eigen::Index>(strikes.size()); }
    Eigen::Index size() const { return rows() * cols(); }
    // Contract for cell (i, j) with delivery starting at the option maturity.
    ContractSpec contract(Eigen::Index i, Eigen::Index j) const;
};

// Contract-feature ranges for pointwise learning.
struct LambdaRanges {
    double tau_lo = 1.0 / 12;
    double tau_hi = 1.0;
    double strike_lo = 31.6;
    double strike_hi = 33.2;

    void validate() const;
};

struct GridSample {
    ModelParams theta;
    PriceGrid prices;
};

struct PointwiseSample {
    ModelParams theta;
    double tau = 0.0;
    double strike = 0.0;
    double price = 0.0;
};

struct Observation {
    double tau = 0.0;
    double strike = 0.0;
    double price = 0.0;
};

struct BidAskGrid {
    PriceGrid bid;
    PriceGrid ask;

    void validate() const;
};

template <class Sample>
struct SplitDataset {
    std::vector<Sample> train;
    std::vector<Sample> test;
    int regenerated = 0;  // samples redrawn because of the price floor
};

ParamVector to_vector(const ModelParams& theta);
ModelParams from_vector(const ParamVector& v);

// Each coordinate takes values on a uniform grid of grid_points_per_dim
// points (0 means n points); per dimension the index sequence is a
// concatenation of independent random permutations of the grid, so the
// coordinates are matched at random across dimensions.
std::vector<ModelParams> sample_theta(const ThetaBox& box, int n, int grid_points_per_dim,
                                      std::uint64_t seed);

PriceGrid price_grid(const ModelParams& theta, const ContractGrid& grid, const MarketConfig& market = {});

// Samples whose smallest price falls below this are redrawn.
inline constexpr double kPriceFloor = 1e-6;

SplitDataset<GridSample> gen_grid_dataset(const ThetaBox& box, const ContractGrid& grid, int n_train,
                                          int n_test, std::uint64_t seed, int grid_points_per_dim = 0);
SplitDataset<PointwiseSample> gen_pointwise_dataset(const ThetaBox& box, const LambdaRanges& ranges,
                                                    int n_train, int n_test, std::uint64_t seed,
                                                    double delivery_len = 1.0 / 12,
                                                    int grid_points_per_dim = 0);

// Label (row, col) on the 7 x 9 cluster grid.
std::pair<int, int> cluster_assign(double tau, double strike);

// Network inputs/targets for the two learning modes.
nn::Dataset to_dataset(const std::vector<GridSample>& samples);
nn::Dataset to_dataset(const std::vector<PointwiseSample>& samples);
Eigen::VectorXd flatten(const PriceGrid& grid);
PriceGrid unflatten(const Eigen::VectorXd& flat, Eigen::Index rows, Eigen::Index cols);

// Architectures: grid (7,30,30,30,63) ReLU and pointwise (9,30,30,30,1) ELU,
// Glorot initialised, inputs normalised by the box (and lambda ranges).
nn::Network make_grid_network(const ThetaBox& box, std::uint64_t seed, int outputs = 63);
nn::Network make_pointwise_network(const ThetaBox& box, const LambdaRanges& ranges, std::uint64_t seed);

// Grid test sample reshaped to (tau, strike, price) triples.
std::vector<Observation> grid_to_observations(const GridSample& sample, const ContractGrid& grid);

struct CalibrationConfig {
    int epochs = 1000;
    int batch_size = 30;  // cells per Adam step; 0 means all cells
    double lr = 5e-3;
    std::uint64_t seed = 0;
    bool shuffle = true;
    int restarts = 1;  // extra starts are drawn uniformly in the box

    void validate() const;
};

struct CalibrationResult {
    ModelParams theta_hat;
    std::vector<double> loss_trace;  // initial loss, then one entry per epoch
    double initial_loss = 0.0;
    double final_loss = 0.0;  // loss at theta_hat
    std::optional<ParamVector> param_rel_err;
    // Relative error of the model re-priced at theta_hat against the
    // observations (grid modes: 7 x 9; pointwise: per-cluster mean, NaN where empty).
    PriceGrid price_rel_err;
    // Relative error of the network at theta_hat against the observations.
    PriceGrid fit_rel_err;
    std::optional<PriceGrid> mismatch_before;  // bid-ask mode: 1 outside the band, else 0
    std::optional<PriceGrid> mismatch_after;
};

// theta = lower + (upper - lower) * sigmoid(u).
ModelParams theta_from_latent(const ThetaBox& box, const ParamVector& u);
ParamVector latent_from_theta(const ThetaBox& box, const ModelParams& theta);

CalibrationResult calibrate_grid(const nn::Network& net, const PriceGrid& observed, const ThetaBox& box,
                                 const ContractGrid& grid, const CalibrationConfig& cfg,
                                 std::optional<ModelParams> init = std::nullopt,
                                 std::optional<ModelParams> truth = std::nullopt);

CalibrationResult calibrate_pointwise(const nn::Network& net, const std::vector<Observation>& observations,
                                      const ThetaBox& box, const CalibrationConfig& cfg,
                                      std::optional<ModelParams> init = std::nullopt,
                                      std::optional<ModelParams> truth = std::nullopt,
                                      double delivery_len = 1.0 / 12);

CalibrationResult calibrate_bidask(const nn::Network& net, const BidAskGrid& bands, const ThetaBox& box,
                                   const ContractGrid& grid, const CalibrationConfig& cfg,
                                   std::optional<ModelParams> init = std::nullopt,
                                   std::optional<ModelParams> truth = std::nullopt);

BidAskGrid make_bidask(const PriceGrid& prices, double spread_lo, double spread_hi);

// Cellwise |predicted - truth| / |truth|.
PriceGrid metrics(const PriceGrid& predicted, const PriceGrid& truth);
// |theta_hat_i - theta_i| / |theta_i|.
ParamVector param_metrics(const ModelParams& theta_hat, const ModelParams& theta_true);

struct GridSummary {
    PriceGrid mean;
    PriceGrid max;
};
// Cellwise mean and max over a set of error grids; NaN cells are skipped.
GridSummary summarize(const std::vector<PriceGrid>& errors);

struct ParamSummary {
    ParamVector mean{};
    ParamVector median{};
};
ParamSummary summarize(const std::vector<ParamVector>& errors);

}  // namespace hjmcal::calib
