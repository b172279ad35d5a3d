#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hjmcal::nn {

enum class Activation { relu, elu };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

enum class LossKind { mse, bidask };

// Raised for malformed or incompatible weight documents.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainingMetadata {
    std::uint64_t seed = 0;
    int epochs = 0;
    int batch_size = 0;
    double lr = 0.0;
    std::string created_at;

    bool operator==(const TrainingMetadata&) const = default;
};

// Feedforward network x -> H_L(rho(H_{L-1}(... rho(H_1(x))))). Inputs are
// first mapped to [0, 1] with input_norm (lo, hi) pairs when present.
struct Network {
    std::vector<int> dims;                 // (n0, ..., nL)
    std::vector<Eigen::MatrixXd> weights;  // V_i is n_i x n_{i-1}
    std::vector<Eigen::VectorXd> biases;   // v_i has n_i entries
    Activation activation = Activation::relu;
    std::vector<std::pair<double, double>> input_norm;
    TrainingMetadata meta;

    // Zero weights and biases of the right shapes.
    static Network zeros(std::vector<int> dims, Activation act);

    int num_layers() const { return static_cast<int>(dims.size()) - 1; }
    int input_dim() const { return dims.front(); }
    int output_dim() const { return dims.back(); }
    std::size_t parameter_count() const;

    // Throws std::invalid_argument on inconsistent shapes.
    void validate() const;

    // Flat parameter vector: per layer, V_i row-major then v_i.
    Eigen::VectorXd flat_params() const;
    void set_flat_params(const Eigen::VectorXd& flat);

    bool operator==(const Network& other) const;
};

// M = sum_i n_i (n_{i-1} + 1).
std::size_t parameter_count(std::span<const int> dims);

// Glorot-uniform weights, zero biases.
void init_glorot(Network& net, std::uint64_t seed);

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& x);
// Columns of `inputs` are samples.
Eigen::MatrixXd forward_batch(const Network& net, const Eigen::MatrixXd& inputs);

double loss_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);
double loss_bidask(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& bid, const Eigen::MatrixXd& ask);
// Derivatives of the losses above with respect to pred.
Eigen::MatrixXd loss_mse_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);
Eigen::MatrixXd loss_bidask_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& bid,
                                 const Eigen::MatrixXd& ask);

struct Gradients {
    double loss = 0.0;
    Eigen::VectorXd params;  // same layout as Network::flat_params
    Eigen::MatrixXd inputs;  // d loss / d raw input, n0 x batch
};

// Reverse pass given d loss / d output (n_L x batch).
Gradients backward(const Network& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& out_grad,
                   bool want_params = true);

// Batch-mean loss and its gradients. For LossKind::bidask `targets` holds the
// bids and `ask` the asks; for LossKind::mse `ask` is ignored.
Gradients grad(const Network& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
               LossKind loss, const Eigen::MatrixXd& ask = {}, bool want_params = true);

struct AdamState {
    Eigen::VectorXd first_moment;
    Eigen::VectorXd second_moment;
    long step_count = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_size(Eigen::Index n, double lr = 1e-3);
    void validate() const;
};

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state);

struct TrainingConfig {
    int epochs = 200;
    int batch_size = 30;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    bool shuffle = true;

    void validate() const;
};

struct Dataset {
    Eigen::MatrixXd inputs;   // n0 x N
    Eigen::MatrixXd targets;  // nL x N (bids under the bid-ask loss)
    Eigen::MatrixXd ask;      // nL x N, bid-ask loss only

    Eigen::Index size() const { return inputs.cols(); }
};

struct TrainResult {
    Network net;
    std::vector<double> epoch_loss;  // mean loss over the samples of each epoch
};

TrainResult train(Network net, const Dataset& data, const TrainingConfig& cfg,
                  LossKind loss = LossKind::mse);

// Zero-bias ReLU network computing x -> A x exactly. dims = (d, n1, ..., p)
// with L = dims.size() - 1 >= 2 and every hidden n_i >= 2d.
Network linear_embed(const Eigen::MatrixXd& A, int depth, std::vector<int> dims);

std::string serialize(const Network& net);
Network deserialize(const std::string& document);

void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

// Deterministic helpers shared with the calibration code. They depend only on
// the 64-bit output of std::mt19937_64, so results match across platforms.
double uniform01(std::mt19937_64& rng);
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n);
void fisher_yates(std::vector<Eigen::Index>& idx, std::mt19937_64& rng);

}  // namespace hjmcal::nn
