#include "hjmcal/neural_net.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace hjmcal::nn {

namespace {

constexpr int kFormatVersion = 1;

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

Eigen::MatrixXd activate(Activation act, const Eigen::MatrixXd& z) {
    if (act == Activation::relu) return z.cwiseMax(0.0);
    return z.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

// rho'(z); ReLU'(0) is taken as 0.
Eigen::MatrixXd activate_slope(Activation act, const Eigen::MatrixXd& z) {
    if (act == Activation::relu) return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
}

Eigen::MatrixXd normalize_inputs(const Network& net, const Eigen::MatrixXd& x) {
    require(x.rows() == net.input_dim(), "input dimension mismatch");
    if (net.input_norm.empty()) return x;
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto [lo, hi] = net.input_norm[static_cast<std::size_t>(i)];
        out.row(i) = (x.row(i).array() - lo) / (hi - lo);
    }
    return out;
}

void require_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument(what);
}

}  // namespace

std::string to_string(Activation act) {
    return act == Activation::relu ? "relu" : "elu";
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "elu") return Activation::elu;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

Network Network::zeros(std::vector<int> dims, Activation act) {
    require(dims.size() >= 2, "a network needs at least one layer");
    for (int n : dims) require(n >= 1, "layer sizes must be positive");
    Network net;
    net.dims = std::move(dims);
    net.activation = act;
    for (std::size_t i = 1; i < net.dims.size(); ++i) {
        net.weights.push_back(Eigen::MatrixXd::Zero(net.dims[i], net.dims[i - 1]));
        net.biases.push_back(Eigen::VectorXd::Zero(net.dims[i]));
    }
    return net;
}

std::size_t parameter_count(std::span<const int> dims) {
    std::size_t m = 0;
    for (std::size_t i = 1; i < dims.size(); ++i)
        m += static_cast<std::size_t>(dims[i]) * static_cast<std::size_t>(dims[i - 1] + 1);
    return m;
}

std::size_t Network::parameter_count() const {
    return nn::parameter_count(dims);
}

void Network::validate() const {
    require(dims.size() >= 2, "a network needs at least one layer");
    require(weights.size() == dims.size() - 1 && biases.size() == dims.size() - 1,
            "layer count does not match dims");
    for (std::size_t i = 0; i < weights.size(); ++i) {
        require(weights[i].rows() == dims[i + 1] && weights[i].cols() == dims[i],
                "weight matrix " + std::to_string(i + 1) + " has the wrong shape");
        require(biases[i].size() == dims[i + 1],
                "bias vector " + std::to_string(i + 1) + " has the wrong length");
    }
    require(input_norm.empty() || input_norm.size() == static_cast<std::size_t>(dims.front()),
            "input_norm must be empty or match the input dimension");
    for (const auto& [lo, hi] : input_norm) require(hi > lo, "input_norm needs lo < hi");
}

Eigen::VectorXd Network::flat_params() const {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index pos = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const auto& w = weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) flat[pos++] = w(r, c);
        flat.segment(pos, biases[l].size()) = biases[l];
        pos += biases[l].size();
    }
    return flat;
}

void Network::set_flat_params(const Eigen::VectorXd& flat) {
    require(flat.size() == static_cast<Eigen::Index>(parameter_count()), "flat parameter length mismatch");
    Eigen::Index pos = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        auto& w = weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat[pos++];
        biases[l] = flat.segment(pos, biases[l].size());
        pos += biases[l].size();
    }
}

bool Network::operator==(const Network& other) const {
    if (dims != other.dims || activation != other.activation || input_norm != other.input_norm ||
        !(meta == other.meta) || weights.size() != other.weights.size())
        return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
    }
    return true;
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % n;
}

void fisher_yates(std::vector<Eigen::Index>& idx, std::mt19937_64& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(idx[i - 1], idx[j]);
    }
}

void init_glorot(Network& net, std::uint64_t seed) {
    net.validate();
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        auto& w = net.weights[l];
        const double scale = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = scale * (2.0 * uniform01(rng) - 1.0);
        net.biases[l].setZero();
    }
}

Eigen::MatrixXd forward_batch(const Network& net, const Eigen::MatrixXd& inputs) {
    Eigen::MatrixXd a = normalize_inputs(net, inputs);
    const std::size_t layers = net.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        Eigen::MatrixXd z = net.weights[l] * a;
        z.colwise() += net.biases[l];
        a = (l + 1 < layers) ? activate(net.activation, z) : std::move(z);
    }
    return a;
}

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& x) {
    return forward_batch(net, x);
}

double loss_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    require_same_shape(pred, target, "prediction and target shapes differ");
    require(pred.size() > 0, "empty loss input");
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Eigen::MatrixXd loss_mse_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    require_same_shape(pred, target, "prediction and target shapes differ");
    return 2.0 * (pred - target) / static_cast<double>(pred.size());
}

namespace {

void check_bands(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& bid, const Eigen::MatrixXd& ask) {
    require_same_shape(pred, bid, "prediction and bid shapes differ");
    require_same_shape(pred, ask, "prediction and ask shapes differ");
    require(pred.size() > 0, "empty loss input");
    require((bid.array() <= ask.array()).all(), "bid exceeds ask");
}

}  // namespace

double loss_bidask(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& bid, const Eigen::MatrixXd& ask) {
    check_bands(pred, bid, ask);
    const auto below = (pred.array() < bid.array()).select(pred.array() - bid.array(), 0.0);
    const auto above = (pred.array() > ask.array()).select(pred.array() - ask.array(), 0.0);
    return (below.square() + above.square()).sum() / static_cast<double>(pred.size());
}

Eigen::MatrixXd loss_bidask_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& bid,
                                 const Eigen::MatrixXd& ask) {
    check_bands(pred, bid, ask);
    const auto below = (pred.array() < bid.array()).select(pred.array() - bid.array(), 0.0);
    const auto above = (pred.array() > ask.array()).select(pred.array() - ask.array(), 0.0);
    return 2.0 * (below + above).matrix() / static_cast<double>(pred.size());
}

Gradients backward(const Network& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& out_grad,
                   bool want_params) {
    const std::size_t layers = net.weights.size();
    std::vector<Eigen::MatrixXd> acts;  // a_0 .. a_{L-1}
    std::vector<Eigen::MatrixXd> pre;   // z_1 .. z_{L-1}
    acts.push_back(normalize_inputs(net, inputs));
    for (std::size_t l = 0; l + 1 < layers; ++l) {
        Eigen::MatrixXd z = net.weights[l] * acts.back();
        z.colwise() += net.biases[l];
        acts.push_back(activate(net.activation, z));
        pre.push_back(std::move(z));
    }
    require(out_grad.rows() == net.output_dim() && out_grad.cols() == inputs.cols(),
            "output gradient shape mismatch");

    Gradients g;
    if (want_params) g.params.resize(static_cast<Eigen::Index>(net.parameter_count()));
    std::vector<Eigen::Index> offsets(layers);
    Eigen::Index pos = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        offsets[l] = pos;
        pos += net.weights[l].size() + net.biases[l].size();
    }

    Eigen::MatrixXd dz = out_grad;
    for (std::size_t l = layers; l-- > 0;) {
        if (want_params) {
            const Eigen::MatrixXd dw = dz * acts[l].transpose();
            Eigen::Index p = offsets[l];
            for (Eigen::Index r = 0; r < dw.rows(); ++r)
                for (Eigen::Index c = 0; c < dw.cols(); ++c) g.params[p++] = dw(r, c);
            g.params.segment(p, dz.rows()) = dz.rowwise().sum();
        }
        Eigen::MatrixXd da = net.weights[l].transpose() * dz;
        if (l > 0) {
            dz = da.cwiseProduct(activate_slope(net.activation, pre[l - 1]));
        } else {
            g.inputs = std::move(da);
        }
    }
    if (!net.input_norm.empty()) {
        for (Eigen::Index i = 0; i < g.inputs.rows(); ++i) {
            const auto [lo, hi] = net.input_norm[static_cast<std::size_t>(i)];
            g.inputs.row(i) /= (hi - lo);
        }
    }
    return g;
}

Gradients grad(const Network& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
               LossKind loss, const Eigen::MatrixXd& ask, bool want_params) {
    const Eigen::MatrixXd pred = forward_batch(net, inputs);
    double value;
    Eigen::MatrixXd out_grad;
    if (loss == LossKind::mse) {
        value = loss_mse(pred, targets);
        out_grad = loss_mse_grad(pred, targets);
    } else {
        value = loss_bidask(pred, targets, ask);
        out_grad = loss_bidask_grad(pred, targets, ask);
    }
    Gradients g = backward(net, inputs, out_grad, want_params);
    g.loss = value;
    return g;
}

AdamState AdamState::for_size(Eigen::Index n, double lr) {
    AdamState s;
    s.first_moment = Eigen::VectorXd::Zero(n);
    s.second_moment = Eigen::VectorXd::Zero(n);
    s.lr = lr;
    return s;
}

void AdamState::validate() const {
    require(step_count >= 0, "Adam step count must be nonnegative");
    require(lr >= 0.0, "learning rate must be nonnegative");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
    require(epsilon > 0.0, "Adam epsilon must be positive");
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state) {
    require(params.size() == grads.size(), "parameter and gradient sizes differ");
    if (state.first_moment.size() == 0) {
        state.first_moment = Eigen::VectorXd::Zero(params.size());
        state.second_moment = Eigen::VectorXd::Zero(params.size());
    }
    require(state.first_moment.size() == params.size() && state.second_moment.size() == params.size(),
            "Adam state size mismatch");
    state.step_count += 1;
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
    state.second_moment =
        state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    params.array() -= state.lr * (state.first_moment.array() / c1) /
                      ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

void TrainingConfig::validate() const {
    require(epochs >= 1, "epochs must be at least 1");
    require(batch_size >= 1, "batch_size must be at least 1");
    require(lr >= 0.0 && std::isfinite(lr), "learning rate must be finite and nonnegative");
}

TrainResult train(Network net, const Dataset& data, const TrainingConfig& cfg, LossKind loss) {
    cfg.validate();
    net.validate();
    const Eigen::Index n = data.size();
    require(n > 0, "training set is empty");
    require(data.inputs.rows() == net.input_dim(), "dataset input dimension does not match the network");
    require(data.targets.rows() == net.output_dim() && data.targets.cols() == n,
            "dataset target shape does not match the network");
    if (loss == LossKind::bidask)
        require(data.ask.rows() == data.targets.rows() && data.ask.cols() == n,
                "bid-ask training needs ask quotes for every sample");

    std::mt19937_64 rng(cfg.seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    Eigen::VectorXd params = net.flat_params();
    AdamState adam = AdamState::for_size(params.size(), cfg.lr);
    TrainResult result;
    result.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));

    Eigen::MatrixXd xb, yb, ab;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) fisher_yates(order, rng);
        double weighted = 0.0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index m = std::min<Eigen::Index>(cfg.batch_size, n - start);
            xb.resize(data.inputs.rows(), m);
            yb.resize(data.targets.rows(), m);
            if (loss == LossKind::bidask) ab.resize(data.ask.rows(), m);
            for (Eigen::Index j = 0; j < m; ++j) {
                const Eigen::Index src = order[static_cast<std::size_t>(start + j)];
                xb.col(j) = data.inputs.col(src);
                yb.col(j) = data.targets.col(src);
                if (loss == LossKind::bidask) ab.col(j) = data.ask.col(src);
            }
            const Gradients g = grad(net, xb, yb, loss, ab);
            if (!std::isfinite(g.loss)) throw std::runtime_error("training loss became non-finite");
            weighted += g.loss * static_cast<double>(m);
            adam_step(params, g.params, adam);
            net.set_flat_params(params);
        }
        result.epoch_loss.push_back(weighted / static_cast<double>(n));
    }
    net.meta.seed = cfg.seed;
    net.meta.epochs = cfg.epochs;
    net.meta.batch_size = cfg.batch_size;
    net.meta.lr = cfg.lr;
    result.net = std::move(net);
    return result;
}

Network linear_embed(const Eigen::MatrixXd& A, int depth, std::vector<int> dims) {
    const auto d = static_cast<int>(A.cols());
    const auto p = static_cast<int>(A.rows());
    require(depth >= 2, "linear_embed needs depth L >= 2");
    require(static_cast<int>(dims.size()) == depth + 1, "dims must have L + 1 entries");
    require(dims.front() == d && dims.back() == p, "dims must start with d and end with p");
    for (int i = 1; i < depth; ++i)
        require(dims[static_cast<std::size_t>(i)] >= 2 * d, "hidden layers need at least 2d nodes");

    Network net = Network::zeros(dims, Activation::relu);
    // split(n): [I; -I; 0] (n x d); merge(n): [I, -I, 0] (d x n).
    auto split = [d](int n) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, d);
        m.topRows(d).setIdentity();
        m.middleRows(d, d) = -Eigen::MatrixXd::Identity(d, d);
        return m;
    };
    auto merge = [&split](int n) { return Eigen::MatrixXd(split(n).transpose()); };

    net.weights[0] = split(dims[1]);
    for (int i = 1; i + 1 < depth; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        net.weights[ui] = split(dims[ui + 1]) * merge(dims[ui]);
    }
    net.weights.back() = A * merge(dims[static_cast<std::size_t>(depth - 1)]);
    return net;
}

std::string serialize(const Network& net) {
    net.validate();
    nlohmann::ordered_json doc;
    doc["format_version"] = kFormatVersion;
    doc["dims"] = net.dims;
    doc["activation"] = to_string(net.activation);
    doc["parameter_count"] = net.parameter_count();
    auto weights = nlohmann::ordered_json::array();
    auto biases = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        const auto& w = net.weights[l];
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(w.size()));
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
        weights.push_back(flat);
        biases.push_back(std::vector<double>(net.biases[l].data(), net.biases[l].data() + net.biases[l].size()));
    }
    doc["weights"] = std::move(weights);
    doc["biases"] = std::move(biases);
    auto norm = nlohmann::ordered_json::array();
    for (const auto& [lo, hi] : net.input_norm) norm.push_back({lo, hi});
    doc["input_norm"] = std::move(norm);
    doc["seed"] = net.meta.seed;
    doc["epochs"] = net.meta.epochs;
    doc["batch_size"] = net.meta.batch_size;
    doc["lr"] = net.meta.lr;
    doc["created_at"] = net.meta.created_at;
    return doc.dump(1) + "\n";
}

Network deserialize(const std::string& document) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(document);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("weights document is not valid JSON: ") + e.what());
    }
    try {
        if (!doc.is_object()) throw FormatError("weights document must be a JSON object");
        const int version = doc.at("format_version").get<int>();
        if (version != kFormatVersion)
            throw FormatError("unsupported weights format_version " + std::to_string(version));

        Network net = Network::zeros(doc.at("dims").get<std::vector<int>>(),
                                     activation_from_string(doc.at("activation").get<std::string>()));
        const auto& weights = doc.at("weights");
        const auto& biases = doc.at("biases");
        if (weights.size() != net.weights.size() || biases.size() != net.biases.size())
            throw FormatError("weights document has the wrong number of layers");
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            const auto w = weights[l].get<std::vector<double>>();
            const auto b = biases[l].get<std::vector<double>>();
            auto& W = net.weights[l];
            if (static_cast<Eigen::Index>(w.size()) != W.size() ||
                static_cast<Eigen::Index>(b.size()) != net.biases[l].size())
                throw FormatError("layer " + std::to_string(l + 1) + " has the wrong number of values");
            std::size_t p = 0;
            for (Eigen::Index r = 0; r < W.rows(); ++r)
                for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = w[p++];
            net.biases[l] = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
        }
        for (const auto& pair : doc.at("input_norm"))
            net.input_norm.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
        if (doc.contains("parameter_count") &&
            doc["parameter_count"].get<std::size_t>() != net.parameter_count())
            throw FormatError("parameter_count does not match dims");
        net.meta.seed = doc.at("seed").get<std::uint64_t>();
        net.meta.epochs = doc.at("epochs").get<int>();
        net.meta.batch_size = doc.at("batch_size").get<int>();
        net.meta.lr = doc.at("lr").get<double>();
        net.meta.created_at = doc.at("created_at").get<std::string>();
        net.validate();
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed weights document: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("inconsistent weights document: ") + e.what());
    }
}

void save_network(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << serialize(net);
    if (!out) throw std::runtime_error("failed to write '" + path + "'");
}

Network load_network(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize(buf.str());
}

}  // namespace hjmcal::nn
