// hjmcal: dataset generation, network training, calibration, verification
// and reporting for the parametrised forward-curve option model.

#include "hjmcal/calibration.hpp"
#include "hjmcal/io.hpp"
#include "hjmcal/neural_net.hpp"
#include "hjmcal/verify.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hjmcal;

namespace {

struct BoxFlags {
    std::vector<double> lower;
    std::vector<double> upper;

    void add(CLI::App* cmd) {
        cmd->add_option("--box-lower", lower, "Lower corner of the parameter box (7 values)")->expected(7);
        cmd->add_option("--box-upper", upper, "Upper corner of the parameter box (7 values)")->expected(7);
    }

    calib::ThetaBox resolve(calib::ThetaBox box) const {
        if (!lower.empty()) std::copy(lower.begin(), lower.end(), box.lower.begin());
        if (!upper.empty()) std::copy(upper.begin(), upper.end(), box.upper.begin());
        box.validate();
        return box;
    }
};

struct GenerateOpts {
    std::string mode = "grid";
    int n_train = 10000;
    int n_test = 1000;
    int grid_points = 0;
    std::uint64_t seed = 42;
    std::string out;
    BoxFlags box;
};

struct TrainOpts {
    std::string dataset;
    std::string test;
    std::string mode;
    int epochs = 200;
    int batch_size = 30;
    double lr = 1e-3;
    std::uint64_t seed = 42;
    std::string out;
    std::string weights;
    BoxFlags box;
};

struct CalibrateOpts {
    std::string weights;
    std::string observations;
    std::string dataset;
    std::string mode = "exact";
    int epochs = 1000;
    int batch_size = 30;
    double lr = 5e-3;
    int restarts = 1;
    int limit = 0;
    double spread_lo = 0.9;
    double spread_hi = 1.1;
    std::uint64_t seed = 42;
    std::string out;
    BoxFlags box;
};

struct VerifyOpts {
    std::string suite = "all";
    std::uint64_t seed = 42;
    std::string out;
};

struct ReportOpts {
    std::string results;
    std::string out;
};

// Final value of every option of `cmd`, defaults included.
io::ConfigEntries resolved(const CLI::App* cmd) {
    io::ConfigEntries entries;
    for (const CLI::Option* opt : cmd->get_options()) {
        if (opt->get_lnames().empty()) continue;
        const std::string name = opt->get_lnames().front();
        if (name == "help") continue;
        std::string value;
        if (opt->count() > 0) {
            for (const auto& r : opt->results()) value += (value.empty() ? "" : " ") + r;
        } else {
            value = opt->get_default_str();
        }
        entries.emplace_back(name, value);
    }
    return entries;
}

std::string describe(const std::string& command, const io::ConfigEntries& config) {
    std::string text = "hjmcal " + command;
    for (const auto& [k, v] : config)
        if (!v.empty()) text += " " + k + "=" + v;
    return text;
}

fs::path out_dir(const std::string& flag) {
    fs::path dir = flag.empty() ? fs::path(".") : fs::path(flag);
    fs::create_directories(dir);
    return dir;
}

std::optional<io::Manifest> manifest_near(const std::string& dataset) {
    const fs::path candidate = fs::path(dataset).parent_path() / "manifest.json";
    if (fs::exists(candidate)) return io::read_manifest(candidate.string());
    return std::nullopt;
}

int cmd_generate(const GenerateOpts& o, const CLI::App* cmd) {
    if (o.mode != "grid" && o.mode != "pointwise") throw CLI::ValidationError("--mode", "must be grid or pointwise");
    if (o.n_train < 1 || o.n_test < 1) throw CLI::ValidationError("--n-train/--n-test", "sizes must be at least 1");
    const auto config = resolved(cmd);
    const std::string comment = describe("generate", config);
    const fs::path dir = out_dir(o.out);

    io::Manifest m;
    m.mode = o.mode;
    m.n_train = o.n_train;
    m.n_test = o.n_test;
    m.seed = o.seed;
    m.box = o.box.resolve({});
    m.config = config;
    m.pricing_hash = io::pricing_config_hash(m.mode, m.box, m.grid, m.ranges);
    const std::string train_path = (dir / "train.csv").string();
    const std::string test_path = (dir / "test.csv").string();

    if (o.mode == "grid") {
        const auto data = calib::gen_grid_dataset(m.box, m.grid, o.n_train, o.n_test, o.seed, o.grid_points);
        m.regenerated = data.regenerated;
        io::write_grid_dataset(train_path, data.train, comment);
        io::write_grid_dataset(test_path, data.test, comment);
        const auto& first = data.test.front();
        const std::string obs = (dir / "test_observations.csv").string();
        const std::string bands = (dir / "test_bidask.csv").string();
        io::write_observations(obs, calib::grid_to_observations(first, m.grid), comment + " sample=test[0]");
        io::write_bidask_observations(bands, calib::make_bidask(first.prices, 0.9, 1.1), m.grid,
                                      comment + " sample=test[0] spread=0.9,1.1");
        m.files = {{"train", "train.csv"}, {"test", "test.csv"}, {"observations", "test_observations.csv"},
                   {"bidask", "test_bidask.csv"}};
    } else {
        const auto data = calib::gen_pointwise_dataset(m.box, m.ranges, o.n_train, o.n_test, o.seed,
                                                        m.grid.delivery_len, o.grid_points);
        m.regenerated = data.regenerated;
        io::write_pointwise_dataset(train_path, data.train, comment);
        io::write_pointwise_dataset(test_path, data.test, comment);
        m.files = {{"train", "train.csv"}, {"test", "test.csv"}};
    }
    if (m.regenerated > 0) std::cerr << "regenerated " << m.regenerated << " samples below the price floor\n";
    io::write_manifest((dir / "manifest.json").string(), m);
    std::cerr << "wrote " << o.n_train << " training and " << o.n_test << " test samples to " << dir.string() << "\n";
    return 0;
}

int cmd_train(const TrainOpts& o, const CLI::App* cmd) {
    const std::string detected = io::detect_dataset_mode(o.dataset);
    const std::string mode = o.mode.empty() ? detected : o.mode;
    if (mode != "grid" && mode != "pointwise") throw CLI::ValidationError("--mode", "must be grid or pointwise");
    if (mode != detected)
        throw std::runtime_error("dataset '" + o.dataset + "' is a " + detected + " dataset, not " + mode);
    if (o.epochs < 1) throw CLI::ValidationError("--epochs", "must be at least 1");
    if (o.batch_size < 1) throw CLI::ValidationError("--batch-size", "must be at least 1");

    const auto manifest = manifest_near(o.dataset);
    const calib::ThetaBox box = o.box.resolve(manifest ? manifest->box : calib::ThetaBox{});
    const calib::LambdaRanges ranges = manifest ? manifest->ranges : calib::LambdaRanges{};
    const calib::ContractGrid grid = manifest ? manifest->grid : calib::ContractGrid{};

    nn::Network net;
    nn::Dataset data;
    if (mode == "grid") {
        const auto samples = io::read_grid_dataset(o.dataset, grid.rows(), grid.cols());
        if (samples.empty()) throw std::runtime_error("dataset is empty");
        data = calib::to_dataset(samples);
        net = calib::make_grid_network(box, o.seed, static_cast<int>(grid.size()));
    } else {
        const auto samples = io::read_pointwise_dataset(o.dataset);
        if (samples.empty()) throw std::runtime_error("dataset is empty");
        data = calib::to_dataset(samples);
        net = calib::make_pointwise_network(box, ranges, o.seed);
    }

    nn::TrainingConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.lr = o.lr;
    cfg.seed = o.seed;
    auto trained = nn::train(std::move(net), data, cfg);
    trained.net.meta.created_at = io::build_timestamp();

    const auto config = resolved(cmd);
    const fs::path dir = out_dir(o.out);
    const std::string weights = o.weights.empty() ? (dir / "weights.json").string() : o.weights;
    nn::save_network(trained.net, weights);
    io::write_loss_csv((dir / "train_loss.csv").string(), trained.epoch_loss, describe("train", config));

    nlohmann::ordered_json report;
    report["mode"] = mode;
    report["dims"] = trained.net.dims;
    report["activation"] = nn::to_string(trained.net.activation);
    report["parameter_count"] = trained.net.parameter_count();
    report["n_train"] = data.size();
    report["seed"] = o.seed;
    report["final_loss"] = trained.epoch_loss.back();
    report["weights"] = weights;
    nlohmann::ordered_json cj = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config) cj[k] = v;
    report["config"] = cj;
    if (!o.test.empty()) {
        nlohmann::ordered_json test;
        if (mode == "grid") {
            std::vector<calib::PriceGrid> errors;
            for (const auto& s : io::read_grid_dataset(o.test, grid.rows(), grid.cols())) {
                const auto arr = s.theta.to_array();
                const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(arr.data(), 7);
                errors.push_back(calib::metrics(
                    calib::unflatten(nn::forward(trained.net, x), grid.rows(), grid.cols()), s.prices));
            }
            const auto summary = calib::summarize(errors);
            test["n_test"] = errors.size();
            test["mean_cell_error"] = summary.mean.mean();
            test["max_cell_mean_error"] = summary.mean.maxCoeff();
            io::write_grid_table((dir / "test_error_mean.csv").string(), summary.mean, grid.taus, grid.strikes,
                                 describe("train", config));
            io::write_grid_table((dir / "test_error_max.csv").string(), summary.max, grid.taus, grid.strikes,
                                 describe("train", config));
        } else {
            const auto samples = io::read_pointwise_dataset(o.test);
            const nn::Dataset td = calib::to_dataset(samples);
            const Eigen::MatrixXd pred = nn::forward_batch(trained.net, td.inputs);
            const Eigen::ArrayXXd rel = (pred - td.targets).array().abs() / td.targets.array().abs();
            test["n_test"] = samples.size();
            test["mean_rel_error"] = rel.mean();
            test["max_rel_error"] = rel.maxCoeff();
        }
        report["test"] = test;
    }
    io::write_text((dir / "train_report.json").string(), report.dump(1) + "\n");
    std::cerr << "trained " << mode << " network (M = " << trained.net.parameter_count()
              << "), final loss " << io::format_double(trained.epoch_loss.back()) << "; weights in " << weights << "\n";
    return 0;
}

int cmd_calibrate(const CalibrateOpts& o, const CLI::App* cmd) {
    if (o.mode != "exact" && o.mode != "bidask") throw CLI::ValidationError("--mode", "must be exact or bidask");
    if (o.observations.empty() == o.dataset.empty())
        throw CLI::ValidationError("--observations/--dataset", "give exactly one of them");
    if (o.epochs < 0) throw CLI::ValidationError("--epochs", "must be nonnegative");

    const nn::Network net = nn::load_network(o.weights);
    const bool grid_net = net.input_dim() == 7;
    if (!grid_net && net.input_dim() != 9) throw std::runtime_error("weights are neither a grid nor a pointwise network");
    if (!grid_net && o.mode == "bidask") throw std::runtime_error("bid-ask calibration needs a grid network");

    std::optional<io::Manifest> manifest = o.dataset.empty() ? std::nullopt : manifest_near(o.dataset);
    calib::ThetaBox fallback;
    if (!net.input_norm.empty())
        for (std::size_t d = 0; d < 7; ++d) {
            fallback.lower[d] = net.input_norm[d].first;
            fallback.upper[d] = net.input_norm[d].second;
        }
    const calib::ThetaBox box = o.box.resolve(manifest ? manifest->box : fallback);
    const calib::ContractGrid grid = manifest ? manifest->grid : calib::ContractGrid{};

    calib::CalibrationConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.lr = o.lr;
    cfg.seed = o.seed;
    cfg.restarts = o.restarts;

    const auto config = resolved(cmd);
    io::ResultsDocument doc;
    doc.mode = o.mode;
    doc.network_mode = grid_net ? "grid" : "pointwise";
    doc.seed = o.seed;
    doc.config = config;
    doc.taus = grid.taus;
    doc.strikes = grid.strikes;

    auto run_grid = [&](const calib::PriceGrid& prices, std::optional<ModelParams> truth) {
        if (o.mode == "exact") return calib::calibrate_grid(net, prices, box, grid, cfg, std::nullopt, truth);
        return calib::calibrate_bidask(net, calib::make_bidask(prices, o.spread_lo, o.spread_hi), box, grid, cfg,
                                       std::nullopt, truth);
    };

    if (!o.observations.empty()) {
        const io::ObservationFile file = io::read_observations(o.observations);
        if (o.mode == "bidask" && !file.bidask) throw std::runtime_error("bidask mode needs tau,strike,bid,ask columns");
        if (o.mode == "exact" && file.bidask) throw std::runtime_error("exact mode needs tau,strike,price columns");
        calib::CalibrationResult r;
        if (o.mode == "bidask") {
            r = calib::calibrate_bidask(net, io::bidask_to_grid(file, grid), box, grid, cfg);
        } else if (grid_net) {
            r = calib::calibrate_grid(net, io::observations_to_grid(file.prices, grid), box, grid, cfg);
        } else {
            r = calib::calibrate_pointwise(net, file.prices, box, cfg, std::nullopt, std::nullopt, grid.delivery_len);
        }
        doc.runs.push_back({r, std::nullopt});
    } else {
        if (io::detect_dataset_mode(o.dataset) != "grid")
            throw std::runtime_error("--dataset must be a grid dataset (pointwise calibration reshapes grid samples)");
        auto samples = io::read_grid_dataset(o.dataset, grid.rows(), grid.cols());
        if (o.limit > 0 && static_cast<std::size_t>(o.limit) < samples.size()) samples.resize(static_cast<std::size_t>(o.limit));
        for (const auto& s : samples) {
            if (grid_net) {
                doc.runs.push_back({run_grid(s.prices, s.theta), s.theta});
            } else {
                doc.runs.push_back({calib::calibrate_pointwise(net, calib::grid_to_observations(s, grid), box, cfg,
                                                               std::nullopt, s.theta, grid.delivery_len),
                                    s.theta});
            }
        }
    }

    const fs::path dir = out_dir(o.out);
    const std::string path = (dir / "results.json").string();
    io::write_results(path, doc);
    double final_loss = 0.0;
    for (const auto& r : doc.runs) final_loss += r.result.final_loss;
    std::cerr << "calibrated " << doc.runs.size() << " case(s); mean final loss "
              << io::format_double(final_loss / static_cast<double>(doc.runs.size())) << "; results in " << path << "\n";
    return 0;
}

int cmd_verify(const VerifyOpts& o) {
    const auto results = verify::run(o.suite, o.seed);
    const std::string summary = verify::to_json(results);
    bool ok = true;
    for (const auto& s : results) {
        for (const auto& c : s.checks) {
            std::fprintf(stderr, "%s %-12s %-34s worst=%.3e tol=%.1e cases=%d\n", c.passed ? "PASS" : "FAIL",
                         s.suite.c_str(), c.name.c_str(), c.measured, c.tolerance, c.cases);
        }
        ok = ok && s.passed();
    }
    std::cout << summary;
    if (!o.out.empty()) {
        const fs::path dir = out_dir(o.out);
        io::write_text((dir / "verify.json").string(), summary);
    }
    return ok ? 0 : 1;
}

int cmd_report(const ReportOpts& o) {
    const io::ResultsDocument doc = io::read_results(o.results);
    if (doc.runs.empty()) throw std::runtime_error("results file has no runs");
    const fs::path dir = out_dir(o.out);
    const std::string comment = "hjmcal report results=" + o.results + " seed=" + std::to_string(doc.seed) +
                                " mode=" + doc.mode + " network=" + doc.network_mode;

    std::vector<calib::PriceGrid> price, fit, before, after;
    std::vector<calib::ParamVector> params;
    for (const auto& run : doc.runs) {
        price.push_back(run.result.price_rel_err);
        fit.push_back(run.result.fit_rel_err);
        if (run.result.param_rel_err) params.push_back(*run.result.param_rel_err);
        if (run.result.mismatch_before) before.push_back(*run.result.mismatch_before);
        if (run.result.mismatch_after) after.push_back(*run.result.mismatch_after);
    }
    auto table = [&](const std::string& name, const calib::PriceGrid& g) {
        io::write_grid_table((dir / name).string(), g, doc.taus, doc.strikes, comment);
    };
    const auto ps = calib::summarize(price);
    const auto fs_ = calib::summarize(fit);
    table("price_error_mean.csv", ps.mean);
    table("price_error_max.csv", ps.max);
    table("fit_error_mean.csv", fs_.mean);
    table("fit_error_max.csv", fs_.max);
    if (!before.empty()) table("mismatch_before.csv", calib::summarize(before).mean);
    if (!after.empty()) table("mismatch_after.csv", calib::summarize(after).mean);

    if (!params.empty()) {
        const auto s = calib::summarize(params);
        std::string text = "# " + comment + "\nparameter,mean_rel_error,median_rel_error\n";
        for (std::size_t d = 0; d < ModelParams::size; ++d)
            text += std::string(calib::kParamNames[d]) + "," + io::format_double(s.mean[d]) + "," +
                    io::format_double(s.median[d]) + "\n";
        io::write_text((dir / "param_errors.csv").string(), text);
    }
    std::cerr << "report for " << doc.runs.size() << " run(s) written to " << dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    // --config is accepted anywhere on the line; hoist it in front of the subcommand.
    std::vector<char*> args{argv[0]};
    std::vector<char*> rest;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) {
            args.push_back(argv[i]);
            args.push_back(argv[++i]);
        } else if (a.rfind("--config=", 0) == 0) {
            args.push_back(argv[i]);
        } else {
            rest.push_back(argv[i]);
        }
    }
    args.insert(args.end(), rest.begin(), rest.end());

    CLI::App app{"Neural-network calibration of a parametrised forward-curve option model"};
    app.require_subcommand(1);
    app.allow_config_extras(CLI::config_extras_mode::error);

    const std::string env_out = "HJMCAL_OUT_DIR";

    GenerateOpts gen;
    auto* g = app.add_subcommand("generate", "Generate training and test datasets");
    g->add_option("--mode", gen.mode, "grid or pointwise")->capture_default_str();
    g->add_option("--n-train", gen.n_train, "Training set size")->capture_default_str();
    g->add_option("--n-test", gen.n_test, "Test set size")->capture_default_str();
    g->add_option("--grid-points", gen.grid_points, "Grid points per parameter dimension (0: one per sample)")
        ->capture_default_str();
    g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
    g->add_option("--out", gen.out, "Output directory")->envname(env_out);
    gen.box.add(g);

    TrainOpts tr;
    auto* t = app.add_subcommand("train", "Train the pricing network on a dataset");
    t->add_option("--dataset", tr.dataset, "Training CSV")->required()->check(CLI::ExistingFile);
    t->add_option("--test", tr.test, "Optional test CSV for error tables")->check(CLI::ExistingFile);
    t->add_option("--mode", tr.mode, "grid or pointwise (default: from the dataset header)");
    t->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
    t->add_option("--batch-size", tr.batch_size, "Mini-batch size")->capture_default_str();
    t->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
    t->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
    t->add_option("--out", tr.out, "Output directory")->envname(env_out);
    t->add_option("--weights", tr.weights, "Weights output path (default: <out>/weights.json)");
    tr.box.add(t);

    CalibrateOpts ca;
    auto* c = app.add_subcommand("calibrate", "Calibrate model parameters with a trained network");
    c->add_option("--weights", ca.weights, "Weights document")->required()->check(CLI::ExistingFile);
    c->add_option("--observations", ca.observations, "CSV with tau,strike,price or tau,strike,bid,ask")
        ->check(CLI::ExistingFile);
    c->add_option("--dataset", ca.dataset, "Grid dataset: calibrate every sample against known parameters")
        ->check(CLI::ExistingFile);
    c->add_option("--mode", ca.mode, "exact or bidask")->capture_default_str();
    c->add_option("--epochs", ca.epochs, "Calibration epochs")->capture_default_str();
    c->add_option("--batch-size", ca.batch_size, "Cells per Adam step (0: all)")->capture_default_str();
    c->add_option("--lr", ca.lr, "Adam learning rate")->capture_default_str();
    c->add_option("--restarts", ca.restarts, "Number of starts (first at the box midpoint)")->capture_default_str();
    c->add_option("--limit", ca.limit, "With --dataset: use at most this many samples (0: all)")->capture_default_str();
    c->add_option("--spread-lo", ca.spread_lo, "With --dataset in bidask mode: bid fraction")->capture_default_str();
    c->add_option("--spread-hi", ca.spread_hi, "With --dataset in bidask mode: ask fraction")->capture_default_str();
    c->add_option("--seed", ca.seed, "Random seed")->capture_default_str();
    c->add_option("--out", ca.out, "Output directory")->envname(env_out);
    ca.box.add(c);

    VerifyOpts ve;
    auto* v = app.add_subcommand("verify", "Run the property and oracle suites");
    v->add_option("--suite", ve.suite, "oracle, adjoint, gradcheck, linear-embed or all")
        ->capture_default_str()
        ->check(CLI::IsMember({"oracle", "adjoint", "gradcheck", "linear-embed", "all"}));
    v->add_option("--seed", ve.seed, "Random seed")->capture_default_str();
    v->add_option("--out", ve.out, "Also write verify.json here");

    ReportOpts re;
    auto* r = app.add_subcommand("report", "Write error tables from a results file");
    r->add_option("--results", re.results, "results.json from calibrate")->required()->check(CLI::ExistingFile);
    r->add_option("--out", re.out, "Output directory")->envname(env_out);

    app.set_config("--config", "", "TOML/INI file with one [subcommand] section per command; flags take precedence");

    CLI11_PARSE(app, static_cast<int>(args.size()), args.data());

    try {
        if (g->parsed()) return cmd_generate(gen, g);
        if (t->parsed()) return cmd_train(tr, t);
        if (c->parsed()) return cmd_calibrate(ca, c);
        if (v->parsed()) return cmd_verify(ve);
        if (r->parsed()) return cmd_report(re);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
