#include "hjmcal/io.hpp"

#include "json.hpp"

#include <cerrno>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>

namespace hjmcal::io {

namespace {

using json = nlohmann::ordered_json;

std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, sep)) {
        while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) cur.pop_back();
        std::size_t i = 0;
        while (i < cur.size() && cur[i] == ' ') ++i;
        out.push_back(cur.substr(i));
    }
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double parse_double(const std::string& text, const std::string& where) {
    if (text.empty()) throw IoError(where + ": empty field");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size() || errno == ERANGE)
        throw IoError(where + ": cannot parse '" + text + "' as a number");
    return v;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split(line);
        if (table.header.empty()) {
            table.header = std::move(fields);
            continue;
        }
        const std::string where = path + ":" + std::to_string(lineno);
        if (fields.size() != table.header.size())
            throw IoError(where + ": expected " + std::to_string(table.header.size()) + " fields, found " +
                          std::to_string(fields.size()));
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) row.push_back(parse_double(f, where));
        table.rows.push_back(std::move(row));
    }
    if (table.header.empty()) throw IoError("'" + path + "' has no header");
    return table;
}

void expect_header(const CsvTable& table, const std::vector<std::string>& expected, const std::string& path) {
    if (table.header != expected) {
        std::string got;
        for (const auto& h : table.header) got += (got.empty() ? "" : ",") + h;
        throw IoError("'" + path + "' has an unexpected header: " + got);
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw IoError("failed to write '" + path + "'");
}

void write_comment(std::ofstream& out, const std::string& comment) {
    if (!comment.empty()) out << "# " << comment << '\n';
}

void write_row(std::ofstream& out, const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << format_double(values[i]);
    out << '\n';
}

void write_header(std::ofstream& out, const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
}

std::vector<std::string> theta_header() {
    return {"theta_a", "theta_b", "theta_k", "alpha0", "alpha1", "alpha2", "alpha3"};
}

json params_json(const ModelParams& p) {
    json j = json::object();
    const auto v = p.to_array();
    for (std::size_t d = 0; d < v.size(); ++d) j[calib::kParamNames[d]] = v[d];
    return j;
}

ModelParams params_from_json(const json& j) {
    calib::ParamVector v{};
    for (std::size_t d = 0; d < v.size(); ++d) v[d] = j.at(calib::kParamNames[d]).get<double>();
    return ModelParams::from_array(v);
}

json vector_json(const calib::ParamVector& v) {
    json j = json::object();
    for (std::size_t d = 0; d < v.size(); ++d) j[calib::kParamNames[d]] = v[d];
    return j;
}

calib::ParamVector vector_from_json(const json& j) {
    calib::ParamVector v{};
    for (std::size_t d = 0; d < v.size(); ++d) v[d] = j.at(calib::kParamNames[d]).get<double>();
    return v;
}

// NaN cells become null.
json grid_json(const calib::PriceGrid& g) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
            if (std::isnan(g(i, j))) row.push_back(nullptr);
            else row.push_back(g(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

calib::PriceGrid grid_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
    calib::PriceGrid g(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(row.size()) != cols) throw IoError("ragged grid in results file");
        for (Eigen::Index c = 0; c < cols; ++c) {
            const auto& v = row[static_cast<std::size_t>(c)];
            g(i, c) = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
        }
    }
    return g;
}

json config_json(const ConfigEntries& config) {
    json j = json::object();
    for (const auto& [k, v] : config) j[k] = v;
    return j;
}

ConfigEntries config_from_json(const json& j) {
    ConfigEntries out;
    for (auto it = j.begin(); it != j.end(); ++it) out.emplace_back(it.key(), it.value().get<std::string>());
    return out;
}

std::string canonical(const std::vector<double>& v) {
    std::string out;
    for (double x : v) out += format_double(x) + ";";
    return out;
}

std::size_t find_cell(const std::vector<double>& axis, double v, const char* what) {
    for (std::size_t i = 0; i < axis.size(); ++i)
        if (std::abs(axis[i] - v) <= 1e-9 * std::max(1.0, std::abs(v))) return i;
    throw IoError(std::string(what) + " " + format_double(v) + " is not on the contract grid");
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> grid_header(Eigen::Index rows, Eigen::Index cols) {
    auto h = theta_header();
    for (Eigen::Index i = 1; i <= rows; ++i)
        for (Eigen::Index j = 1; j <= cols; ++j)
            h.push_back("p_t" + std::to_string(i) + "_k" + std::to_string(j));
    return h;
}

std::vector<std::string> pointwise_header() {
    auto h = theta_header();
    h.insert(h.end(), {"tau", "strike", "price"});
    return h;
}

void write_grid_dataset(const std::string& path, const std::vector<calib::GridSample>& samples,
                        const std::string& comment) {
    auto out = open_out(path);
    write_comment(out, comment);
    const Eigen::Index rows = samples.empty() ? 7 : samples.front().prices.rows();
    const Eigen::Index cols = samples.empty() ? 9 : samples.front().prices.cols();
    write_header(out, grid_header(rows, cols));
    for (const auto& s : samples) {
        const auto th = s.theta.to_array();
        std::vector<double> row(th.begin(), th.end());
        const Eigen::VectorXd flat = calib::flatten(s.prices);
        row.insert(row.end(), flat.data(), flat.data() + flat.size());
        write_row(out, row);
    }
    finish(out, path);
}

std::vector<calib::GridSample> read_grid_dataset(const std::string& path, Eigen::Index rows, Eigen::Index cols) {
    const CsvTable table = read_csv(path);
    expect_header(table, grid_header(rows, cols), path);
    std::vector<calib::GridSample> out;
    out.reserve(table.rows.size());
    for (const auto& r : table.rows) {
        calib::GridSample s;
        calib::ParamVector v{};
        std::copy(r.begin(), r.begin() + 7, v.begin());
        s.theta = ModelParams::from_array(v);
        s.prices = calib::unflatten(Eigen::Map<const Eigen::VectorXd>(r.data() + 7, rows * cols), rows, cols);
        out.push_back(std::move(s));
    }
    return out;
}

void write_pointwise_dataset(const std::string& path, const std::vector<calib::PointwiseSample>& samples,
                             const std::string& comment) {
    auto out = open_out(path);
    write_comment(out, comment);
    write_header(out, pointwise_header());
    for (const auto& s : samples) {
        const auto th = s.theta.to_array();
        std::vector<double> row(th.begin(), th.end());
        row.insert(row.end(), {s.tau, s.strike, s.price});
        write_row(out, row);
    }
    finish(out, path);
}

std::vector<calib::PointwiseSample> read_pointwise_dataset(const std::string& path) {
    const CsvTable table = read_csv(path);
    expect_header(table, pointwise_header(), path);
    std::vector<calib::PointwiseSample> out;
    out.reserve(table.rows.size());
    for (const auto& r : table.rows) {
        calib::ParamVector v{};
        std::copy(r.begin(), r.begin() + 7, v.begin());
        out.push_back({ModelParams::from_array(v), r[7], r[8], r[9]});
    }
    return out;
}

std::string detect_dataset_mode(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto h = split(line);
        if (h == pointwise_header()) return "pointwise";
        if (h.size() > 7 && std::equal(h.begin(), h.begin() + 7, theta_header().begin()) && h[7] == "p_t1_k1")
            return "grid";
        break;
    }
    throw IoError("'" + path + "' is neither a grid nor a pointwise dataset");
}

ObservationFile read_observations(const std::string& path) {
    const CsvTable table = read_csv(path);
    ObservationFile out;
    if (table.header == std::vector<std::string>{"tau", "strike", "price"}) {
        for (const auto& r : table.rows) out.prices.push_back({r[0], r[1], r[2]});
    } else if (table.header == std::vector<std::string>{"tau", "strike", "bid", "ask"}) {
        out.bidask = true;
        for (const auto& r : table.rows) {
            out.tau.push_back(r[0]);
            out.strike.push_back(r[1]);
            out.bid.push_back(r[2]);
            out.ask.push_back(r[3]);
        }
    } else {
        throw IoError("'" + path + "' must have columns tau,strike,price or tau,strike,bid,ask");
    }
    if (table.rows.empty()) throw IoError("'" + path + "' has no observations");
    return out;
}

void write_observations(const std::string& path, const std::vector<calib::Observation>& rows,
                        const std::string& comment) {
    auto out = open_out(path);
    write_comment(out, comment);
    write_header(out, {"tau", "strike", "price"});
    for (const auto& o : rows) write_row(out, {o.tau, o.strike, o.price});
    finish(out, path);
}

void write_bidask_observations(const std::string& path, const calib::BidAskGrid& bands,
                               const calib::ContractGrid& grid, const std::string& comment) {
    auto out = open_out(path);
    write_comment(out, comment);
    write_header(out, {"tau", "strike", "bid", "ask"});
    for (Eigen::Index i = 0; i < grid.rows(); ++i)
        for (Eigen::Index j = 0; j < grid.cols(); ++j)
            write_row(out, {grid.taus[static_cast<std::size_t>(i)], grid.strikes[static_cast<std::size_t>(j)],
                            bands.bid(i, j), bands.ask(i, j)});
    finish(out, path);
}

calib::PriceGrid observations_to_grid(const std::vector<calib::Observation>& rows, const calib::ContractGrid& grid) {
    calib::PriceGrid g = calib::PriceGrid::Constant(grid.rows(), grid.cols(), std::numeric_limits<double>::quiet_NaN());
    for (const auto& o : rows) {
        const auto i = static_cast<Eigen::Index>(find_cell(grid.taus, o.tau, "maturity"));
        const auto j = static_cast<Eigen::Index>(find_cell(grid.strikes, o.strike, "strike"));
        if (!std::isnan(g(i, j))) throw IoError("duplicate observation for one grid cell");
        g(i, j) = o.price;
    }
    if (g.hasNaN()) throw IoError("observations do not cover every grid cell");
    return g;
}

calib::BidAskGrid bidask_to_grid(const ObservationFile& file, const calib::ContractGrid& grid) {
    if (!file.bidask) throw IoError("observation file has no bid/ask columns");
    std::vector<calib::Observation> bids, asks;
    for (std::size_t r = 0; r < file.tau.size(); ++r) {
        bids.push_back({file.tau[r], file.strike[r], file.bid[r]});
        asks.push_back({file.tau[r], file.strike[r], file.ask[r]});
    }
    return calib::BidAskGrid{observations_to_grid(bids, grid), observations_to_grid(asks, grid)};
}

std::string pricing_config_hash(const std::string& mode, const calib::ThetaBox& box,
                                const calib::ContractGrid& grid, const calib::LambdaRanges& ranges) {
    std::string text = "mode=" + mode + "|lower=" +
                       canonical(std::vector<double>(box.lower.begin(), box.lower.end())) +
                       "|upper=" + canonical(std::vector<double>(box.upper.begin(), box.upper.end())) +
                       "|taus=" + canonical(grid.taus) + "|strikes=" + canonical(grid.strikes) +
                       "|ell=" + format_double(grid.delivery_len) + "|lambda=" +
                       canonical({ranges.tau_lo, ranges.tau_hi, ranges.strike_lo, ranges.strike_hi}) +
                       "|t=0|r=0";
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

void write_manifest(const std::string& path, const Manifest& m) {
    json j;
    j["format_version"] = 1;
    j["mode"] = m.mode;
    j["n_train"] = m.n_train;
    j["n_test"] = m.n_test;
    j["seed"] = m.seed;
    j["box"] = {{"lower", m.box.lower}, {"upper", m.box.upper}};
    j["contract_grid"] = {{"taus", m.grid.taus}, {"strikes", m.grid.strikes}, {"delivery_len", m.grid.delivery_len}};
    j["lambda_ranges"] = {{"tau", {m.ranges.tau_lo, m.ranges.tau_hi}},
                          {"strike", {m.ranges.strike_lo, m.ranges.strike_hi}}};
    j["market"] = {{"eval_time", 0.0}, {"rate", 0.0}};
    j["regenerated"] = m.regenerated;
    j["pricing_hash"] = m.pricing_hash;
    j["config"] = config_json(m.config);
    json files = json::object();
    for (const auto& [k, v] : m.files) files[k] = v;
    j["files"] = std::move(files);
    write_text(path, j.dump(1) + "\n");
}

Manifest read_manifest(const std::string& path) {
    try {
        const json j = json::parse(read_text(path));
        Manifest m;
        m.mode = j.at("mode").get<std::string>();
        m.n_train = j.at("n_train").get<int>();
        m.n_test = j.at("n_test").get<int>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.box.lower = j.at("box").at("lower").get<calib::ParamVector>();
        m.box.upper = j.at("box").at("upper").get<calib::ParamVector>();
        m.grid.taus = j.at("contract_grid").at("taus").get<std::vector<double>>();
        m.grid.strikes = j.at("contract_grid").at("strikes").get<std::vector<double>>();
        m.grid.delivery_len = j.at("contract_grid").at("delivery_len").get<double>();
        const auto& lr = j.at("lambda_ranges");
        m.ranges.tau_lo = lr.at("tau").at(0).get<double>();
        m.ranges.tau_hi = lr.at("tau").at(1).get<double>();
        m.ranges.strike_lo = lr.at("strike").at(0).get<double>();
        m.ranges.strike_hi = lr.at("strike").at(1).get<double>();
        m.regenerated = j.at("regenerated").get<int>();
        m.pricing_hash = j.at("pricing_hash").get<std::string>();
        m.config = config_from_json(j.at("config"));
        for (auto it = j.at("files").begin(); it != j.at("files").end(); ++it)
            m.files.emplace_back(it.key(), it.value().get<std::string>());
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest '" + path + "': " + e.what());
    }
}

void write_results(const std::string& path, const ResultsDocument& doc) {
    json j;
    j["format_version"] = 1;
    j["mode"] = doc.mode;
    j["network_mode"] = doc.network_mode;
    j["seed"] = doc.seed;
    j["config"] = config_json(doc.config);
    j["taus"] = doc.taus;
    j["strikes"] = doc.strikes;
    json runs = json::array();
    for (const auto& run : doc.runs) {
        const auto& r = run.result;
        json jr;
        jr["theta_hat"] = params_json(r.theta_hat);
        if (run.truth) jr["theta_true"] = params_json(*run.truth);
        jr["initial_loss"] = r.initial_loss;
        jr["final_loss"] = r.final_loss;
        if (r.param_rel_err) jr["param_rel_err"] = vector_json(*r.param_rel_err);
        jr["price_rel_err"] = grid_json(r.price_rel_err);
        jr["fit_rel_err"] = grid_json(r.fit_rel_err);
        if (r.mismatch_before) jr["mismatch_before"] = grid_json(*r.mismatch_before);
        if (r.mismatch_after) jr["mismatch_after"] = grid_json(*r.mismatch_after);
        jr["loss_trace"] = r.loss_trace;
        runs.push_back(std::move(jr));
    }
    j["runs"] = std::move(runs);
    write_text(path, j.dump(1) + "\n");
}

ResultsDocument read_results(const std::string& path) {
    try {
        const json j = json::parse(read_text(path));
        if (j.at("format_version").get<int>() != 1) throw IoError("unsupported results format_version");
        ResultsDocument doc;
        doc.mode = j.at("mode").get<std::string>();
        doc.network_mode = j.at("network_mode").get<std::string>();
        doc.seed = j.at("seed").get<std::uint64_t>();
        doc.config = config_from_json(j.at("config"));
        doc.taus = j.at("taus").get<std::vector<double>>();
        doc.strikes = j.at("strikes").get<std::vector<double>>();
        for (const auto& jr : j.at("runs")) {
            RunRecord run;
            auto& r = run.result;
            r.theta_hat = params_from_json(jr.at("theta_hat"));
            if (jr.contains("theta_true")) run.truth = params_from_json(jr["theta_true"]);
            r.initial_loss = jr.at("initial_loss").get<double>();
            r.final_loss = jr.at("final_loss").get<double>();
            if (jr.contains("param_rel_err")) r.param_rel_err = vector_from_json(jr["param_rel_err"]);
            r.price_rel_err = grid_from_json(jr.at("price_rel_err"));
            r.fit_rel_err = grid_from_json(jr.at("fit_rel_err"));
            if (jr.contains("mismatch_before")) r.mismatch_before = grid_from_json(jr["mismatch_before"]);
            if (jr.contains("mismatch_after")) r.mismatch_after = grid_from_json(jr["mismatch_after"]);
            r.loss_trace = jr.at("loss_trace").get<std::vector<double>>();
            doc.runs.push_back(std::move(run));
        }
        return doc;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed results file '" + path + "': " + e.what());
    }
}

void write_loss_csv(const std::string& path, const std::vector<double>& losses, const std::string& comment) {
    auto out = open_out(path);
    write_comment(out, comment);
    write_header(out, {"epoch", "loss"});
    for (std::size_t e = 0; e < losses.size(); ++e) out << e + 1 << ',' << format_double(losses[e]) << '\n';
    finish(out, path);
}

void write_grid_table(const std::string& path, const calib::PriceGrid& table, const std::vector<double>& taus,
                      const std::vector<double>& strikes, const std::string& comment) {
    if (table.rows() != static_cast<Eigen::Index>(taus.size()) ||
        table.cols() != static_cast<Eigen::Index>(strikes.size()))
        throw IoError("table shape does not match its axis labels");
    auto out = open_out(path);
    write_comment(out, comment);
    out << "tau";
    for (double k : strikes) out << ",K=" << format_double(k);
    out << '\n';
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
        out << format_double(taus[static_cast<std::size_t>(i)]);
        for (Eigen::Index c = 0; c < table.cols(); ++c) out << ',' << format_double(table(i, c));
        out << '\n';
    }
    finish(out, path);
}

std::string build_timestamp() {
    std::time_t t = 0;
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    finish(out, path);
}

}  // namespace hjmcal::io
