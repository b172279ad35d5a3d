#pragma once

#include "hjmcal/calibration.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hjmcal::io {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Ordered key/value pairs describing a resolved run configuration.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

// Shortest text that reads back to the same double.
std::string format_double(double v);

// Grid CSV header: theta_a,...,alpha3,p_t1_k1,...,p_t7_k9 (maturity-major).
std::vector<std::string> grid_header(Eigen::Index rows, Eigen::Index cols);
std::vector<std::string> pointwise_header();

// Lines starting with '#' are comments; `comment` (may be empty) is written
// as the first line.
void write_grid_dataset(const std::string& path, const std::vector<calib::GridSample>& samples,
                        const std::string& comment);
std::vector<calib::GridSample> read_grid_dataset(const std::string& path, Eigen::Index rows = 7,
                                                 Eigen::Index cols = 9);
void write_pointwise_dataset(const std::string& path, const std::vector<calib::PointwiseSample>& samples,
                             const std::string& comment);
std::vector<calib::PointwiseSample> read_pointwise_dataset(const std::string& path);

// "grid" or "pointwise", from the header of a dataset file.
std::string detect_dataset_mode(const std::string& path);

// Observation files: tau,strike,price or tau,strike,bid,ask.
struct ObservationFile {
    bool bidask = false;
    std::vector<calib::Observation> prices;
    std::vector<double> tau, strike, bid, ask;  // bid-ask rows
};
ObservationFile read_observations(const std::string& path);
void write_observations(const std::string& path, const std::vector<calib::Observation>& rows,
                        const std::string& comment);
void write_bidask_observations(const std::string& path, const calib::BidAskGrid& bands,
                               const calib::ContractGrid& grid, const std::string& comment);

// Arrange observations on the contract grid; every cell must be present once.
calib::PriceGrid observations_to_grid(const std::vector<calib::Observation>& rows,
                                      const calib::ContractGrid& grid);
calib::BidAskGrid bidask_to_grid(const ObservationFile& file, const calib::ContractGrid& grid);

struct Manifest {
    std::string mode;  // grid | pointwise
    int n_train = 0;
    int n_test = 0;
    std::uint64_t seed = 0;
    calib::ThetaBox box;
    calib::ContractGrid grid;
    calib::LambdaRanges ranges;
    int regenerated = 0;
    std::string pricing_hash;
    ConfigEntries config;
    std::vector<std::pair<std::string, std::string>> files;
};

// FNV-1a (64-bit, hex) of the canonical pricing configuration text.
std::string pricing_config_hash(const std::string& mode, const calib::ThetaBox& box,
                                const calib::ContractGrid& grid, const calib::LambdaRanges& ranges);

void write_manifest(const std::string& path, const Manifest& manifest);
Manifest read_manifest(const std::string& path);

struct RunRecord {
    calib::CalibrationResult result;
    std::optional<ModelParams> truth;
};

struct ResultsDocument {
    std::string mode;          // exact | bidask
    std::string network_mode;  // grid | pointwise
    std::uint64_t seed = 0;
    ConfigEntries config;
    std::vector<double> taus;
    std::vector<double> strikes;
    std::vector<RunRecord> runs;
};

void write_results(const std::string& path, const ResultsDocument& doc);
ResultsDocument read_results(const std::string& path);

// Per-epoch loss CSV: epoch,loss.
void write_loss_csv(const std::string& path, const std::vector<double>& losses, const std::string& comment);

// Labelled 7 x 9 table: first column tau, one column per strike.
void write_grid_table(const std::string& path, const calib::PriceGrid& table, const std::vector<double>& taus,
                      const std::vector<double>& strikes, const std::string& comment);

// ISO-8601 UTC stamp from SOURCE_DATE_EPOCH (default 0) so outputs stay reproducible.
std::string build_timestamp();

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace hjmcal::io
