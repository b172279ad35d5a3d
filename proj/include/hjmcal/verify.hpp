#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hjmcal::verify {

struct CheckResult {
    std::string name;
    bool passed = false;
    double measured = 0.0;   // worst observed error
    double tolerance = 0.0;
    int cases = 0;
    std::string detail;
};

struct SuiteResult {
    std::string suite;
    std::vector<CheckResult> checks;
    double seconds = 0.0;

    bool passed() const;
};

// oracle, adjoint, gradcheck, linear-embed.
const std::vector<std::string>& suite_names();

SuiteResult oracle_suite(std::uint64_t seed, int n_theta = 100);
SuiteResult adjoint_suite(std::uint64_t seed, int n_pairs = 20);
SuiteResult gradcheck_suite(std::uint64_t seed, int n_points = 100);
SuiteResult linear_embed_suite(std::uint64_t seed, int n_matrices = 20);

// One suite by name, or every suite for "all". Throws std::invalid_argument
// for unknown names.
std::vector<SuiteResult> run(const std::string& suite, std::uint64_t seed);

std::string to_json(const std::vector<SuiteResult>& results);

}  // namespace hjmcal::verify
