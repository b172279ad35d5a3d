#include "doctest.h"

#include "hjmcal/verify.hpp"

#include "json.hpp"

using namespace hjmcal;

TEST_CASE("verify suites") {
    CHECK(verify::suite_names().size() == 4);
    CHECK_THROWS_AS(verify::run("nonsense", 1), std::invalid_argument);

    const auto embed = verify::run("linear-embed", 3);
    REQUIRE(embed.size() == 1);
    CHECK(embed[0].passed());
    const auto adjoint = verify::adjoint_suite(3, 4);
    CHECK(adjoint.passed());
    for (const auto& c : adjoint.checks) CHECK_MESSAGE(c.passed, c.name << " " << c.measured);

    const auto doc = nlohmann::json::parse(verify::to_json(embed));
    CHECK(doc["passed"].get<bool>());
    CHECK(doc["suites"][0]["suite"] == "linear-embed");
}
