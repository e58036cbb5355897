#include "emphtts/error.hpp"
#include "emphtts/metrics.hpp"

#include <doctest.h>

#include <cmath>

using namespace emphtts;

TEST_CASE("top-m tie break") {
    CHECK(top_m({0.5, 0.5, 0.1}, 1) == std::set<std::size_t>{0});
    CHECK(top_m({0.2, 0.2, 0.2}, 2) == std::set<std::size_t>{0, 1});
    CHECK(top_m({0.1, 0.9, 0.9}, 1) == std::set<std::size_t>{1});
    CHECK(top_m({0.3}, 2) == std::set<std::size_t>{0});
}

TEST_CASE("match and f1 examples") {
    CHECK(match_m({{{0.9, 0.1, 0.5}, {0.8, 0.2, 0.4}}}, 1) == 1.0);
    const EmphasisTestInstance same{{0.1, 0.7, 0.3}, {0.1, 0.7, 0.3}};
    CHECK(match_m({same}, 1) == 1.0);
    CHECK(match_m({same}, 2) == 1.0);
    CHECK(f1_m({same}, 2) == 1.0);
    CHECK(match_m({{{0.4}, {0.9}}}, 2) == 1.0);
    // G = {a, b}, Ĝ = {b, c}.
    const EmphasisTestInstance half{{0.9, 0.8, 0.1}, {0.1, 0.9, 0.8}};
    CHECK(f1_m({half}, 2) == doctest::Approx(0.5));
    CHECK(f1_m({{{0.9, 0.1}, {0.1, 0.9}}}, 1) == 0.0);
    CHECK_THROWS_AS(match_m({}, 1), EmptyInputError);
    CHECK_THROWS_AS(f1_m({{{0.1, 0.2}, {0.1}}}, 1), StructuralError);
}

TEST_CASE("mae") {
    CHECK(mae({1, 2}, {1, 2}) == 0.0);
    CHECK(mae({3, 4}, {1, 2}) == 2.0);
    CHECK(mae({1, 2}, {2, 4}) == 1.5);
    CHECK(mae_duration({2, 4}, {1, 2}) == 0.0);
    CHECK_THROWS_AS(mae({1}, {1, 2}), StructuralError);
}

TEST_CASE("fleiss kappa on the six-annotator fixture") {
    const std::vector<std::vector<int>> counts = {{0, 6}, {0, 6}, {0, 6}, {5, 1}, {1, 5}};
    const auto k = fleiss_kappa(counts);
    REQUIRE(k.kappa.has_value());
    CHECK(k.observed_agreement == doctest::Approx(13.0 / 15.0));
    CHECK(k.expected_agreement == doctest::Approx(0.68));
    CHECK(*k.kappa == doctest::Approx(0.58333333333).epsilon(1e-9));
}

TEST_CASE("fleiss kappa edge cases") {
    CHECK(*fleiss_kappa({{3, 0}, {0, 3}}).kappa == doctest::Approx(1.0));
    CHECK(fleiss_kappa({{3, 0}, {3, 0}}).degenerate());
    CHECK_THROWS_AS(fleiss_kappa({{3, 0}, {2, 0}}), StructuralError);
    CHECK_THROWS_AS(fleiss_kappa({{1, 0}}), StructuralError);
}

TEST_CASE("roc auc") {
    CHECK(*roc_auc({0.1, 0.9, 0.4, 0.8}, {false, true, false, true}) == 1.0);
    CHECK(*roc_auc({0.5, 0.5}, {false, true}) == 0.5);
    CHECK(!roc_auc({0.1, 0.2}, {true, true}).has_value());
}
