#include "doctest.h"

#include <sstream>

#include "carve/core_model.hpp"
#include "carve/csv.hpp"
#include "carve/errors.hpp"
#include "carve/rng.hpp"
#include "test_util.hpp"

using carve::Dataset;
using carve::SelectionSummary;

namespace {

Dataset tiny(const std::vector<double>& y, const std::vector<double>& d,
             const std::vector<double>& x) {
    Dataset data;
    const Eigen::Index n = static_cast<Eigen::Index>(y.size());
    data.y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    data.d = Eigen::Map<const Eigen::MatrixXd>(d.data(), n, 1);
    data.x = Eigen::Map<const Eigen::MatrixXd>(x.data(), n, 1);
    return data;
}

}  // namespace

TEST_CASE("centering subtracts column means") {
    Dataset data = tiny({1.0, 3.0}, {2.0, 2.0}, {5.0, -1.0});
    const Dataset centered = carve::center_columns(data);
    CHECK(centered.centered);
    CHECK(centered.y[0] == doctest::Approx(-1.0));
    CHECK(centered.y[1] == doctest::Approx(1.0));
    CHECK(centered.d(0, 0) == doctest::Approx(0.0));  // constant column maps to zero
    CHECK(centered.d(1, 0) == doctest::Approx(0.0));
    CHECK(centered.x(0, 0) == doctest::Approx(3.0));

    // already-centered data stays put
    const Dataset again = carve::center_columns(centered);
    CHECK(std::abs(again.y[0] - centered.y[0]) <= 1e-15);
    CHECK(std::abs(again.x(1, 0) - centered.x(1, 0)) <= 1e-15);
}

TEST_CASE("centering rejects a single observation") {
    Dataset data = tiny({1.0}, {1.0}, {1.0});
    CHECK_THROWS_AS(carve::center_columns(data), carve::DataError);
}

TEST_CASE("moment summary matches the hand-computed 2x2 case") {
    Dataset data = tiny({1.0, -1.0}, {1.0, -1.0}, {1.0, -1.0});
    data.centered = true;
    const auto moments = carve::compute_moment_summary(data, std::vector<int>{0});
    CHECK(moments.n == 2);
    CHECK(moments.xi[0] == doctest::Approx(1.0));
    CHECK(moments.xi[1] == doctest::Approx(1.0));
    CHECK(moments.Xi(0, 0) == doctest::Approx(1.0));
    CHECK(moments.Xi(0, 1) == doctest::Approx(1.0));
    CHECK(moments.Xi(1, 0) == doctest::Approx(1.0));
    CHECK(moments.Xi(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("moment summary with empty selection keeps only the treatment block") {
    Dataset data = tiny({1.0, -1.0, 0.0}, {2.0, -1.0, -1.0}, {0.5, 0.5, -1.0});
    const Dataset centered = carve::center_columns(data);
    const auto moments = carve::compute_moment_summary(centered, std::vector<int>{});
    CHECK(moments.xi.size() == 1);
    CHECK(moments.Xi.rows() == 1);
    CHECK(moments.xi[0] ==
          doctest::Approx(centered.d.col(0).dot(centered.y) / 3.0));
}

TEST_CASE("moment summary equals the brute-force Gram oracle") {
    carve::Rng rng(42);
    Dataset data = testutil::random_ar_dataset(rng, 20, 5, 1.0, {{0, 1.0}, {2, -0.5}});
    const Dataset centered = carve::center_columns(data);
    const std::vector<int> selected{0, 2, 4};
    const auto moments = carve::compute_moment_summary(centered, selected);

    Eigen::VectorXd xi;
    Eigen::MatrixXd Xi;
    testutil::brute_force_moments(centered, selected, xi, Xi);
    CHECK((moments.xi - xi).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + xi.cwiseAbs().maxCoeff()));
    CHECK((moments.Xi - Xi).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + Xi.cwiseAbs().maxCoeff()));
}

TEST_CASE("moment summary rejects out-of-range indices") {
    Dataset data = tiny({1.0, -1.0}, {1.0, -1.0}, {1.0, -1.0});
    data.centered = true;
    CHECK_THROWS_AS(carve::compute_moment_summary(data, std::vector<int>{1}), carve::DataError);
}

TEST_CASE("moments are row-permutation equivariant and scale linearly in y") {
    carve::Rng rng(7);
    Dataset data =
        carve::center_columns(testutil::random_ar_dataset(rng, 24, 6, 2.0, {{1, 1.0}}));
    const std::vector<int> selected{1, 3};
    const auto base = carve::compute_moment_summary(data, selected);

    // permute rows
    std::vector<int> perm{5, 3, 1, 0, 2, 4, 23, 22, 21, 20, 19, 18,
                          17, 16, 15, 14, 13, 12, 11, 10, 9, 8, 7, 6};
    Dataset shuffled = data;
    for (int i = 0; i < 24; ++i) {
        shuffled.y[i] = data.y[perm[static_cast<size_t>(i)]];
        shuffled.d.row(i) = data.d.row(perm[static_cast<size_t>(i)]);
        shuffled.x.row(i) = data.x.row(perm[static_cast<size_t>(i)]);
    }
    const auto permuted = carve::compute_moment_summary(shuffled, selected);
    CHECK((permuted.xi - base.xi).cwiseAbs().maxCoeff() <=
          1e-12 * (1.0 + base.xi.cwiseAbs().maxCoeff()));
    CHECK((permuted.Xi - base.Xi).cwiseAbs().maxCoeff() <=
          1e-12 * (1.0 + base.Xi.cwiseAbs().maxCoeff()));

    // scaling y scales xi and leaves Xi alone
    Dataset scaled = data;
    scaled.y *= 3.5;
    const auto moments = carve::compute_moment_summary(scaled, selected);
    CHECK((moments.xi - 3.5 * base.xi).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((moments.Xi - base.Xi).cwiseAbs().maxCoeff() == 0.0);

    // PSD property
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(base.Xi, Eigen::EigenvaluesOnly);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * base.Xi.trace());
}

TEST_CASE("summary validation flags each broken invariant") {
    carve::Rng rng(3);
    Dataset data =
        carve::center_columns(testutil::random_ar_dataset(rng, 12, 4, 1.0, {{0, 1.0}}));
    SelectionSummary sel;
    sel.selected = {0, 2};
    sel.lambda = Eigen::Vector2d(1.0, 2.0);
    sel.signs = Eigen::Vector2d(1.0, -1.0);
    carve::StudySummary summary = carve::make_study_summary(data, sel);
    CHECK(carve::validate_summary(summary).empty());

    carve::StudySummary bad_sign = summary;
    bad_sign.selection.signs[0] = 0.0;
    const auto v1 = carve::validate_summary(bad_sign);
    REQUIRE(v1.size() == 1);
    CHECK(v1[0].find("signs") != std::string::npos);

    carve::StudySummary asym = summary;
    asym.moments.Xi(0, 1) += 1e-3;
    bool found = false;
    for (const auto& v : carve::validate_summary(asym)) {
        if (v.find("symmetric") != std::string::npos) found = true;
    }
    CHECK(found);
}

TEST_CASE("summary-only sites can serve exactly their exported model") {
    carve::Rng rng(11);
    Dataset data = testutil::random_ar_dataset(rng, 15, 4, 1.0, {{0, 1.0}});
    SelectionSummary sel;
    sel.selected = {1};
    sel.lambda = Eigen::VectorXd::Constant(1, 2.0);
    sel.signs = Eigen::VectorXd::Constant(1, 1.0);

    carve::StudySite raw_site(data, sel);
    CHECK_NOTHROW(raw_site.moments_for({0, 1, 2}));  // raw data: any model works

    carve::StudySite summary_site(raw_site.summary());
    CHECK_NOTHROW(summary_site.moments_for({1}));
    CHECK_THROWS_AS(summary_site.moments_for({0, 1}), carve::CapabilityError);
}

TEST_CASE("CSV round trip and rejection of malformed rows") {
    carve::Rng rng(19);
    const Dataset data = testutil::random_ar_dataset(rng, 9, 3, 1.0, {{0, 0.7}});
    std::ostringstream out;
    carve::write_dataset_csv(out, data);

    std::istringstream in(out.str());
    const Dataset parsed = carve::read_dataset_csv(in, "roundtrip");
    CHECK(parsed.n() == data.n());
    CHECK(parsed.p() == data.p());
    CHECK((parsed.y - data.y).cwiseAbs().maxCoeff() == 0.0);
    CHECK((parsed.x - data.x).cwiseAbs().maxCoeff() == 0.0);

    std::istringstream ragged("y,d1,x1\n1.0,2.0,3.0\n1.0,2.0\n");
    CHECK_THROWS_AS(carve::read_dataset_csv(ragged, "bad"), carve::DataError);

    std::istringstream text("y,d1,x1\n1.0,two,3.0\n");
    CHECK_THROWS_AS(carve::read_dataset_csv(text, "bad"), carve::DataError);

    std::istringstream header("y,x1,d1\n1.0,2.0,3.0\n");
    CHECK_THROWS_AS(carve::read_dataset_csv(header, "bad"), carve::DataError);
}
