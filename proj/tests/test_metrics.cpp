#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "gembed/metrics.hpp"

using namespace gembed;

namespace {

RetrievalIndex circle_index(const std::vector<double>& angles, const std::vector<int>& labels) {
    auto pts = Tensor::zeros({angles.size(), 2});
    for (std::size_t i = 0; i < angles.size(); ++i) {
        pts->at(i, 0) = std::cos(angles[i]);
        pts->at(i, 1) = std::sin(angles[i]);
    }
    return build_index(pts, labels);
}

/// Two classes of three points each, gaps chosen so all neighbor orderings
/// are decisive at double precision.
RetrievalIndex recall_fixture() {
    return circle_index({0.0, 0.11, 0.43, 0.21, 0.30, 0.80}, {0, 0, 0, 1, 1, 1});
}

/// Direct entropy-summation reference, structured independently of the
/// production implementation (explicit probability vectors, no maps shared).
double nmi_reference(const std::vector<int>& a, const std::vector<int>& b) {
    const double n = static_cast<double>(a.size());
    auto probs = [&](const std::vector<int>& v) {
        std::map<int, double> p;
        for (int x : v) p[x] += 1.0 / n;
        return p;
    };
    const auto pa = probs(a), pb = probs(b);
    std::map<std::pair<int, int>, double> pab;
    for (std::size_t i = 0; i < a.size(); ++i) pab[{a[i], b[i]}] += 1.0 / n;
    double ha = 0.0, hb = 0.0, mi = 0.0;
    for (const auto& [k, p] : pa) ha -= p * std::log(p);
    for (const auto& [k, p] : pb) hb -= p * std::log(p);
    for (const auto& [k, p] : pab) mi += p * std::log(p / (pa.at(k.first) * pb.at(k.second)));
    if (ha == 0.0 && hb == 0.0) return 1.0;
    if (ha == 0.0 || hb == 0.0) return 0.0;
    return 2.0 * mi / (ha + hb);
}

}  // namespace

TEST_CASE("recall_at_k") {
    SUBCASE("frozen two-class fixture") {
        auto report = recall_at_k(recall_fixture(), {1, 2, 4});
        REQUIRE(report.recalls.size() == 3);
        CHECK(report.num_queries == 6);
        CHECK(report.recalls[0].first == 1);
        CHECK(report.recalls[0].second == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(report.recalls[1].second == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
        CHECK(report.recalls[2].second == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("all one class scores 1.0 everywhere") {
        auto index = circle_index({0.0, 0.3, 0.7, 1.1}, {5, 5, 5, 5});
        for (const auto& [k, v] : recall_at_k(index, {1, 2, 3}).recalls) CHECK(v == 1.0);
    }

    SUBCASE("singleton classes score 0.0 everywhere") {
        auto index = circle_index({0.0, 0.3, 0.7, 1.1}, {0, 1, 2, 3});
        for (const auto& [k, v] : recall_at_k(index, {1, 2, 3}).recalls) CHECK(v == 0.0);
    }

    SUBCASE("monotone in K on random indexes") {
        Rng rng(71);
        for (int trial = 0; trial < 5; ++trial) {
            auto raw = random_normal(rng, {30, 4}, 0.0, 1.0);
            std::vector<int> labels;
            for (int i = 0; i < 30; ++i) labels.push_back(static_cast<int>(rng.below(4)));
            auto index = build_index(raw, labels);
            auto report = recall_at_k(index, {1, 2, 5, 10, 20});
            for (std::size_t i = 1; i < report.recalls.size(); ++i) {
                CHECK(report.recalls[i].second >= report.recalls[i - 1].second);
            }
            for (const auto& [k, v] : report.recalls) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }

    SUBCASE("K bounds are enforced") {
        auto index = recall_fixture();
        CHECK_THROWS_AS(recall_at_k(index, {6}), ConfigError);
        CHECK_THROWS_AS(recall_at_k(index, {0}), ConfigError);
        CHECK_THROWS_AS(recall_at_k(index, {}), ConfigError);
    }
}

TEST_CASE("kmeans") {
    SUBCASE("N == K puts every point in its own cluster") {
        Rng rng(72);
        auto pts = random_normal(rng, {5, 3}, 0.0, 1.0);
        auto clustering = kmeans(pts, 5, rng);
        CHECK(clustering.inertia == doctest::Approx(0.0).epsilon(1e-12));
        std::set<int> ids(clustering.assignment.begin(), clustering.assignment.end());
        CHECK(ids.size() == 5);
    }

    SUBCASE("recovers zero-noise groups exactly") {
        Rng rng(73);
        auto pts = Tensor::zeros({12, 2});
        for (std::size_t i = 0; i < 12; ++i) {
            pts->at(i, 0) = static_cast<double>(i / 4) * 10.0;  // 3 sites, 4 points each
            pts->at(i, 1) = -5.0 * static_cast<double>(i / 4);
        }
        auto clustering = kmeans(pts, 3, rng);
        CHECK(clustering.inertia == doctest::Approx(0.0).epsilon(1e-12));
        for (std::size_t i = 0; i < 12; ++i) {
            CHECK(clustering.assignment[i] == clustering.assignment[(i / 4) * 4]);
        }
    }

    SUBCASE("beats random assignments and never increases inertia") {
        Rng rng(74);
        auto pts = random_normal(rng, {40, 3}, 0.0, 2.0);
        auto clustering = kmeans(pts, 4, rng);
        for (std::size_t i = 1; i < clustering.inertia_history.size(); ++i) {
            CHECK(clustering.inertia_history[i] <= clustering.inertia_history[i - 1] + 1e-9);
        }
        CHECK(clustering.inertia <= clustering.inertia_history.back() + 1e-9);
        // random-assignment baseline: mean cost of arbitrary labelings
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<int> random_assign;
            for (int i = 0; i < 40; ++i) random_assign.push_back(static_cast<int>(rng.below(4)));
            // centroid of each random group
            std::map<int, std::pair<std::vector<double>, std::size_t>> groups;
            for (std::size_t i = 0; i < 40; ++i) {
                auto& [sum, count] = groups[random_assign[i]];
                sum.resize(3, 0.0);
                for (std::size_t j = 0; j < 3; ++j) sum[j] += pts->at(i, j);
                ++count;
            }
            double inertia = 0.0;
            for (std::size_t i = 0; i < 40; ++i) {
                const auto& [sum, count] = groups[random_assign[i]];
                for (std::size_t j = 0; j < 3; ++j) {
                    const double diff = pts->at(i, j) - sum[j] / static_cast<double>(count);
                    inertia += diff * diff;
                }
            }
            CHECK(clustering.inertia <= inertia);
        }
    }

    SUBCASE("assignments stay in range and K is validated") {
        Rng rng(75);
        auto pts = random_normal(rng, {10, 2}, 0.0, 1.0);
        auto clustering = kmeans(pts, 3, rng);
        for (int a : clustering.assignment) {
            CHECK(a >= 0);
            CHECK(a < 3);
        }
        CHECK_THROWS_AS(kmeans(pts, 11, rng), ConfigError);
        CHECK_THROWS_AS(kmeans(pts, 0, rng), ConfigError);
    }

    SUBCASE("deterministic under the seed") {
        Rng r1(76), r2(76);
        Rng data(77);
        auto pts = random_normal(data, {25, 3}, 0.0, 1.0);
        auto a = kmeans(pts, 4, r1);
        auto b = kmeans(pts, 4, r2);
        CHECK(a.assignment == b.assignment);
        CHECK(a.inertia == b.inertia);
    }
}

TEST_CASE("nmi") {
    SUBCASE("frozen contingency-table value") {
        // table [[2,0],[1,1]]: cluster 0 holds two rows of class 0; cluster 1
        // holds one of each
        const std::vector<int> assignment = {0, 0, 1, 1};
        const std::vector<int> labels = {0, 0, 0, 1};
        CHECK(nmi(assignment, labels) == doctest::Approx(0.3437110184854508).epsilon(1e-12));
    }

    SUBCASE("identical partitions score 1") {
        CHECK(nmi({0, 1, 2, 0}, {0, 1, 2, 0}) == 1.0);
        CHECK(nmi({5, 7, 9, 5}, {0, 1, 2, 0}) == 1.0);  // relabeled but identical
    }

    SUBCASE("degenerate partitions") {
        CHECK(nmi({0, 0, 0}, {1, 2, 3}) == 0.0);       // giant cluster vs 3 classes
        CHECK(nmi({1, 2, 3}, {0, 0, 0}) == 0.0);       // symmetric case
        CHECK(nmi({4, 4, 4}, {9, 9, 9}) == 1.0);       // both single-cluster: identical
    }

    SUBCASE("symmetric, relabel-invariant, bounded") {
        Rng rng(78);
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t n = 2 + rng.below(49);
            std::vector<int> a, b;
            for (std::size_t i = 0; i < n; ++i) {
                a.push_back(static_cast<int>(rng.below(4)));
                b.push_back(static_cast<int>(rng.below(3)));
            }
            const double v = nmi(a, b);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0 + 1e-12);
            CHECK(v == doctest::Approx(nmi(b, a)).epsilon(1e-12));
            std::vector<int> relabeled;
            for (int x : a) relabeled.push_back(100 - 7 * x);
            CHECK(nmi(relabeled, b) == doctest::Approx(v).epsilon(1e-12));
            CHECK(v == doctest::Approx(nmi_reference(a, b)).epsilon(1e-12));
        }
    }

    SUBCASE("length mismatch is rejected") {
        CHECK_THROWS_AS(nmi({0, 1}, {0}), ShapeError);
    }
}

TEST_CASE("evaluate") {
    SUBCASE("perfect embedding scores 1.0 on both metrics") {
        auto pts = Tensor::zeros({9, 2});
        std::vector<int> labels(9);
        for (std::size_t i = 0; i < 9; ++i) {
            const std::size_t c = i / 3;  // 3 classes collapsed to 3 distinct points
            pts->at(i, 0) = std::cos(2.1 * static_cast<double>(c));
            pts->at(i, 1) = std::sin(2.1 * static_cast<double>(c));
            labels[i] = static_cast<int>(c);
        }
        auto index = build_index(pts, labels);
        Rng rng(79);
        auto report = evaluate(index, {1, 2}, 3, rng);
        CHECK(report.recall.recalls[0].second == 1.0);
        CHECK(report.recall.recalls[1].second == 1.0);
        CHECK(report.nmi == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("report keys match the requested ks") {
        Rng rng(80);
        auto report = evaluate(recall_fixture(), {4, 1, 2}, 2, rng);
        REQUIRE(report.recall.recalls.size() == 3);
        CHECK(report.recall.recalls[0].first == 4);
        CHECK(report.recall.recalls[1].first == 1);
        CHECK(report.recall.recalls[2].first == 2);
    }

    SUBCASE("formatted report follows the grammar exactly") {
        EvalReport report;
        report.recall.num_queries = 6;
        report.recall.recalls = {{1, 0.5}, {2, 5.0 / 6.0}, {4, 1.0}};
        report.nmi = 0.3437110184854508;
        report.num_clusters = 2;
        CHECK(format_report(report) ==
              "recall@K 1 0.500000\n"
              "recall@K 2 0.833333\n"
              "recall@K 4 1.000000\n"
              "nmi 0.343711\n"
              "summary k1=0.500000 k2=0.833333 k4=1.000000 nmi=0.343711\n");
    }
}
