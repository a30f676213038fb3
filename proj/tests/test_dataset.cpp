#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "gembed/dataset.hpp"

using namespace gembed;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content)
        : path("gembed_test_" + name) {
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

std::string error_text(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("load_dataset parses the text feature format") {
    TempFile file("ok.txt", "2 3\n0 1.0 2.0 3.0\n1 4.0 5.0 6.0\n");
    auto ds = load_dataset(file.path);
    CHECK(ds.size() == 2);
    CHECK(ds.input_dim() == 3);
    CHECK(ds.num_classes() == 2);
    CHECK(ds.labels == std::vector<int>{0, 1});
    CHECK(ds.features->at(0, 0) == 1.0);
    CHECK(ds.features->at(1, 2) == 6.0);
    CHECK(ds.class_index.at(0) == std::vector<std::size_t>{0});
    CHECK(ds.class_index.at(1) == std::vector<std::size_t>{1});
}

TEST_CASE("load_dataset reports parse errors with line numbers") {
    SUBCASE("empty file") {
        TempFile file("empty.txt", "");
        CHECK_THROWS_AS(load_dataset(file.path), DataError);
    }
    SUBCASE("bad header") {
        TempFile file("header.txt", "2\n");
        const auto msg = error_text([&] { load_dataset(file.path); });
        CHECK(msg.find("line 1") != std::string::npos);
    }
    SUBCASE("row length mismatch") {
        TempFile file("short_row.txt", "2 3\n0 1.0 2.0 3.0\n1 4.0 5.0\n");
        const auto msg = error_text([&] { load_dataset(file.path); });
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("expected 3") != std::string::npos);
    }
    SUBCASE("non-integer label") {
        TempFile file("bad_label.txt", "1 2\nx 1.0 2.0\n");
        const auto msg = error_text([&] { load_dataset(file.path); });
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("not an integer") != std::string::npos);
    }
    SUBCASE("non-numeric value") {
        TempFile file("bad_value.txt", "1 2\n0 1.0 oops\n");
        const auto msg = error_text([&] { load_dataset(file.path); });
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("not a number") != std::string::npos);
    }
    SUBCASE("truncated file") {
        TempFile file("truncated.txt", "3 2\n0 1.0 2.0\n");
        const auto msg = error_text([&] { load_dataset(file.path); });
        CHECK(msg.find("file ends") != std::string::npos);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_dataset("gembed_test_does_not_exist.txt"), DataError);
    }
}

TEST_CASE("write_dataset then load_dataset is the identity") {
    Rng rng(31);
    auto ds = make_blobs(rng, 4, 3, 5, 2.0, 0.7);
    TempFile file("roundtrip.txt", "");
    write_dataset(file.path, ds);
    auto back = load_dataset(file.path);
    CHECK(back.labels == ds.labels);
    CHECK(back.features->shape == ds.features->shape);
    for (std::size_t i = 0; i < ds.features->size(); ++i) {
        CHECK(back.features->data[i] == ds.features->data[i]);  // bit-exact
    }
}

TEST_CASE("zero_shot_split partitions classes by ascending id") {
    SUBCASE("first half trains, second half tests") {
        LabeledDataset ds;
        std::vector<double> values;
        for (int c = 0; c < 200; ++c) {
            ds.labels.push_back(c);
            values.push_back(static_cast<double>(c));
        }
        ds.features = Tensor::make({200, 1}, std::move(values));
        ds.reindex();
        auto split = zero_shot_split(ds, 0.5);
        REQUIRE(split.train_classes.size() == 100);
        REQUIRE(split.test_classes.size() == 100);
        CHECK(split.train_classes.front() == 0);
        CHECK(split.train_classes.back() == 99);
        CHECK(split.test_classes.front() == 100);
        CHECK(split.test_classes.back() == 199);
    }

    SUBCASE("two classes split one and one") {
        Rng rng(32);
        auto ds = make_blobs(rng, 2, 3, 2, 1.0, 0.1);
        auto split = zero_shot_split(ds, 0.5);
        CHECK(split.train_classes == std::vector<int>{0});
        CHECK(split.test_classes == std::vector<int>{1});
    }

    SUBCASE("every class lands on exactly one side") {
        Rng rng(33);
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t c = 2 + rng.below(30);
            auto ds = make_blobs(rng, c, 2, 3, 1.0, 0.1);
            const double fraction = 0.05 + 0.9 * rng.uniform();
            auto split = zero_shot_split(ds, fraction);
            std::vector<int> merged = split.train_classes;
            merged.insert(merged.end(), split.test_classes.begin(), split.test_classes.end());
            std::vector<int> expected;
            for (const auto& [label, rows] : ds.class_index) expected.push_back(label);
            CHECK(merged == expected);  // disjoint cover, ascending
        }
    }

    SUBCASE("degenerate inputs are rejected") {
        Rng rng(34);
        auto ds = make_blobs(rng, 2, 3, 2, 1.0, 0.1);
        CHECK_THROWS_AS(zero_shot_split(ds, 0.0), ConfigError);
        CHECK_THROWS_AS(zero_shot_split(ds, 1.0), ConfigError);
        auto one_class = make_blobs(rng, 1, 5, 2, 1.0, 0.1);
        CHECK_THROWS_AS(zero_shot_split(one_class, 0.5), DataError);
    }
}

TEST_CASE("sample_batch builds class-balanced episodes") {
    Rng data_rng(35);
    auto ds = make_blobs(data_rng, 10, 8, 4, 3.0, 0.2);
    auto split = zero_shot_split(ds, 0.5);  // classes 0..4 train, 5..9 test

    SUBCASE("n distinct labels, p rows each") {
        Rng rng(36);
        auto batch = sample_batch(ds, split, SplitSide::train, 2, 3, rng);
        REQUIRE(batch.rows.size() == 6);
        REQUIRE(batch.labels.size() == 6);
        std::map<int, int> counts;
        for (int y : batch.labels) ++counts[y];
        CHECK(counts.size() == 2);
        for (const auto& [label, cnt] : counts) {
            CHECK(cnt == 3);
            CHECK(label < 5);  // train side only
        }
        for (std::size_t i = 0; i < batch.rows.size(); ++i) {
            CHECK(ds.labels[batch.rows[i]] == batch.labels[i]);
        }
    }

    SUBCASE("p=1 over all classes gives distinct rows") {
        Rng rng(37);
        auto batch = sample_batch(ds, split, SplitSide::test, 5, 1, rng);
        std::set<std::size_t> unique(batch.rows.begin(), batch.rows.end());
        CHECK(unique.size() == 5);
    }

    SUBCASE("classes smaller than p are sampled with replacement") {
        Rng rng(38);
        auto tiny = make_blobs(rng, 3, 2, 3, 1.0, 0.1);  // 2 rows per class
        auto tiny_split = zero_shot_split(tiny, 0.67);   // 2 train classes
        auto batch = sample_batch(tiny, tiny_split, SplitSide::train, 2, 5, rng);
        CHECK(batch.rows.size() == 10);
        std::map<int, int> counts;
        for (int y : batch.labels) ++counts[y];
        for (const auto& [label, cnt] : counts) CHECK(cnt == 5);
    }

    SUBCASE("asking for more classes than the side holds fails") {
        Rng rng(39);
        CHECK_THROWS_AS(sample_batch(ds, split, SplitSide::train, 6, 2, rng), ConfigError);
    }

    SUBCASE("sampling is deterministic in the seed") {
        Rng r1(40), r2(40);
        auto b1 = sample_batch(ds, split, SplitSide::train, 3, 4, r1);
        auto b2 = sample_batch(ds, split, SplitSide::train, 3, 4, r2);
        CHECK(b1.rows == b2.rows);
        CHECK(b1.labels == b2.labels);
    }

    SUBCASE("class selection is uniform over many batches") {
        Rng rng(41);
        const std::size_t n = 3, trials = 10000;
        std::vector<std::size_t> hits(5, 0);
        for (std::size_t t = 0; t < trials; ++t) {
            auto batch = sample_batch(ds, split, SplitSide::train, n, 1, rng);
            std::set<int> chosen(batch.labels.begin(), batch.labels.end());
            for (int y : chosen) ++hits[static_cast<std::size_t>(y)];
        }
        const double expect = static_cast<double>(n) / 5.0;  // inclusion probability
        const double sigma = std::sqrt(expect * (1.0 - expect) / static_cast<double>(trials));
        for (std::size_t c = 0; c < 5; ++c) {
            const double freq = static_cast<double>(hits[c]) / static_cast<double>(trials);
            CHECK(std::abs(freq - expect) <= 3.0 * sigma);
        }
    }
}

TEST_CASE("make_blobs generates clustered data") {
    SUBCASE("zero noise copies the class center") {
        Rng rng(42);
        auto ds = make_blobs(rng, 3, 4, 5, 2.0, 0.0);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t s = 1; s < 4; ++s) {
                for (std::size_t j = 0; j < 5; ++j) {
                    CHECK(ds.features->at(c * 4 + s, j) == ds.features->at(c * 4, j));
                }
            }
        }
    }

    SUBCASE("shapes and labels") {
        Rng rng(43);
        auto ds = make_blobs(rng, 6, 7, 3, 1.0, 0.5);
        CHECK(ds.size() == 42);
        CHECK(ds.input_dim() == 3);
        CHECK(ds.num_classes() == 6);
        for (std::size_t i = 0; i < ds.size(); ++i) CHECK(ds.labels[i] == static_cast<int>(i / 7));
    }

    SUBCASE("well-separated blobs are 1-NN classifiable") {
        Rng rng(44);
        auto ds = make_blobs(rng, 10, 20, 8, 5.0, 0.1);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            double best = 1e300;
            std::size_t best_j = 0;
            for (std::size_t j = 0; j < ds.size(); ++j) {
                if (j == i) continue;
                double dist = 0.0;
                for (std::size_t k = 0; k < 8; ++k) {
                    const double diff = ds.features->at(i, k) - ds.features->at(j, k);
                    dist += diff * diff;
                }
                if (dist < best) {
                    best = dist;
                    best_j = j;
                }
            }
            if (ds.labels[best_j] == ds.labels[i]) ++correct;
        }
        CHECK(static_cast<double>(correct) / static_cast<double>(ds.size()) >= 0.99);
    }

    SUBCASE("deterministic under the seed") {
        Rng r1(45), r2(45);
        auto a = make_blobs(r1, 4, 5, 3, 2.0, 0.3);
        auto b = make_blobs(r2, 4, 5, 3, 2.0, 0.3);
        CHECK(a.features->data == b.features->data);
        CHECK(a.labels == b.labels);
    }

    SUBCASE("invalid arguments are rejected") {
        Rng rng(46);
        CHECK_THROWS_AS(make_blobs(rng, 0, 5, 3, 1.0, 0.1), ConfigError);
        CHECK_THROWS_AS(make_blobs(rng, 2, 5, 3, 1.0, -0.1), ConfigError);
    }
}
