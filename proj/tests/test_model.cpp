#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gembed/model.hpp"

using namespace gembed;

namespace {

TensorPtr identity2() { return Tensor::make({2, 2}, {1.0, 0.0, 0.0, 1.0}, true); }

MpnLayerParams single_head_identity_layer() {
    MpnLayerParams layer;
    layer.wq.push_back(identity2());
    layer.wk.push_back(identity2());
    layer.wv.push_back(identity2());
    return layer;
}

TensorPtr permute_rows(const TensorPtr& x, const std::vector<std::size_t>& perm) {
    auto out = Tensor::zeros(x->shape);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        for (std::size_t j = 0; j < x->cols(); ++j) out->at(i, j) = x->at(perm[i], j);
    }
    return out;
}

}  // namespace

TEST_CASE("MpnConfig validates its invariants") {
    MpnConfig ok;
    ok.validate();
    CHECK(ok.ff_dim() == 2 * ok.d);

    MpnConfig zero_layers;
    zero_layers.L = 0;
    CHECK_THROWS_AS(zero_layers.validate(), ConfigError);

    MpnConfig indivisible;
    indivisible.d = 10;
    indivisible.M = 4;
    CHECK_THROWS_AS(indivisible.validate(), ConfigError);

    MpnConfig cfg;
    cfg.d = 8;
    cfg.M = 2;
    CHECK(cfg.score_divisor() == doctest::Approx(std::sqrt(8.0)));
    cfg.scale_by_head_dim = true;
    CHECK(cfg.score_divisor() == doctest::Approx(std::sqrt(4.0)));
}

TEST_CASE("backbone_forward") {
    SUBCASE("zero-depth configuration is the identity") {
        Rng rng(1);
        auto params = init_backbone(rng, {4});
        auto x = random_normal(rng, {3, 4}, 0.0, 1.0);
        auto y = backbone_forward(params, x);
        CHECK(y->data == x->data);
    }

    SUBCASE("maps input_dim to d") {
        Rng rng(2);
        auto params = init_backbone(rng, {8, 6, 4});
        auto x = random_normal(rng, {6, 8}, 0.0, 1.0);
        auto y = backbone_forward(params, x);
        CHECK(y->shape == std::vector<std::size_t>{6, 4});
    }

    SUBCASE("gradient matches finite differences") {
        Rng rng(3);
        auto params = init_backbone(rng, {5, 4, 3});
        auto x = random_normal(rng, {4, 5}, 0.0, 1.0);
        auto f = [&]() { return sum_all(mul(backbone_forward(params, x),
                                            backbone_forward(params, x))); };
        auto report = grad_check(f, {{"w0", params.weights[0]}, {"b0", params.biases[0]},
                                     {"w1", params.weights[1]}, {"b1", params.biases[1]}},
                                 1e-5, 1e-4);
        CHECK(report.passed);
    }
}

TEST_CASE("attention_scores") {
    MpnConfig cfg;
    cfg.d = 2;
    cfg.M = 1;

    SUBCASE("hand-evaluated 2x2 case") {
        auto layer = single_head_identity_layer();
        auto h = Tensor::make({2, 2}, {1.0, 0.0, 0.0, 1.0});
        auto att = attention_scores(cfg, layer, 0, h);
        // scores [[1/sqrt(2), 0], [0, 1/sqrt(2)]], then row softmax
        CHECK(att->at(0, 0) == doctest::Approx(0.6697615493266569).epsilon(1e-12));
        CHECK(att->at(0, 1) == doctest::Approx(0.3302384506733431).epsilon(1e-12));
        CHECK(att->at(1, 0) == doctest::Approx(0.3302384506733431).epsilon(1e-12));
        CHECK(att->at(1, 1) == doctest::Approx(0.6697615493266569).epsilon(1e-12));
    }

    SUBCASE("identical rows give uniform attention") {
        Rng rng(4);
        MpnConfig wide;
        wide.d = 6;
        wide.M = 2;
        auto layer = init_mpn_layer(rng, wide);
        auto one_row = random_normal(rng, {1, 6}, 0.0, 1.0);
        auto h = Tensor::zeros({5, 6});
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 6; ++j) h->at(i, j) = one_row->data[j];

        auto att = attention_scores(wide, layer, 1, h);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j)
                CHECK(att->at(i, j) == doctest::Approx(0.2).epsilon(1e-12));

        wide.include_self = false;
        auto masked = attention_scores(wide, layer, 1, h);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(masked->at(i, i) == 0.0);
            for (std::size_t j = 0; j < 5; ++j) {
                if (i != j) CHECK(masked->at(i, j) == doctest::Approx(0.25).epsilon(1e-12));
            }
        }
    }

    SUBCASE("every row sums to 1") {
        Rng rng(5);
        MpnConfig wide;
        wide.d = 8;
        wide.M = 4;
        auto layer = init_mpn_layer(rng, wide);
        auto h = random_normal(rng, {7, 8}, 0.0, 2.0);
        for (std::size_t m = 0; m < wide.M; ++m) {
            auto att = attention_scores(wide, layer, m, h);
            for (std::size_t i = 0; i < 7; ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < 7; ++j) sum += att->at(i, j);
                CHECK(std::abs(sum - 1.0) <= 1e-12);
            }
        }
    }

    SUBCASE("head index is bounds-checked") {
        auto layer = single_head_identity_layer();
        auto h = Tensor::make({2, 2}, {1.0, 0.0, 0.0, 1.0});
        CHECK_THROWS_AS(attention_scores(cfg, layer, 1, h), ConfigError);
    }
}

TEST_CASE("mpn_step and mpn_forward") {
    SUBCASE("output shape equals input shape") {
        Rng rng(6);
        MpnConfig cfg;
        cfg.d = 8;
        cfg.M = 2;
        cfg.L = 4;
        std::vector<MpnLayerParams> layers;
        for (std::size_t l = 0; l < cfg.L; ++l) layers.push_back(init_mpn_layer(rng, cfg));
        auto h0 = random_normal(rng, {6, 8}, 0.0, 1.0);
        auto out = mpn_forward(cfg, layers, h0);
        CHECK(out->shape == h0->shape);
    }

    SUBCASE("L=1 equals a single step") {
        Rng rng(7);
        MpnConfig cfg;
        cfg.d = 4;
        cfg.M = 2;
        auto layer = init_mpn_layer(rng, cfg);
        auto h0 = random_normal(rng, {5, 4}, 0.0, 1.0);
        auto a = mpn_forward(cfg, {layer}, h0);
        auto b = mpn_step(cfg, layer, h0);
        CHECK(a->data == b->data);
    }

    SUBCASE("layer count must match L") {
        Rng rng(8);
        MpnConfig cfg;
        cfg.d = 4;
        cfg.M = 1;
        cfg.L = 2;
        auto h0 = random_normal(rng, {3, 4}, 0.0, 1.0);
        CHECK_THROWS_AS(mpn_forward(cfg, {init_mpn_layer(rng, cfg)}, h0), ConfigError);
    }

    SUBCASE("permutation equivariance through all steps") {
        Rng rng(9);
        MpnConfig cfg;
        cfg.d = 6;
        cfg.M = 3;
        cfg.L = 2;
        std::vector<MpnLayerParams> layers;
        for (std::size_t l = 0; l < cfg.L; ++l) layers.push_back(init_mpn_layer(rng, cfg));
        auto h0 = random_normal(rng, {5, 6}, 0.0, 1.0);
        const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
        auto direct = mpn_forward(cfg, layers, permute_rows(h0, perm));
        auto permuted = permute_rows(mpn_forward(cfg, layers, h0), perm);
        for (std::size_t i = 0; i < direct->size(); ++i) {
            CHECK(std::abs(direct->data[i] - permuted->data[i]) <= 1e-10);
        }
    }

    SUBCASE("gradients match finite differences on a single step") {
        Rng rng(10);
        MpnConfig cfg;
        cfg.d = 4;
        cfg.M = 2;
        auto layer = init_mpn_layer(rng, cfg);
        auto h0 = random_normal(rng, {5, 4}, 0.0, 1.0, true);
        // probe against a fixed random direction; a plain sum-of-squares is
        // nearly invariant upstream of the final normalization
        auto probe = random_normal(rng, {5, 4}, 0.0, 1.0);
        auto f = [&]() { return sum_all(mul(mpn_step(cfg, layer, h0), probe)); };
        std::vector<NamedParam> params = {{"h0", h0},
                                          {"wq0", layer.wq[0]},
                                          {"wk1", layer.wk[1]},
                                          {"wv0", layer.wv[0]},
                                          {"ff1", layer.ff1_w},
                                          {"ff2_b", layer.ff2_b},
                                          {"norm1_gain", layer.norm1_gain},
                                          {"norm2_bias", layer.norm2_bias}};
        auto report = grad_check(f, params, 1e-5, 1e-4);
        CHECK(report.passed);
        CHECK(report.max_rel_err <= 1e-4);
    }
}

TEST_CASE("classify computes affine logits") {
    Rng rng(11);
    auto w = Tensor::zeros({3, 4}, true);
    auto b = Tensor::zeros({3}, true);
    auto h = random_normal(rng, {5, 4}, 0.0, 1.0);
    auto logits = classify(w, b, h);
    CHECK(logits->shape == std::vector<std::size_t>{5, 3});
    for (double v : logits->data) CHECK(v == 0.0);

    SUBCASE("gradient check") {
        auto w2 = random_normal(rng, {3, 4}, 0.0, 0.5, true);
        auto b2 = random_normal(rng, {3}, 0.0, 0.5, true);
        auto f = [&]() {
            auto out = classify(w2, b2, h);
            return sum_all(mul(out, out));
        };
        auto report = grad_check(f, {{"w", w2}, {"b", b2}}, 1e-5, 1e-4);
        CHECK(report.passed);
    }
}

TEST_CASE("whole model differentiates end to end") {
    MpnConfig cfg;
    cfg.d = 8;
    cfg.M = 2;
    cfg.L = 2;
    auto model = init_model(77, 5, {}, cfg, 3);
    Rng rng(12);
    auto x = random_normal(rng, {6, 5}, 0.0, 1.0);
    auto f = [&]() {
        auto h0 = backbone_forward(model.backbone, x);
        auto refined = mpn_forward(model.cfg, model.layers, h0);
        auto logits_m = classify(model.heads.mpn_w, model.heads.mpn_b, refined);
        auto logits_b = classify(model.heads.backbone_w, model.heads.backbone_b, h0);
        return sum_all(add(mul(logits_m, logits_m), mul(logits_b, logits_b)));
    };
    auto report = grad_check(f, all_param_list(model), 1e-5, 1e-4);
    CHECK(report.passed);
    CHECK(report.max_rel_err <= 1e-4);
}

TEST_CASE("initialization and forward are deterministic in the seed") {
    MpnConfig cfg;
    cfg.d = 8;
    cfg.M = 2;
    auto a = init_model(99, 6, {10}, cfg, 4);
    auto b = init_model(99, 6, {10}, cfg, 4);
    auto pa = all_param_list(a);
    auto pb = all_param_list(b);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].first == pb[i].first);
        CHECK(pa[i].second->data == pb[i].second->data);
    }
    Rng rng(13);
    auto x = random_normal(rng, {4, 6}, 0.0, 1.0);
    auto ya = mpn_forward(a.cfg, a.layers, backbone_forward(a.backbone, x));
    auto yb = mpn_forward(b.cfg, b.layers, backbone_forward(b.backbone, x));
    CHECK(ya->data == yb->data);

    auto c = init_model(100, 6, {10}, cfg, 4);
    CHECK(all_param_list(c)[0].second->data != pa[0].second->data);
}
