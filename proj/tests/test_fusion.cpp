#include "emphtts/error.hpp"
#include "emphtts/fusion.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

#include <doctest.h>

#include <cmath>

using namespace emphtts;
using namespace emphtts::testing;

namespace {

Var random(Index r, Index c, unsigned seed, bool grad = false) {
    std::srand(seed);
    return Var(Matrix::Random(r, c), grad);
}

}  // namespace

TEST_CASE("hybrid fusion additive identity and shapes") {
    const Index d = 8;
    nn::ParameterStore store(1);
    HybridFusion text(store, "hyb_t", small_fusion(d), true);
    const auto current = random(3, d, 1);
    const auto zero = ag::zeros(1, d);
    const auto global = text(zero, current, std::nullopt).output;
    CHECK(global.value() == current.value());
    const auto out = text(random(1, d, 2), random(1, d, 3), random(4, d, 4));
    CHECK(out.output.rows() == 1);
    CHECK_THROWS_AS(text(random(1, d + 1, 2), current, std::nullopt), StructuralError);
}

TEST_CASE("constant key/value rows give identical outputs") {
    const Index d = 8;
    nn::ParameterStore store(2);
    HybridFusion audio(store, "hyb_a", small_fusion(d), false);
    Matrix fine(6, d);
    fine.rowwise() = Matrix::Random(1, d).row(0);
    const auto r = audio(random(1, d, 5), random(4, d, 6), ag::constant(fine));
    CHECK(r.output.rows() == 4);
    for (Index i = 1; i < 4; ++i) CHECK(r.output.value().row(i).isApprox(r.output.value().row(0), 1e-12));
    for (const auto& w : r.weights) {
        for (Index i = 0; i < w.rows(); ++i) CHECK(std::abs(w.row(i).sum() - 1.0) < 1e-6);
    }
}

TEST_CASE("addition ablation pools frames") {
    const Index d = 8;
    auto cfg = small_fusion(d);
    cfg.hybrid = false;
    nn::ParameterStore store(3);
    HybridFusion audio(store, "hyb_a", cfg, false);
    const auto cur = random(2, d, 7);
    const auto fine = random(5, d, 8);
    const Matrix expected = cur.value().rowwise() + fine.value().colwise().mean();
    CHECK(audio(std::nullopt, cur, fine).output.value().isApprox(expected));
    HybridFusion text(store, "hyb_t", cfg, true);
    CHECK_THROWS_AS(text(std::nullopt, cur, fine), StructuralError);
}

TEST_CASE("cross-modality fusion with zero audio adds a constant") {
    const Index d = 8;
    nn::ParameterStore store(4);
    CrossModalityFusion cross(store, "cross", small_fusion(d));
    const auto text = random(3, d, 9);
    const auto r = cross(text, ag::zeros(3, d));
    const Matrix delta = r.output.value() - text.value();
    for (Index i = 1; i < 3; ++i) CHECK(delta.row(i).isApprox(delta.row(0), 1e-12));
    CHECK_THROWS_AS(cross(text, ag::zeros(2, d)), StructuralError);
    CHECK(FusionConfig::full().heads == 2);
    CHECK(FusionConfig::full().d_qkv == 256);
}

TEST_CASE("intensity predictor") {
    nn::ParameterStore store(5);
    IntensityPredictor pred(store, "pred", 8, 64);
    const auto x = random(4, 8, 10);
    const auto p = pred(x);
    CHECK(p.hidden.rows() == 4);
    CHECK(p.hidden.cols() == 64);
    CHECK(p.intensities.value().minCoeff() > 0.0);
    CHECK(p.intensities.value().maxCoeff() < 1.0);

    const Matrix before = p.intensities.value();
    pred.output_layer().bias().node()->value(0, 0) += 0.5;
    CHECK((pred(x).intensities.value().array() > before.array()).all());

    for (const auto& [_, v] : store.all()) v.node()->value.setZero();
    CHECK((pred(x).intensities.value().array() == 0.5).all());
}

TEST_CASE("emphasis loss values") {
    const auto half = ag::constant(Matrix::Constant(2, 1, 0.5));
    CHECK(emphasis_loss(half, std::vector<double>{0.5, 0.5}).item() == doctest::Approx(std::log(2.0)));
    CHECK(emphasis_loss(half, std::vector<double>{1.0, 0.0}).item() == doctest::Approx(std::log(2.0)));
    Matrix near(2, 1);
    near << 1 - 1e-9, 1e-9;
    CHECK(emphasis_loss(ag::constant(near), std::vector<double>{1.0, 0.0}).item() < 1e-6);
    CHECK_THROWS_AS(emphasis_loss(half, std::vector<double>{1.0}), StructuralError);
    CHECK(std::isfinite(emphasis_loss(ag::constant(Matrix::Zero(1, 1)), std::vector<double>{1.0}).item()));
}

TEST_CASE("emphasis loss is minimised at p = t") {
    for (double t : {0.0, 0.25, 0.5, 1.0}) {
        double best_p = -1, best = 1e300;
        for (int i = 1; i < 1000; ++i) {
            const double p = i / 1000.0;
            const double l = emphasis_loss(ag::constant(Matrix::Constant(1, 1, p)), std::vector<double>{t}).item();
            if (l < best) {
                best = l;
                best_p = p;
            }
        }
        CHECK(std::abs(best_p - std::clamp(t, 0.001, 0.999)) < 1e-9);
    }
}

TEST_CASE("fusion and predictor gradients") {
    const Index d = 8;
    nn::ParameterStore store(6);
    const auto cfg = small_fusion(d);
    HybridFusion text(store, "hyb_t", cfg, true);
    HybridFusion audio(store, "hyb_a", cfg, false);
    CrossModalityFusion cross(store, "cross", cfg);
    IntensityPredictor pred(store, "pred", d, d);
    const auto coarse_t = random(1, d, 11, true), coarse_a = random(1, d, 12, true);
    const auto current = random(3, d, 13, true), fine_t = random(3, d, 14, true), fine_a = random(7, d, 15, true);
    std::vector<Var> inputs = {coarse_t, coarse_a, current, fine_t, fine_a};
    for (const auto& [_, p] : store.all()) inputs.push_back(p);
    const std::vector<double> target = {0.0, 5.0 / 6.0, 1.0 / 6.0};
    const auto r = grad_check(inputs, [&] {
        const auto ft = text(coarse_t, current, fine_t).output;
        const auto fa = audio(coarse_a, current, fine_a).output;
        const auto out = pred(cross(ft, fa).output);
        return ag::add(emphasis_loss(out.intensities, target), probe_loss(out.hidden));
    });
    CHECK(r.max_relative_error < 1e-3);
}
