#include "emphtts/error.hpp"
#include "emphtts/synthesizer.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace emphtts;

namespace {

SynthConfig tiny() {
    SynthConfig c;
    c.d_model = 8;
    c.ffn = 16;
    c.n_mels = 6;
    c.d_emp = 4;
    c.d_speaker = 4;
    c.pitch_bins = 8;
    c.energy_bins = 8;
    return c;
}

struct Rig {
    nn::ParameterStore store{3};
    Synthesizer synth{store, "synth", tiny(), PhonemeInventory({"a", "b", "c", "d"})};
};

Waveform tone(double hz, std::size_t n) {
    Waveform w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = 0.2 * std::sin(2 * M_PI * hz * static_cast<double>(i) / 22050.0);
    return w;
}

}  // namespace

TEST_CASE("phoneme encoder") {
    Rig r;
    CHECK(r.synth.encode({"a"}).rows() == 1);
    CHECK(r.synth.encode({"a", "b"}).value() == r.synth.encode({"a", "b"}).value());
    CHECK(r.synth.encode({"a", "b"}).value() != r.synth.encode({"b", "a"}).value());
    try {
        r.synth.encode({"a", "zz"});
        FAIL("expected unknown phoneme");
    } catch (const NotFoundError& e) {
        CHECK(std::string(e.what()).find("zz") != std::string::npos);
    }
}

TEST_CASE("emphasis regulator offsets") {
    Rig r;
    const auto p = r.synth.encode({"a", "b", "c", "d"});
    const std::vector<PhonemeSpan> spans = {{0, 1}, {1, 4}};
    const auto zero = ag::zeros(2, 4);
    // Zero emphasis and zero speaker vectors leave P unchanged (biases start at 0).
    CHECK(r.synth.regulate(p, zero, spans, ag::zeros(1, 4)).value() == p.value());

    Matrix h(2, 4);
    h << 1, 0, 0, 2, 0, 3, 1, 0;
    const Matrix delta = r.synth.regulate(p, ag::constant(h), spans, ag::zeros(1, 4)).value() - p.value();
    CHECK(delta.row(1).isApprox(delta.row(2)));
    CHECK(delta.row(2).isApprox(delta.row(3)));
    CHECK(!delta.row(0).isApprox(delta.row(1)));
    const Matrix single = r.synth.regulate(p, ag::constant(h.topRows(1)), {{0, 4}}, ag::zeros(1, 4)).value() - p.value();
    for (Index i = 1; i < 4; ++i) CHECK(single.row(i).isApprox(single.row(0)));
    CHECK_THROWS_AS(r.synth.regulate(p, zero, {{0, 2}, {3, 4}}, ag::zeros(1, 4)), StructuralError);
    CHECK_THROWS_AS(r.synth.regulate(p, ag::zeros(3, 4), spans, ag::zeros(1, 4)), StructuralError);
}

TEST_CASE("regulator locality") {
    Rig r;
    const auto p = r.synth.encode({"a", "b", "c", "d", "a"});
    const std::vector<PhonemeSpan> spans = {{0, 2}, {2, 3}, {3, 5}};
    const auto speaker = ag::constant(Matrix::Random(1, 4));
    Matrix h = Matrix::Random(3, 4);
    const Matrix a = r.synth.regulate(p, ag::constant(h), spans, speaker).value();
    h.row(1).array() += 1.0;
    const Matrix b = r.synth.regulate(p, ag::constant(h), spans, speaker).value();
    CHECK(a.row(0) == b.row(0));
    CHECK(a.row(1) == b.row(1));
    CHECK(a.row(2) != b.row(2));
    CHECK(a.row(3) == b.row(3));
    CHECK(a.row(4) == b.row(4));
}

TEST_CASE("length regulator") {
    const auto x = ag::constant(Matrix::Random(2, 3));
    const auto y = length_regulate(x, {2, 3});
    CHECK(y.rows() == 5);
    CHECK(y.value().row(0) == x.value().row(0));
    CHECK(y.value().row(1) == x.value().row(0));
    CHECK(y.value().row(2) == x.value().row(1));
    std::mt19937 rng(1);
    for (int t = 0; t < 200; ++t) {
        const Index n = 1 + static_cast<Index>(rng() % 10);
        std::vector<int> d(static_cast<std::size_t>(n));
        for (auto& v : d) v = 1 + static_cast<int>(rng() % 7);
        CHECK(length_regulate(ag::constant(Matrix::Zero(n, 2)), d).rows() == std::accumulate(d.begin(), d.end(), 0));
    }
    CHECK_THROWS_AS(length_regulate(x, {1}), StructuralError);
}

TEST_CASE("duration rounding and quantization") {
    Matrix log_d(3, 1);
    log_d << 0.0, std::log(2.6), -5.0;
    CHECK(durations_from_log(log_d) == std::vector<int>{1, 3, 1});
    CHECK(quantize(-10, 8) == 0);
    CHECK(quantize(10, 8) == 7);
    CHECK(quantize(0.0, 8) == 4);
    CHECK(cumulative_frames({2, 3}) == std::vector<int>{0, 2, 5});
}

TEST_CASE("zero-weight predictors give unit durations") {
    Rig r;
    for (const auto& [_, p] : r.store.all()) p.node()->value.setZero();
    const auto out = r.synth({"a", "b", "c"}, ag::zeros(1, 4), {{0, 3}}, ag::zeros(1, 4), nullptr);
    CHECK(out.durations == std::vector<int>{1, 1, 1});
    CHECK(out.mel.rows() == 3);
    CHECK(out.mel.cols() == 6);
}

TEST_CASE("teacher forcing and tts loss") {
    Rig r;
    NormalizedTargets t;
    t.durations = {2, 1, 3};
    t.log_duration = Eigen::VectorXd::Zero(3);
    t.pitch = Eigen::VectorXd::Zero(6);
    t.energy = Eigen::VectorXd::Zero(6);
    t.mel = Matrix::Zero(6, 6);
    const auto out = r.synth({"a", "b", "c"}, ag::constant(Matrix::Random(1, 4)), {{0, 3}}, ag::zeros(1, 4), &t);
    CHECK(out.mel.rows() == 6);
    CHECK(out.mel.value().allFinite());

    SynthOutput fake;
    fake.mel = ag::constant(Matrix::Constant(6, 6, 1.0));
    fake.log_duration = ag::constant(t.log_duration);
    fake.pitch = ag::constant(t.pitch);
    fake.energy = ag::constant(t.energy);
    const auto l = tts_loss(fake, t);
    CHECK(l.mel.item() == doctest::Approx(1.0));
    CHECK(l.duration.item() == 0.0);
    CHECK(l.total.item() == doctest::Approx(1.0));
    fake.mel = ag::constant(t.mel);
    CHECK(tts_loss(fake, t).total.item() == 0.0);
    t.mel = Matrix::Zero(5, 6);
    CHECK_THROWS_AS(tts_loss(fake, t), StructuralError);
}

TEST_CASE("total loss weighting") {
    TtsLoss tts;
    tts.total = ag::constant(Matrix::Constant(1, 1, 2.0));
    const auto emp = ag::constant(Matrix::Constant(1, 1, std::log(2.0)));
    CHECK(total_loss(tts, emp, 0.0).item() == 2.0);
    tts.total = ag::constant(Matrix::Zero(1, 1));
    CHECK(total_loss(tts, emp, 1.0).item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("target extraction") {
    audio::FrameConfig cfg;
    const auto wave = tone(220, 22050);
    const auto t = extract_targets(wave, std::vector<int>(49, 2), cfg);
    CHECK(t.frames() == 98);
    CHECK(t.pitch.size() == t.energy.size());
    t.validate();
    std::vector<double> voiced;
    for (double f : t.pitch) if (f > 0) voiced.push_back(f);
    std::sort(voiced.begin(), voiced.end());
    CHECK(voiced[voiced.size() / 2] > 215);
    CHECK(voiced[voiced.size() / 2] < 225);
    // 97 frames of durations absorb one frame of slack on the last phoneme.
    std::vector<int> short_d(48, 2);
    short_d.push_back(1);
    CHECK(extract_targets(wave, short_d, cfg).durations.back() == 2);
    CHECK_THROWS_AS(extract_targets(wave, std::vector<int>(40, 2), cfg), StructuralError);

    const auto silent = extract_targets(Waveform(22050, 0.0), std::vector<int>(49, 2), cfg);
    for (double f : silent.pitch) CHECK(f == 0.0);
}

TEST_CASE("prosody normalization") {
    CHECK(interpolate_unvoiced({0, 100, 0, 200, 0}) == std::vector<double>{100, 100, 150, 200, 200});
    AcousticTargets a;
    a.durations = {1, 1};
    a.pitch = {100, 200};
    a.energy = {1, 3};
    a.mel = Matrix::Zero(2, 3);
    const auto stats = ProsodyStats::fit({a});
    CHECK(stats.pitch_mean == 150);
    CHECK(stats.pitch_std == 50);
    const auto n = stats.normalize(a);
    CHECK(n.pitch(0) == -1);
    CHECK(n.energy(1) == 1);
    CHECK(stats.pitch_hz(1.0) == 200);
}

TEST_CASE("waveform reconstruction of silence") {
    audio::FrameConfig cfg;
    const Matrix mel = Matrix::Constant(10, 80, std::log(audio::kMelFloor));
    const auto w = reconstruct_waveform(mel, cfg, 4);
    CHECK(audio::rms(w) < 1e-3);
    CHECK(w.size() == static_cast<std::size_t>(9 * cfg.shift() + cfg.window()));
}
