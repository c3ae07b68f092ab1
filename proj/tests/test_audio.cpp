// Audio front end: the frozen filterbank definition is re-derived here with
// a naive O(n^2) DFT so the FFT path has an independent oracle, and the
// token assembly / latent-frame pooling rules are pinned down exactly.
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "omni/audio_features.hpp"

using namespace omni;

namespace {

Waveform random_wave(int samples, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.9, 0.9);
    Waveform w;
    w.samples.resize(samples);
    for (double& s : w.samples) s = quantize_sample(dist(rng));
    return w;
}

double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_inv(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Direct re-derivation of one feature row: Hann window, naive DFT, triangular
// mel filters, log floor. Mirrors the documented definition, not the code.
std::vector<double> naive_feature_row(const Waveform& wave, int t) {
    const int lengths[3] = {160, 320, 640};
    std::vector<double> row;
    for (int s = 0; s < 3; ++s) {
        const int L = lengths[s];
        size_t N = 1;
        while (N < size_t(L)) N <<= 1;
        const long center = long((t + 0.5) * kSamplesPerFrame);
        const long start = center - L / 2;
        std::vector<double> x(N, 0.0);
        for (int i = 0; i < L; ++i) {
            long idx = start + i;
            double v = (idx >= 0 && idx < long(wave.samples.size())) ? wave.samples[idx] : 0.0;
            x[i] = v * (0.5 * (1.0 - std::cos(2.0 * M_PI * i / (L - 1))));
        }
        // O(n^2) DFT, power spectrum on bins 0..N/2.
        std::vector<double> power(N / 2 + 1);
        for (size_t f = 0; f <= N / 2; ++f) {
            double re = 0.0, im = 0.0;
            for (size_t n = 0; n < N; ++n) {
                double ang = -2.0 * M_PI * double(f) * double(n) / double(N);
                re += x[n] * std::cos(ang);
                im += x[n] * std::sin(ang);
            }
            power[f] = re * re + im * im;
        }
        std::vector<double> edges(kFilterbankBands + 2);
        for (int i = 0; i < kFilterbankBands + 2; ++i)
            edges[i] = mel_inv(mel(8000.0) * i / (kFilterbankBands + 1));
        for (int b = 0; b < kFilterbankBands; ++b) {
            double energy = 0.0;
            for (size_t f = 0; f <= N / 2; ++f) {
                double hz = double(f) * kAudioSampleRate / double(N);
                double w = 0.0;
                if (hz > edges[b] && hz < edges[b + 1])
                    w = (hz - edges[b]) / (edges[b + 1] - edges[b]);
                else if (hz >= edges[b + 1] && hz < edges[b + 2])
                    w = (edges[b + 2] - hz) / (edges[b + 2] - edges[b + 1]);
                energy += w * power[f];
            }
            row.push_back(std::log(kLogFloorEps + energy));
        }
    }
    return row;
}

AudioProjection identity_like_projection(int F, int D, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 0.3);
    AudioProjection p;
    p.F = F;
    p.D = D;
    p.weight.resize(size_t(D) * F);
    p.bias.resize(D);
    for (double& x : p.weight) x = dist(rng);
    for (double& x : p.bias) x = dist(rng);
    return p;
}

}  // namespace

TEST_CASE("silence maps every row to the log floor vector") {
    Waveform w;
    w.samples.assign(16000, 0.0);
    auto rows = extract_audio_features(w, 25);
    REQUIRE(rows.size() == 25);
    const double floor_val = std::log(kLogFloorEps);
    for (const auto& row : rows) {
        REQUIRE(int(row.size()) == kAudioFeatureDim);
        for (double v : row) CHECK(v == floor_val);
    }
}

TEST_CASE("one second at 25 fps yields exactly 25 rows") {
    auto rows = extract_audio_features(random_wave(16000, 1), 25);
    CHECK(rows.size() == 25);
}

TEST_CASE("feature rows match the naive DFT oracle") {
    Waveform w = random_wave(16000, 2);
    auto rows = extract_audio_features(w, 25);
    for (int t : {0, 7, 24}) {  // edge (zero-padded window), middle, end
        auto oracle = naive_feature_row(w, t);
        REQUIRE(oracle.size() == rows[t].size());
        for (size_t i = 0; i < oracle.size(); ++i) {
            double denom = std::max({std::fabs(oracle[i]), std::fabs(rows[t][i]), 1e-12});
            CHECK(std::fabs(oracle[i] - rows[t][i]) / denom < 1e-6);
        }
    }
}

TEST_CASE("feature extraction input contracts") {
    Waveform empty;
    CHECK_THROWS_AS(extract_audio_features(empty, 5), OmniError);
    Waveform wrong_rate = random_wave(8000, 3);
    wrong_rate.sample_rate = 8000;
    CHECK_THROWS_AS(extract_audio_features(wrong_rate, 5), OmniError);
    // Identical waveform -> identical rows, bit for bit.
    Waveform w = random_wave(6400, 4);
    CHECK(extract_audio_features(w, 10) == extract_audio_features(w, 10));
}

TEST_CASE("token assembly follows the clamped-window rule") {
    const int T = 6, F = kAudioFeatureDim;
    std::vector<std::vector<double>> feats(T, std::vector<double>(F));
    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist;
    for (auto& row : feats)
        for (double& v : row) v = dist(rng);
    AudioProjection proj = identity_like_projection(F, 12, 6);

    auto project = [&](const std::vector<double>& row) {
        std::vector<double> out(proj.D);
        for (int d = 0; d < proj.D; ++d) {
            double acc = proj.bias[d];
            for (int f = 0; f < F; ++f) acc += proj.weight[size_t(d) * F + f] * row[f];
            out[d] = acc;
        }
        return out;
    };

    SUBCASE("w=0 is the plain per-frame projection") {
        AudioTokens a = assemble_audio_tokens(feats, 0, proj);
        CHECK(a.k == 1);
        for (int t = 0; t < T; ++t) {
            auto want = project(feats[t]);
            for (int d = 0; d < proj.D; ++d) CHECK(a.at(t, 0, d) == want[d]);
        }
    }
    SUBCASE("w=2 replicates edge frames") {
        AudioTokens a = assemble_audio_tokens(feats, 2, proj);
        CHECK(a.k == 5);
        auto first = project(feats[0]);
        for (int j : {0, 1, 2})  // slots t-2, t-1, t at t=0 all clamp to frame 0
            for (int d = 0; d < proj.D; ++d) CHECK(a.at(0, j, d) == first[d]);
        auto last = project(feats[T - 1]);
        for (int j : {2, 3, 4})
            for (int d = 0; d < proj.D; ++d) CHECK(a.at(T - 1, j, d) == last[d]);
        // Interior slot (t=3, j=0) reads frame 1.
        auto f1 = project(feats[1]);
        for (int d = 0; d < proj.D; ++d) CHECK(a.at(3, 0, d) == f1[d]);
    }
    SUBCASE("constant features collapse every token to one vector") {
        std::vector<std::vector<double>> flat(T, feats[0]);
        AudioTokens a = assemble_audio_tokens(flat, 2, proj);
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < a.k; ++j)
                for (int d = 0; d < a.D; ++d) CHECK(a.at(t, j, d) == a.at(0, 0, d));
    }
}

TEST_CASE("latent-frame pooling partitions the token rows") {
    AudioProjection proj = identity_like_projection(kAudioFeatureDim, 8, 7);
    auto feats = extract_audio_features(random_wave(16000, 8), 25);
    AudioTokens a = assemble_audio_tokens(feats, 2, proj);

    CodecConfig cfg = CodecConfig::with_identity_norm(2, 4);
    AudioFramePooling p = pool_audio_per_latent_frame(a, cfg);
    REQUIRE(int(p.frame_range.size()) == 7);
    CHECK(p.token_rows(0) == 1 * a.k);
    for (int k = 1; k < 7; ++k) CHECK(p.token_rows(k) == 4 * a.k);

    // Conservation + disjoint cover of [0, T).
    int total = 0, next = 0;
    for (size_t k = 0; k < p.frame_range.size(); ++k) {
        auto [first, last] = p.frame_range[k];
        CHECK(first == next);
        next = last;
        total += p.token_rows(int(k));
    }
    CHECK(next == a.T);
    CHECK(total == a.T * a.k);

    CodecConfig ident = CodecConfig::with_identity_norm(2, 1);
    AudioFramePooling q = pool_audio_per_latent_frame(a, ident);
    REQUIRE(int(q.frame_range.size()) == a.T);
    for (int k = 0; k < a.T; ++k) {
        CHECK(q.frame_range[k].first == k);
        CHECK(q.frame_range[k].second == k + 1);
    }
}

TEST_CASE("envelope is nonnegative, smooth-weighted and scale-covariant") {
    Waveform w = random_wave(16000, 9);
    auto env = frame_envelope(w, 25);
    REQUIRE(env.size() == 25);
    for (double e : env) CHECK(e >= 0.0);
    Waveform half = w;
    for (double& s : half.samples) s *= 0.5;
    auto env_half = frame_envelope(half, 25);
    for (int t = 0; t < 25; ++t) CHECK(env_half[t] == doctest::Approx(0.5 * env[t]).epsilon(1e-12));
}
