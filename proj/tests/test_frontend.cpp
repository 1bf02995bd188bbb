#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "mtlsi/signal/frontend.hpp"

using namespace mtlsi;
using namespace mtlsi::signal;

namespace {

audio_segment white_noise(int fs, std::uint32_t seed, float amplitude = 0.3f)
{
    std::mt19937 gen(seed);
    std::uniform_real_distribution<float> dist(-amplitude, amplitude);
    audio_segment seg{std::vector<float>(static_cast<std::size_t>(2 * fs)), fs};
    for (auto& v : seg.samples) {
        v = dist(gen);
    }
    return seg;
}

template <typename Fn>
void expect_error(errc code, Fn&& fn)
{
    try {
        fn();
        ADD_FAILURE() << "expected " << to_string(code);
    } catch (const error& e) {
        EXPECT_EQ(e.code(), code) << e.what();
    }
}

} // namespace

TEST(SegmentAudio, ExactFit)
{
    const std::vector<float> x(44100, 0.25f);
    const auto segs = segment_audio(x, 22050);
    ASSERT_EQ(segs.size(), 1u);
    EXPECT_EQ(segs[0].samples, x);
}

TEST(SegmentAudio, ShortTailIsZeroPadded)
{
    std::vector<float> x(66150);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<float>(i % 97 + 1) / 100.0f;
    }
    const auto segs = segment_audio(x, 22050);
    ASSERT_EQ(segs.size(), 2u);
    EXPECT_TRUE(std::equal(x.begin(), x.begin() + 44100, segs[0].samples.begin()));
    ASSERT_EQ(segs[1].samples.size(), 44100u);
    EXPECT_TRUE(std::equal(x.begin() + 44100, x.end(), segs[1].samples.begin()));
    for (std::size_t i = 22050; i < 44100; ++i) {
        ASSERT_EQ(segs[1].samples[i], 0.0f);
    }
}

TEST(SegmentAudio, SingleSample)
{
    const std::vector<float> x{0.5f};
    const auto segs = segment_audio(x, 22050);
    ASSERT_EQ(segs.size(), 1u);
    ASSERT_EQ(segs[0].samples.size(), 44100u);
    EXPECT_EQ(segs[0].samples[0], 0.5f);
    EXPECT_EQ(std::count(segs[0].samples.begin(), segs[0].samples.end(), 0.0f), 44099);
}

TEST(SegmentAudio, EmptyInputRejected)
{
    expect_error(errc::empty_audio, [] { segment_audio(std::vector<float>{}, 22050); });
}

TEST(SegmentAudio, RoundTripOnRandomLengths)
{
    std::mt19937 gen(7);
    std::uniform_real_distribution<float> amp(0.01f, 1.0f);
    for (int fs : {16000, 22050, 44100}) {
        std::uniform_int_distribution<std::size_t> len(1, static_cast<std::size_t>(7 * fs));
        for (int trial = 0; trial < 40; ++trial) {
            std::vector<float> x(len(gen));
            for (auto& v : x) {
                v = amp(gen); // nonzero so trailing-zero trimming is exact
            }
            const auto segs = segment_audio(x, fs);
            std::vector<float> joined;
            for (const auto& s : segs) {
                ASSERT_EQ(s.samples.size(), static_cast<std::size_t>(2 * fs));
                joined.insert(joined.end(), s.samples.begin(), s.samples.end());
            }
            while (!joined.empty() && joined.back() == 0.0f) {
                joined.pop_back();
            }
            ASSERT_EQ(joined, x);
        }
    }
}

TEST(FrameSignal, FrameGridAt22050)
{
    EXPECT_EQ(window_length(22050), 441u);
    // starts enumerated by hand: 220.5 t rounded half away from zero
    const std::vector<std::pair<std::size_t, std::size_t>> starts{
        {0, 0}, {1, 221}, {2, 441}, {3, 662}, {4, 882}, {198, 43659}, {199, 43880}};
    for (const auto& [t, s] : starts) {
        EXPECT_EQ(frame_start(t, 22050), s) << "frame " << t;
    }
}

TEST(FrameSignal, TwoHundredFramesOf441)
{
    const auto seg = white_noise(22050, 1);
    const matrix frames = frame_signal(seg);
    EXPECT_EQ(frames.rows(), 200);
    EXPECT_EQ(frames.cols(), 441);
}

TEST(FrameSignal, SilenceGivesZeroFrames)
{
    const audio_segment seg{std::vector<float>(44100, 0.0f), 22050};
    const matrix frames = frame_signal(seg);
    ASSERT_EQ(frames.rows(), 200);
    EXPECT_TRUE(frames.isZero(0.0));
}

TEST(FrameSignal, LastFramePartiallyPadded)
{
    const audio_segment seg{std::vector<float>(44100, 1.0f), 22050};
    const matrix frames = frame_signal(seg);
    const auto w = hamming(441);
    // window covers [43880, 44321): samples 43880..44099 are real, the rest padding
    int real = 0;
    for (Eigen::Index i = 0; i < 441; ++i) {
        real += 43880 + i < 44100 ? 1 : 0;
    }
    EXPECT_EQ(real, 220);
    for (Eigen::Index i = 0; i < 441; ++i) {
        const double expected = 43880 + i < 44100 ? w[static_cast<std::size_t>(i)] : 0.0;
        ASSERT_EQ(frames(199, i), expected) << i;
    }
}

TEST(FrameSignal, HammingWindowApplied)
{
    const auto seg = white_noise(22050, 2);
    const matrix frames = frame_signal(seg);
    for (std::size_t t : {0u, 57u, 123u}) {
        const std::size_t start = frame_start(t, 22050);
        for (std::size_t n = 0; n < 441; ++n) {
            const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / 440.0);
            ASSERT_NEAR(frames(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n)),
                        static_cast<double>(seg.samples[start + n]) * w, 1e-15);
        }
    }
}

TEST(FrameSignal, AlwaysTwoHundredFrames)
{
    for (int fs : {16000, 22050, 44100}) {
        const auto seg = white_noise(fs, static_cast<std::uint32_t>(fs));
        const matrix frames = frame_signal(seg);
        EXPECT_EQ(frames.rows(), 200) << fs;
        EXPECT_EQ(static_cast<std::size_t>(frames.cols()), static_cast<std::size_t>(std::llround(0.02 * fs)));
    }
}

TEST(FrameSignal, PreemphasisOptional)
{
    const auto seg = white_noise(16000, 3);
    frame_config cfg;
    cfg.preemphasis = 0.97;
    const matrix plain = frame_signal(seg);
    const matrix emph = frame_signal(seg, cfg);
    const auto w = hamming(320);
    const std::size_t start = frame_start(10, 16000);
    for (std::size_t n = 0; n < 320; ++n) {
        const double x = seg.samples[start + n] - 0.97 * static_cast<double>(seg.samples[start + n - 1]);
        ASSERT_NEAR(emph(10, static_cast<Eigen::Index>(n)), x * w[n], 1e-12);
    }
    EXPECT_FALSE(plain.isApprox(emph));
}

TEST(MelFilterbank, TrianglesAndCoverage)
{
    for (int fs : {16000, 22050, 44100}) {
        const std::size_t nfft = next_pow2(window_length(fs));
        const auto fb = make_mel_filterbank(nfft, fs);
        ASSERT_EQ(fb.n_filters(), 40u);
        for (std::size_t m = 1; m < fb.centers_hz.size(); ++m) {
            EXPECT_GT(fb.centers_hz[m], fb.centers_hz[m - 1]);
        }
        for (Eigen::Index m = 0; m < fb.weights.rows(); ++m) {
            const auto row = fb.weights.row(m);
            EXPECT_GE(row.minCoeff(), 0.0);
            EXPECT_LE(row.maxCoeff(), 1.0);
            // unimodal: nondecreasing then nonincreasing over the nonzero span
            Eigen::Index peak = 0;
            row.maxCoeff(&peak);
            for (Eigen::Index k = 1; k <= peak; ++k) {
                ASSERT_GE(row(k), row(k - 1));
            }
            for (Eigen::Index k = peak + 1; k < row.size(); ++k) {
                ASSERT_LE(row(k), row(k - 1));
            }
            // zero outside the band between neighbouring centers
            const double left = m == 0 ? 0.0 : fb.centers_hz[static_cast<std::size_t>(m - 1)];
            const double right = m + 1 < fb.weights.rows() ? fb.centers_hz[static_cast<std::size_t>(m + 1)] : fs / 2.0;
            for (Eigen::Index k = 0; k < row.size(); ++k) {
                const double f = static_cast<double>(k) * fs / static_cast<double>(nfft);
                if (f <= left || f >= right) {
                    ASSERT_EQ(row(k), 0.0) << "filter " << m << " bin " << k;
                }
            }
            if (m > 0) {
                EXPECT_GT(row.cwiseMin(fb.weights.row(m - 1)).maxCoeff(), 0.0) << "filters overlap";
            }
        }
        const Eigen::RowVectorXd cover = fb.weights.colwise().sum();
        for (std::size_t k = 1; k + 1 < fb.n_bins(); ++k) {
            ASSERT_GT(cover(static_cast<Eigen::Index>(k)), 0.0) << fs << " bin " << k;
        }
    }
}

TEST(Mfcc, SilentFrameIsFloorConstant)
{
    const auto fb = make_mel_filterbank(512, 22050);
    const matrix frames = matrix::Zero(1, 441);
    const matrix c = mfcc(frames, fb);
    ASSERT_EQ(c.cols(), 13);
    EXPECT_NEAR(c(0, 0), std::sqrt(40.0) * std::log(1e-10), 1e-9);
    for (Eigen::Index k = 1; k < 13; ++k) {
        EXPECT_NEAR(c(0, k), 0.0, 1e-9);
    }
}

TEST(Mfcc, MatchesReferenceOn1kHzSine)
{
    std::ifstream in(std::string(MTLSI_SOURCE_DIR) + "/tests/oracles/mfcc_1khz.json");
    ASSERT_TRUE(in.good());
    const auto golden = nlohmann::json::parse(in);
    const int fs = golden.at("sample_rate").get<int>();
    const double f0 = golden.at("frequency_hz").get<double>();

    audio_segment seg{std::vector<float>(static_cast<std::size_t>(2 * fs)), fs};
    for (std::size_t n = 0; n < seg.samples.size(); ++n) {
        seg.samples[n] = static_cast<float>(std::sin(2.0 * std::numbers::pi * f0 * static_cast<double>(n) / fs));
    }
    const matrix frames = frame_signal(seg);
    const matrix c = mfcc(frames, make_mel_filterbank(512, fs));
    for (const auto& [key, coeffs] : golden.at("frames").items()) {
        const int t = std::stoi(key);
        ASSERT_EQ(coeffs.size(), 13u);
        for (std::size_t k = 0; k < 13; ++k) {
            EXPECT_NEAR(c(t, static_cast<Eigen::Index>(k)), coeffs[k].get<double>(), 1e-6)
                << "frame " << t << " c" << k;
        }
    }
}

TEST(Mfcc, Deterministic)
{
    const auto seg = white_noise(22050, 11);
    const auto fb = make_mel_filterbank(512, 22050);
    const matrix a = mfcc(frame_signal(seg), fb);
    const matrix b = mfcc(frame_signal(seg), fb);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(a.allFinite());
}

TEST(Mfcc, FilterbankSizeMismatch)
{
    const auto fb = make_mel_filterbank(1024, 22050);
    expect_error(errc::dimension_mismatch, [&] { mfcc(matrix::Zero(2, 441), fb); });
}

TEST(Mfcc, GainShiftsOnlyC0)
{
    const auto seg = white_noise(22050, 5, 0.1f);
    const auto fb = make_mel_filterbank(512, 22050);
    const matrix base = mfcc(frame_signal(seg), fb);
    for (float gain : {0.25f, 2.0f, 8.0f}) { // powers of two keep float samples exact
        audio_segment scaled = seg;
        for (auto& v : scaled.samples) {
            v *= gain;
        }
        const matrix c = mfcc(frame_signal(scaled), fb);
        const double shift = std::sqrt(40.0) * 2.0 * std::log(static_cast<double>(gain));
        for (Eigen::Index t = 0; t < c.rows(); ++t) {
            ASSERT_NEAR(c(t, 0) - base(t, 0), shift, 1e-6);
            for (Eigen::Index k = 1; k < 13; ++k) {
                ASSERT_NEAR(c(t, k), base(t, k), 1e-6) << "frame " << t << " c" << k;
            }
        }
    }
}

TEST(Znorm, HandExample)
{
    matrix x(3, 1);
    x << 1, 2, 3;
    const matrix z = znorm_utterance(x);
    const double s = 1.0 / std::sqrt(2.0 / 3.0);
    EXPECT_NEAR(z(0, 0), -s, 1e-12);
    EXPECT_NEAR(z(1, 0), 0.0, 1e-12);
    EXPECT_NEAR(z(2, 0), s, 1e-12);
    EXPECT_NEAR(s, 1.2247, 1e-4);
}

TEST(Znorm, ConstantColumnBecomesZero)
{
    matrix x(3, 2);
    x << 5, 1, 5, 2, 5, 4;
    const matrix z = znorm_utterance(x);
    EXPECT_TRUE(z.col(0).isZero(0.0));
    EXPECT_FALSE(z.col(1).isZero());
}

TEST(Znorm, MomentsAndIdempotence)
{
    std::mt19937 gen(3);
    std::normal_distribution<double> dist(4.0, 3.0);
    matrix x(200, 13);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x.data()[i] = dist(gen);
    }
    const matrix z = znorm_utterance(x);
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double mean = z.col(c).mean();
        const double sd = std::sqrt((z.col(c).array() - mean).square().mean());
        EXPECT_NEAR(mean, 0.0, 1e-6);
        EXPECT_NEAR(sd, 1.0, 1e-6);
    }
    EXPECT_TRUE((znorm_utterance(z) - z).cwiseAbs().maxCoeff() < 1e-9);
}

TEST(Znorm, TooShort)
{
    expect_error(errc::too_short, [] { znorm_utterance(matrix::Ones(1, 13)); });
}

TEST(Featurize, ShapeAndDeterminism)
{
    for (int fs : {16000, 22050, 44100}) {
        const auto seg = white_noise(fs, 9);
        const matrix a = featurize(seg);
        EXPECT_EQ(a.rows(), 200);
        EXPECT_EQ(a.cols(), 13);
        EXPECT_EQ(a, featurize(seg));
    }
}
