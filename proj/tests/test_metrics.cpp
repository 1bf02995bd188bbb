#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mtlsi/corpus/synth.hpp"
#include "mtlsi/metrics/evaluate.hpp"

using namespace mtlsi;
using namespace mtlsi::metrics;

namespace {

// Two-pass textbook Pearson, written independently of the library.
double naive_pearson(const std::vector<double>& x, const std::vector<double>& y)
{
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<long double>(x.size());
    my /= static_cast<long double>(y.size());
    long double num = 0, dx2 = 0, dy2 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        dx2 += (x[i] - mx) * (x[i] - mx);
        dy2 += (y[i] - my) * (y[i] - my);
    }
    return static_cast<double>(num / std::sqrt(dx2 * dy2));
}

std::vector<double> randn(std::mt19937_64& gen, std::size_t n)
{
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = d(gen);
    }
    return v;
}

matrix random_matrix(std::mt19937_64& gen, Eigen::Index r, Eigen::Index c)
{
    const auto v = randn(gen, static_cast<std::size_t>(r * c));
    matrix m(r, c);
    std::copy(v.begin(), v.end(), m.data());
    return m;
}

} // namespace

TEST(Ppmc, HandExample)
{
    const std::vector<double> x{1, 2, 3, 4}, y{1, 2, 3, 5};
    EXPECT_NEAR(ppmc(x, y), 0.98270, 1e-5);
    EXPECT_NEAR(ppmc(x, y), 6.5 / std::sqrt(5.0 * 8.75), 1e-15);
}

TEST(Ppmc, PerfectAndInverse)
{
    std::mt19937_64 gen(1);
    auto x = randn(gen, 50);
    std::vector<double> neg(x.size());
    std::transform(x.begin(), x.end(), neg.begin(), [](double v) { return -v; });
    EXPECT_NEAR(ppmc(x, x), 1.0, 1e-15);
    EXPECT_NEAR(ppmc(x, neg), -1.0, 1e-15);
}

TEST(Ppmc, MatchesNaiveReference)
{
    std::mt19937_64 gen(7);
    std::uniform_int_distribution<std::size_t> len(2, 400);
    std::uniform_real_distribution<double> mix(-1.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = len(gen);
        const auto x = randn(gen, n);
        auto y = randn(gen, n);
        const double m = mix(gen);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] += 3.0 * m * x[i];
        }
        ASSERT_NEAR(ppmc(x, y), naive_pearson(x, y), 1e-12) << "trial " << trial;
    }
}

TEST(Ppmc, SymmetricAndAffineInvariant)
{
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto x = randn(gen, 64);
        const auto y = randn(gen, 64);
        EXPECT_NEAR(ppmc(x, y), ppmc(y, x), 1e-12);
        std::vector<double> ax(x.size()), nx(x.size());
        std::transform(x.begin(), x.end(), ax.begin(), [](double v) { return 2.5 * v - 7.0; });
        std::transform(x.begin(), x.end(), nx.begin(), [](double v) { return -0.3 * v + 1.0; });
        EXPECT_NEAR(ppmc(ax, y), ppmc(x, y), 1e-9);
        EXPECT_NEAR(ppmc(nx, y), -ppmc(x, y), 1e-9);
    }
}

TEST(Ppmc, Errors)
{
    const std::vector<double> c{2, 2, 2}, d{5, 5, 5}, v{1, 2, 4};
    try {
        (void)ppmc(c, d);
        FAIL();
    } catch (const error& e) {
        EXPECT_EQ(e.code(), errc::undefined_correlation);
    }
    EXPECT_EQ(ppmc(c, v), 0.0);
    EXPECT_THROW((void)ppmc(std::vector<double>{1, 2}, v), error);
    EXPECT_THROW((void)ppmc(std::vector<double>{1}, std::vector<double>{2}), error);
}

TEST(ScoreTvs, PerfectPredictor)
{
    std::mt19937_64 gen(4);
    std::vector<matrix> truth{random_matrix(gen, 200, 9), random_matrix(gen, 200, 9)};
    std::vector<std::vector<std::int32_t>> labels(2, std::vector<std::int32_t>(200, 3));
    const auto s = score_tvs(truth, truth, labels);
    ASSERT_TRUE(s.average);
    EXPECT_NEAR(*s.average, 1.0, 1e-12);
    for (const auto& v : s.per_tv) {
        EXPECT_NEAR(*v, 1.0, 1e-12);
    }
    EXPECT_TRUE(s.warnings.empty());
}

TEST(ScoreTvs, FourMatchingFiveInverted)
{
    std::mt19937_64 gen(5);
    std::vector<matrix> truth{random_matrix(gen, 200, 9), random_matrix(gen, 200, 9), random_matrix(gen, 200, 9)};
    std::vector<matrix> pred = truth;
    for (auto& p : pred) {
        p.rightCols(5) *= -1.0;
    }
    std::vector<std::vector<std::int32_t>> labels(3, std::vector<std::int32_t>(200, 1));
    for (auto mode : {pooling::concatenated, pooling::per_utterance}) {
        const auto s = score_tvs(pred, truth, labels, mode);
        EXPECT_NEAR(*s.average, -1.0 / 9.0, 1e-12);
        EXPECT_NEAR(*s.average, -0.111, 1e-3);
    }
}

TEST(ScoreTvs, PaddingFramesAreExcluded)
{
    std::mt19937_64 gen(6);
    std::vector<matrix> truth{random_matrix(gen, 200, 9)};
    std::vector<matrix> pred = truth;
    std::vector<std::vector<std::int32_t>> labels(1, std::vector<std::int32_t>(200, 2));
    for (Eigen::Index t = 150; t < 200; ++t) {
        pred[0].row(t).setConstant(1e6); // garbage only where the label is padding
        labels[0][static_cast<std::size_t>(t)] = k_pad_label;
    }
    EXPECT_NEAR(*score_tvs(pred, truth, labels).average, 1.0, 1e-12);
}

TEST(ScoreTvs, ConstantTruthExcludedWithWarning)
{
    std::mt19937_64 gen(8);
    std::vector<matrix> truth{random_matrix(gen, 100, 9)};
    truth[0].col(2).setConstant(0.25);
    std::vector<matrix> pred{random_matrix(gen, 100, 9)};
    std::vector<std::vector<std::int32_t>> labels(1, std::vector<std::int32_t>(100, 0));
    const auto s = score_tvs(pred, truth, labels);
    EXPECT_FALSE(s.per_tv[2].has_value());
    ASSERT_EQ(s.warnings.size(), 1u);
    EXPECT_NE(s.warnings[0].find("2"), std::string::npos);
    double acc = 0.0;
    for (std::size_t i = 0; i < 9; ++i) {
        if (i != 2) {
            acc += *s.per_tv[i];
        }
    }
    EXPECT_NEAR(*s.average, acc / 8.0, 1e-12);
}

TEST(ScoreTvs, PooledDiffersFromPerUtterance)
{
    // Each utterance is perfectly correlated but offsets differ: per-utterance
    // scores 1, pooling sees the offsets.
    std::vector<matrix> truth, pred;
    for (int u = 0; u < 2; ++u) {
        matrix t(4, 1);
        t << 1, 2, 3, 4;
        truth.push_back(t);
        pred.push_back(t.array() + (u == 0 ? 0.0 : -10.0));
    }
    std::vector<std::vector<std::int32_t>> labels(2, std::vector<std::int32_t>(4, 0));
    EXPECT_NEAR(*score_tvs(pred, truth, labels, pooling::per_utterance).average, 1.0, 1e-12);
    EXPECT_LT(*score_tvs(pred, truth, labels, pooling::concatenated).average, 0.5);
}

TEST(Accuracy, PerfectAndChance)
{
    std::mt19937_64 gen(9);
    std::uniform_int_distribution<std::int32_t> cls(0, 40);
    std::vector<std::vector<std::int32_t>> labels(50, std::vector<std::int32_t>(200));
    std::vector<matrix> perfect, random;
    for (auto& l : labels) {
        matrix m = matrix::Zero(200, 41);
        for (std::size_t t = 0; t < 200; ++t) {
            l[t] = cls(gen);
            m(static_cast<Eigen::Index>(t), l[t]) = 1.0;
        }
        perfect.push_back(m);
        random.push_back(random_matrix(gen, 200, 41));
    }
    EXPECT_EQ(*phoneme_accuracy(perfect, labels, true), 1.0);
    const double chance = *phoneme_accuracy(random, labels, true);
    EXPECT_NEAR(chance, 1.0 / 41.0, 0.01);
}

TEST(Accuracy, PaddingHandling)
{
    std::vector<std::vector<std::int32_t>> pads(2, std::vector<std::int32_t>(10, k_pad_label));
    std::vector<matrix> logits(2, matrix::Zero(10, 41));
    EXPECT_FALSE(phoneme_accuracy(logits, pads, false).has_value());
    EXPECT_EQ(*phoneme_accuracy(logits, pads, true), 0.0); // argmax of ties is class 0

    std::mt19937_64 gen(10);
    std::uniform_int_distribution<std::int32_t> cls(0, 39);
    std::vector<std::vector<std::int32_t>> labels(3, std::vector<std::int32_t>(30));
    std::vector<matrix> lg;
    for (auto& l : labels) {
        for (auto& v : l) {
            v = cls(gen);
        }
        lg.push_back(random_matrix(gen, 30, 41));
    }
    EXPECT_EQ(phoneme_accuracy(lg, labels, true), phoneme_accuracy(lg, labels, false));

    // half padding, predicted as padding: included counts them as hits
    std::vector<std::vector<std::int32_t>> half(1, std::vector<std::int32_t>(4, 0));
    half[0][2] = half[0][3] = k_pad_label;
    matrix h = matrix::Zero(4, 41);
    h(0, 0) = h(1, 5) = h(2, k_pad_label) = h(3, k_pad_label) = 1.0;
    EXPECT_DOUBLE_EQ(*phoneme_accuracy(std::vector<matrix>{h}, half, false), 0.5);
    EXPECT_DOUBLE_EQ(*phoneme_accuracy(std::vector<matrix>{h}, half, true), 0.75);
}

TEST(Evaluate, ReportInvariants)
{
    corpus::synth_spec spec;
    spec.n_speakers = 2;
    spec.utterances_per_speaker = 3;
    corpus::corpus c;
    c.sample_rate = spec.sample_rate;
    c.utterances = corpus::generate_synthetic(spec);
    const auto data = train::make_dataset(c, train::featurize_corpus(c));
    const auto params = nn::model_params::initialized(nn::model_config::desk(), 1);

    const auto r = evaluate(params, data);
    ASSERT_EQ(r.per_tv_ppmc.size(), 9u);
    double acc = 0.0;
    for (const auto& v : r.per_tv_ppmc) {
        ASSERT_TRUE(v);
        EXPECT_GE(*v, -1.0);
        EXPECT_LE(*v, 1.0);
        acc += *v;
    }
    EXPECT_NEAR(*r.average_ppmc, acc / 9.0, 1e-9);
    EXPECT_GE(*r.phoneme_accuracy_excl_pad, 0.0);
    EXPECT_LE(*r.phoneme_accuracy_incl_pad, 1.0);
    std::size_t speech = 0;
    for (const auto& s : data.samples) {
        speech += static_cast<std::size_t>(std::count_if(s.labels.begin(), s.labels.end(),
                                                         [](std::int32_t l) { return l != k_pad_label; }));
    }
    EXPECT_EQ(r.n_test_frames, speech);
    EXPECT_EQ(r.param_count, nn::count_params(params));

    // batch size does not change the scores
    const auto r1 = evaluate(params, data, {pooling::concatenated, 1});
    for (std::size_t i = 0; i < 9; ++i) {
        EXPECT_NEAR(*r1.per_tv_ppmc[i], *r.per_tv_ppmc[i], 1e-12);
    }

    const auto j = to_json(r);
    EXPECT_TRUE(j.at("per_tv_ppmc").contains("TBCD"));
    EXPECT_EQ(j.at("n_test_frames").get<std::size_t>(), speech);

    const auto single = nn::model_params::initialized(nn::model_config::desk(nn::task_mode::single), 1);
    const auto rs = evaluate(single, data);
    EXPECT_FALSE(rs.phoneme_accuracy_excl_pad);
    EXPECT_TRUE(to_json(rs).at("phoneme_accuracy_excl_pad").is_null());
    EXPECT_THROW(evaluate(params, train::dataset{}), error);
}

TEST(Tables, ColumnOrderAndFormatting)
{
    eval_report r;
    r.model = "multi";
    r.per_tv_ppmc.assign(9, 0.5);
    r.per_tv_ppmc[8] = std::nullopt;
    r.average_ppmc = 0.5;
    r.phoneme_accuracy_excl_pad = 0.4288;
    r.param_count = 1234;
    const auto text = tv_table_text({r});
    const auto header = text.substr(0, text.find('\n'));
    std::size_t last = 0;
    for (auto name : k_tv_names) {
        const auto pos = header.find(std::string(name), last);
        ASSERT_NE(pos, std::string::npos) << name;
        last = pos;
    }
    EXPECT_NE(text.find("42.88"), std::string::npos);
    EXPECT_NE(text.find("n/a"), std::string::npos);
    EXPECT_EQ(text.find("Train(s)"), std::string::npos);

    r.train_seconds = 12.0;
    const auto csv = tv_table_csv({r});
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "model,LA,LP,JA,TTCL,TTCD,TMCL,TMCD,TBCL,TBCD,average,phoneme_accuracy_excl_pad,"
              "phoneme_accuracy_incl_pad,n_test_frames,param_count,train_seconds");
    EXPECT_NE(csv.find("multi,0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5,,0.5,0.42880000000000001,,0,1234,12"),
              std::string::npos)
        << csv;
}
