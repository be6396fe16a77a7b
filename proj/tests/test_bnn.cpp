#include <doctest.h>

#include <cmath>
#include <numeric>

#include "nesy/bnn.hpp"
#include "oracles.hpp"

using namespace nesy;

namespace {

FeatureVector features(double ratio, int dow = 0, double temp = 15.0) {
    FeatureVector f;
    f.current_ratio = ratio;
    f.past_ratios = {ratio, ratio, ratio, ratio};
    f.hour = 10;
    f.day_of_week = dow;
    f.month = 3;
    f.temperature_c = temp;
    return f;
}

// Two well separated clusters labelled VeryLow / VeryHigh in every window.
std::vector<LabeledExample> separable(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> lo(0.0, 0.35), hi(0.65, 1.0);
    std::vector<LabeledExample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const bool high = i % 2 == 1;
        LabeledExample ex;
        ex.features = features(high ? hi(rng) : lo(rng), static_cast<int>(i % 7));
        const auto c = high ? OccupancyClass::VeryHigh : OccupancyClass::VeryLow;
        ex.targets = {c, c, c};
        ex.segment_id = "s";
        out.push_back(ex);
    }
    return out;
}

BnnModel zero_variance(BnnModel m) {
    for (auto& L : m.layers) {
        L.weight_rho.setConstant(-1000.0);
        L.bias_rho.setConstant(-1000.0);
    }
    return m;
}

}  // namespace

TEST_CASE("softplus and its inverse") {
    for (double y : {1e-6, 0.05, 0.7, 3.0, 40.0}) CHECK(softplus(inverse_softplus(y)) == doctest::Approx(y).epsilon(1e-12));
    CHECK(softplus(-1000.0) == 0.0);
    CHECK_THROWS_AS(inverse_softplus(0.0), Error);
}

TEST_CASE("encode_features layout") {
    const auto train = separable(20, 1);
    const auto schema = fit_schema(train, 4);
    auto f = features(0.5, 0, 15.0);
    const auto x = encode_features(f, schema);
    REQUIRE(static_cast<std::size_t>(x.size()) == schema.width());
    const auto dow0 = static_cast<Eigen::Index>(schema.continuous.size());
    CHECK(x.segment(dow0, 7) == (Eigen::VectorXd(7) << 1, 0, 0, 0, 0, 0, 0).finished());
    CHECK(encode_features(f, schema) == x);

    // temperature at the schema maximum normalizes to exactly 1
    auto hot = train;
    hot[3].features.temperature_c = 30.0;
    const auto s2 = fit_schema(hot, 4);
    const auto names = continuous_feature_names(4);
    const auto ti = static_cast<Eigen::Index>(std::find(names.begin(), names.end(), "temperature_c") - names.begin());
    CHECK(encode_features(features(0.5, 0, 30.0), s2)(ti) == 1.0);

    // unseen weather code lands in the "other" slot and is counted
    EncodeStats stats;
    f.weather_type = static_cast<WeatherType>(9);
    const auto xu = encode_features(f, schema, &stats);
    CHECK(stats.unseen_categorical == 1);
    CHECK(xu(dow0 + 7 + 12 + static_cast<Eigen::Index>(WeatherType::Other)) == 1.0);

    f.past_ratios.pop_back();
    CHECK_THROWS_AS(encode_features(f, schema), Error);
}

TEST_CASE("sample_weights") {
    Rng init(3);
    const auto m = oracle::random_net({2, 4, 5}, init);
    Rng a(11), b(11);
    const auto wa = sample_weights(m, a), wb = sample_weights(m, b);
    CHECK(wa.weights[0] == wb.weights[0]);
    CHECK(wa.biases[1] == wb.biases[1]);

    const auto degenerate = zero_variance(m);
    Rng c(5);
    const auto wz = sample_weights(degenerate, c);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        CHECK(wz.weights[l] == m.layers[l].weight_mean);
        CHECK(wz.biases[l] == m.layers[l].bias_mean);
    }

    // Monte-Carlo mean of one scalar weight: within 4 standard errors of its mean.
    Rng d(17);
    const double sigma = softplus(m.layers[0].weight_rho(1, 0));
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += sample_weights(m, d).weights[0](1, 0);
    CHECK(std::abs(sum / n - m.layers[0].weight_mean(1, 0)) < 4.0 * sigma / std::sqrt(n));
}

TEST_CASE("forward matches a loop reimplementation") {
    Rng init(21);
    const auto m = oracle::random_net({6, 7, 3, 5}, init);
    Rng r(4);
    const auto w = sample_weights(m, r);
    std::normal_distribution<double> n01;
    for (int t = 0; t < 20; ++t) {
        Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(6, [&] { return n01(r); });
        const auto got = forward(m, w, x);
        const auto want = oracle::forward_loops(w, std::vector<double>(x.data(), x.data() + x.size()));
        for (int k = 0; k < 5; ++k) CHECK(std::abs(got(k) - want[static_cast<std::size_t>(k)]) < 1e-12);
    }
    CHECK_THROWS_AS(forward(m, w, Eigen::VectorXd::Zero(5)), Error);

    auto zero = m;
    for (auto& L : zero.layers) {
        L.weight_mean.setZero();
        L.bias_mean.setZero();
    }
    const auto d = softmax(forward(zero, mean_weights(zero), Eigen::VectorXd::Ones(6)));
    for (double p : d.probs) CHECK(p == doctest::Approx(0.2));
}

TEST_CASE("kl_mean_field closed form") {
    BnnModel m;
    VariationalLayer L;
    L.weight_mean = Eigen::MatrixXd::Zero(5, 1);
    L.weight_rho = Eigen::MatrixXd::Constant(5, 1, inverse_softplus(1.0));
    L.bias_mean = Eigen::VectorXd::Zero(5);
    L.bias_rho = Eigen::VectorXd::Constant(5, inverse_softplus(1.0));
    m.layers.push_back(L);
    CHECK(kl_mean_field(m) == doctest::Approx(0.0).epsilon(1e-12));

    m.layers[0].weight_mean(2, 0) = 1.0;  // mu = 1, sigma = 1, prior 1: 0.5
    CHECK(kl_mean_field(m) == doctest::Approx(0.5).epsilon(1e-12));

    Rng init(8);
    const auto r = oracle::random_net({3, 4, 5}, init);
    double want = 0.0;
    for (const auto& layer : r.layers) {
        for (Eigen::Index k = 0; k < layer.weight_mean.size(); ++k) {
            want += oracle::kl_scalar(layer.weight_mean.data()[k], softplus(layer.weight_rho.data()[k]), layer.prior_sigma);
        }
        for (Eigen::Index k = 0; k < layer.bias_mean.size(); ++k) {
            want += oracle::kl_scalar(layer.bias_mean(k), softplus(layer.bias_rho(k)), layer.prior_sigma);
        }
    }
    CHECK(kl_mean_field(r) == doctest::Approx(want).epsilon(1e-12));
    CHECK(kl_mean_field(r) > 0.0);
}

TEST_CASE("kl matches a Monte-Carlo log-density ratio") {
    // Single weight with mu = 0.7, sigma = 0.4 against N(0, 1).
    const double mu = 0.7, s = 0.4, p = 1.0;
    BnnModel m;
    VariationalLayer L;
    L.weight_mean = Eigen::MatrixXd::Constant(1, 1, mu);
    L.weight_rho = Eigen::MatrixXd::Constant(1, 1, inverse_softplus(s));
    L.bias_mean = Eigen::VectorXd::Zero(1);
    L.bias_rho = Eigen::VectorXd::Constant(1, inverse_softplus(1.0));  // equals the prior: contributes 0
    m.layers.push_back(L);

    Rng rng(99);
    std::normal_distribution<double> n01;
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double w = mu + s * n01(rng);
        const double lq = -std::log(s) - 0.5 * ((w - mu) / s) * ((w - mu) / s);
        const double lp = -std::log(p) - 0.5 * (w / p) * (w / p);
        sum += lq - lp;
        sq += (lq - lp) * (lq - lp);
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(kl_mean_field(m) - mean) < 3.0 * se);
}

TEST_CASE("elbo_minus gradients match finite differences") {
    Rng init(123);
    std::normal_distribution<double> n01;
    for (int t = 0; t < 10; ++t) {
        const auto m = oracle::random_net({2, 4, 5}, init);
        Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(6, 2, [&] { return n01(init); });
        std::vector<int> y{0, 1, 2, 3, 4, 2};
        CHECK(oracle::elbo_gradient_error(m, x, y, 2, 3, 1000 + t) < 1e-4);
    }
}

TEST_CASE("elbo_minus degenerate net and KL scaling") {
    BnnModel m;
    VariationalLayer L;
    L.weight_mean = Eigen::MatrixXd::Zero(5, 3);
    L.weight_rho = Eigen::MatrixXd::Constant(5, 3, -1000.0);
    L.bias_mean = Eigen::VectorXd::Zero(5);
    L.bias_rho = Eigen::VectorXd::Constant(5, -1000.0);
    m.layers.push_back(L);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
    std::vector<int> y{0, 4, 2, 1};
    Rng r(1);
    CHECK(elbo_minus(m, x, y, 1, 1, r).mean_nll == doctest::Approx(std::log(5.0)).epsilon(1e-12));

    Rng init(7);
    const auto net = oracle::random_net({3, 4, 5}, init);
    Rng a(2), b(2);
    const auto r4 = elbo_minus(net, x, y, 1, 4, a);
    const auto r2 = elbo_minus(net, x, y, 1, 2, b);
    const double kl4 = r4.loss - r4.mean_nll, kl2 = r2.loss - r2.mean_nll;
    CHECK(kl2 == doctest::Approx(2.0 * kl4).epsilon(1e-12));
}

TEST_CASE("posterior predictive") {
    Rng init(31);
    auto m = oracle::random_net({4, 6, 5}, init);
    const Eigen::VectorXd x = (Eigen::VectorXd(4) << 0.3, -1.2, 0.8, 0.1).finished();
    const auto d = posterior_predictive(m, x, 25, 4);
    CHECK(d.is_valid());
    CHECK(posterior_predictive(m, x, 25, 4) == d);

    const auto z = zero_variance(m);
    const auto det = softmax(forward(z, mean_weights(z), x));
    for (int s : {1, 7, 50}) {
        const auto p = posterior_predictive(z, x, s, 9);
        for (std::size_t k = 0; k < kNumClasses; ++k) CHECK(std::abs(p[k] - det[k]) < 1e-12);
    }

    const auto small = posterior_predictive(m, x, 10000, 1);
    const auto large = posterior_predictive(m, x, 100000, 2);
    for (std::size_t k = 0; k < kNumClasses; ++k) CHECK(std::abs(small[k] - large[k]) < 5.0 / std::sqrt(1e4));

    Eigen::MatrixXd xs(3, 4);
    xs << x.transpose(), -x.transpose(), 2 * x.transpose();
    const auto batch = posterior_predictive_batch(m, xs, 20, 6);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(batch[static_cast<std::size_t>(i)] == posterior_predictive(m, xs.row(i).transpose(), 20, 6));
}

TEST_CASE("confident_prediction") {
    ClassDistribution a{{0.35, 0.30, 0.15, 0.10, 0.10}};
    CHECK(confident_prediction(a, 0.30) == OccupancyClass::VeryLow);
    ClassDistribution b{{0.25, 0.25, 0.20, 0.15, 0.15}};
    CHECK_FALSE(confident_prediction(b, 0.30));
    CHECK(confident_prediction(b, 0.19) == OccupancyClass::VeryLow);  // tie to the lower index
    const auto u = ClassDistribution::uniform();
    CHECK_FALSE(confident_prediction(u, 0.2));
    CHECK(confident_prediction(u, 0.19));
    ClassDistribution c{{0.1, 0.1, 0.1, 0.1, 0.6}};
    CHECK_FALSE(confident_prediction(c, 0.6));  // strict
}

TEST_CASE("training on separable data") {
    const auto tr = separable(400, 5), va = separable(100, 6);
    const auto schema = fit_schema(tr, 4);
    TrainConfig tc;
    tc.max_epochs = 100;
    tc.learning_rate = 0.01;
    tc.seed = 3;
    const auto init = make_model(schema, ModelShape{{8}, 1.0, 0.05}, 12);
    const auto res = train(init, tr, va, 1, tc);
    const auto preds = posterior_predictive_batch(res.model, encode_examples(tr, schema), 20, 1);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < tr.size(); ++i) hits += preds[i].argmax() == tr[i].targets[0];
    CHECK(static_cast<double>(hits) / tr.size() >= 0.95);

    const auto again = train(init, tr, va, 1, tc);
    CHECK(serialize_checkpoint(again.model, tc, 1) == serialize_checkpoint(res.model, tc, 1));
    CHECK(again.log == res.log);

    CHECK_THROWS_AS(train(init, {}, va, 1, tc), Error);
}

TEST_CASE("patience 0 stops at the first non-improving epoch") {
    const auto tr = separable(200, 8), va = separable(60, 9);
    const auto schema = fit_schema(tr, 4);
    TrainConfig tc;
    tc.max_epochs = 200;
    tc.patience = 0;
    tc.learning_rate = 0.05;
    const auto res = train(make_model(schema, ModelShape{{4}, 1.0, 0.05}, 1), tr, va, 1, tc);
    double best = std::numeric_limits<double>::infinity();
    std::size_t first_bad = res.log.size();
    for (std::size_t i = 0; i < res.log.size(); ++i) {
        if (res.log[i].val_loss >= best) {
            first_bad = i;
            break;
        }
        best = res.log[i].val_loss;
    }
    REQUIRE(first_bad < res.log.size());
    CHECK(res.log.size() == first_bad + 1);
    CHECK(res.log.back().stopped_early);
}

TEST_CASE("checkpoint round trip is lossless") {
    const auto tr = separable(50, 2);
    const auto schema = fit_schema(tr, 4);
    const auto m = make_model(schema, ModelShape{{5, 3}, 0.8, 0.05}, 77);
    TrainConfig tc;
    tc.seed = 42;
    const auto text = serialize_checkpoint(m, tc, 2);
    const auto back = parse_checkpoint(text);
    CHECK(back.window == 2);
    CHECK(back.config.seed == 42);
    REQUIRE(back.model.layers.size() == 3);
    for (std::size_t l = 0; l < 3; ++l) {
        CHECK(back.model.layers[l].weight_mean == m.layers[l].weight_mean);
        CHECK(back.model.layers[l].weight_rho == m.layers[l].weight_rho);
        CHECK(back.model.layers[l].bias_rho == m.layers[l].bias_rho);
        CHECK(back.model.layers[l].prior_sigma == m.layers[l].prior_sigma);
    }
    CHECK(back.model.schema == schema);
    CHECK(serialize_checkpoint(back.model, back.config, back.window) == text);
    CHECK_THROWS_AS(parse_checkpoint("{\"window\": 1}"), Error);
}
