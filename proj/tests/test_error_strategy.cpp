#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "gwinfer/error_strategy.hpp"
#include "gwinfer/mcmc.hpp"

using namespace gwinfer;
using namespace gwinfer::errors;

namespace {

Prior gaussian_prior(int dim) {
    std::vector<Marginal> m;
    for (int i = 0; i < dim; ++i) m.push_back(Marginal::gaussian(0.0, 1.0));
    return Prior(std::move(m));
}

// y = 3 + 2 m + noise on 1D inputs
TrainingSet linear_noisy_set(int n, double noise_std, std::uint64_t seed) {
    RngStream rng(seed);
    TrainingSet ts;
    ts.inputs.resize(n, 1);
    ts.outputs.resize(n, 1);
    for (int i = 0; i < n; ++i) {
        ts.inputs(i, 0) = rng.normal();
        ts.outputs(i, 0) = 3.0 + 2.0 * ts.inputs(i, 0) + noise_std * rng.normal();
    }
    return ts;
}

} // namespace

TEST_CASE("strategy labels parse and round-trip") {
    for (const char* label : {"none-pce", "none-gp", "a-pce", "a-gp", "b-pce-gp", "b-pce-pce",
                              "b-gp-pce", "b-gp-gp"})
        CHECK(ErrorStrategy::parse(label).label() == label);
    CHECK_THROWS_WITH_AS(ErrorStrategy::parse("c-pce"), doctest::Contains("invalid-config"),
                         Error);
    CHECK(ErrorStrategy::parse("b-gp-pce").primary == Kind::GP);
    CHECK(ErrorStrategy::parse("b-gp-pce").secondary == Kind::PCE);
}

TEST_CASE("exact-fit PCE posterior concentrates at training points") {
    TrainingSet ts = linear_noisy_set(50, 0.0, 5);
    const auto primary = pce::pce_fit(ts, gaussian_prior(1), pce::PceFitConfig{{1}, 1.0, 2});
    const auto ensemble = strategy_a_posterior(primary, ts, 200, 11);
    for (int i : {0, 10, 30}) {
        const auto env = strategy_a_envelope(ensemble, ts.inputs.row(i).transpose());
        CHECK(std::sqrt(env.variance[0]) < 1e-6);
        CHECK(env.mean[0] == doctest::Approx(ts.outputs(i, 0)).epsilon(1e-6));
    }
}

TEST_CASE("GP envelope is the native predictive") {
    RngStream rng(7);
    TrainingSet ts;
    ts.inputs.resize(12, 1);
    ts.outputs.resize(12, 1);
    for (int i = 0; i < 12; ++i) {
        ts.inputs(i, 0) = rng.normal();
        ts.outputs(i, 0) = std::sin(ts.inputs(i, 0));
    }
    const auto s = gp::GpSurrogate::fit(ts, gaussian_prior(1), gp::GpFitConfig{}, 3);
    Eigen::VectorXd m(1);
    m << 0.2;
    const auto env = strategy_a_envelope(*s, m);
    const auto [mean, var] = s->predict(m);
    CHECK(env.mean[0] == mean[0]);
    CHECK(env.variance[0] == var[0]);
}

TEST_CASE("ensemble envelope statistics use the population convention") {
    // hand fixture: two members predicting a and b
    TrainingSet ts = linear_noisy_set(30, 0.05, 13);
    const auto primary = pce::pce_fit(ts, gaussian_prior(1), pce::PceFitConfig{{1}, 1.0, 2});
    const auto ensemble = strategy_a_posterior(primary, ts, 2, 17);
    Eigen::VectorXd m(1);
    m << 0.4;
    const Eigen::MatrixXd preds = ensemble.member_predictions(m);
    const double a = preds(0, 0), b = preds(1, 0);
    const auto env = strategy_a_envelope(ensemble, m);
    CHECK(env.mean[0] == doctest::Approx(0.5 * (a + b)).epsilon(1e-12));
    CHECK(env.variance[0] == doctest::Approx(0.25 * (a - b) * (a - b)).epsilon(1e-10));
}

TEST_CASE("ensemble predictive variance matches the conjugate closed form") {
    const int n = 60;
    TrainingSet ts = linear_noisy_set(n, 0.3, 19);
    const auto primary = pce::pce_fit(ts, gaussian_prior(1), pce::PceFitConfig{{1}, 1.0, 2});
    REQUIRE(primary->retained_indices(0).size() == 2);
    const auto ensemble = strategy_a_posterior(primary, ts, 4000, 23);

    Eigen::VectorXd held(1);
    held << 1.3;
    const auto env = strategy_a_envelope(ensemble, held);

    // closed-form multivariate-t predictive variance of Bayesian linear
    // regression with the noninformative prior
    const Eigen::MatrixXd a =
        pce::eval_design(primary->basis_spec(), primary->retained_indices(0), ts.inputs);
    const Eigen::VectorXd chat = (a.transpose() * a).ldlt().solve(a.transpose() * ts.outputs.col(0));
    const double rss = (ts.outputs.col(0) - a * chat).squaredNorm();
    const double nu = n - 2.0;
    Eigen::VectorXd psi(2);
    for (int k = 0; k < 2; ++k)
        psi[k] = pce::eval_basis(primary->basis_spec(), primary->retained_indices(0)[static_cast<std::size_t>(k)], held);
    const double s2 = rss / nu;
    const double base = psi.dot((a.transpose() * a).ldlt().solve(Eigen::MatrixXd::Identity(2, 2)) * psi);
    const double closed_form = (nu / (nu - 2.0)) * s2 * base;
    CHECK(env.variance[0] == doctest::Approx(closed_form).epsilon(0.2));
}

TEST_CASE("underdetermined coefficient posterior is rejected") {
    TrainingSet ts = linear_noisy_set(30, 0.1, 29);
    const auto primary = pce::pce_fit(ts, gaussian_prior(1), pce::PceFitConfig{{1}, 1.0, 2});
    TrainingSet tiny;
    tiny.inputs = ts.inputs.topRows(2);
    tiny.outputs = ts.outputs.topRows(2);
    CHECK_THROWS_WITH_AS(strategy_a_posterior(primary, tiny, 10, 1),
                         doctest::Contains("underdetermined"), Error);
}

TEST_CASE("inflation likelihood reduces to the plain Gaussian at zero variance") {
    PredictiveEnvelope env;
    env.mean.resize(3);
    env.mean << 1.0, 2.0, 3.0;
    env.variance = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd data(3);
    data << 1.1, 1.9, 3.2;
    const Eigen::VectorXd noise = Eigen::VectorXd::Constant(3, 0.05);
    RngStream rng(1);
    const double a = strategy_a_loglik(env, data, noise, Mode::VarianceInflation, rng);
    const double b = mcmc::gaussian_log_likelihood(env.mean, data, noise);
    CHECK(a == b); // bit-for-bit
}

TEST_CASE("inflation hand value at matched variances") {
    PredictiveEnvelope env;
    env.mean = Eigen::VectorXd::Zero(1);
    env.variance = Eigen::VectorXd::Constant(1, 0.0001);
    const Eigen::VectorXd data = Eigen::VectorXd::Zero(1);
    const Eigen::VectorXd noise = Eigen::VectorXd::Constant(1, 0.01);
    RngStream rng(2);
    const double ll = strategy_a_loglik(env, data, noise, Mode::VarianceInflation, rng);
    CHECK(ll == doctest::Approx(-0.5 * std::log(2.0 * M_PI * 0.0002)).epsilon(1e-12));
}

TEST_CASE("inflating the variance lowers the zero-residual density") {
    Eigen::VectorXd data = Eigen::VectorXd::Zero(2);
    const Eigen::VectorXd noise = Eigen::VectorXd::Constant(2, 0.01);
    RngStream rng(3);
    double prev = 1.0;
    bool first = true;
    for (double sv : {0.0, 1e-4, 1e-3, 1e-2}) {
        PredictiveEnvelope env;
        env.mean = Eigen::VectorXd::Zero(2);
        env.variance = Eigen::VectorXd::Constant(2, sv);
        const double ll = strategy_a_loglik(env, data, noise, Mode::VarianceInflation, rng);
        if (!first) CHECK(ll < prev);
        prev = ll;
        first = false;
    }
}

TEST_CASE("injection mode adds envelope draws to the mean") {
    PredictiveEnvelope env;
    env.mean = Eigen::VectorXd::Zero(1);
    env.variance = Eigen::VectorXd::Constant(1, 4.0);
    const Eigen::VectorXd data = Eigen::VectorXd::Zero(1);
    const Eigen::VectorXd noise = Eigen::VectorXd::Constant(1, 1.0);
    // with a large surrogate std the injected values spread: the average
    // log-likelihood over many draws sits well below the zero-residual value
    RngStream rng(4);
    double acc = 0.0;
    const int n = 2000;
    for (int i = 0; i < n; ++i)
        acc += strategy_a_loglik(env, data, noise, Mode::RealizationInjection, rng);
    acc /= n;
    const double at_zero = mcmc::gaussian_log_likelihood(env.mean, data, noise);
    CHECK(acc < at_zero - 1.0);
    CHECK(acc == doctest::Approx(at_zero - 0.5 * 4.0).epsilon(0.1)); // E[-z^2 var/2]
}

TEST_CASE("zero-residual primary makes the corrected surrogate collapse to it") {
    TrainingSet ts = linear_noisy_set(40, 0.0, 31);
    const auto primary = pce::pce_fit(ts, gaussian_prior(1), pce::PceFitConfig{{1}, 1.0, 2});
    StrategyBConfig cfg;
    const auto corrected = strategy_b_fit(primary, ts, gaussian_prior(1), Kind::GP, cfg, 37);
    RngStream rng(41);
    for (int t = 0; t < 10; ++t) {
        Eigen::VectorXd m(1);
        m << rng.normal();
        CHECK(corrected->predict_mean(m)[0] ==
              doctest::Approx(primary->predict_mean(m)[0]).epsilon(1e-8));
    }
}

TEST_CASE("GP secondary corrects the nonlinear part the PCE misses") {
    // y = 2m + sin(m): order-1 PCE captures the linear part only
    RngStream rng(43);
    TrainingSet ts;
    const int n = 60;
    ts.inputs.resize(n, 1);
    ts.outputs.resize(n, 1);
    for (int i = 0; i < n; ++i) {
        ts.inputs(i, 0) = rng.normal();
        ts.outputs(i, 0) = 2.0 * ts.inputs(i, 0) + std::sin(ts.inputs(i, 0));
    }
    const auto primary = pce::pce_fit(ts, gaussian_prior(1), pce::PceFitConfig{{1}, 1.0, 2});
    StrategyBConfig cfg;
    const auto corrected = strategy_b_fit(primary, ts, gaussian_prior(1), Kind::GP, cfg, 47);

    std::vector<double> err_primary, err_corrected;
    for (int t = 0; t < 50; ++t) {
        Eigen::VectorXd m(1);
        m << -2.0 + 4.0 * t / 49.0;
        const double truth = 2.0 * m[0] + std::sin(m[0]);
        err_primary.push_back(std::abs(primary->predict_mean(m)[0] - truth));
        err_corrected.push_back(std::abs(corrected->predict_mean(m)[0] - truth));
    }
    std::sort(err_primary.begin(), err_primary.end());
    std::sort(err_corrected.begin(), err_corrected.end());
    CHECK(err_corrected[25] < err_primary[25]); // median improves
}

TEST_CASE("GP-primary residuals at design points sit at the noise floor") {
    RngStream rng(53);
    TrainingSet ts;
    const int n = 25;
    ts.inputs.resize(n, 1);
    ts.outputs.resize(n, 1);
    for (int i = 0; i < n; ++i) {
        ts.inputs(i, 0) = rng.normal();
        ts.outputs(i, 0) = std::sin(2.0 * ts.inputs(i, 0));
    }
    const auto primary = gp::GpSurrogate::fit(ts, gaussian_prior(1), gp::GpFitConfig{}, 59);
    const double out_std = std::sqrt(
        (ts.outputs.col(0).array() - ts.outputs.col(0).mean()).square().sum() / (n - 1));
    for (int i = 0; i < n; ++i) {
        const double resid =
            std::abs(primary->predict_mean(ts.inputs.row(i).transpose())[0] - ts.outputs(i, 0));
        CHECK(resid / out_std < 1e-4);
    }
}

TEST_CASE("all four secondary combinations pass the passthrough test") {
    TrainingSet ts = linear_noisy_set(50, 0.0, 61);
    const Prior prior = gaussian_prior(1);
    StrategyBConfig cfg;
    for (const char* label : {"b-pce-gp", "b-pce-pce", "b-gp-pce", "b-gp-gp"}) {
        const ErrorStrategy st = ErrorStrategy::parse(label);
        SurrogatePtr primary;
        if (st.primary == Kind::PCE)
            primary = pce::pce_fit(ts, prior, pce::PceFitConfig{{1}, 1.0, 2});
        else
            primary = gp::GpSurrogate::fit(ts, prior, gp::GpFitConfig{}, 67);
        const auto corrected = strategy_b_fit(primary, ts, prior, st.secondary, cfg, 71);
        // exact primary (or noise-floor GP): corrected tracks the primary
        Eigen::VectorXd m(1);
        m << 0.25;
        CHECK(corrected->predict_mean(m)[0] ==
              doctest::Approx(primary->predict_mean(m)[0]).epsilon(1e-4));
    }
}

TEST_CASE("corrected prediction at design points reproduces high-fidelity outputs") {
    // a deliberately coarse primary: order-1 PCE on a quadratic target
    RngStream rng(73);
    TrainingSet ts;
    const int n = 30;
    ts.inputs.resize(n, 1);
    ts.outputs.resize(n, 1);
    for (int i = 0; i < n; ++i) {
        ts.inputs(i, 0) = rng.normal();
        ts.outputs(i, 0) = 1.0 + ts.inputs(i, 0) * ts.inputs(i, 0);
    }
    const auto primary = pce::pce_fit(ts, gaussian_prior(1), pce::PceFitConfig{{1}, 1.0, 2});
    StrategyBConfig cfg;
    cfg.gp.noise_floor = 1e-8;
    const auto corrected = strategy_b_fit(primary, ts, gaussian_prior(1), Kind::GP, cfg, 79);
    const double out_std = std::sqrt(
        (ts.outputs.col(0).array() - ts.outputs.col(0).mean()).square().sum() / (n - 1));
    for (int i = 0; i < n; ++i) {
        const double pred = corrected->predict_mean(ts.inputs.row(i).transpose())[0];
        CHECK(std::abs(pred - ts.outputs(i, 0)) / out_std < 1e-4);
    }
}

TEST_CASE("prediction slices commute with component selection") {
    RngStream rng(83);
    TrainingSet ts;
    const int n = 35;
    ts.inputs.resize(n, 1);
    ts.outputs.resize(n, 2);
    for (int i = 0; i < n; ++i) {
        ts.inputs(i, 0) = rng.normal();
        ts.outputs(i, 0) = 2.0 * ts.inputs(i, 0);
        ts.outputs(i, 1) = std::sin(ts.inputs(i, 0));
    }
    const auto primary = pce::pce_fit(ts, gaussian_prior(1), pce::PceFitConfig{{1}, 1.0, 2});
    StrategyBConfig cfg;
    const auto corrected = strategy_b_fit(primary, ts, gaussian_prior(1), Kind::GP, cfg, 89);
    Eigen::VectorXd m(1);
    m << 0.77;
    const Eigen::VectorXd both = corrected_predict(*corrected, m);
    CHECK(both[0] == corrected->primary().predict_mean(m)[0] +
                         corrected->secondary().predict_mean(m)[0]);
    CHECK(both[1] == corrected->primary().predict_mean(m)[1] +
                         corrected->secondary().predict_mean(m)[1]);
}
