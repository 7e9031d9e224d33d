#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nes/gaussian_rbm.hpp"
#include "oracles.hpp"

using nes::Index;
using nes::Matrixd;
using nes::Vectord;

namespace {

nes::GaussianRbm random_rbm(Index d, Index k, nes::Rng& rng, double scale = 0.5) {
    nes::GaussianRbm rbm;
    rbm.W = oracle::random_matrix(d, k, rng, scale);
    rbm.hidden_bias = oracle::random_vector(k, rng, scale);
    rbm.visible_bias = oracle::random_vector(d, rng, scale);
    rbm.sigma = Vectord::Ones(d) + 0.5 * oracle::random_vector(d, rng).cwiseAbs();
    return rbm;
}

}  // namespace

TEST_CASE("energy: trivial configurations") {
    nes::Rng rng(31);
    auto rbm = random_rbm(3, 2, rng);

    // x at the visible bias with no hidden activity costs nothing
    CHECK(nes::energy<double>(rbm.visible_bias, Vectord::Zero(2).eval(), rbm) ==
          doctest::Approx(0.0));

    nes::GaussianRbm plain;
    plain.W = Matrixd::Zero(3, 2);
    plain.hidden_bias = Vectord::Zero(2);
    plain.visible_bias = oracle::random_vector(3, rng);
    plain.sigma = Vectord::Ones(3);
    Vectord x = oracle::random_vector(3, rng);
    Vectord h(2);
    h << 1, 0;
    CHECK(nes::energy(x, h, plain) ==
          doctest::Approx((x - plain.visible_bias).squaredNorm() / 2.0));

    Vectord bad(2);
    bad << 0.5, 1.0;
    CHECK_THROWS_AS(nes::energy(x, bad, plain), nes::ContractViolation);
}

TEST_CASE("energy: matches term-by-term oracle") {
    nes::Rng rng(32);
    for (int rep = 0; rep < 10; ++rep) {
        auto rbm = random_rbm(3, 2, rng);
        Vectord x = oracle::random_vector(3, rng);
        Vectord h(2);
        h << static_cast<double>(rng.bernoulli(0.5)), static_cast<double>(rng.bernoulli(0.5));
        CHECK(std::abs(nes::energy(x, h, rbm) - oracle::energy_naive(x, h, rbm)) < 1e-12);
    }
}

TEST_CASE("hidden_conditional: closed forms and enumeration oracle") {
    nes::GaussianRbm flat;
    flat.W = Matrixd::Zero(4, 3);
    flat.hidden_bias = Vectord::Zero(3);
    flat.visible_bias = Vectord::Zero(4);
    flat.sigma = Vectord::Ones(4);
    Vectord x(4);
    x << 1, -2, 3, 0.5;
    Vectord p = nes::hidden_conditional(x, flat);
    for (Index k = 0; k < 3; ++k) CHECK(p[k] == doctest::Approx(0.5));

    flat.hidden_bias.setConstant(20.0);
    p = nes::hidden_conditional(x, flat);
    for (Index k = 0; k < 3; ++k) CHECK(p[k] > 1.0 - 1e-8);

    nes::Rng rng(33);
    for (int rep = 0; rep < 20; ++rep) {
        auto rbm = random_rbm(2, 3, rng);
        Vectord xr = oracle::random_vector(2, rng);
        Vectord got = nes::hidden_conditional(xr, rbm);
        Vectord want = oracle::hidden_posterior_enum(xr, rbm);
        CHECK((got - want).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("hidden_conditional: enumeration agreement up to K = 10") {
    nes::Rng rng(34);
    for (Index k = 2; k <= 10; k += 2) {
        auto rbm = random_rbm(4, k, rng);
        Vectord x = oracle::random_vector(4, rng);
        CHECK((nes::hidden_conditional(x, rbm) - oracle::hidden_posterior_enum(x, rbm))
                  .cwiseAbs()
                  .maxCoeff() < 1e-10);
    }
}

TEST_CASE("free energy matches enumeration") {
    nes::Rng rng(35);
    for (Index k = 2; k <= 10; k += 2) {
        auto rbm = random_rbm(3, k, rng);
        Vectord x = oracle::random_vector(3, rng);
        CHECK(std::abs(nes::free_energy(x, rbm) - oracle::free_energy_enum(x, rbm)) < 1e-10);
    }
}

TEST_CASE("visible_conditional: means and stddevs") {
    nes::Rng rng(36);
    auto rbm = random_rbm(4, 3, rng);

    auto [mean0, sd0] = nes::visible_conditional(Vectord::Zero(3).eval(), rbm);
    CHECK((mean0 - rbm.visible_bias).cwiseAbs().maxCoeff() == 0.0);
    CHECK((sd0 - rbm.sigma).cwiseAbs().maxCoeff() == 0.0);

    nes::GaussianRbm ones;
    ones.W = Matrixd::Zero(4, 3);
    ones.W.col(1).setOnes();
    ones.hidden_bias = Vectord::Zero(3);
    ones.visible_bias = Vectord::Zero(4);
    ones.sigma = Vectord::Ones(4);
    Vectord h1 = Vectord::Zero(3);
    h1[1] = 1.0;
    auto [mean1, sd1] = nes::visible_conditional(h1, ones);
    for (Index j = 0; j < 4; ++j) CHECK(mean1[j] == doctest::Approx(1.0));

    // loop oracle
    Vectord h(3);
    h << 1, 0, 1;
    auto [mean, sd] = nes::visible_conditional(h, rbm);
    for (Index j = 0; j < 4; ++j) {
        double acc = rbm.visible_bias[j];
        for (Index k = 0; k < 3; ++k) acc += rbm.sigma[j] * rbm.W(j, k) * h[k];
        CHECK(std::abs(mean[j] - acc) < 1e-12);
        CHECK(sd[j] == rbm.sigma[j]);
    }
}

TEST_CASE("sampling: determinism and saturated probabilities") {
    nes::Rng rng(37);
    auto rbm = random_rbm(4, 3, rng);
    Vectord x = oracle::random_vector(4, rng);

    nes::Rng s1(99), s2(99);
    CHECK((nes::sample_hidden(x, rbm, s1) - nes::sample_hidden(x, rbm, s2))
              .cwiseAbs()
              .maxCoeff() == 0.0);
    Vectord h(3);
    h << 1, 0, 1;
    nes::Rng s3(7), s4(7);
    CHECK((nes::sample_visible(h, rbm, s3) - nes::sample_visible(h, rbm, s4))
              .cwiseAbs()
              .maxCoeff() == 0.0);

    // saturated conditionals are deterministic regardless of the seed
    nes::GaussianRbm sat;
    sat.W = Matrixd::Zero(2, 2);
    sat.hidden_bias.resize(2);
    sat.hidden_bias << 100.0, -100.0;
    sat.visible_bias = Vectord::Zero(2);
    sat.sigma = Vectord::Ones(2);
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        nes::Rng r(seed);
        Vectord hs = nes::sample_hidden(Vectord::Zero(2).eval(), sat, r);
        CHECK(hs[0] == 1.0);
        CHECK(hs[1] == 0.0);
    }
}

TEST_CASE("sampling: empirical Bernoulli rate") {
    nes::GaussianRbm rbm;
    rbm.W = Matrixd::Zero(1, 1);
    rbm.hidden_bias.resize(1);
    rbm.hidden_bias << std::log(0.3 / 0.7);  // sigmoid^-1(0.3)
    rbm.visible_bias = Vectord::Zero(1);
    rbm.sigma = Vectord::Ones(1);
    Vectord x = Vectord::Zero(1);

    nes::Rng rng(41);
    double acc = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) acc += nes::sample_hidden(x, rbm, rng)[0];
    CHECK(std::abs(acc / n - 0.3) < 0.01);
}

TEST_CASE("cd_update: lr = 0 leaves parameters untouched") {
    nes::Rng rng(42);
    auto rbm = random_rbm(5, 4, rng);
    auto before = rbm;
    auto vel = nes::CdVelocity<double>::zero(5, 4);
    Matrixd batch = oracle::random_matrix(8, 5, rng);
    nes::Rng sampler(1);
    nes::cd_update(batch, rbm, 1, 0.0, 0.9, 1e-4, vel, sampler);
    CHECK((rbm.W - before.W).cwiseAbs().maxCoeff() == 0.0);
    CHECK((rbm.hidden_bias - before.hidden_bias).cwiseAbs().maxCoeff() == 0.0);
    CHECK((rbm.visible_bias - before.visible_bias).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(nes::cd_update(Matrixd(0, 5), rbm, 1, 0.1, 0.5, 0.0, vel, sampler),
                    nes::DataError);
}

TEST_CASE("cd_update: zero W with symmetric data stays zero") {
    // with W = 0 and zero biases the data term of the W gradient vanishes on
    // sign-symmetric batches and the model term vanishes through the zero
    // reconstruction means, so only weight decay could move W, and it is
    // proportional to W itself
    nes::GaussianRbm rbm;
    rbm.W = Matrixd::Zero(3, 2);
    rbm.hidden_bias = Vectord::Zero(2);
    rbm.visible_bias = Vectord::Zero(3);
    rbm.sigma = Vectord::Ones(3);
    auto vel = nes::CdVelocity<double>::zero(3, 2);

    // dyadic entries keep every partial sum exact, so the symmetric batch
    // cancels to a bitwise-zero gradient
    nes::Rng rng(43);
    Matrixd half(6, 3);
    for (Index i = 0; i < half.size(); ++i)
        half.data()[i] = static_cast<double>(static_cast<int>(rng.next() % 17) - 8) / 4.0;
    Matrixd batch(12, 3);
    batch << half, -half;

    nes::Rng sampler(5);
    nes::cd_update(batch, rbm, 1, 0.1, 0.5, 1e-2, vel, sampler);
    CHECK(rbm.W.cwiseAbs().maxCoeff() == 0.0);
    CHECK(rbm.visible_bias.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cd_update: determinism under a fixed seed") {
    nes::Rng rng(44);
    auto rbm1 = random_rbm(6, 4, rng, 0.05);
    auto rbm2 = rbm1;
    Matrixd batch = oracle::random_matrix(16, 6, rng);
    auto v1 = nes::CdVelocity<double>::zero(6, 4);
    auto v2 = nes::CdVelocity<double>::zero(6, 4);
    nes::Rng s1(123), s2(123);
    for (int it = 0; it < 5; ++it) {
        nes::cd_update(batch, rbm1, 2, 0.05, 0.5, 1e-4, v1, s1);
        nes::cd_update(batch, rbm2, 2, 0.05, 0.5, 1e-4, v2, s2);
    }
    CHECK((rbm1.W - rbm2.W).cwiseAbs().maxCoeff() == 0.0);
    CHECK((rbm1.hidden_bias - rbm2.hidden_bias).cwiseAbs().maxCoeff() == 0.0);
    CHECK((rbm1.visible_bias - rbm2.visible_bias).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cd_update: reconstruction error shrinks on a Gaussian mixture") {
    // two well-separated modes in a 6-dim space, 4 hidden units
    const Index D = 6, K = 4;
    nes::Rng data_rng(45);
    Vectord mu1 = oracle::random_vector(D, data_rng, 2.0);
    Vectord mu2 = -mu1;
    Matrixd batch(64, D);
    for (Index r = 0; r < batch.rows(); ++r) {
        const Vectord& mu = (r % 2 == 0) ? mu1 : mu2;
        for (Index c = 0; c < D; ++c) batch(r, c) = mu[c] + 0.3 * data_rng.normal();
    }

    nes::Rng init_rng(46);
    auto rbm = nes::GaussianRbm::random(D, K, init_rng);
    auto vel = nes::CdVelocity<double>::zero(D, K);
    nes::Rng sampler(47);

    double first = 0.0, last = 0.0;
    for (int epoch = 0; epoch < 200; ++epoch) {
        auto stats = nes::cd_update(batch, rbm, 1, 0.05, 0.5, 1e-4, vel, sampler);
        if (epoch == 0) first = stats.recon_error;
        last = stats.recon_error;
    }
    CHECK(last < 0.7 * first);
}
