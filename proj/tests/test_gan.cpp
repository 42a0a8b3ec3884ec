#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gpa/gan.hpp"
#include "test_util.hpp"

using namespace gpa;
using namespace gpa::test;

namespace {

GanArchitecture tiny_arch() {
    GanArchitecture a;
    a.latent_dim = 4;
    a.curve_len = 24;
    a.base_len = 6;
    a.gen_channels = {8, 6, 1};
    a.disc_channels = {4, 6};
    a.disc_hidden = 8;
    return a;
}

std::vector<Curve> tiny_curves(std::size_t n, std::uint64_t seed, std::size_t len = 24) {
    Rng rng(seed);
    std::vector<Curve> cs;
    for (std::size_t i = 0; i < n; ++i) {
        Curve c{"h" + std::to_string(i % 4), {}, CurveScale::Normalized};
        for (std::size_t j = 0; j < len; ++j) c.values.push_back(rng.uniform(-0.8, 0.8));
        cs.push_back(c);
    }
    return cs;
}

// flat copy of all parameter values; GanModel copies share tape nodes, so
// comparisons against "the model before" need a value snapshot
std::vector<double> snapshot(const GanModel& m) {
    std::vector<double> out;
    for (const auto& p : m.gen_params)
        out.insert(out.end(), p.value().data().begin(), p.value().data().end());
    for (const auto& p : m.disc_params)
        out.insert(out.end(), p.value().data().begin(), p.value().data().end());
    return out;
}

bool same_params(const GanModel& a, const GanModel& b) {
    if (a.gen_params.size() != b.gen_params.size()) return false;
    if (a.disc_params.size() != b.disc_params.size()) return false;
    for (std::size_t i = 0; i < a.gen_params.size(); ++i)
        if (a.gen_params[i].value().data() != b.gen_params[i].value().data()) return false;
    for (std::size_t i = 0; i < a.disc_params.size(); ++i)
        if (a.disc_params[i].value().data() != b.disc_params[i].value().data()) return false;
    return true;
}

} // namespace

TEST_CASE("parameter counts match the architecture formulas at all scales") {
    const auto paper = GanArchitecture::paper_scale();
    CHECK(paper.gen_param_count() == 1163909);
    CHECK(paper.disc_param_count() == 1143769);
    CHECK(paper.curve_len == 672);
    CHECK(paper.latent_dim == 42);

    const auto desk = GanArchitecture::desk();
    CHECK(desk.curve_len == 96);

    // count the actual initialized tensors
    for (const auto& arch : {paper, desk, tiny_arch()}) {
        const GanModel m = init_gan(arch, 1);
        std::size_t g = 0, d = 0;
        for (const auto& p : m.gen_params) g += p.value().size();
        for (const auto& p : m.disc_params) d += p.value().size();
        CHECK(g == arch.gen_param_count());
        CHECK(d == arch.disc_param_count());
    }
}

TEST_CASE("generator output has the right shape and lives in [-1, 1]") {
    const GanModel m = init_gan(tiny_arch(), 7);
    const auto curves = generate(m, 5, 99);
    REQUIRE(curves.size() == 5);
    for (const auto& c : curves) {
        CHECK(c.values.size() == 24);
        CHECK(c.scale == CurveScale::Normalized);
        for (const double v : c.values) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("generation is deterministic in the seed and model") {
    const GanModel m = init_gan(tiny_arch(), 7);
    const auto a = generate(m, 3, 42);
    const auto b = generate(m, 3, 42);
    const auto c = generate(m, 3, 43);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a[i].values == b[i].values);
    CHECK(a[0].values != c[0].values);

    const GanModel m2 = init_gan(tiny_arch(), 8);
    CHECK(a[0].values != generate(m2, 3, 42)[0].values);
}

TEST_CASE("an uninformative discriminator gives loss 2 ln 2") {
    // zero final-layer weights and bias -> sigmoid(0) = 0.5 on any input
    GanModel m = init_gan(tiny_arch(), 3);
    auto& last_w = m.disc_params[m.disc_params.size() - 2].mutable_value();
    auto& last_b = m.disc_params[m.disc_params.size() - 1].mutable_value();
    for (std::size_t i = 0; i < last_w.size(); ++i) last_w[i] = 0.0;
    for (std::size_t i = 0; i < last_b.size(); ++i) last_b[i] = 0.0;

    const auto real = curves_to_batch(tiny_curves(4, 1));
    const auto fake = curves_to_batch(tiny_curves(4, 2));
    const double loss = discriminator_loss(m, real, fake).value()[0];
    CHECK(loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("a large positive output bias drives the sigmoid toward 1") {
    GanModel m = init_gan(tiny_arch(), 3);
    m.disc_params.back().mutable_value()[0] = 30.0;
    for (const double p : discriminate(m, tiny_curves(4, 5))) CHECK(p > 0.99);
}

TEST_CASE("eta = 0 regularized loss is bitwise equal to the plain loss") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const GanModel m = init_gan(tiny_arch(), seed);
        const auto real = curves_to_batch(tiny_curves(3, seed + 1000));
        const auto fake = curves_to_batch(tiny_curves(3, seed + 2000));
        const double plain = discriminator_loss(m, real, fake).value()[0];
        const double reg = regularized_loss(m, real, fake, 0.0).value()[0];
        CHECK(plain == reg);
    }
}

TEST_CASE("the tape-based gradient-norm penalty matches finite differences") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const GanModel m = init_gan(tiny_arch(), seed);
        const auto real = curves_to_batch(tiny_curves(3, seed + 10));
        const auto fake = curves_to_batch(tiny_curves(3, seed + 20));
        const double eta = 1e-2;
        const double plain = discriminator_loss(m, real, fake).value()[0];
        const double reg = regularized_loss(m, real, fake, eta).value()[0];
        const double penalty_tape = (plain - reg) / eta;
        const double penalty_fd = gradnorm_fd(m, real, fake);
        CHECK(rel_err(penalty_tape, penalty_fd) < 1e-3);
    }
}

TEST_CASE("gradient of the regularized loss passes finite differences") {
    GanModel m = init_gan(tiny_arch(), 6);
    const auto real = curves_to_batch(tiny_curves(2, 61));
    const auto fake = curves_to_batch(tiny_curves(2, 62));
    const auto build = [&] { return regularized_loss(m, real, fake, 1e-2); };
    // check a couple of parameter tensors end to end (FD over all ~1k weights
    // of the full second-order objective is slow)
    std::vector<Var> probe = {m.disc_params[0], m.disc_params.back()};
    CHECK(max_grad_rel_err(build, probe, 1e-5) < 1e-3);
}

TEST_CASE("training with zero epochs leaves the model untouched") {
    GanModel m = init_gan(tiny_arch(), 9);
    const auto before = snapshot(m);
    TrainConfig tc = TrainConfig::preset(Scenario::SameLr);
    tc.epochs = 0;
    const auto log = train(m, tiny_curves(8, 3), tc);
    CHECK(log.empty());
    CHECK(snapshot(m) == before);
}

TEST_CASE("training is deterministic and changes the parameters") {
    const auto curves = tiny_curves(8, 77);
    TrainConfig tc = TrainConfig::preset(Scenario::SameLr);
    tc.epochs = 3;
    tc.batch_size = 4;
    tc.seed = 5;

    GanModel a = init_gan(tiny_arch(), 9);
    GanModel b = init_gan(tiny_arch(), 9);
    const auto before = snapshot(a);
    const auto log_a = train(a, curves, tc);
    const auto log_b = train(b, curves, tc);
    CHECK(snapshot(a) != before);
    CHECK(same_params(a, b));
    REQUIRE(log_a.size() == log_b.size());
    REQUIRE(log_a.size() == 6); // 3 epochs x 2 batches
    for (std::size_t i = 0; i < log_a.size(); ++i) {
        CHECK(log_a[i].d_loss == log_b[i].d_loss);
        CHECK(log_a[i].g_loss == log_b[i].g_loss);
        CHECK(log_a[i].grad_norm_penalty == 0.0); // eta = 0 scenario
    }

    tc.seed = 6;
    GanModel c = init_gan(tiny_arch(), 9);
    train(c, curves, tc);
    CHECK(!same_params(a, c));
}

TEST_CASE("the regularized scenario logs a positive gradient-norm penalty") {
    TrainConfig tc = TrainConfig::preset(Scenario::Regularized);
    CHECK(tc.eta == 1e-2);
    CHECK(tc.lr_discriminator == 1e-4);
    tc.epochs = 1;
    tc.batch_size = 4;
    GanModel m = init_gan(tiny_arch(), 10);
    const auto log = train(m, tiny_curves(8, 4), tc);
    REQUIRE(!log.empty());
    for (const auto& row : log) CHECK(row.grad_norm_penalty > 0.0);
}

TEST_CASE("scenario presets pin the learning rates") {
    const auto diff = TrainConfig::preset(Scenario::DiffLr);
    CHECK(diff.lr_generator == 1e-4);
    CHECK(diff.lr_discriminator == 1e-5);
    CHECK(diff.eta == 0.0);
    const auto same = TrainConfig::preset(Scenario::SameLr);
    CHECK(same.lr_discriminator == 1e-4);
    CHECK(same.eta == 0.0);
    CHECK(scenario_from_name("regularized") == Scenario::Regularized);
    CHECK(scenario_name(Scenario::DiffLr) == "diff_lr");
}

TEST_CASE("short training lowers the discriminator loss and opens a real/fake gap") {
    int improved = 0, separated = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        GanModel m = init_gan(tiny_arch(), seed);
        const auto curves = tiny_curves(16, seed + 50);
        TrainConfig tc = TrainConfig::preset(Scenario::SameLr);
        tc.epochs = 30;
        tc.batch_size = 8;
        tc.seed = seed;
        tc.lr_generator = 1e-3;
        tc.lr_discriminator = 1e-3;
        const auto log = train(m, curves, tc);
        double early = 0.0, late = 0.0;
        for (int i = 0; i < 4; ++i) early += log[static_cast<std::size_t>(i)].d_loss;
        for (int i = 0; i < 4; ++i) late += log[log.size() - 1 - static_cast<std::size_t>(i)].d_loss;
        if (late < early) ++improved;

        double real = 0.0, fake = 0.0;
        for (const double prob : discriminate(m, curves)) real += prob;
        for (const double prob : discriminate(m, generate(m, 16, 123))) fake += prob;
        if ((real - fake) / 16.0 > 0.05) ++separated;
    }
    CHECK(improved >= 4);
    CHECK(separated >= 4);
}

TEST_CASE("checkpoints restore a model that generates bit-identical curves") {
    const std::string path = "/tmp/gpa_test_model.gpt";
    GanModel m = init_gan(tiny_arch(), 12);
    TrainConfig tc = TrainConfig::preset(Scenario::Regularized);
    tc.epochs = 2;
    tc.batch_size = 4;
    m.config = tc;
    m.norm_cap = 1.75;
    m.fingerprint = "deadbeef";
    train(m, tiny_curves(8, 6), tc);

    save_gan(m, path);
    const GanModel back = load_gan(path);
    std::remove(path.c_str());

    CHECK(back.norm_cap == m.norm_cap);
    CHECK(back.fingerprint == m.fingerprint);
    CHECK(back.epoch == m.epoch);
    CHECK(back.config.eta == tc.eta);
    CHECK(back.config.scenario == Scenario::Regularized);
    CHECK(same_params(m, back));
    CHECK(back.opt_d.step == m.opt_d.step);

    const auto a = generate(m, 4, 77);
    const auto b = generate(back, 4, 77);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a[i].values == b[i].values);

    // training resumes identically from a restored checkpoint
    GanModel m2 = back;
    TrainConfig more = tc;
    more.epochs = 1;
    more.seed = 99;
    train(m2, tiny_curves(8, 6), more);
    train(m, tiny_curves(8, 6), more);
    CHECK(snapshot(m2) == snapshot(m));
}

TEST_CASE("periodic checkpointing writes epoch files") {
    namespace fs = std::filesystem;
    const std::string dir = "/tmp/gpa_test_ckpts";
    fs::remove_all(dir);
    fs::create_directories(dir);
    GanModel m = init_gan(tiny_arch(), 13);
    TrainConfig tc = TrainConfig::preset(Scenario::SameLr);
    tc.epochs = 4;
    tc.batch_size = 4;
    tc.checkpoint_every = 2;
    tc.checkpoint_dir = dir;
    train(m, tiny_curves(8, 8), tc);
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        (void)e;
        ++n;
    }
    CHECK(n == 2);
    fs::remove_all(dir);
}

TEST_CASE("curve length mismatches and bad architectures are rejected") {
    GanModel m = init_gan(tiny_arch(), 1);
    CHECK_THROWS_AS((void)discriminate(m, tiny_curves(2, 1, 48)), ShapeError);

    GanArchitecture bad = tiny_arch();
    bad.curve_len = 25; // not base_len * 2^stages
    CHECK_THROWS_AS(bad.validate(), DataError);

    GanArchitecture bad2 = tiny_arch();
    bad2.gen_channels.back() = 3; // generator must emit one channel
    CHECK_THROWS_AS(bad2.validate(), DataError);
}

TEST_CASE("subset fingerprints are order-insensitive and id-sensitive") {
    const auto f1 = subset_fingerprint({"a", "b", "c"});
    const auto f2 = subset_fingerprint({"c", "a", "b"});
    const auto f3 = subset_fingerprint({"a", "b", "d"});
    CHECK(f1 == f2);
    CHECK(f1 != f3);
    CHECK(!f1.empty());
}

TEST_CASE("spectral normalization keeps discriminator weights near unit norm") {
    GanModel m = init_gan(tiny_arch(), 21);
    // inflate a weight so normalization has something to do
    for (std::size_t i = 0; i < m.disc_params[0].value().size(); ++i)
        m.disc_params[0].mutable_value()[i] *= 50.0;
    for (int i = 0; i < 30; ++i) update_spectral_state(m);
    const auto probs = discriminate(m, tiny_curves(3, 2));
    for (const double p : probs) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
        CHECK(std::isfinite(p));
    }
}
