#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tfw/optim.h"
#include "tfw/rng.h"

using namespace tfw;
namespace fs = std::filesystem;

namespace {

std::string temp_file(const char* stem) {
    static int counter = 0;
    return (fs::temp_directory_path() / (std::string(stem) + "_" + std::to_string(::getpid()) + "_" +
                                         std::to_string(counter++) + ".bin"))
        .string();
}

}  // namespace

TEST_CASE("cyclic schedule hits base at cycle start and max at midpoint") {
    const LrSchedule s = cyclic_lr(0.1, 0.01, 100);
    CHECK(lr_at(s, 0) == doctest::Approx(0.01));
    CHECK(lr_at(s, 50) == doctest::Approx(0.1));
    CHECK(lr_at(s, 100) == doctest::Approx(0.01));  // wraps
    CHECK(lr_at(s, 25) == doctest::Approx(0.055));  // linear ramp
    CHECK(lr_at(s, 75) == doctest::Approx(0.055));  // symmetric descent

    const LrSchedule c = constant_lr(0.02);
    for (int64_t step : {0, 7, 1000}) CHECK(lr_at(c, step) == 0.02);

    CHECK_THROWS_AS(cyclic_lr(0.01, 0.1, 100), ConfigError);
    CHECK_THROWS_AS(cyclic_lr(0.1, 0.01, 0), ConfigError);
}

TEST_CASE("sgd momentum matches a hand trace") {
    ParamStore ps;
    ps.add("w", Tensor::full({1}, 1.0f), /*decay=*/true);
    Param& w = ps.at("w");

    // step 1: g=0.5, l2=0.1 -> v = 0.5 + 0.1*1.0 = 0.6, w = 1 - 0.1*0.6 = 0.94
    w.grad.ptr()[0] = 0.5f;
    sgd_momentum_step(ps, 0.1, 0.9, 0.1);
    CHECK(w.value.ptr()[0] == doctest::Approx(0.94).epsilon(1e-6));

    // step 2: g=0.2 -> v = 0.9*0.6 + (0.2 + 0.1*0.94) = 0.834, w = 0.94 - 0.0834
    w.grad.ptr()[0] = 0.2f;
    sgd_momentum_step(ps, 0.1, 0.9, 0.1);
    CHECK(w.value.ptr()[0] == doctest::Approx(0.94 - 0.0834).epsilon(1e-6));
}

TEST_CASE("adam matches a hand trace with bias correction") {
    ParamStore ps;
    ps.add("w", Tensor::full({1}, 0.0f), /*decay=*/false);
    Param& w = ps.at("w");
    const double b1 = 0.75, b2 = 0.999, eps = 1e-8, lr = 0.01;

    // with w=0 and no decay the effective gradient is exactly g
    w.grad.ptr()[0] = 1.0f;
    adam_step(ps, lr, b1, b2, eps, 0.0);
    // m=(1-b1)g, v=(1-b2)g^2; mhat=g, vhat=g^2 -> step = lr*g/(|g|+eps)
    CHECK(w.value.ptr()[0] == doctest::Approx(-lr).epsilon(1e-5));
    CHECK(ps.adam_t == 1);

    double m = (1 - b1) * 1.0, v = (1 - b2) * 1.0, th = -lr;
    w.grad.ptr()[0] = -0.5f;
    m = b1 * m + (1 - b1) * -0.5;
    v = b2 * v + (1 - b2) * 0.25;
    const double mhat = m / (1 - b1 * b1), vhat = v / (1 - b2 * b2);
    th -= lr * mhat / (std::sqrt(vhat) + eps);
    adam_step(ps, lr, b1, b2, eps, 0.0);
    CHECK(w.value.ptr()[0] == doctest::Approx(th).epsilon(1e-5));
    CHECK(ps.adam_t == 2);
}

TEST_CASE("decay skips biases and trainable gates updates") {
    ParamStore ps;
    ps.add("w", Tensor::full({2, 2}, 1.0f), true);
    ps.add("b", Tensor::full({2}, 1.0f), false);
    ps.at("w").grad.fill(0.0f);
    ps.at("b").grad.fill(0.0f);
    // zero grad, pure decay: only the weight moves
    sgd_momentum_step(ps, 0.1, 0.0, 0.5);
    CHECK(ps.at("w").value.ptr()[0] == doctest::Approx(1.0 - 0.1 * 0.5));
    CHECK(ps.at("b").value.ptr()[0] == 1.0f);

    ps.at("w").trainable = false;
    ps.at("w").grad.fill(1.0f);
    const float before = ps.at("w").value.ptr()[0];
    sgd_momentum_step(ps, 0.1, 0.0, 0.0);
    CHECK(ps.at("w").value.ptr()[0] == before);

    adam_step(ps, 0.1, 0.9, 0.999, 1e-8, 0.0);
    CHECK(ps.at("w").value.ptr()[0] == before);
}

TEST_CASE("store rejects duplicates and unknown names") {
    ParamStore ps;
    ps.add("a", Tensor({2}));
    CHECK_THROWS_AS(ps.add("a", Tensor({2})), StateError);
    CHECK_THROWS_AS(ps.at("missing"), StateError);
    CHECK(ps.has("a"));
    CHECK(!ps.has("b"));
    CHECK(ps.scalar_count() == 2);
}

TEST_CASE("checkpoint round trip is bitwise exact") {
    Rng rng(77);
    ParamStore ps;
    for (const char* name : {"layer.w", "layer.b", "head.w"}) {
        Tensor t({3, 4});
        for (int64_t i = 0; i < t.numel(); ++i) t.ptr()[i] = static_cast<float>(rng.normal());
        ps.add(name, std::move(t));
    }
    const std::string path = temp_file("ckpt");
    save_params(ps, path);

    ParamStore ps2;
    for (const char* name : {"layer.w", "layer.b", "head.w"}) ps2.add(name, Tensor({3, 4}));
    load_params(ps2, path);
    for (const auto& p : ps.all()) {
        const Param& q = ps2.at(p.name);
        REQUIRE(q.value.shape == p.value.shape);
        for (int64_t i = 0; i < p.value.numel(); ++i) CHECK(q.value.ptr()[i] == p.value.ptr()[i]);
    }
    fs::remove(path);
}

TEST_CASE("strict load rejects mismatches") {
    ParamStore ps;
    ps.add("w", Tensor::full({2, 2}, 1.0f));
    const std::string path = temp_file("strict");
    save_params(ps, path);

    ParamStore wrong_shape;
    wrong_shape.add("w", Tensor({4}));
    CHECK_THROWS_AS(load_params(wrong_shape, path), ShapeError);

    ParamStore unknown;
    unknown.add("other", Tensor({2, 2}));
    CHECK_THROWS_AS(load_params(unknown, path), StateError);

    ParamStore partial;
    partial.add("w", Tensor({2, 2}));
    partial.add("extra", Tensor({1}));
    CHECK_THROWS_AS(load_params(partial, path), StateError);  // incomplete coverage

    // corrupt magic
    std::ofstream bad(path, std::ios::binary);
    bad << "NOPE";
    bad.close();
    ParamStore any;
    any.add("w", Tensor({2, 2}));
    CHECK_THROWS_AS(load_params(any, path), StateError);
    fs::remove(path);
}

TEST_CASE("zero_grad clears every slot") {
    ParamStore ps;
    ps.add("w", Tensor({3}));
    ps.at("w").grad.fill(2.0f);
    ps.zero_grad();
    for (int64_t i = 0; i < 3; ++i) CHECK(ps.at("w").grad.ptr()[i] == 0.0f);
}
