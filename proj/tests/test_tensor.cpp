#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "tfw/opcount.h"
#include "tfw/rng.h"
#include "tfw/tensor.h"

using namespace tfw;

TEST_CASE("tensor construction and element access") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.dim(0) == 2);
    CHECK(t.dim(1) == 3);
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(t.ptr()[i] == 0.0f);

    t.at(1, 2) = 5.0f;
    CHECK(t.at(1, 2) == 5.0f);
    CHECK(t.ptr()[5] == 5.0f);  // row-major layout

    const Tensor f = Tensor::full({4}, 2.5f);
    for (int64_t i = 0; i < 4; ++i) CHECK(f.at(i) == 2.5f);
}

TEST_CASE("tensor shape and bounds violations") {
    CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({-1}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0f, 2.0f}), ShapeError);

    Tensor t({2, 3});
    CHECK_THROWS_AS(t.at(5), ShapeError);            // wrong rank
    CHECK_THROWS_AS(t.at(2, 0), std::out_of_range);  // row out of range
    CHECK_THROWS_AS(t.at(0, 3), std::out_of_range);
    CHECK_THROWS_AS(t.at(0, 0, 0), ShapeError);
    CHECK_THROWS_AS(t.dim(2), std::out_of_range);
}

TEST_CASE("shape_str formats extents") {
    CHECK(shape_str({4, 8}) == "(4,8)");
    CHECK(shape_str({}) == "()");
}

TEST_CASE("rank 1 through 4 indexing agrees with row-major strides") {
    Ten<double> t4({2, 3, 4, 5});
    for (int64_t i = 0; i < t4.numel(); ++i) t4.ptr()[i] = static_cast<double>(i);
    CHECK(t4.at(1, 2, 3, 4) == static_cast<double>(((1 * 3 + 2) * 4 + 3) * 5 + 4));

    Ten<double> t3({3, 4, 5});
    for (int64_t i = 0; i < t3.numel(); ++i) t3.ptr()[i] = static_cast<double>(i);
    CHECK(t3.at(2, 1, 3) == static_cast<double>((2 * 4 + 1) * 5 + 3));
}

TEST_CASE("rng streams are deterministic and seed-sensitive") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const double va = a.uniform();
        CHECK(va == b.uniform());
        CHECK(va >= 0.0);
        CHECK(va < 1.0);
    }
    bool any_diff = false;
    Rng a2(42);
    for (int i = 0; i < 100; ++i) any_diff = any_diff || (a2.uniform() != c.uniform());
    CHECK(any_diff);
}

TEST_CASE("uniform_int stays in range and covers it") {
    Rng rng(7);
    std::set<int64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const int64_t v = rng.uniform_int(5);
        CHECK(v >= 0);
        CHECK(v < 5);
        seen.insert(v);
    }
    CHECK(seen.size() == 5);
}

TEST_CASE("normal draws match the target moments") {
    Rng rng(11);
    const int n = 50000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal(2.0, 3.0);
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(mean == doctest::Approx(2.0).epsilon(0.05));
    CHECK(std::sqrt(var) == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("permutation is a bijection on 0..n-1") {
    Rng rng(3);
    const auto p = rng.permutation(50);
    std::set<int64_t> seen(p.begin(), p.end());
    CHECK(p.size() == 50);
    CHECK(seen.size() == 50);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 49);
}

TEST_CASE("seed_for separates streams") {
    CHECK(seed_for(1, 2, 3) != seed_for(1, 2, 4));
    CHECK(seed_for(1, 2, 3) != seed_for(1, 3, 2));
    CHECK(seed_for(1, 2, 3) != seed_for(2, 2, 3));
    CHECK(seed_for(1, 2, 3) == seed_for(1, 2, 3));
}

TEST_CASE("mac counter accumulates and resets per thread") {
    macs::reset();
    CHECK(macs::get() == 0);
    macs::add(10);
    macs::add(5);
    CHECK(macs::get() == 15);
    macs::reset();
    CHECK(macs::get() == 0);
}
