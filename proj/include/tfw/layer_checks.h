#pragma once
// Finite-difference check cases for every differentiable layer, shared by
// the test suite and the `gradcheck` CLI subcommand. Each case packages a
// scalar loss function over a set of input tensors together with its
// analytic gradients; gradcheck.h does the numeric probing.
#include <cstdint>
#include <string>
#include <vector>

#include "tfw/gradcheck.h"

namespace tfw {

struct LayerCase {
    CheckFn fn;
    std::vector<DTensor> inputs;
    std::vector<std::string> names;
};

struct LayerCheck {
    std::string name;
    LayerCase (*make)(uint64_t seed);
};

// dense, conv, relu, avg/max pooling, global pooling, dropout (inference
// path), GRU cell, softmax-cross-entropy, multi-head self-attention
const std::vector<LayerCheck>& standard_layer_checks();

// Run every standard check over `seeds` seeds; returns the worst relative
// error seen per layer, in the same order as standard_layer_checks().
std::vector<double> run_layer_checks(int seeds, double eps = 1e-5);

}  // namespace tfw
