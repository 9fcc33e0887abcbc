#pragma once
// The feature weave: a parameter-free re-layout of a stack of per-frame
// feature vectors. Row k of the output is the concatenation of the k-th
// chunk of every frame, so one output row juxtaposes the same feature slice
// across all time steps:
//
//   in  [N, D], K rows, chunk = D/K  (K must divide D)
//   out [K, N*chunk],  out[k][i*chunk + c] = in[i][k*chunk + c]
//
// Pure data movement: zero multiply-accumulates, and as a permutation its
// gradient is the inverse permutation (unweave). With K == N and N | D the
// transform is an involution: weaving twice restores the input.
#include "tfw/tensor.h"

namespace tfw {

inline void weave_check(int64_t N, int64_t D, int64_t K) {
    if (N <= 0 || D <= 0) throw ShapeError("weave: empty input");
    if (K <= 0 || D % K != 0)
        throw ConfigError("weave: K=" + std::to_string(K) + " must divide feature dim D=" + std::to_string(D));
}

template <class T>
Ten<T> weave(const Ten<T>& in, int64_t K) {
    if (in.rank() != 2) throw ShapeError("weave: expected [N, D], got " + shape_str(in.shape));
    const int64_t N = in.dim(0), D = in.dim(1);
    weave_check(N, D, K);
    const int64_t chunk = D / K;
    Ten<T> out({K, N * chunk});
    for (int64_t k = 0; k < K; ++k)
        for (int64_t i = 0; i < N; ++i)
            for (int64_t c = 0; c < chunk; ++c)
                out.ptr()[k * (N * chunk) + i * chunk + c] = in.ptr()[i * D + k * chunk + c];
    return out;
}

// exact inverse: unweave(weave(F, K), N, D, K) == F for every valid (N, D, K)

template <class T>
Ten<T> unweave(const Ten<T>& wov, int64_t N, int64_t D, int64_t K) {
    weave_check(N, D, K);
    const int64_t chunk = D / K;
    if (wov.rank() != 2 || wov.dim(0) != K || wov.dim(1) != N * chunk)
        throw ShapeError("unweave: got " + shape_str(wov.shape) + " for N=" + std::to_string(N) +
                         " D=" + std::to_string(D) + " K=" + std::to_string(K));
    Ten<T> out({N, D});
    for (int64_t k = 0; k < K; ++k)
        for (int64_t i = 0; i < N; ++i)
            for (int64_t c = 0; c < chunk; ++c)
                out.ptr()[i * D + k * chunk + c] = wov.ptr()[k * (N * chunk) + i * chunk + c];
    return out;
}

}  // namespace tfw
