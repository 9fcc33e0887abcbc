#pragma once
// Forward/backward math for every layer. Everything is templated on scalar
// type: training instantiates float, the finite-difference gradient suite
// instantiates double. Backward functions accumulate (+=) into parameter
// gradients and write input gradients.
//
// The MAC counter tracks weight multiply-accumulates of forward passes only;
// elementwise ops, pooling and softmax count zero by convention.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "tfw/opcount.h"
#include "tfw/rng.h"
#include "tfw/tensor.h"

namespace tfw {

template <class T>
inline T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

// ---------------------------------------------------------------- dense
// y = W x + b, W: [dout, din]

template <class T>
void dense_forward(const Ten<T>& W, const Ten<T>& b, const Ten<T>& x, Ten<T>& y) {
    const int64_t dout = W.dim(0), din = W.dim(1);
    if (x.numel() != din)
        throw ShapeError("dense: weight " + shape_str(W.shape) + " vs input " + shape_str(x.shape));
    if (b.numel() != dout)
        throw ShapeError("dense: bias " + shape_str(b.shape) + " vs weight " + shape_str(W.shape));
    if (y.numel() != dout) y = Ten<T>({dout});
    const T* w = W.ptr();
    const T* xv = x.ptr();
    T* yv = y.ptr();
    for (int64_t o = 0; o < dout; ++o) {
        T acc = b.ptr()[o];
        const T* row = w + o * din;
        for (int64_t i = 0; i < din; ++i) acc += row[i] * xv[i];
        yv[o] = acc;
    }
    macs::add(static_cast<uint64_t>(dout * din));
}

template <class T>
void dense_backward(const Ten<T>& W, const Ten<T>& x, const Ten<T>& gy,
                    Ten<T>& gW, Ten<T>& gb, Ten<T>& gx) {
    const int64_t dout = W.dim(0), din = W.dim(1);
    if (gx.numel() != din) gx = Ten<T>({din});
    else gx.fill(T(0));
    const T* w = W.ptr();
    const T* xv = x.ptr();
    const T* g = gy.ptr();
    T* gw = gW.ptr();
    T* gxv = gx.ptr();
    for (int64_t o = 0; o < dout; ++o) {
        const T go = g[o];
        gb.ptr()[o] += go;
        const T* row = w + o * din;
        T* grow = gw + o * din;
        for (int64_t i = 0; i < din; ++i) {
            grow[i] += go * xv[i];
            gxv[i] += row[i] * go;
        }
    }
}

// ---------------------------------------------------------------- conv2d
// cross-correlation, kernels [cout, cin, k, k], input [cin, H, W]

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    const int64_t span = in + 2 * pad - k;
    if (span < 0 || span % stride != 0)
        throw ConfigError("conv: extent " + std::to_string(in) + " with k=" + std::to_string(k) +
                          " stride=" + std::to_string(stride) + " pad=" + std::to_string(pad) +
                          " gives non-integral output");
    return span / stride + 1;
}

template <class T>
void conv2d_forward(const Ten<T>& kern, const Ten<T>& bias, const Ten<T>& x,
                    int64_t stride, int64_t pad, Ten<T>& y) {
    const int64_t cout = kern.dim(0), cin = kern.dim(1), k = kern.dim(2);
    if (kern.dim(3) != k) throw ShapeError("conv: kernel must be square, got " + shape_str(kern.shape));
    if (x.rank() != 3 || x.dim(0) != cin)
        throw ShapeError("conv: kernel " + shape_str(kern.shape) + " vs input " + shape_str(x.shape));
    const int64_t H = x.dim(1), W = x.dim(2);
    const int64_t oh = conv_out_dim(H, k, stride, pad);
    const int64_t ow = conv_out_dim(W, k, stride, pad);
    if (y.rank() != 3 || y.dim(0) != cout || y.dim(1) != oh || y.dim(2) != ow) y = Ten<T>({cout, oh, ow});
    const T* kp = kern.ptr();
    const T* xp = x.ptr();
    T* yp = y.ptr();
    for (int64_t co = 0; co < cout; ++co) {
        const T bv = bias.ptr()[co];
        for (int64_t oy = 0; oy < oh; ++oy) {
            for (int64_t ox = 0; ox < ow; ++ox) {
                T acc = bv;
                for (int64_t ci = 0; ci < cin; ++ci) {
                    const T* kbase = kp + ((co * cin + ci) * k) * k;
                    const T* xbase = xp + ci * H * W;
                    for (int64_t ky = 0; ky < k; ++ky) {
                        const int64_t iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        const T* xrow = xbase + iy * W;
                        const T* krow = kbase + ky * k;
                        for (int64_t kx = 0; kx < k; ++kx) {
                            const int64_t ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= W) continue;
                            acc += krow[kx] * xrow[ix];
                        }
                    }
                }
                yp[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
    macs::add(static_cast<uint64_t>(cout * oh * ow * cin * k * k));
}

template <class T>
void conv2d_backward(const Ten<T>& kern, const Ten<T>& x, const Ten<T>& gy,
                     int64_t stride, int64_t pad,
                     Ten<T>& gkern, Ten<T>& gbias, Ten<T>& gx) {
    const int64_t cout = kern.dim(0), cin = kern.dim(1), k = kern.dim(2);
    const int64_t H = x.dim(1), W = x.dim(2);
    const int64_t oh = gy.dim(1), ow = gy.dim(2);
    if (gx.shape != x.shape) gx = Ten<T>(x.shape);
    else gx.fill(T(0));
    const T* kp = kern.ptr();
    const T* xp = x.ptr();
    const T* gp = gy.ptr();
    T* gkp = gkern.ptr();
    T* gxp = gx.ptr();
    for (int64_t co = 0; co < cout; ++co) {
        T gb = T(0);
        for (int64_t oy = 0; oy < oh; ++oy) {
            for (int64_t ox = 0; ox < ow; ++ox) {
                const T go = gp[(co * oh + oy) * ow + ox];
                gb += go;
                if (go == T(0)) continue;
                for (int64_t ci = 0; ci < cin; ++ci) {
                    T* gkbase = gkp + ((co * cin + ci) * k) * k;
                    const T* kbase = kp + ((co * cin + ci) * k) * k;
                    const T* xbase = xp + ci * H * W;
                    T* gxbase = gxp + ci * H * W;
                    for (int64_t ky = 0; ky < k; ++ky) {
                        const int64_t iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (int64_t kx = 0; kx < k; ++kx) {
                            const int64_t ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= W) continue;
                            gkbase[ky * k + kx] += go * xbase[iy * W + ix];
                            gxbase[iy * W + ix] += go * kbase[ky * k + kx];
                        }
                    }
                }
            }
        }
        gbias.ptr()[co] += gb;
    }
}

// ---------------------------------------------------------------- relu

template <class T>
void relu_forward(const Ten<T>& x, Ten<T>& y) {
    if (y.shape != x.shape) y = Ten<T>(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) y.ptr()[i] = x.ptr()[i] > T(0) ? x.ptr()[i] : T(0);
}

template <class T>
void relu_backward(const Ten<T>& x, const Ten<T>& gy, Ten<T>& gx) {
    if (gx.shape != x.shape) gx = Ten<T>(x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) gx.ptr()[i] = x.ptr()[i] > T(0) ? gy.ptr()[i] : T(0);
}

// ---------------------------------------------------------------- pooling
// non-overlapping grid pools over [C, H, W]; H, W divisible by k

template <class T>
void avgpool2d_forward(const Ten<T>& x, int64_t k, Ten<T>& y) {
    const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (H % k != 0 || W % k != 0)
        throw ConfigError("avgpool: input " + shape_str(x.shape) + " not divisible by k=" + std::to_string(k));
    const int64_t oh = H / k, ow = W / k;
    if (y.rank() != 3 || y.dim(0) != C || y.dim(1) != oh || y.dim(2) != ow) y = Ten<T>({C, oh, ow});
    const T inv = T(1) / T(k * k);
    for (int64_t c = 0; c < C; ++c)
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                T acc = T(0);
                for (int64_t dy = 0; dy < k; ++dy)
                    for (int64_t dx = 0; dx < k; ++dx) acc += x.ptr()[(c * H + oy * k + dy) * W + ox * k + dx];
                y.ptr()[(c * oh + oy) * ow + ox] = acc * inv;
            }
}

template <class T>
void avgpool2d_backward(const Ten<T>& x, int64_t k, const Ten<T>& gy, Ten<T>& gx) {
    const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int64_t oh = H / k, ow = W / k;
    if (gx.shape != x.shape) gx = Ten<T>(x.shape);
    else gx.fill(T(0));
    const T inv = T(1) / T(k * k);
    for (int64_t c = 0; c < C; ++c)
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                const T g = gy.ptr()[(c * oh + oy) * ow + ox] * inv;
                for (int64_t dy = 0; dy < k; ++dy)
                    for (int64_t dx = 0; dx < k; ++dx) gx.ptr()[(c * H + oy * k + dy) * W + ox * k + dx] += g;
            }
}

template <class T>
void maxpool2d_forward(const Ten<T>& x, int64_t k, Ten<T>& y, std::vector<int64_t>& argmax) {
    const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (H % k != 0 || W % k != 0)
        throw ConfigError("maxpool: input " + shape_str(x.shape) + " not divisible by k=" + std::to_string(k));
    const int64_t oh = H / k, ow = W / k;
    if (y.rank() != 3 || y.dim(0) != C || y.dim(1) != oh || y.dim(2) != ow) y = Ten<T>({C, oh, ow});
    argmax.assign(static_cast<size_t>(C * oh * ow), 0);
    for (int64_t c = 0; c < C; ++c)
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                T best = x.ptr()[(c * H + oy * k) * W + ox * k];
                int64_t besti = (c * H + oy * k) * W + ox * k;
                for (int64_t dy = 0; dy < k; ++dy)
                    for (int64_t dx = 0; dx < k; ++dx) {
                        const int64_t idx = (c * H + oy * k + dy) * W + ox * k + dx;
                        if (x.ptr()[idx] > best) {
                            best = x.ptr()[idx];
                            besti = idx;
                        }
                    }
                y.ptr()[(c * oh + oy) * ow + ox] = best;
                argmax[static_cast<size_t>((c * oh + oy) * ow + ox)] = besti;
            }
}

template <class T>
void maxpool2d_backward(const Ten<T>& x, int64_t k, const Ten<T>& gy,
                        const std::vector<int64_t>& argmax, Ten<T>& gx) {
    (void)k;  // kept for symmetry with the forward signature
    if (gx.shape != x.shape) gx = Ten<T>(x.shape);
    else gx.fill(T(0));
    for (int64_t i = 0; i < gy.numel(); ++i) gx.ptr()[argmax[static_cast<size_t>(i)]] += gy.ptr()[i];
}

// global average pool: [C, H, W] -> [C]

template <class T>
void global_avg_pool_forward(const Ten<T>& x, Ten<T>& y) {
    const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (y.numel() != C) y = Ten<T>({C});
    const T inv = T(1) / T(H * W);
    for (int64_t c = 0; c < C; ++c) {
        T acc = T(0);
        const T* base = x.ptr() + c * H * W;
        for (int64_t i = 0; i < H * W; ++i) acc += base[i];
        y.ptr()[c] = acc * inv;
    }
}

template <class T>
void global_avg_pool_backward(const Ten<T>& x, const Ten<T>& gy, Ten<T>& gx) {
    const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (gx.shape != x.shape) gx = Ten<T>(x.shape);
    const T inv = T(1) / T(H * W);
    for (int64_t c = 0; c < C; ++c) {
        const T g = gy.ptr()[c] * inv;
        T* base = gx.ptr() + c * H * W;
        for (int64_t i = 0; i < H * W; ++i) base[i] = g;
    }
}

// ---------------------------------------------------------------- dropout
// inverted dropout: kept units scaled by 1/(1-p) at train time. The mask is
// drawn once per call; eval mode is the identity.

template <class T>
void dropout_forward(const Ten<T>& x, double p, bool training, Rng* rng, Ten<T>& y, Ten<T>& mask) {
    if (y.shape != x.shape) y = Ten<T>(x.shape);
    if (mask.shape != x.shape) mask = Ten<T>(x.shape);
    if (!training || p <= 0.0) {
        mask.fill(T(1));
        y.data = x.data;
        return;
    }
    if (p >= 1.0) throw ConfigError("dropout probability must be < 1, got " + std::to_string(p));
    const T scale = T(1.0 / (1.0 - p));
    for (int64_t i = 0; i < x.numel(); ++i) {
        const T m = rng->uniform() < p ? T(0) : scale;
        mask.ptr()[i] = m;
        y.ptr()[i] = x.ptr()[i] * m;
    }
}

template <class T>
void dropout_backward(const Ten<T>& mask, const Ten<T>& gy, Ten<T>& gx) {
    if (gx.shape != gy.shape) gx = Ten<T>(gy.shape);
    for (int64_t i = 0; i < gy.numel(); ++i) gx.ptr()[i] = gy.ptr()[i] * mask.ptr()[i];
}

// ---------------------------------------------------------------- GRU cell
// z = sigmoid(Wz x + Uz h + bz)
// r = sigmoid(Wr x + Ur h + br)
// hh = tanh(Wh x + Uh (r*h) + bh)
// h' = (1-z)*h + z*hh

template <class T>
struct GruParamsRef {
    const Ten<T>&Wz, &Uz, &bz, &Wr, &Ur, &br, &Wh, &Uh, &bh;
};

template <class T>
struct GruGradsRef {
    Ten<T>&Wz, &Uz, &bz, &Wr, &Ur, &br, &Wh, &Uh, &bh;
};

template <class T>
struct GruCache {
    Ten<T> x, h_prev, z, r, hh, rh;  // rh = r*h_prev
};

template <class T>
void gru_cell_forward(const GruParamsRef<T>& p, const Ten<T>& x, const Ten<T>& h_prev,
                      Ten<T>& h_out, GruCache<T>* cache) {
    const int64_t H = p.Wz.dim(0), D = p.Wz.dim(1);
    if (x.numel() != D || h_prev.numel() != H)
        throw ShapeError("gru: Wz " + shape_str(p.Wz.shape) + " vs x " + shape_str(x.shape) +
                         " h " + shape_str(h_prev.shape));
    Ten<T> z({H}), r({H}), hh({H}), rh({H});
    const T* xv = x.ptr();
    const T* hv = h_prev.ptr();
    for (int64_t i = 0; i < H; ++i) {
        T az = p.bz.ptr()[i], ar = p.br.ptr()[i];
        const T* wzr = p.Wz.ptr() + i * D;
        const T* wrr = p.Wr.ptr() + i * D;
        for (int64_t j = 0; j < D; ++j) {
            az += wzr[j] * xv[j];
            ar += wrr[j] * xv[j];
        }
        const T* uzr = p.Uz.ptr() + i * H;
        const T* urr = p.Ur.ptr() + i * H;
        for (int64_t j = 0; j < H; ++j) {
            az += uzr[j] * hv[j];
            ar += urr[j] * hv[j];
        }
        z.ptr()[i] = sigmoid(az);
        r.ptr()[i] = sigmoid(ar);
    }
    for (int64_t i = 0; i < H; ++i) rh.ptr()[i] = r.ptr()[i] * hv[i];
    for (int64_t i = 0; i < H; ++i) {
        T ah = p.bh.ptr()[i];
        const T* whr = p.Wh.ptr() + i * D;
        for (int64_t j = 0; j < D; ++j) ah += whr[j] * xv[j];
        const T* uhr = p.Uh.ptr() + i * H;
        for (int64_t j = 0; j < H; ++j) ah += uhr[j] * rh.ptr()[j];
        hh.ptr()[i] = std::tanh(ah);
    }
    if (h_out.numel() != H) h_out = Ten<T>({H});
    for (int64_t i = 0; i < H; ++i)
        h_out.ptr()[i] = (T(1) - z.ptr()[i]) * hv[i] + z.ptr()[i] * hh.ptr()[i];
    macs::add(static_cast<uint64_t>(3 * (H * D + H * H)));
    if (cache) {
        cache->x = x;
        cache->h_prev = h_prev;
        cache->z = std::move(z);
        cache->r = std::move(r);
        cache->hh = std::move(hh);
        cache->rh = std::move(rh);
    }
}

template <class T>
void gru_cell_backward(const GruParamsRef<T>& p, const GruCache<T>& c, const Ten<T>& gh_out,
                       GruGradsRef<T> g, Ten<T>& gx, Ten<T>& gh_prev) {
    const int64_t H = p.Wz.dim(0), D = p.Wz.dim(1);
    const T* hv = c.h_prev.ptr();
    const T* xv = c.x.ptr();
    Ten<T> daz({H}), dar({H}), dah({H}), drh({H});
    if (gx.numel() != D) gx = Ten<T>({D});
    else gx.fill(T(0));
    if (gh_prev.numel() != H) gh_prev = Ten<T>({H});
    else gh_prev.fill(T(0));

    // through the blend h' = (1-z) h + z hh
    for (int64_t i = 0; i < H; ++i) {
        const T go = gh_out.ptr()[i];
        const T z = c.z.ptr()[i], hh = c.hh.ptr()[i];
        const T dz = go * (hh - hv[i]);
        daz.ptr()[i] = dz * z * (T(1) - z);
        dah.ptr()[i] = go * z * (T(1) - hh * hh);
        gh_prev.ptr()[i] += go * (T(1) - z);
    }
    // through hh = tanh(Wh x + Uh rh + bh)
    for (int64_t i = 0; i < H; ++i) {
        const T d = dah.ptr()[i];
        g.bh.ptr()[i] += d;
        T* gwh = g.Wh.ptr() + i * D;
        for (int64_t j = 0; j < D; ++j) {
            gwh[j] += d * xv[j];
            gx.ptr()[j] += p.Wh.ptr()[i * D + j] * d;
        }
        T* guh = g.Uh.ptr() + i * H;
        for (int64_t j = 0; j < H; ++j) guh[j] += d * c.rh.ptr()[j];
    }
    for (int64_t j = 0; j < H; ++j) {
        T acc = T(0);
        for (int64_t i = 0; i < H; ++i) acc += p.Uh.ptr()[i * H + j] * dah.ptr()[i];
        drh.ptr()[j] = acc;
    }
    // rh = r * h_prev
    for (int64_t i = 0; i < H; ++i) {
        const T r = c.r.ptr()[i];
        const T dr = drh.ptr()[i] * hv[i];
        dar.ptr()[i] = dr * r * (T(1) - r);
        gh_prev.ptr()[i] += drh.ptr()[i] * r;
    }
    // gates z and r
    for (int64_t i = 0; i < H; ++i) {
        const T dz = daz.ptr()[i], dr = dar.ptr()[i];
        g.bz.ptr()[i] += dz;
        g.br.ptr()[i] += dr;
        T* gwz = g.Wz.ptr() + i * D;
        T* gwr = g.Wr.ptr() + i * D;
        for (int64_t j = 0; j < D; ++j) {
            gwz[j] += dz * xv[j];
            gwr[j] += dr * xv[j];
            gx.ptr()[j] += p.Wz.ptr()[i * D + j] * dz + p.Wr.ptr()[i * D + j] * dr;
        }
        T* guz = g.Uz.ptr() + i * H;
        T* gur = g.Ur.ptr() + i * H;
        for (int64_t j = 0; j < H; ++j) {
            guz[j] += dz * hv[j];
            gur[j] += dr * hv[j];
            gh_prev.ptr()[j] += p.Uz.ptr()[i * H + j] * dz + p.Ur.ptr()[i * H + j] * dr;
        }
    }
}

// ------------------------------------------------- softmax cross-entropy
// max-subtraction for stability; probs returned for reuse in the backward

template <class T>
void softmax_xent_forward(const Ten<T>& logits, int64_t label, T& loss, Ten<T>& probs) {
    const int64_t C = logits.numel();
    if (label < 0 || label >= C)
        throw std::out_of_range("label " + std::to_string(label) + " out of [0," + std::to_string(C) + ")");
    if (probs.numel() != C) probs = Ten<T>({C});
    T mx = logits.ptr()[0];
    for (int64_t i = 1; i < C; ++i) mx = std::max(mx, logits.ptr()[i]);
    T sum = T(0);
    for (int64_t i = 0; i < C; ++i) {
        const T e = std::exp(logits.ptr()[i] - mx);
        probs.ptr()[i] = e;
        sum += e;
    }
    const T inv = T(1) / sum;
    for (int64_t i = 0; i < C; ++i) probs.ptr()[i] *= inv;
    loss = -std::log(std::max(probs.ptr()[label], std::numeric_limits<T>::min()));
}

// gradient of (loss * gscale) wrt logits

template <class T>
void softmax_xent_backward(const Ten<T>& probs, int64_t label, T gscale, Ten<T>& glogits) {
    const int64_t C = probs.numel();
    if (glogits.numel() != C) glogits = Ten<T>({C});
    for (int64_t i = 0; i < C; ++i) glogits.ptr()[i] = probs.ptr()[i] * gscale;
    glogits.ptr()[label] -= gscale;
}

// plain softmax over a vector (used by mean-voting and attention rows)

template <class T>
void softmax_inplace(T* v, int64_t n) {
    T mx = v[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
    T sum = T(0);
    for (int64_t i = 0; i < n; ++i) {
        v[i] = std::exp(v[i] - mx);
        sum += v[i];
    }
    const T inv = T(1) / sum;
    for (int64_t i = 0; i < n; ++i) v[i] *= inv;
}

// ------------------------------------------- multi-head self-attention
// tokens X: [S, dt]; Wq/Wk/Wv/Wo: [dt, dt] with biases; n_heads | dt.
// out[s] = Wo * concat_h( sum_j softmax_j(q_s . k_j / sqrt(dh)) * v_j ) + bo

template <class T>
struct MhsaParamsRef {
    const Ten<T>&Wq, &bq, &Wk, &bk, &Wv, &bv, &Wo, &bo;
    int64_t n_heads;
};

template <class T>
struct MhsaGradsRef {
    Ten<T>&Wq, &bq, &Wk, &bk, &Wv, &bv, &Wo, &bo;
};

template <class T>
struct MhsaCache {
    Ten<T> x, q, k, v, attn, ctx;  // attn: [n_heads, S, S]; others [S, dt]
};

template <class T>
void mhsa_forward(const MhsaParamsRef<T>& p, const Ten<T>& x, Ten<T>& out, MhsaCache<T>* cache) {
    const int64_t S = x.dim(0), dt = x.dim(1);
    if (p.Wq.dim(0) != dt || p.Wq.dim(1) != dt)
        throw ShapeError("attention: Wq " + shape_str(p.Wq.shape) + " vs tokens " + shape_str(x.shape));
    if (dt % p.n_heads != 0)
        throw ConfigError("attention: token_dim " + std::to_string(dt) + " not divisible by n_heads " +
                          std::to_string(p.n_heads));
    const int64_t nh = p.n_heads, dh = dt / nh;
    Ten<T> q({S, dt}), k({S, dt}), v({S, dt}), ctx({S, dt}), attn({nh, S, S});
    Ten<T> row({dt}), tmp({dt});
    for (int64_t s = 0; s < S; ++s) {
        for (int64_t i = 0; i < dt; ++i) row.ptr()[i] = x.ptr()[s * dt + i];
        dense_forward(p.Wq, p.bq, row, tmp);
        for (int64_t i = 0; i < dt; ++i) q.ptr()[s * dt + i] = tmp.ptr()[i];
        dense_forward(p.Wk, p.bk, row, tmp);
        for (int64_t i = 0; i < dt; ++i) k.ptr()[s * dt + i] = tmp.ptr()[i];
        dense_forward(p.Wv, p.bv, row, tmp);
        for (int64_t i = 0; i < dt; ++i) v.ptr()[s * dt + i] = tmp.ptr()[i];
    }
    const T inv_sqrt = T(1) / std::sqrt(T(dh));
    for (int64_t h = 0; h < nh; ++h) {
        const int64_t off = h * dh;
        for (int64_t i = 0; i < S; ++i) {
            T* arow = attn.ptr() + (h * S + i) * S;
            for (int64_t j = 0; j < S; ++j) {
                T acc = T(0);
                for (int64_t d = 0; d < dh; ++d) acc += q.ptr()[i * dt + off + d] * k.ptr()[j * dt + off + d];
                arow[j] = acc * inv_sqrt;
            }
            softmax_inplace(arow, S);
            for (int64_t d = 0; d < dh; ++d) {
                T acc = T(0);
                for (int64_t j = 0; j < S; ++j) acc += arow[j] * v.ptr()[j * dt + off + d];
                ctx.ptr()[i * dt + off + d] = acc;
            }
        }
    }
    macs::add(static_cast<uint64_t>(2 * nh * S * S * dh));  // scores + context
    if (out.rank() != 2 || out.dim(0) != S || out.dim(1) != dt) out = Ten<T>({S, dt});
    for (int64_t s = 0; s < S; ++s) {
        for (int64_t i = 0; i < dt; ++i) row.ptr()[i] = ctx.ptr()[s * dt + i];
        dense_forward(p.Wo, p.bo, row, tmp);
        for (int64_t i = 0; i < dt; ++i) out.ptr()[s * dt + i] = tmp.ptr()[i];
    }
    if (cache) {
        cache->x = x;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->attn = std::move(attn);
        cache->ctx = std::move(ctx);
    }
}

template <class T>
void mhsa_backward(const MhsaParamsRef<T>& p, const MhsaCache<T>& c, const Ten<T>& gout,
                   MhsaGradsRef<T> g, Ten<T>& gx) {
    const int64_t S = c.x.dim(0), dt = c.x.dim(1);
    const int64_t nh = p.n_heads, dh = dt / nh;
    if (gx.shape != c.x.shape) gx = Ten<T>(c.x.shape);
    else gx.fill(T(0));
    Ten<T> gctx({S, dt}), gq({S, dt}), gk({S, dt}), gv({S, dt});
    Ten<T> grow({dt}), row({dt}), gin({dt});
    // out = Wo ctx + bo
    for (int64_t s = 0; s < S; ++s) {
        for (int64_t i = 0; i < dt; ++i) {
            row.ptr()[i] = c.ctx.ptr()[s * dt + i];
            grow.ptr()[i] = gout.ptr()[s * dt + i];
        }
        dense_backward(p.Wo, row, grow, g.Wo, g.bo, gin);
        for (int64_t i = 0; i < dt; ++i) gctx.ptr()[s * dt + i] = gin.ptr()[i];
    }
    const T inv_sqrt = T(1) / std::sqrt(T(dh));
    Ten<T> ga({S});
    for (int64_t h = 0; h < nh; ++h) {
        const int64_t off = h * dh;
        for (int64_t i = 0; i < S; ++i) {
            const T* arow = c.attn.ptr() + (h * S + i) * S;
            // context: ctx_i = sum_j a_ij v_j
            for (int64_t j = 0; j < S; ++j) {
                T acc = T(0);
                for (int64_t d = 0; d < dh; ++d) acc += gctx.ptr()[i * dt + off + d] * c.v.ptr()[j * dt + off + d];
                ga.ptr()[j] = acc;
                for (int64_t d = 0; d < dh; ++d)
                    gv.ptr()[j * dt + off + d] += arow[j] * gctx.ptr()[i * dt + off + d];
            }
            // softmax row
            T dot = T(0);
            for (int64_t j = 0; j < S; ++j) dot += ga.ptr()[j] * arow[j];
            for (int64_t j = 0; j < S; ++j) {
                const T gs = arow[j] * (ga.ptr()[j] - dot) * inv_sqrt;
                for (int64_t d = 0; d < dh; ++d) {
                    gq.ptr()[i * dt + off + d] += gs * c.k.ptr()[j * dt + off + d];
                    gk.ptr()[j * dt + off + d] += gs * c.q.ptr()[i * dt + off + d];
                }
            }
        }
    }
    // back through the three projections
    for (int64_t s = 0; s < S; ++s) {
        for (int64_t i = 0; i < dt; ++i) row.ptr()[i] = c.x.ptr()[s * dt + i];
        for (int64_t i = 0; i < dt; ++i) grow.ptr()[i] = gq.ptr()[s * dt + i];
        dense_backward(p.Wq, row, grow, g.Wq, g.bq, gin);
        for (int64_t i = 0; i < dt; ++i) gx.ptr()[s * dt + i] += gin.ptr()[i];
        for (int64_t i = 0; i < dt; ++i) grow.ptr()[i] = gk.ptr()[s * dt + i];
        dense_backward(p.Wk, row, grow, g.Wk, g.bk, gin);
        for (int64_t i = 0; i < dt; ++i) gx.ptr()[s * dt + i] += gin.ptr()[i];
        for (int64_t i = 0; i < dt; ++i) grow.ptr()[i] = gv.ptr()[s * dt + i];
        dense_backward(p.Wv, row, grow, g.Wv, g.bv, gin);
        for (int64_t i = 0; i < dt; ++i) gx.ptr()[s * dt + i] += gin.ptr()[i];
    }
}

}  // namespace tfw
