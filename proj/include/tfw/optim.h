#pragma once
// Learnable parameter storage, the two optimizers, the LR schedule, and the
// flat binary checkpoint format.
//
// Every parameter carries a same-shape gradient plus Adam moment slots.
// `decay` marks weights (true) vs biases (false): L2 touches weights only.
// `trainable` lets a frozen backbone ride along in the store untouched.
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tfw/tensor.h"

namespace tfw {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m, v;  // Adam moments, lazily kept at zero until first step
    bool decay = true;
    bool trainable = true;
};

class ParamStore {
  public:
    Param& add(const std::string& name, Tensor value, bool decay = true) {
        if (index_.count(name)) throw StateError("duplicate parameter name: " + name);
        Param p;
        p.name = name;
        p.grad = Tensor(value.shape);
        p.m = Tensor(value.shape);
        p.v = Tensor(value.shape);
        p.value = std::move(value);
        p.decay = decay;
        params_.push_back(std::move(p));
        index_[name] = params_.size() - 1;
        return params_.back();
    }

    Param& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw StateError("no parameter named " + name);
        return params_[it->second];
    }
    const Param& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw StateError("no parameter named " + name);
        return params_[it->second];
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::vector<Param>& all() { return params_; }
    const std::vector<Param>& all() const { return params_; }
    size_t size() const { return params_.size(); }

    int64_t scalar_count() const {
        int64_t n = 0;
        for (const auto& p : params_) n += p.value.numel();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.grad.fill(0.0f);
    }

    // Adam's shared step counter; incremented once per optimizer step.
    int64_t adam_t = 0;

  private:
    std::vector<Param> params_;
    std::unordered_map<std::string, size_t> index_;
};

// ------------------------------------------------------------- schedules

struct LrSchedule {
    enum class Kind { constant, cyclic_triangular };
    Kind kind = Kind::constant;
    double max_lr = 0.0;
    double base_lr = 0.0;
    int64_t cycle_steps = 1;
};

inline LrSchedule constant_lr(double lr) {
    LrSchedule s;
    s.kind = LrSchedule::Kind::constant;
    s.max_lr = lr;
    s.base_lr = lr;
    return s;
}

// triangular wave: base at step 0, peak at cycle_steps/2, base again at
// cycle_steps; base defaults to max/10 at the call sites that build these

inline LrSchedule cyclic_lr(double max_lr, double base_lr, int64_t cycle_steps) {
    if (base_lr > max_lr) throw ConfigError("cyclic lr: base_lr > max_lr");
    if (cycle_steps <= 0) throw ConfigError("cyclic lr: cycle_steps must be positive");
    LrSchedule s;
    s.kind = LrSchedule::Kind::cyclic_triangular;
    s.max_lr = max_lr;
    s.base_lr = base_lr;
    s.cycle_steps = cycle_steps;
    return s;
}

inline double lr_at(const LrSchedule& s, int64_t step) {
    if (s.kind == LrSchedule::Kind::constant) return s.max_lr;
    const double phase = static_cast<double>(step % s.cycle_steps) / static_cast<double>(s.cycle_steps);
    const double tri = 1.0 - std::fabs(1.0 - 2.0 * phase);  // 0 -> 1 -> 0 over one cycle
    return s.base_lr + (s.max_lr - s.base_lr) * tri;
}

// ------------------------------------------------------------ optimizers

inline void sgd_momentum_step(ParamStore& store, double lr, double momentum, double l2) {
    for (auto& p : store.all()) {
        if (!p.trainable) continue;
        const float m = static_cast<float>(momentum);
        const float d = p.decay ? static_cast<float>(l2) : 0.0f;
        const float flr = static_cast<float>(lr);
        float* th = p.value.ptr();
        float* g = p.grad.ptr();
        float* v = p.m.ptr();  // velocity lives in the first moment slot
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            v[i] = m * v[i] + (g[i] + d * th[i]);
            th[i] -= flr * v[i];
        }
    }
}

inline void adam_step(ParamStore& store, double lr, double beta1, double beta2, double eps, double l2) {
    store.adam_t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(store.adam_t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(store.adam_t));
    for (auto& p : store.all()) {
        if (!p.trainable) continue;
        const float d = p.decay ? static_cast<float>(l2) : 0.0f;
        float* th = p.value.ptr();
        float* g = p.grad.ptr();
        float* m = p.m.ptr();
        float* v = p.v.ptr();
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            const double gi = static_cast<double>(g[i]) + static_cast<double>(d) * static_cast<double>(th[i]);
            const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
            const double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            th[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

// ---------------------------------------------------------- checkpoints
// magic "TFW1", version u32, then records: u32 name length, UTF-8 name,
// u32 rank, extents as u64 little-endian, raw little-endian float32 data.

namespace detail {
template <class T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
bool read_le(std::istream& is, T& v) {
    unsigned char buf[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) return false;
    uint64_t acc = 0;
    for (size_t i = 0; i < sizeof(T); ++i) acc |= static_cast<uint64_t>(buf[i]) << (8 * i);
    v = static_cast<T>(acc);
    return true;
}
}  // namespace detail

inline void save_params(const ParamStore& store, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw StateError("cannot open for write: " + path);
    os.write("TFW1", 4);
    detail::write_le<uint32_t>(os, 1);
    for (const auto& p : store.all()) {
        detail::write_le<uint32_t>(os, static_cast<uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        detail::write_le<uint32_t>(os, static_cast<uint32_t>(p.value.rank()));
        for (int64_t d = 0; d < p.value.rank(); ++d)
            detail::write_le<uint64_t>(os, static_cast<uint64_t>(p.value.dim(d)));
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            uint32_t bits;
            const float f = p.value.ptr()[i];
            std::memcpy(&bits, &f, 4);
            detail::write_le<uint32_t>(os, bits);
        }
    }
    if (!os) throw StateError("write failed: " + path);
}

// read to EOF; names/shapes land in a fresh map of tensors

inline std::vector<std::pair<std::string, Tensor>> load_params_raw(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw StateError("cannot open for read: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "TFW1", 4) != 0)
        throw StateError("bad checkpoint magic in " + path);
    uint32_t version = 0;
    if (!detail::read_le(is, version) || version != 1)
        throw StateError("unsupported checkpoint version in " + path);
    std::vector<std::pair<std::string, Tensor>> out;
    uint32_t name_len;
    while (detail::read_le(is, name_len)) {
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw StateError("truncated checkpoint: " + path);
        uint32_t rank;
        if (!detail::read_le(is, rank)) throw StateError("truncated checkpoint: " + path);
        std::vector<int64_t> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) {
            uint64_t e;
            if (!detail::read_le(is, e)) throw StateError("truncated checkpoint: " + path);
            shape[d] = static_cast<int64_t>(e);
        }
        Tensor t(shape);
        for (int64_t i = 0; i < t.numel(); ++i) {
            uint32_t bits;
            if (!detail::read_le(is, bits)) throw StateError("truncated checkpoint: " + path);
            float f;
            std::memcpy(&f, &bits, 4);
            t.ptr()[i] = f;
        }
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

// strict load into an existing store: every stored tensor must match an
// existing parameter's shape; missing/extra names are errors

inline void load_params(ParamStore& store, const std::string& path) {
    auto raw = load_params_raw(path);
    size_t matched = 0;
    for (auto& [name, t] : raw) {
        if (!store.has(name)) throw StateError("checkpoint has unknown parameter: " + name);
        Param& p = store.at(name);
        if (p.value.shape != t.shape)
            throw ShapeError("checkpoint shape " + shape_str(t.shape) + " vs model " +
                             shape_str(p.value.shape) + " for " + name);
        p.value = std::move(t);
        ++matched;
    }
    if (matched != store.size())
        throw StateError("checkpoint covers " + std::to_string(matched) + " of " +
                         std::to_string(store.size()) + " parameters");
}

}  // namespace tfw
