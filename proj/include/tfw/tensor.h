#pragma once
// Dense row-major tensors. Double precision is used by the gradient checks,
// single precision by training; the template keeps one implementation.
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tfw {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline int64_t numel_of(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
        if (e <= 0) throw ShapeError("tensor extent must be positive, got " + std::to_string(e));
        n *= e;
    }
    return n;
}

inline std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

template <class T>
struct Ten {
    std::vector<int64_t> shape;
    std::vector<T> data;

    Ten() = default;
    explicit Ten(std::vector<int64_t> s) : shape(std::move(s)), data(static_cast<size_t>(numel_of(shape)), T(0)) {}
    Ten(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    }

    static Ten zeros(std::vector<int64_t> s) { return Ten(std::move(s)); }
    static Ten full(std::vector<int64_t> s, T v) {
        Ten t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const {
        if (i < 0 || i >= rank()) throw std::out_of_range("tensor dim index " + std::to_string(i));
        return shape[static_cast<size_t>(i)];
    }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    // rank-checked element access; hot loops index raw pointers instead
    T& at(int64_t i) { return data.at(static_cast<size_t>(check1(i))); }
    T at(int64_t i) const { return data.at(static_cast<size_t>(check1(i))); }
    T& at(int64_t i, int64_t j) { return data.at(static_cast<size_t>(check2(i, j))); }
    T at(int64_t i, int64_t j) const { return data.at(static_cast<size_t>(check2(i, j))); }
    T& at(int64_t i, int64_t j, int64_t k) { return data.at(static_cast<size_t>(check3(i, j, k))); }
    T at(int64_t i, int64_t j, int64_t k) const { return data.at(static_cast<size_t>(check3(i, j, k))); }
    T& at(int64_t i, int64_t j, int64_t k, int64_t l) { return data.at(static_cast<size_t>(check4(i, j, k, l))); }
    T at(int64_t i, int64_t j, int64_t k, int64_t l) const { return data.at(static_cast<size_t>(check4(i, j, k, l))); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

  private:
    int64_t check1(int64_t i) const {
        require_rank(1);
        bound(i, shape[0]);
        return i;
    }
    int64_t check2(int64_t i, int64_t j) const {
        require_rank(2);
        bound(i, shape[0]);
        bound(j, shape[1]);
        return i * shape[1] + j;
    }
    int64_t check3(int64_t i, int64_t j, int64_t k) const {
        require_rank(3);
        bound(i, shape[0]);
        bound(j, shape[1]);
        bound(k, shape[2]);
        return (i * shape[1] + j) * shape[2] + k;
    }
    int64_t check4(int64_t i, int64_t j, int64_t k, int64_t l) const {
        require_rank(4);
        bound(i, shape[0]);
        bound(j, shape[1]);
        bound(k, shape[2]);
        bound(l, shape[3]);
        return ((i * shape[1] + j) * shape[2] + k) * shape[3] + l;
    }
    void require_rank(int r) const {
        if (rank() != r)
            throw ShapeError("expected rank-" + std::to_string(r) + " tensor, have shape " + shape_str(shape));
    }
    static void bound(int64_t i, int64_t n) {
        if (i < 0 || i >= n) throw std::out_of_range("tensor index " + std::to_string(i) + " out of [0," + std::to_string(n) + ")");
    }
};

using Tensor = Ten<float>;
using DTensor = Ten<double>;

}  // namespace tfw
