#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ourdb/label_map.hpp"

namespace ourdb {

class Tape;

namespace detail {

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

}  // namespace detail

/// Dense n-dimensional array of 64-bit floats with an optional gradient
/// buffer. Copies share storage; deep_copy() detaches. Ops record a backward
/// rule on the active Tape when any input requires grad.
class Tensor {
    struct Storage {
        std::vector<int> shape;
        std::vector<double> data;
        std::vector<double> grad;  // empty until first needed
        bool requires_grad = false;
        const Tape* tape = nullptr;  // tape that produced this value, if recorded
    };
    std::shared_ptr<Storage> s_;

public:
    Tensor() : s_(std::make_shared<Storage>()) {}

    static Tensor zeros(std::vector<int> shape) {
        Tensor t;
        size_t n = 1;
        for (int d : shape) {
            detail::check(d > 0, "tensor: nonpositive dimension in " + detail::shape_str(shape));
            n *= static_cast<size_t>(d);
        }
        t.s_->shape = std::move(shape);
        t.s_->data.assign(n, 0.0);
        return t;
    }

    static Tensor from_data(std::vector<int> shape, std::vector<double> data) {
        Tensor t = zeros(shape);
        detail::check(t.s_->data.size() == data.size(),
                      "tensor: data length does not match shape " + detail::shape_str(shape));
        t.s_->data = std::move(data);
        return t;
    }

    static Tensor scalar(double v) { return from_data({1}, {v}); }

    const std::vector<int>& shape() const { return s_->shape; }
    int size() const { return static_cast<int>(s_->data.size()); }

    std::vector<double>& data() { return s_->data; }
    const std::vector<double>& data() const { return s_->data; }
    double item() const {
        detail::check(size() == 1, "item(): tensor is not a scalar");
        return s_->data[0];
    }

    bool requires_grad() const { return s_->requires_grad; }
    void set_requires_grad(bool b) { s_->requires_grad = b; }

    bool has_grad() const { return !s_->grad.empty(); }
    std::vector<double>& grad() {
        if (s_->grad.empty()) s_->grad.assign(s_->data.size(), 0.0);
        return s_->grad;
    }
    const std::vector<double>& grad() const {
        detail::check(!s_->grad.empty(), "grad(): no gradient present");
        return s_->grad;
    }
    void zero_grad() { s_->grad.assign(s_->data.size(), 0.0); }
    void drop_grad() { s_->grad.clear(); }

    const Tape* tape() const { return s_->tape; }
    void set_tape(const Tape* t) { s_->tape = t; }

    /// Detached value copy: fresh storage, no grad, not recorded.
    Tensor deep_copy() const {
        Tensor t;
        t.s_->shape = s_->shape;
        t.s_->data = s_->data;
        return t;
    }

    bool same_storage(const Tensor& o) const { return s_ == o.s_; }
};

/// Ordered record of backward rules. Forward order is topological by
/// construction; backward() replays it once in reverse and then clears.
class Tape {
public:
    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
    size_t size() const { return nodes_.size(); }

    void backward(Tensor& loss) {
        detail::check(loss.size() == 1, "backward: loss must be a scalar");
        detail::check(loss.tape() == this, "backward: loss was not recorded on this tape");
        loss.grad()[0] = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
        nodes_.clear();
    }

    static Tape* active() { return active_; }

    // RAII activation; ops only record while a tape is active.
    class Scope {
        Tape* prev_;

    public:
        explicit Scope(Tape& t) : prev_(active_) { active_ = &t; }
        ~Scope() { active_ = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;
    };

private:
    std::vector<std::function<void()>> nodes_;
    inline static thread_local Tape* active_ = nullptr;
};

namespace detail {

inline Tape* recording_tape(bool any_requires_grad) {
    Tape* t = Tape::active();
    return (t && any_requires_grad) ? t : nullptr;
}

}  // namespace detail

inline bool all_finite(const Tensor& t) {
    for (double v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

/// Same-padding stride-1 cross-correlation: input [Cin,H,W], kernel
/// [Cout,Cin,k,k] with k odd, bias [Cout] -> [Cout,H,W].
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
    const auto& is = input.shape();
    const auto& ks = kernel.shape();
    const auto& bs = bias.shape();
    detail::check(is.size() == 3, "conv2d: input must be [C,H,W], got " + detail::shape_str(is));
    detail::check(ks.size() == 4,
                  "conv2d: kernel must be [Cout,Cin,k,k], got " + detail::shape_str(ks));
    detail::check(bs.size() == 1 && bs[0] == ks[0],
                  "conv2d: bias " + detail::shape_str(bs) + " does not match kernel " +
                      detail::shape_str(ks));
    detail::check(ks[1] == is[0], "conv2d: kernel expects " + std::to_string(ks[1]) +
                                      " input channels, input has " + std::to_string(is[0]));
    detail::check(ks[2] == ks[3] && ks[2] % 2 == 1,
                  "conv2d: kernel must be square with odd size, got " + detail::shape_str(ks));

    const int cin = is[0], h = is[1], w = is[2];
    const int cout = ks[0], k = ks[2], r = k / 2;
    Tensor out = Tensor::zeros({cout, h, w});

    const double* __restrict__ in = input.data().data();
    const double* __restrict__ wt = kernel.data().data();
    const double* __restrict__ bp = bias.data().data();
    double* __restrict__ op = out.data().data();
    const size_t plane = static_cast<size_t>(h) * w;

    for (int co = 0; co < cout; ++co) {
        double* oc = op + co * plane;
        std::fill(oc, oc + plane, bp[co]);
        for (int ci = 0; ci < cin; ++ci) {
            const double* ic = in + ci * plane;
            const double* wc = wt + (static_cast<size_t>(co) * cin + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                const int dy = ky - r;
                const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                for (int kx = 0; kx < k; ++kx) {
                    const int dx = kx - r;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    const double wv = wc[ky * k + kx];
                    for (int y = y0; y < y1; ++y) {
                        const double* __restrict__ src = ic + static_cast<size_t>(y + dy) * w + dx;
                        double* __restrict__ dst = oc + static_cast<size_t>(y) * w;
                        for (int x = x0; x < x1; ++x) dst[x] += wv * src[x];
                    }
                }
            }
        }
    }

    if (Tape* tape = detail::recording_tape(input.requires_grad() || kernel.requires_grad() ||
                                            bias.requires_grad())) {
        out.set_requires_grad(true);
        out.set_tape(tape);
        tape->record([input = input, kernel = kernel, bias = bias, out = out, cin, cout, h,
                      w, k, r, plane]() mutable {
            if (!out.has_grad()) return;
            const double* __restrict__ go = out.grad().data();
            const double* __restrict__ in = input.data().data();
            const double* __restrict__ wt = kernel.data().data();
            if (input.requires_grad()) {
                double* __restrict__ gi = input.grad().data();
                for (int co = 0; co < cout; ++co) {
                    const double* gc = go + co * plane;
                    for (int ci = 0; ci < cin; ++ci) {
                        double* gic = gi + ci * plane;
                        const double* wc = wt + (static_cast<size_t>(co) * cin + ci) * k * k;
                        for (int ky = 0; ky < k; ++ky) {
                            const int dy = ky - r;
                            const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                            for (int kx = 0; kx < k; ++kx) {
                                const int dx = kx - r;
                                const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                                const double wv = wc[ky * k + kx];
                                for (int y = y0; y < y1; ++y) {
                                    double* __restrict__ dst =
                                        gic + static_cast<size_t>(y + dy) * w + dx;
                                    const double* __restrict__ src =
                                        gc + static_cast<size_t>(y) * w;
                                    for (int x = x0; x < x1; ++x) dst[x] += wv * src[x];
                                }
                            }
                        }
                    }
                }
            }
            if (kernel.requires_grad()) {
                double* __restrict__ gw = kernel.grad().data();
                for (int co = 0; co < cout; ++co) {
                    const double* gc = go + co * plane;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double* ic = in + ci * plane;
                        double* gwc = gw + (static_cast<size_t>(co) * cin + ci) * k * k;
                        for (int ky = 0; ky < k; ++ky) {
                            const int dy = ky - r;
                            const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                            for (int kx = 0; kx < k; ++kx) {
                                const int dx = kx - r;
                                const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                                double acc = 0.0;
                                for (int y = y0; y < y1; ++y) {
                                    const double* __restrict__ src =
                                        ic + static_cast<size_t>(y + dy) * w + dx;
                                    const double* __restrict__ g =
                                        gc + static_cast<size_t>(y) * w;
                                    for (int x = x0; x < x1; ++x) acc += g[x] * src[x];
                                }
                                gwc[ky * k + kx] += acc;
                            }
                        }
                    }
                }
            }
            if (bias.requires_grad()) {
                double* gb = bias.grad().data();
                for (int co = 0; co < cout; ++co) {
                    const double* gc = go + co * plane;
                    double acc = 0.0;
                    for (size_t i = 0; i < plane; ++i) acc += gc[i];
                    gb[co] += acc;
                }
            }
        });
    }
    return out;
}

/// Elementwise max(0, x); subgradient at 0 is 0.
inline Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const double* xi = x.data().data();
    double* oi = out.data().data();
    const int n = x.size();
    for (int i = 0; i < n; ++i) oi[i] = xi[i] > 0.0 ? xi[i] : 0.0;

    if (Tape* tape = detail::recording_tape(x.requires_grad())) {
        out.set_requires_grad(true);
        out.set_tape(tape);
        tape->record([x = x, out = out, n]() mutable {
            if (!out.has_grad()) return;
            const double* go = out.grad().data();
            const double* xi = x.data().data();
            double* gx = x.grad().data();
            for (int i = 0; i < n; ++i)
                if (xi[i] > 0.0) gx[i] += go[i];
        });
    }
    return out;
}

/// Mean over non-ignored pixels of -log softmax(logits)[target], max-shifted
/// for stability. `weights`, when given, scales each pixel's term; the
/// denominator stays the count of non-ignored pixels.
inline Tensor pixel_softmax_ce(const Tensor& logits, const LabelMap& target,
                               const std::vector<double>* weights = nullptr) {
    const auto& ls = logits.shape();
    detail::check(ls.size() == 3, "pixel_softmax_ce: logits must be [C,H,W]");
    const int c = ls[0], h = ls[1], w = ls[2];
    detail::check(target.h == h && target.w == w,
                  "pixel_softmax_ce: label map " + std::to_string(target.h) + "x" +
                      std::to_string(target.w) + " does not match logits " + detail::shape_str(ls));
    const int n = h * w;
    detail::check(!weights || static_cast<int>(weights->size()) == n,
                  "pixel_softmax_ce: weights length must be H*W");

    const double* lp = logits.data().data();
    double acc = 0.0;
    int valid = 0;
    for (int p = 0; p < n; ++p) {
        const uint8_t t = target.v[p];
        if (t == kIgnoreLabel) continue;
        detail::check(t < c, "pixel_softmax_ce: target class " + std::to_string(int(t)) +
                                 " out of range [0," + std::to_string(c) + ")");
        double m = lp[p];
        for (int j = 1; j < c; ++j) m = std::max(m, lp[static_cast<size_t>(j) * n + p]);
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += std::exp(lp[static_cast<size_t>(j) * n + p] - m);
        const double ce = (m + std::log(s)) - lp[static_cast<size_t>(t) * n + p];
        acc += (weights ? (*weights)[p] : 1.0) * ce;
        ++valid;
    }
    detail::check(valid > 0, "pixel_softmax_ce: no valid (non-ignored) pixels");
    Tensor out = Tensor::scalar(acc / valid);

    if (Tape* tape = detail::recording_tape(logits.requires_grad())) {
        out.set_requires_grad(true);
        out.set_tape(tape);
        std::vector<double> wcopy;
        if (weights) wcopy = *weights;
        const bool has_w = weights != nullptr;
        tape->record([logits = logits, out = out, target, wcopy = std::move(wcopy), has_w, c,
                      n, valid]() mutable {
            if (!out.has_grad()) return;
            const double g = out.grad()[0];
            const double* lp = logits.data().data();
            double* gl = logits.grad().data();
            std::vector<double> prob(c);
            for (int p = 0; p < n; ++p) {
                const uint8_t t = target.v[p];
                if (t == kIgnoreLabel) continue;
                double m = lp[p];
                for (int j = 1; j < c; ++j) m = std::max(m, lp[static_cast<size_t>(j) * n + p]);
                double s = 0.0;
                for (int j = 0; j < c; ++j) {
                    prob[j] = std::exp(lp[static_cast<size_t>(j) * n + p] - m);
                    s += prob[j];
                }
                const double scale = g * (has_w ? wcopy[p] : 1.0) / valid;
                for (int j = 0; j < c; ++j) {
                    const double soft = prob[j] / s;
                    gl[static_cast<size_t>(j) * n + p] += scale * (soft - (j == t ? 1.0 : 0.0));
                }
            }
        });
    }
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check(a.shape() == b.shape(), "add: shape mismatch " + detail::shape_str(a.shape()) +
                                              " vs " + detail::shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    const int n = a.size();
    for (int i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (Tape* tape = detail::recording_tape(a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        out.set_tape(tape);
        tape->record([a = a, b = b, out = out, n]() mutable {
            if (!out.has_grad()) return;
            const double* go = out.grad().data();
            if (a.requires_grad()) {
                double* ga = a.grad().data();
                for (int i = 0; i < n; ++i) ga[i] += go[i];
            }
            if (b.requires_grad()) {
                double* gb = b.grad().data();
                for (int i = 0; i < n; ++i) gb[i] += go[i];
            }
        });
    }
    return out;
}

inline Tensor scale(const Tensor& x, double c) {
    Tensor out = Tensor::zeros(x.shape());
    const int n = x.size();
    for (int i = 0; i < n; ++i) out.data()[i] = c * x.data()[i];
    if (Tape* tape = detail::recording_tape(x.requires_grad())) {
        out.set_requires_grad(true);
        out.set_tape(tape);
        tape->record([x = x, out = out, c, n]() mutable {
            if (!out.has_grad()) return;
            const double* go = out.grad().data();
            double* gx = x.grad().data();
            for (int i = 0; i < n; ++i) gx[i] += c * go[i];
        });
    }
    return out;
}

inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    Tensor out = Tensor::scalar(acc);
    if (Tape* tape = detail::recording_tape(x.requires_grad())) {
        out.set_requires_grad(true);
        out.set_tape(tape);
        const int n = x.size();
        tape->record([x = x, out = out, n]() mutable {
            if (!out.has_grad()) return;
            const double g = out.grad()[0];
            double* gx = x.grad().data();
            for (int i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return out;
}

}  // namespace ourdb
