#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "ourdb/label_map.hpp"
#include "ourdb/tensor.hpp"

namespace ourdb::mixing {

/// Binary paste mask: 1 where the (possibly transformed) source label
/// belongs to the selected classes.
struct ClassMask {
    int h = 0, w = 0;
    std::vector<uint8_t> mask;
    std::vector<int> selected_classes;

    ClassMask() = default;
    ClassMask(int height, int width) : h(height), w(width), mask(size_t(height) * width, 0) {}
    int count() const { return static_cast<int>(std::count(mask.begin(), mask.end(), 1)); }
};

/// Ring of pixels around a class mask: I[G(M) > 0] - M, disjoint from M by
/// construction.
struct NeighborMask {
    int h = 0, w = 0;
    std::vector<uint8_t> mask;
};

/// L1-normalized class histogram over a neighbor ring; all-zero when the
/// ring is empty.
struct ContextVector {
    std::vector<double> hist;
};

enum class BridgeSource { kClassMix, kCgmix };

/// Composite image/label pair: pasted source content where mask=1, target
/// content where mask=0, copied bit-exactly.
struct Bridge {
    Tensor image;
    LabelMap label;
    ClassMask mask_used;
    BridgeSource provenance = BridgeSource::kClassMix;
    int chosen_candidate = -1;
};

inline std::vector<int> classes_present(const LabelMap& y) {
    std::vector<bool> seen(256, false);
    for (uint8_t v : y.v) seen[v] = true;
    std::vector<int> out;
    for (int c = 0; c < 255; ++c)
        if (seen[c]) out.push_back(c);
    return out;
}

/// Uniformly samples ceil(P/2) of the P classes present in the label map.
inline std::vector<int> select_classes(const LabelMap& y, std::mt19937_64& rng) {
    detail::check(y.size() > 0, "select_classes: empty label map");
    std::vector<int> present = classes_present(y);
    const size_t take = (present.size() + 1) / 2;
    std::vector<int> out;
    std::sample(present.begin(), present.end(), std::back_inserter(out), take, rng);
    return out;
}

inline ClassMask class_mask(const LabelMap& y, const std::vector<int>& classes) {
    ClassMask m(y.h, y.w);
    m.selected_classes = classes;
    std::vector<bool> sel(256, false);
    for (int c : classes) sel[c] = true;
    sel[kIgnoreLabel] = false;
    for (int p = 0; p < y.size(); ++p) m.mask[p] = sel[y.v[p]] ? 1 : 0;
    return m;
}

inline Bridge compose_bridge(const Tensor& paste_img, const LabelMap& paste_lab, const Tensor& xt,
                             const LabelMap& yt, ClassMask mask, BridgeSource prov) {
    detail::check(paste_img.shape() == xt.shape(),
                  "bridge: image shapes disagree, " + detail::shape_str(paste_img.shape()) +
                      " vs " + detail::shape_str(xt.shape()));
    detail::check(paste_lab.h == yt.h && paste_lab.w == yt.w && paste_lab.h == mask.h &&
                      paste_lab.w == mask.w,
                  "bridge: label/mask sizes disagree");
    const int n = yt.size();
    Bridge b;
    b.image = Tensor::zeros(xt.shape());
    b.label = LabelMap(yt.h, yt.w);
    const double* ps = paste_img.data().data();
    const double* pt = xt.data().data();
    double* pb = b.image.data().data();
    for (int ch = 0; ch < 3; ++ch) {
        const size_t off = static_cast<size_t>(ch) * n;
        for (int p = 0; p < n; ++p) pb[off + p] = mask.mask[p] ? ps[off + p] : pt[off + p];
    }
    for (int p = 0; p < n; ++p) b.label.v[p] = mask.mask[p] ? paste_lab.v[p] : yt.v[p];
    b.mask_used = std::move(mask);
    b.provenance = prov;
    return b;
}

/// Plain class-wise paste: selected source classes dropped into the target
/// at their original positions.
inline Bridge classmix(const Tensor& xs, const LabelMap& ys, const Tensor& xt, const LabelMap& yt,
                       const std::vector<int>& classes) {
    return compose_bridge(xs, ys, xt, yt, class_mask(ys, classes), BridgeSource::kClassMix);
}

/// I[G(M) > 0] - M with a truncated Gaussian of std sigma and half-width
/// radius. All kernel weights on the support are positive, so the indicator
/// equals a (2r+1)x(2r+1) dilation regardless of sigma.
inline NeighborMask neighbor_mask(const ClassMask& m, double sigma = 1.0, int radius = 2) {
    detail::check(sigma > 0.0, "neighbor_mask: sigma must be > 0");
    detail::check(radius >= 1, "neighbor_mask: radius must be >= 1");
    const int h = m.h, w = m.w;
    std::vector<double> kernel(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i)
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));

    // Separable blur with zero padding.
    std::vector<double> tmp(size_t(h) * w, 0.0), blur(size_t(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = x + i;
                if (xx >= 0 && xx < w) acc += kernel[i + radius] * m.mask[size_t(y) * w + xx];
            }
            tmp[size_t(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = y + i;
                if (yy >= 0 && yy < h) acc += kernel[i + radius] * tmp[size_t(yy) * w + x];
            }
            blur[size_t(y) * w + x] = acc;
        }

    NeighborMask nb;
    nb.h = h;
    nb.w = w;
    nb.mask.assign(size_t(h) * w, 0);
    for (size_t p = 0; p < nb.mask.size(); ++p)
        nb.mask[p] = (blur[p] > 0.0 && !m.mask[p]) ? 1 : 0;
    return nb;
}

inline ContextVector context_vector(const LabelMap& y, const NeighborMask& nbr, int num_classes) {
    detail::check(y.h == nbr.h && y.w == nbr.w, "context_vector: mask size mismatch");
    ContextVector cv;
    cv.hist.assign(num_classes, 0.0);
    double total = 0.0;
    for (int p = 0; p < y.size(); ++p) {
        if (!nbr.mask[p]) continue;
        const uint8_t c = y.v[p];
        if (c == kIgnoreLabel) continue;
        detail::check(c < num_classes, "context_vector: label out of range");
        cv.hist[c] += 1.0;
        total += 1.0;
    }
    if (total > 0.0)
        for (double& v : cv.hist) v /= total;
    return cv;
}

/// Cosine similarity; zero vectors compare as 0 so degenerate rings never
/// win the placement search.
inline double cosine(const ContextVector& a, const ContextVector& b) {
    detail::check(a.hist.size() == b.hist.size(), "cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.hist.size(); ++i) {
        dot += a.hist[i] * b.hist[i];
        na += a.hist[i] * a.hist[i];
        nb += b.hist[i] * b.hist[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Horizontal flip + integer translation + center scaling, applied
/// identically (nearest-neighbor) to image and label.
struct GeomTransform {
    bool hflip = false;
    int dx = 0;
    int dy = 0;
    double scale = 1.0;
};

struct Candidate {
    Tensor image;
    LabelMap label;
    ClassMask cls_mask;
    GeomTransform tf;
};

inline Candidate apply_transform(const Tensor& x, const LabelMap& y,
                                 const std::vector<int>& classes, const GeomTransform& tf) {
    detail::check(tf.scale > 0.0, "apply_transform: scale must be > 0");
    const int h = y.h, w = y.w;
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    Candidate c;
    c.tf = tf;
    c.image = Tensor::zeros(x.shape());
    c.label = LabelMap(h, w, kIgnoreLabel);
    const double* src = x.data().data();
    double* dst = c.image.data().data();
    const size_t plane = static_cast<size_t>(h) * w;
    for (int yo = 0; yo < h; ++yo)
        for (int xo = 0; xo < w; ++xo) {
            const long xi0 = std::lround(cx + (xo - tf.dx - cx) / tf.scale);
            const long yi = std::lround(cy + (yo - tf.dy - cy) / tf.scale);
            const long xi = tf.hflip ? (w - 1 - xi0) : xi0;
            if (xi < 0 || xi >= w || yi < 0 || yi >= h) continue;  // out of frame -> ignore
            const size_t po = static_cast<size_t>(yo) * w + xo;
            const size_t pi = static_cast<size_t>(yi) * w + xi;
            for (int ch = 0; ch < 3; ++ch) dst[ch * plane + po] = src[ch * plane + pi];
            c.label.v[po] = y.v[pi];
        }
    c.cls_mask = class_mask(c.label, classes);
    return c;
}

/// N_aug placement variants: flip with p=0.5, translation up to +-25% per
/// axis, scale in [0.8, 1.25].
inline std::vector<Candidate> generate_candidates(const Tensor& xs, const LabelMap& ys,
                                                  const std::vector<int>& classes, int n_aug,
                                                  std::mt19937_64& rng) {
    detail::check(n_aug >= 1, "generate_candidates: N_aug must be >= 1");
    std::bernoulli_distribution flip(0.5);
    std::uniform_int_distribution<int> dxd(-ys.w / 4, ys.w / 4);
    std::uniform_int_distribution<int> dyd(-ys.h / 4, ys.h / 4);
    std::uniform_real_distribution<double> sc(0.8, 1.25);
    std::vector<Candidate> out;
    out.reserve(n_aug);
    for (int i = 0; i < n_aug; ++i) {
        GeomTransform tf;
        tf.hflip = flip(rng);
        tf.dx = dxd(rng);
        tf.dy = dyd(rng);
        tf.scale = sc(rng);
        out.push_back(apply_transform(xs, ys, classes, tf));
    }
    return out;
}

struct CgmixParams {
    int n_aug = 10;
    double sigma = 1.0;
    int radius = 2;
};

/// Context-guided paste: among N_aug geometric variants of the source,
/// pick the one whose neighbor-ring class histogram on the target pseudo-
/// label best matches (cosine) the source's own ring histogram; ties go to
/// the lowest candidate index.
inline Bridge cgmix(const Tensor& xs, const LabelMap& ys, const Tensor& xt, const LabelMap& yt,
                    const std::vector<int>& classes, const CgmixParams& p, int num_classes,
                    std::mt19937_64& rng) {
    if (classes.empty()) {
        Bridge b = compose_bridge(xs, ys, xt, yt, ClassMask(yt.h, yt.w), BridgeSource::kCgmix);
        return b;
    }
    const ClassMask m_cls = class_mask(ys, classes);
    const NeighborMask m_nbr = neighbor_mask(m_cls, p.sigma, p.radius);
    const ContextVector c_s = context_vector(ys, m_nbr, num_classes);

    std::vector<Candidate> cands = generate_candidates(xs, ys, classes, p.n_aug, rng);
    int best = 0;
    double best_sim = -1.0;
    for (size_t i = 0; i < cands.size(); ++i) {
        const NeighborMask nb = neighbor_mask(cands[i].cls_mask, p.sigma, p.radius);
        const ContextVector c_t = context_vector(yt, nb, num_classes);
        const double sim = cosine(c_s, c_t);
        if (sim > best_sim) {
            best_sim = sim;
            best = static_cast<int>(i);
        }
    }
    Bridge b = compose_bridge(cands[best].image, cands[best].label, xt, yt,
                              std::move(cands[best].cls_mask), BridgeSource::kCgmix);
    b.chosen_candidate = best;
    return b;
}

/// Debug dump: label map as a binary PGM, class indices scaled into gray
/// levels for quick visual inspection of bridge triptychs.
inline void write_pgm(const LabelMap& y, int num_classes, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    detail::check(static_cast<bool>(f), "write_pgm: cannot open " + path);
    f << "P5\n" << y.w << " " << y.h << "\n255\n";
    const int denom = std::max(1, num_classes - 1);
    for (uint8_t v : y.v) {
        const uint8_t g = v == kIgnoreLabel ? 255 : static_cast<uint8_t>(v * 254 / denom);
        f.put(static_cast<char>(g));
    }
}

}  // namespace ourdb::mixing
