#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ourdb {

// Pixels carrying this value are skipped by losses and metrics.
inline constexpr uint8_t kIgnoreLabel = 255;

// H x W class-index image; the ground-truth / pseudo-label carrier.
struct LabelMap {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> v;

    LabelMap() = default;
    LabelMap(int height, int width, uint8_t fill = 0)
        : h(height), w(width), v(static_cast<size_t>(height) * width, fill) {}

    int size() const { return h * w; }
    uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }

    bool operator==(const LabelMap& o) const { return h == o.h && w == o.w && v == o.v; }
};

}  // namespace ourdb
