#include "oaprobe/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace oaprobe {

void Volume::validate() const {
    if (voxel_count() == 0) {
        throw std::invalid_argument("volume has zero voxels");
    }
    if (data.size() != voxel_count()) {
        throw std::invalid_argument("volume data size does not match dims");
    }
    for (float v : data) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("volume contains non-finite values");
        }
    }
}

std::size_t MaskVolume::foreground_count() const {
    return static_cast<std::size_t>(
        std::count(data.begin(), data.end(), std::uint8_t{1}));
}

void MaskVolume::validate() const {
    if (voxel_count() == 0) {
        throw std::invalid_argument("mask has zero voxels");
    }
    if (data.size() != voxel_count()) {
        throw std::invalid_argument("mask data size does not match dims");
    }
    for (std::uint8_t v : data) {
        if (v > 1) {
            throw std::invalid_argument("mask values must be 0 or 1");
        }
    }
}

namespace {

void check_same_grid(const Volume& s, const MaskVolume& m) {
    if (s.dims != m.dims) {
        throw std::invalid_argument("saliency and mask dims differ");
    }
    if (m.foreground_count() == 0) {
        throw std::invalid_argument("roi mask has no foreground voxels");
    }
}

}  // namespace

Volume normalize_saliency(const Volume& v) {
    v.validate();
    float max_val = 0.0f;
    for (float x : v.data) {
        if (x < 0.0f) {
            throw std::invalid_argument("saliency values must be nonnegative");
        }
        max_val = std::max(max_val, x);
    }
    if (max_val == 0.0f) {
        throw std::invalid_argument("saliency volume is identically zero");
    }
    Volume out = v;
    for (float& x : out.data) x /= max_val;
    return out;
}

double mass_at_roi(const Volume& s, const MaskVolume& m) {
    s.validate();
    m.validate();
    check_same_grid(s, m);
    double total = 0.0;
    double inside = 0.0;
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        const double v = s.data[i];
        if (v < 0.0) {
            throw std::invalid_argument("saliency values must be nonnegative");
        }
        total += v;
        if (m.data[i]) inside += v;
    }
    if (total == 0.0) {
        throw std::invalid_argument("saliency volume is identically zero");
    }
    return inside / total;
}

MaskVolume topq_mask(const Volume& s, double q_percent) {
    s.validate();
    if (!(q_percent > 0.0) || q_percent > 100.0) {
        throw std::invalid_argument("q must be in (0, 100]");
    }
    const std::size_t n = s.voxel_count();
    const std::size_t k = static_cast<std::size_t>(
        std::ceil(q_percent / 100.0 * static_cast<double>(n)));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&s](std::size_t a, std::size_t b) {
                         if (s.data[a] != s.data[b]) return s.data[a] > s.data[b];
                         return a < b;
                     });

    MaskVolume out;
    out.dims = s.dims;
    out.data.assign(n, 0);
    for (std::size_t i = 0; i < k; ++i) out.data[order[i]] = 1;
    return out;
}

double topfrac_at_roi(const Volume& s, const MaskVolume& m, double q_percent) {
    m.validate();
    check_same_grid(s, m);
    const MaskVolume top = topq_mask(s, q_percent);
    std::size_t hits = 0;
    std::size_t selected = 0;
    for (std::size_t i = 0; i < top.data.size(); ++i) {
        if (top.data[i]) {
            ++selected;
            if (m.data[i]) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(selected);
}

double dice_at_q(const Volume& s, const MaskVolume& m, double q_percent) {
    m.validate();
    check_same_grid(s, m);
    const MaskVolume top = topq_mask(s, q_percent);
    std::size_t inter = 0;
    for (std::size_t i = 0; i < top.data.size(); ++i) {
        if (top.data[i] && m.data[i]) ++inter;
    }
    const std::size_t denom = top.foreground_count() + m.foreground_count();
    if (denom == 0) {
        throw std::invalid_argument("both masks are empty");
    }
    return 2.0 * static_cast<double>(inter) / static_cast<double>(denom);
}

OverlapReport overlap_report(const Volume& s, const MaskVolume& m,
                             const std::vector<double>& qs) {
    const Volume norm = normalize_saliency(s);
    OverlapReport rep;
    rep.mass_roi = mass_at_roi(norm, m);
    rep.top1_roi = topfrac_at_roi(norm, m, 1.0);
    for (double q : qs) {
        rep.dice[q] = dice_at_q(norm, m, q);
    }
    return rep;
}

}  // namespace oaprobe
