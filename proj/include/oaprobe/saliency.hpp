#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <vector>

namespace oaprobe {

// D x H x W scalar field, C-order (d outer, w inner).
struct Volume {
    std::array<std::size_t, 3> dims{};
    std::vector<float> data;

    std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
    void validate() const;  // size match, finite values
};

struct MaskVolume {
    std::array<std::size_t, 3> dims{};
    std::vector<std::uint8_t> data;

    std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
    std::size_t foreground_count() const;
    void validate() const;  // size match, binary values
};

struct OverlapReport {
    double mass_roi = 0.0;
    double top1_roi = 0.0;
    std::map<double, double> dice;  // q percent -> Dice@q
};

// Divides by the maximum so the output lies in [0, 1] with max exactly 1.
// Input values must be nonnegative (absolute gradients).
Volume normalize_saliency(const Volume& v);

// Fraction of total saliency mass inside the mask.
double mass_at_roi(const Volume& s, const MaskVolume& m);

// Binary mask of the top q% voxels: exactly ceil(q/100 * V) voxels, ordered
// by (value descending, linear index ascending).
MaskVolume topq_mask(const Volume& s, double q_percent);

// Fraction of the top-q% voxels that fall inside the mask; q=1 is top1@ROI.
double topfrac_at_roi(const Volume& s, const MaskVolume& m, double q_percent);

// Dice overlap between the top-q% mask and the ROI mask.
double dice_at_q(const Volume& s, const MaskVolume& m, double q_percent);

// mass@ROI, top1@ROI and Dice@q for each requested q (defaults 5 and 10).
// The saliency volume is normalized first.
OverlapReport overlap_report(const Volume& s, const MaskVolume& m,
                             const std::vector<double>& qs = {5.0, 10.0});

}  // namespace oaprobe
