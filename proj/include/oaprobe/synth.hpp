#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "oaprobe/hierarchy.hpp"
#include "oaprobe/saliency.hpp"

namespace oaprobe {

// Half-open axis-aligned voxel box [lo, hi).
struct Box {
    std::array<std::size_t, 3> lo{};
    std::array<std::size_t, 3> hi{};

    bool contains(std::size_t d, std::size_t h, std::size_t w) const {
        return d >= lo[0] && d < hi[0] && h >= lo[1] && h < hi[1] &&
               w >= lo[2] && w < hi[2];
    }
    std::size_t volume() const {
        return (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
    }
    MaskVolume to_mask(const std::array<std::size_t, 3>& dims) const;
};

bool boxes_disjoint(const Box& a, const Box& b);

struct SynthConfig {
    int n_train = 400;
    int n_test = 100;
    std::array<std::size_t, 3> dims{12, 12, 12};
    // grade prior proportional to 82/46/86/111/58
    std::array<double, 5> grade_probs{82.0 / 383.0, 46.0 / 383.0, 86.0 / 383.0,
                                      111.0 / 383.0, 58.0 / 383.0};
    Box roi{{2, 2, 2}, {6, 6, 6}};
    Box distractor{{7, 7, 7}, {11, 11, 11}};
    double severity_gain = 0.5;    // ROI decrement per KL grade
    double distractor_gain = 0.5;  // distractor decrement per binary OA label
    double noise_sd = 1.0;
    double label_flip_rate = 0.2;
    bool noise_train_only = true;  // test labels stay clean by default
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthSubject {
    std::string id;
    Volume volume;
    KlGrade kl_true{0};
    KlGrade kl_observed{0};
    OaLabel oa_observed{0};
    bool is_test = false;
};

// Fixed anatomy: one ROI/distractor mask shared by every subject.
struct SynthCohort {
    std::vector<SynthSubject> subjects;
    MaskVolume roi_mask;
    MaskVolume distractor_mask;
    SynthConfig config;
};

// With probability eta move one step to an adjacent grade (uniform direction,
// forced inward at grades 0 and 4); per-subject derived seeds.
std::vector<KlGrade> perturb_labels(const std::vector<KlGrade>& kl_true,
                                    double eta, std::uint64_t seed);

// voxel = N(0, sd^2) - gain_roi * kl_true [inside ROI]
//                    - gain_distractor * oa_true [inside distractor];
// train subjects first, then test; deterministic per seed and independent of
// iteration order (per-subject derived streams).
SynthCohort generate_cohort(const SynthConfig& cfg);

}  // namespace oaprobe
