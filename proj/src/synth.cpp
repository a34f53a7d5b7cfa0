#include "oaprobe/synth.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "oaprobe/rng.hpp"

namespace oaprobe {

MaskVolume Box::to_mask(const std::array<std::size_t, 3>& dims) const {
    MaskVolume m;
    m.dims = dims;
    m.data.assign(dims[0] * dims[1] * dims[2], 0);
    for (std::size_t d = lo[0]; d < hi[0]; ++d) {
        for (std::size_t h = lo[1]; h < hi[1]; ++h) {
            for (std::size_t w = lo[2]; w < hi[2]; ++w) {
                m.data[(d * dims[1] + h) * dims[2] + w] = 1;
            }
        }
    }
    return m;
}

bool boxes_disjoint(const Box& a, const Box& b) {
    for (std::size_t ax = 0; ax < 3; ++ax) {
        if (a.hi[ax] <= b.lo[ax] || b.hi[ax] <= a.lo[ax]) return true;
    }
    return false;
}

namespace {

void check_box(const Box& b, const std::array<std::size_t, 3>& dims,
               const char* name) {
    for (std::size_t ax = 0; ax < 3; ++ax) {
        if (b.lo[ax] >= b.hi[ax]) {
            throw std::invalid_argument(std::string(name) + " box is empty");
        }
        if (b.hi[ax] > dims[ax]) {
            throw std::invalid_argument(std::string(name) +
                                        " box exceeds volume dims");
        }
    }
}

}  // namespace

void SynthConfig::validate() const {
    if (n_train < 0 || n_test < 0 || n_train + n_test < 1) {
        throw std::invalid_argument("cohort must contain at least one subject");
    }
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
        throw std::invalid_argument("dims must be positive");
    }
    double sum = 0.0;
    for (double p : grade_probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw std::invalid_argument("grade probabilities must be in [0,1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument("grade probabilities must sum to 1");
    }
    check_box(roi, dims, "roi");
    check_box(distractor, dims, "distractor");
    if (!boxes_disjoint(roi, distractor)) {
        throw std::invalid_argument("roi and distractor boxes overlap");
    }
    if (!(noise_sd >= 0.0)) {
        throw std::invalid_argument("noise_sd must be nonnegative");
    }
    if (label_flip_rate < 0.0 || label_flip_rate > 1.0) {
        throw std::invalid_argument("label_flip_rate must be in [0,1]");
    }
    if (severity_gain < 0.0 || distractor_gain < 0.0) {
        throw std::invalid_argument("gains must be nonnegative");
    }
}

std::vector<KlGrade> perturb_labels(const std::vector<KlGrade>& kl_true,
                                    double eta, std::uint64_t seed) {
    if (eta < 0.0 || eta > 1.0) {
        throw std::invalid_argument("eta must be in [0,1]");
    }
    std::vector<KlGrade> out;
    out.reserve(kl_true.size());
    for (std::size_t i = 0; i < kl_true.size(); ++i) {
        Rng rng(replicate_seed(seed, i));
        int k = kl_true[i].value();
        if (rng.next_double() < eta) {
            int dir = rng.next_double() < 0.5 ? -1 : +1;
            if (k == 0) dir = +1;
            if (k == 4) dir = -1;
            k += dir;
        }
        out.emplace_back(k);
    }
    return out;
}

SynthCohort generate_cohort(const SynthConfig& cfg) {
    cfg.validate();

    SynthCohort cohort;
    cohort.config = cfg;
    cohort.roi_mask = cfg.roi.to_mask(cfg.dims);
    cohort.distractor_mask = cfg.distractor.to_mask(cfg.dims);

    std::array<double, 5> cdf{};
    double acc = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
        acc += cfg.grade_probs[k];
        cdf[k] = acc;
    }
    cdf[4] = 1.0;  // guard against rounding in the prior

    const std::size_t n_total =
        static_cast<std::size_t>(cfg.n_train) +
        static_cast<std::size_t>(cfg.n_test);
    const std::size_t n_voxels = cfg.dims[0] * cfg.dims[1] * cfg.dims[2];

    std::vector<KlGrade> kl_true;
    kl_true.reserve(n_total);
    cohort.subjects.reserve(n_total);

    for (std::size_t i = 0; i < n_total; ++i) {
        Rng rng(replicate_seed(cfg.seed, i));
        const double u = rng.next_double();
        int grade = 4;
        for (int k = 0; k < 5; ++k) {
            if (u < cdf[static_cast<std::size_t>(k)]) {
                grade = k;
                break;
            }
        }
        kl_true.emplace_back(grade);
        const int oa_true = derive_oa(kl_true.back()).value();

        SynthSubject subj;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "s%04zu", i + 1);
        subj.id = buf;
        subj.is_test = i >= static_cast<std::size_t>(cfg.n_train);
        subj.kl_true = kl_true.back();
        subj.volume.dims = cfg.dims;
        subj.volume.data.resize(n_voxels);
        std::size_t idx = 0;
        for (std::size_t d = 0; d < cfg.dims[0]; ++d) {
            for (std::size_t h = 0; h < cfg.dims[1]; ++h) {
                for (std::size_t w = 0; w < cfg.dims[2]; ++w, ++idx) {
                    double v = cfg.noise_sd * rng.next_normal();
                    if (cfg.roi.contains(d, h, w)) {
                        v -= cfg.severity_gain * grade;
                    }
                    if (cfg.distractor.contains(d, h, w)) {
                        v -= cfg.distractor_gain * oa_true;
                    }
                    subj.volume.data[idx] = static_cast<float>(v);
                }
            }
        }
        subj.kl_observed = subj.kl_true;  // filled in below
        subj.oa_observed = derive_oa(subj.kl_observed);
        cohort.subjects.push_back(std::move(subj));
    }

    const std::vector<KlGrade> observed = perturb_labels(
        kl_true, cfg.label_flip_rate, replicate_seed(cfg.seed, n_total));
    for (std::size_t i = 0; i < n_total; ++i) {
        SynthSubject& subj = cohort.subjects[i];
        if (!(cfg.noise_train_only && subj.is_test)) {
            subj.kl_observed = observed[i];
        }
        subj.oa_observed = derive_oa(subj.kl_observed);
    }
    return cohort;
}

}  // namespace oaprobe
