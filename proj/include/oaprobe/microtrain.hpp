#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oaprobe/geometry.hpp"
#include "oaprobe/hierarchy.hpp"
#include "oaprobe/metrics.hpp"

namespace oaprobe {

enum class Setting { single_oa, single_kl, dual };

std::string to_string(Setting s);
Setting setting_from_string(const std::string& s);

// Tiny two-head network: affine encoder d -> h with tanh, then an OA head
// (1 logit) and/or a KL head (5 logits) depending on the setting.
struct MicroModel {
    Setting setting = Setting::dual;
    std::size_t d = 0;  // input dimension
    std::size_t h = 0;  // hidden dimension
    std::vector<double> w_enc;  // h x d, row-major
    std::vector<double> b_enc;  // h
    std::vector<double> w_oa;   // h (empty when the OA head is absent)
    double b_oa = 0.0;
    std::vector<double> w_kl;   // 5 x h, row-major (empty when absent)
    std::vector<double> b_kl;   // 5

    bool has_oa_head() const { return !w_oa.empty(); }
    bool has_kl_head() const { return !w_kl.empty(); }
    void validate() const;  // shapes per setting, finite parameters
};

struct TrainConfig {
    double lambda_oa = 1.0;
    double lambda_kl = 1.0;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    int epochs = 100;
    int batch_size = 2;
    int hidden = 16;
    std::uint64_t seed = 0;

    void validate(Setting setting) const;
};

struct TrainSample {
    std::vector<double> x;
    LabelRecord label;
};

struct ForwardResult {
    std::vector<double> z;
    std::optional<double> oa_logit;
    std::optional<std::array<double, 5>> kl_logits;
};

// Gradients of the mean batch loss, shaped like the model parameters.
struct BatchGradients {
    std::vector<double> w_enc;
    std::vector<double> b_enc;
    std::vector<double> w_oa;
    double b_oa = 0.0;
    std::vector<double> w_kl;
    std::vector<double> b_kl;
    double mean_loss = 0.0;
};

// Flattened AdamW moments; parameters are packed in a fixed order so the
// optimizer stays shape-agnostic.
struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
};

struct TrainResult {
    MicroModel model;
    std::vector<double> epoch_losses;
};

enum class SaliencyTarget { oa_pos, kl_predicted };

MicroModel init_model(std::size_t d, std::size_t h, Setting setting,
                      std::uint64_t seed);

ForwardResult forward(const MicroModel& m, const std::vector<double>& x);

// lambda-weighted loss for the active setting: single settings return their
// own weighted term, dual returns the sum.
double compute_loss(std::optional<double> oa_logit,
                    const std::optional<std::array<double, 5>>& kl_logits,
                    const LabelRecord& label, const TrainConfig& cfg,
                    Setting setting);

BatchGradients compute_gradients(
    const MicroModel& m, const std::vector<TrainSample>& batch,
    const TrainConfig& cfg);

// Parameter packing used by the optimizer and the checkpoint format.
// Order: w_enc, b_enc, [w_oa, b_oa], [w_kl, b_kl].
std::vector<double> flatten_params(const MicroModel& m);
void unflatten_params(MicroModel& m, const std::vector<double>& params);
std::vector<double> flatten_grads(const MicroModel& m,
                                  const BatchGradients& g);
// 1 for weights (decayed), 0 for biases.
std::vector<std::uint8_t> decay_flags(const MicroModel& m);

// One decoupled-weight-decay Adam update:
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p_old
// where the decay term is skipped for entries with flags[i] == 0.
void adamw_step(std::vector<double>& params, const std::vector<double>& grads,
                const std::vector<std::uint8_t>& flags, AdamWState& state,
                double lr, double weight_decay);

// Full loop: seeded init, per-epoch seeded shuffle (mix(seed, epoch)),
// batches of cfg.batch_size with the last partial batch kept.
TrainResult train(const std::vector<TrainSample>& dataset,
                  const TrainConfig& cfg, Setting setting);

// Penultimate activations, one row per input, aligned to subject order.
EmbeddingMatrix embed(const MicroModel& m,
                      const std::vector<std::vector<double>>& xs,
                      const std::vector<std::string>& subject_ids);

// |d logit_target / d x|; for kl_predicted the target class is the argmax
// of the KL logits (lowest index on ties).
std::vector<double> input_saliency(const MicroModel& m,
                                   const std::vector<double>& x,
                                   SaliencyTarget target);

// p_oa via sigmoid when the OA head exists, otherwise via the KL-implied
// marginal p2+p3+p4; p_kl present only when the KL head exists.
PredictionSet predict(const MicroModel& m,
                      const std::vector<std::vector<double>>& xs,
                      const std::vector<std::string>& subject_ids);

}  // namespace oaprobe
