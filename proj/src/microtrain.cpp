#include "oaprobe/microtrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "oaprobe/rng.hpp"

namespace oaprobe {

std::string to_string(Setting s) {
    switch (s) {
        case Setting::single_oa: return "single_oa";
        case Setting::single_kl: return "single_kl";
        case Setting::dual: return "dual";
    }
    throw std::logic_error("unreachable setting");
}

Setting setting_from_string(const std::string& s) {
    if (s == "single_oa") return Setting::single_oa;
    if (s == "single_kl") return Setting::single_kl;
    if (s == "dual") return Setting::dual;
    throw std::invalid_argument("unknown setting: " + s);
}

void MicroModel::validate() const {
    if (d == 0 || h == 0) {
        throw std::invalid_argument("model dimensions must be positive");
    }
    if (w_enc.size() != h * d || b_enc.size() != h) {
        throw std::invalid_argument("encoder parameter shapes do not match");
    }
    const bool want_oa = setting != Setting::single_kl;
    const bool want_kl = setting != Setting::single_oa;
    if (want_oa != has_oa_head() || want_kl != has_kl_head()) {
        throw std::invalid_argument("heads do not match setting");
    }
    if (has_oa_head() && w_oa.size() != h) {
        throw std::invalid_argument("oa head shape does not match");
    }
    if (has_kl_head() && (w_kl.size() != 5 * h || b_kl.size() != 5)) {
        throw std::invalid_argument("kl head shape does not match");
    }
    auto all_finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(),
                           [](double t) { return std::isfinite(t); });
    };
    if (!all_finite(w_enc) || !all_finite(b_enc) || !all_finite(w_oa) ||
        !all_finite(w_kl) || !all_finite(b_kl) || !std::isfinite(b_oa)) {
        throw std::invalid_argument("model has non-finite parameters");
    }
}

void TrainConfig::validate(Setting setting) const {
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (hidden < 1) throw std::invalid_argument("hidden must be >= 1");
    if (lambda_oa < 0.0 || lambda_kl < 0.0) {
        throw std::invalid_argument("loss weights must be nonnegative");
    }
    if (weight_decay < 0.0) {
        throw std::invalid_argument("weight_decay must be nonnegative");
    }
    const bool oa_active = setting != Setting::single_kl && lambda_oa > 0.0;
    const bool kl_active = setting != Setting::single_oa && lambda_kl > 0.0;
    if (!oa_active && !kl_active) {
        throw std::invalid_argument(
            "at least one loss weight must be positive for the setting");
    }
}

MicroModel init_model(std::size_t d, std::size_t h, Setting setting,
                      std::uint64_t seed) {
    if (d < 1 || h < 1) {
        throw std::invalid_argument("model dimensions must be positive");
    }
    MicroModel m;
    m.setting = setting;
    m.d = d;
    m.h = h;
    Rng rng(seed);
    const double enc_bound = 1.0 / std::sqrt(static_cast<double>(d));
    const double head_bound = 1.0 / std::sqrt(static_cast<double>(h));
    m.w_enc.resize(h * d);
    for (double& w : m.w_enc) w = rng.next_uniform(-enc_bound, enc_bound);
    m.b_enc.assign(h, 0.0);
    if (setting != Setting::single_kl) {
        m.w_oa.resize(h);
        for (double& w : m.w_oa) w = rng.next_uniform(-head_bound, head_bound);
        m.b_oa = 0.0;
    }
    if (setting != Setting::single_oa) {
        m.w_kl.resize(5 * h);
        for (double& w : m.w_kl) w = rng.next_uniform(-head_bound, head_bound);
        m.b_kl.assign(5, 0.0);
    }
    return m;
}

namespace {

void encode(const MicroModel& m, const std::vector<double>& x,
            std::vector<double>& z) {
    if (x.size() != m.d) {
        throw std::invalid_argument("input dimension mismatch");
    }
    z.resize(m.h);
    for (std::size_t i = 0; i < m.h; ++i) {
        const double* row = m.w_enc.data() + i * m.d;
        double acc = m.b_enc[i];
        for (std::size_t j = 0; j < m.d; ++j) acc += row[j] * x[j];
        z[i] = std::tanh(acc);
    }
}

double stable_bce_with_logits(double logit, int y) {
    // max(l,0) - l*y + log(1 + exp(-|l|))
    return std::max(logit, 0.0) - logit * static_cast<double>(y) +
           std::log1p(std::exp(-std::abs(logit)));
}

double log_sum_exp(const std::array<double, 5>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double t : v) acc += std::exp(t - m);
    return m + std::log(acc);
}

std::array<double, 5> softmax5(const std::array<double, 5>& logits) {
    const double lse = log_sum_exp(logits);
    std::array<double, 5> p{};
    for (std::size_t k = 0; k < 5; ++k) p[k] = std::exp(logits[k] - lse);
    return p;
}

double stable_sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

}  // namespace

ForwardResult forward(const MicroModel& m, const std::vector<double>& x) {
    ForwardResult out;
    encode(m, x, out.z);
    if (m.has_oa_head()) {
        double acc = m.b_oa;
        for (std::size_t i = 0; i < m.h; ++i) acc += m.w_oa[i] * out.z[i];
        out.oa_logit = acc;
    }
    if (m.has_kl_head()) {
        std::array<double, 5> logits{};
        for (std::size_t k = 0; k < 5; ++k) {
            const double* row = m.w_kl.data() + k * m.h;
            double acc = m.b_kl[k];
            for (std::size_t i = 0; i < m.h; ++i) acc += row[i] * out.z[i];
            logits[k] = acc;
        }
        out.kl_logits = logits;
    }
    return out;
}

double compute_loss(std::optional<double> oa_logit,
                    const std::optional<std::array<double, 5>>& kl_logits,
                    const LabelRecord& label, const TrainConfig& cfg,
                    Setting setting) {
    double loss = 0.0;
    if (setting != Setting::single_kl) {
        if (!oa_logit) throw std::invalid_argument("oa logit missing");
        loss += cfg.lambda_oa *
                stable_bce_with_logits(*oa_logit, label.oa.value());
    }
    if (setting != Setting::single_oa) {
        if (!kl_logits) throw std::invalid_argument("kl logits missing");
        loss += cfg.lambda_kl *
                (log_sum_exp(*kl_logits) -
                 (*kl_logits)[static_cast<std::size_t>(label.kl.value())]);
    }
    return loss;
}

BatchGradients compute_gradients(const MicroModel& m,
                                 const std::vector<TrainSample>& batch,
                                 const TrainConfig& cfg) {
    if (batch.empty()) throw std::invalid_argument("empty batch");

    BatchGradients g;
    g.w_enc.assign(m.w_enc.size(), 0.0);
    g.b_enc.assign(m.b_enc.size(), 0.0);
    g.w_oa.assign(m.w_oa.size(), 0.0);
    g.w_kl.assign(m.w_kl.size(), 0.0);
    g.b_kl.assign(m.b_kl.size(), 0.0);

    std::vector<double> z;
    std::vector<double> dz(m.h);
    double loss_sum = 0.0;

    for (const TrainSample& sample : batch) {
        const ForwardResult fw = forward(m, sample.x);
        z = fw.z;
        loss_sum +=
            compute_loss(fw.oa_logit, fw.kl_logits, sample.label, cfg,
                         m.setting);
        std::fill(dz.begin(), dz.end(), 0.0);

        if (m.has_oa_head()) {
            const double delta =
                cfg.lambda_oa * (stable_sigmoid(*fw.oa_logit) -
                                 static_cast<double>(sample.label.oa.value()));
            for (std::size_t i = 0; i < m.h; ++i) {
                g.w_oa[i] += delta * z[i];
                dz[i] += delta * m.w_oa[i];
            }
            g.b_oa += delta;
        }
        if (m.has_kl_head()) {
            const std::array<double, 5> p = softmax5(*fw.kl_logits);
            const auto truth = static_cast<std::size_t>(sample.label.kl.value());
            for (std::size_t k = 0; k < 5; ++k) {
                const double delta =
                    cfg.lambda_kl * (p[k] - (k == truth ? 1.0 : 0.0));
                const double* row = m.w_kl.data() + k * m.h;
                double* grow = g.w_kl.data() + k * m.h;
                for (std::size_t i = 0; i < m.h; ++i) {
                    grow[i] += delta * z[i];
                    dz[i] += delta * row[i];
                }
                g.b_kl[k] += delta;
            }
        }
        // through tanh into the encoder
        for (std::size_t i = 0; i < m.h; ++i) {
            const double da = dz[i] * (1.0 - z[i] * z[i]);
            g.b_enc[i] += da;
            double* grow = g.w_enc.data() + i * m.d;
            const double* xp = sample.x.data();
            for (std::size_t j = 0; j < m.d; ++j) grow[j] += da * xp[j];
        }
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (double& t : g.w_enc) t *= inv_n;
    for (double& t : g.b_enc) t *= inv_n;
    for (double& t : g.w_oa) t *= inv_n;
    for (double& t : g.w_kl) t *= inv_n;
    for (double& t : g.b_kl) t *= inv_n;
    g.b_oa *= inv_n;
    g.mean_loss = loss_sum * inv_n;
    return g;
}

std::vector<double> flatten_params(const MicroModel& m) {
    std::vector<double> out;
    out.reserve(m.w_enc.size() + m.b_enc.size() + m.w_oa.size() + 1 +
                m.w_kl.size() + m.b_kl.size());
    out.insert(out.end(), m.w_enc.begin(), m.w_enc.end());
    out.insert(out.end(), m.b_enc.begin(), m.b_enc.end());
    if (m.has_oa_head()) {
        out.insert(out.end(), m.w_oa.begin(), m.w_oa.end());
        out.push_back(m.b_oa);
    }
    if (m.has_kl_head()) {
        out.insert(out.end(), m.w_kl.begin(), m.w_kl.end());
        out.insert(out.end(), m.b_kl.begin(), m.b_kl.end());
    }
    return out;
}

void unflatten_params(MicroModel& m, const std::vector<double>& params) {
    std::size_t expected = m.w_enc.size() + m.b_enc.size();
    if (m.has_oa_head()) expected += m.w_oa.size() + 1;
    if (m.has_kl_head()) expected += m.w_kl.size() + m.b_kl.size();
    if (params.size() != expected) {
        throw std::invalid_argument("parameter vector size mismatch");
    }
    auto it = params.begin();
    std::copy(it, it + static_cast<std::ptrdiff_t>(m.w_enc.size()),
              m.w_enc.begin());
    it += static_cast<std::ptrdiff_t>(m.w_enc.size());
    std::copy(it, it + static_cast<std::ptrdiff_t>(m.b_enc.size()),
              m.b_enc.begin());
    it += static_cast<std::ptrdiff_t>(m.b_enc.size());
    if (m.has_oa_head()) {
        std::copy(it, it + static_cast<std::ptrdiff_t>(m.w_oa.size()),
                  m.w_oa.begin());
        it += static_cast<std::ptrdiff_t>(m.w_oa.size());
        m.b_oa = *it++;
    }
    if (m.has_kl_head()) {
        std::copy(it, it + static_cast<std::ptrdiff_t>(m.w_kl.size()),
                  m.w_kl.begin());
        it += static_cast<std::ptrdiff_t>(m.w_kl.size());
        std::copy(it, it + static_cast<std::ptrdiff_t>(m.b_kl.size()),
                  m.b_kl.begin());
    }
}

std::vector<double> flatten_grads(const MicroModel& m,
                                  const BatchGradients& g) {
    std::vector<double> out;
    out.insert(out.end(), g.w_enc.begin(), g.w_enc.end());
    out.insert(out.end(), g.b_enc.begin(), g.b_enc.end());
    if (m.has_oa_head()) {
        out.insert(out.end(), g.w_oa.begin(), g.w_oa.end());
        out.push_back(g.b_oa);
    }
    if (m.has_kl_head()) {
        out.insert(out.end(), g.w_kl.begin(), g.w_kl.end());
        out.insert(out.end(), g.b_kl.begin(), g.b_kl.end());
    }
    return out;
}

std::vector<std::uint8_t> decay_flags(const MicroModel& m) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), m.w_enc.size(), 1);
    out.insert(out.end(), m.b_enc.size(), 0);
    if (m.has_oa_head()) {
        out.insert(out.end(), m.w_oa.size(), 1);
        out.push_back(0);
    }
    if (m.has_kl_head()) {
        out.insert(out.end(), m.w_kl.size(), 1);
        out.insert(out.end(), m.b_kl.size(), 0);
    }
    return out;
}

void adamw_step(std::vector<double>& params, const std::vector<double>& grads,
                const std::vector<std::uint8_t>& flags, AdamWState& state,
                double lr, double weight_decay) {
    if (grads.size() != params.size() || flags.size() != params.size()) {
        throw std::invalid_argument("optimizer shape mismatch");
    }
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("optimizer state shape mismatch");
    }
    state.step += 1;
    const double b1 = AdamWState::kBeta1;
    const double b2 = AdamWState::kBeta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        const double p_old = params[i];
        params[i] = p_old - lr * (m_hat / (std::sqrt(v_hat) + AdamWState::kEps));
        if (flags[i]) params[i] -= lr * weight_decay * p_old;
    }
}

TrainResult train(const std::vector<TrainSample>& dataset,
                  const TrainConfig& cfg, Setting setting) {
    if (dataset.empty()) throw std::invalid_argument("empty dataset");
    cfg.validate(setting);
    const std::size_t d = dataset[0].x.size();
    for (const TrainSample& s : dataset) {
        if (s.x.size() != d) {
            throw std::invalid_argument("inconsistent input dimensions");
        }
    }

    TrainResult res;
    res.model = init_model(d, static_cast<std::size_t>(cfg.hidden), setting,
                           cfg.seed);
    res.model.validate();
    std::vector<double> params = flatten_params(res.model);
    const std::vector<std::uint8_t> flags = decay_flags(res.model);
    AdamWState opt;

    const std::size_t n = dataset.size();
    std::vector<std::size_t> order(n);
    std::vector<TrainSample> batch;
    res.epoch_losses.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(replicate_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n - 1; i > 0; --i) {
            const std::size_t j =
                static_cast<std::size_t>(rng.next_below(i + 1));
            std::swap(order[i], order[j]);
        }

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n;
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) {
                batch.push_back(dataset[order[i]]);
            }
            const BatchGradients g = compute_gradients(res.model, batch, cfg);
            if (!std::isfinite(g.mean_loss)) {
                throw std::runtime_error("training diverged at epoch " +
                                         std::to_string(epoch));
            }
            loss_sum += g.mean_loss * static_cast<double>(batch.size());
            adamw_step(params, flatten_grads(res.model, g), flags, opt, cfg.lr,
                       cfg.weight_decay);
            unflatten_params(res.model, params);
        }
        res.epoch_losses.push_back(loss_sum / static_cast<double>(n));
    }
    return res;
}

EmbeddingMatrix embed(const MicroModel& m,
                      const std::vector<std::vector<double>>& xs,
                      const std::vector<std::string>& subject_ids) {
    if (xs.size() != subject_ids.size()) {
        throw std::invalid_argument("inputs and subject ids differ in length");
    }
    EmbeddingMatrix em;
    em.subject_ids = subject_ids;
    em.n_rows = xs.size();
    em.n_cols = m.h;
    em.data.resize(em.n_rows * em.n_cols);
    std::vector<double> z;
    for (std::size_t r = 0; r < xs.size(); ++r) {
        encode(m, xs[r], z);
        std::copy(z.begin(), z.end(),
                  em.data.begin() + static_cast<std::ptrdiff_t>(r * m.h));
    }
    return em;
}

std::vector<double> input_saliency(const MicroModel& m,
                                   const std::vector<double>& x,
                                   SaliencyTarget target) {
    const ForwardResult fw = forward(m, x);
    std::vector<double> head(m.h);
    if (target == SaliencyTarget::oa_pos) {
        if (!m.has_oa_head()) {
            throw std::invalid_argument("oa head absent for saliency target");
        }
        std::copy(m.w_oa.begin(), m.w_oa.end(), head.begin());
    } else {
        if (!m.has_kl_head()) {
            throw std::invalid_argument("kl head absent for saliency target");
        }
        std::size_t best = 0;
        for (std::size_t k = 1; k < 5; ++k) {
            if ((*fw.kl_logits)[k] > (*fw.kl_logits)[best]) best = k;
        }
        const double* row = m.w_kl.data() + best * m.h;
        std::copy(row, row + m.h, head.begin());
    }
    // d logit / d x_j = sum_i head_i * (1 - z_i^2) * w_enc[i][j]
    std::vector<double> sal(m.d, 0.0);
    for (std::size_t i = 0; i < m.h; ++i) {
        const double a = head[i] * (1.0 - fw.z[i] * fw.z[i]);
        const double* row = m.w_enc.data() + i * m.d;
        for (std::size_t j = 0; j < m.d; ++j) sal[j] += a * row[j];
    }
    for (double& t : sal) t = std::abs(t);
    return sal;
}

PredictionSet predict(const MicroModel& m,
                      const std::vector<std::vector<double>>& xs,
                      const std::vector<std::string>& subject_ids) {
    if (xs.size() != subject_ids.size()) {
        throw std::invalid_argument("inputs and subject ids differ in length");
    }
    PredictionSet out;
    out.subject_ids = subject_ids;
    out.p_oa.reserve(xs.size());
    if (m.has_kl_head()) {
        out.p_kl.emplace();
        out.p_kl->reserve(xs.size());
    }
    for (const std::vector<double>& x : xs) {
        const ForwardResult fw = forward(m, x);
        if (m.has_kl_head()) {
            const std::array<double, 5> p = softmax5(*fw.kl_logits);
            const KlProbVector kp(p);
            out.p_kl->push_back(kp);
            if (!m.has_oa_head()) {
                out.p_oa.push_back(oa_prob_from_kl(kp));
                continue;
            }
        }
        out.p_oa.push_back(stable_sigmoid(*fw.oa_logit));
    }
    out.validate();
    return out;
}

}  // namespace oaprobe
