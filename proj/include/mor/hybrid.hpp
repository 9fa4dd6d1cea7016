#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "binary.hpp"
#include "calibration.hpp"
#include "clustering.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "reference.hpp"

namespace mor {

/// Quadrant of one output element when compared against the reference.
enum class Outcome : std::uint8_t {
    not_predicted = 0,
    correct_zero = 1,
    incorrect_zero = 2,
    correct_nonzero = 3,
    incorrect_nonzero = 4,
};

inline constexpr std::size_t outcome_kinds = 5;

inline const char* outcome_name(Outcome o) {
    switch (o) {
    case Outcome::not_predicted: return "not_predicted";
    case Outcome::correct_zero: return "correct_zero";
    case Outcome::incorrect_zero: return "incorrect_zero";
    case Outcome::correct_nonzero: return "correct_nonzero";
    case Outcome::incorrect_nonzero: return "incorrect_nonzero";
    }
    return "?";
}

struct OutcomeCounts {
    std::array<std::uint64_t, outcome_kinds> n{};

    std::uint64_t& operator[](Outcome o) { return n[static_cast<std::size_t>(o)]; }
    std::uint64_t operator[](Outcome o) const { return n[static_cast<std::size_t>(o)]; }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto v : n)
            t += v;
        return t;
    }

    OutcomeCounts& operator+=(const OutcomeCounts& o) {
        for (std::size_t i = 0; i < outcome_kinds; ++i)
            n[i] += o.n[i];
        return *this;
    }

    friend bool operator==(const OutcomeCounts&, const OutcomeCounts&) = default;
};

/// How an output element was produced.
enum class Decision : std::uint8_t {
    base = 0,           // always evaluated: proxy, singleton, or no prediction in this layer
    unpredicted = 1,    // predictor disabled for this neuron (c <= T)
    proxy_nonzero = 2,  // member evaluated because its proxy was nonzero
    binary_nonzero = 3, // proxy zero, binary estimate >= 0: evaluated
    skipped = 4,        // predicted zero, not evaluated, output 0
};

inline bool evaluated(Decision d) { return d != Decision::skipped; }

/// Which predictors vote. Hybrid requires both to agree on zero; the other
/// two isolate one component each.
enum class PredictorMode : std::uint8_t { hybrid = 0, binary_only = 1, cluster_only = 2 };

struct HybridConfig {
    double threshold = default_threshold;
    bool predictor = true;         // master switch
    std::vector<bool> layer_mask;  // empty: every layer enabled
    PredictorMode mode = PredictorMode::hybrid;
    bool oracle = false;           // label outcomes against a per-layer reference
    bool teacher_forcing = false;  // feed each layer the reference input instead of its own

    bool layer_enabled(std::size_t l) const { return predictor && (layer_mask.empty() || layer_mask.at(l)); }
};

/// Estimated ReLU input from the binary dot product: BN(m * p_bin + b) + residual,
/// applying only the stages the layer declares.
inline double estimate_base(std::int32_t p_bin, const PredictorParams& params, const BnChannel* bn = nullptr,
                            std::optional<double> residual = std::nullopt) {
    if (!params.enabled)
        throw ContractViolation("estimate_base called on a neuron whose predictor is disabled");
    double v = params.m * static_cast<double>(p_bin) + params.b;
    if (bn)
        v = apply_batchnorm_real(v, *bn);
    if (residual)
        v += *residual;
    return v;
}

/// Combined vote for a cluster member. `estimate` is only invoked when the
/// proxy output was zero and the member's predictor is enabled.
template <typename EstimateFn>
Decision predict_member_zero(const PredictorParams& params, std::optional<bool> proxy_output_zero,
                             EstimateFn&& estimate) {
    if (!proxy_output_zero)
        throw ContractViolation("member prediction requested before its proxy was evaluated");
    if (!params.enabled)
        return Decision::unpredicted;
    if (!*proxy_output_zero)
        return Decision::proxy_nonzero;
    return estimate() < 0.0 ? Decision::skipped : Decision::binary_nonzero;
}

inline Outcome classify(Decision d, bool reference_zero) {
    switch (d) {
    case Decision::base:
    case Decision::unpredicted:
        return Outcome::not_predicted;
    case Decision::skipped:
        return reference_zero ? Outcome::correct_zero : Outcome::incorrect_zero;
    default:
        return reference_zero ? Outcome::incorrect_nonzero : Outcome::correct_nonzero;
    }
}

struct LayerPrediction {
    std::vector<Decision> decisions; // per output element, n * positions + p
    std::vector<Outcome> outcomes;   // filled in oracle mode only
    OutcomeCounts counts;            // oracle mode only
    std::uint64_t macs_executed = 0;
    std::uint64_t macs_skipped = 0;
    std::uint64_t binary_ops = 0;
    std::uint64_t binary_evals = 0;
    std::uint64_t neurons_evaluated = 0;
    std::uint64_t neurons_skipped = 0;
};

struct HybridResult {
    ActivationRecord activations;
    std::vector<LayerPrediction> layers;

    std::uint64_t macs_executed() const { return sum(&LayerPrediction::macs_executed); }
    std::uint64_t macs_skipped() const { return sum(&LayerPrediction::macs_skipped); }

    OutcomeCounts counts() const {
        OutcomeCounts c;
        for (const auto& l : layers)
            c += l.counts;
        return c;
    }

private:
    std::uint64_t sum(std::uint64_t LayerPrediction::*field) const {
        std::uint64_t s = 0;
        for (const auto& l : layers)
            s += l.*field;
        return s;
    }
};

/// Inference engine with zero-output prediction. Holds everything derived
/// from (model, clusters, calibration) so repeated runs are cheap.
class HybridEngine {
public:
    HybridEngine(const QuantModel& model, ClusterPlan plan, PredictorTable table)
        : model_(&model), plan_(std::move(plan)), table_(std::move(table)), binary_(model) {
        validate(model);
        if (plan_.layers.size() != model.layers.size())
            throw ConfigError("cluster plan missing or does not match the model");
        if (table_.layers.size() != model.layers.size())
            throw ConfigError("predictor parameters missing or do not match the model");
        for (std::size_t l = 0; l < model.layers.size(); ++l)
            if (table_.layers[l].size() != model.layers[l].out_features)
                throw ConfigError("predictor parameters do not cover layer " + std::to_string(l));
        validate_plan(plan_, model);
        for (const auto& layer : model.layers)
            evaluators_.emplace_back(layer);
    }

    const QuantModel& model() const { return *model_; }
    const ClusterPlan& plan() const { return plan_; }
    const PredictorTable& table() const { return table_; }

    HybridResult run(const QuantTensor& input, const HybridConfig& config) const {
        if (input.shape() != model_->input_shape)
            throw StructuralError("hybrid_forward: input shape does not match model");
        if (!(config.threshold >= 0.0 && config.threshold <= 1.0))
            throw ConfigError("threshold must lie in [0, 1]");
        if (!config.layer_mask.empty() && config.layer_mask.size() != model_->layers.size())
            throw ConfigError("layer mask size does not match model");

        std::optional<ActivationRecord> forced;
        if (config.teacher_forcing)
            forced = forward_reference(*model_, input);

        std::vector<PredictorParams> active;
        HybridResult result;
        result.activations.layers.reserve(model_->layers.size());
        result.layers.resize(model_->layers.size());
        for (std::size_t l = 0; l < model_->layers.size(); ++l) {
            const auto& src = forced ? forced->layers : result.activations.layers;
            const QuantTensor& in = l == 0 ? input : src[l - 1].out;
            const QuantTensor* res = residual_operand(*model_, l, input, src);
            active = table_.layers[l];
            for (auto& p : active)
                p.enabled = p.usable(config.threshold);
            result.activations.layers.push_back(
                run_layer(l, in, res, active, config, result.layers[l], input.scale()));
        }
        return result;
    }

private:
    LayerActivation run_layer(std::size_t l, const QuantTensor& in, const QuantTensor* res,
                              std::span<const PredictorParams> params, const HybridConfig& config,
                              LayerPrediction& stats, Scale out_scale) const {
        const LayerDesc& layer = model_->layers[l];
        const LayerEvaluator& eval = evaluators_[l];
        const LayerClusters& lc = plan_.layers[l];
        const std::size_t positions = layer.positions();
        const std::size_t K = layer.fan_in;
        const bool predicting = layer.has_relu && config.layer_enabled(l);

        LayerActivation act;
        act.pre.assign(layer.output_size(), Fixed{});
        act.out = QuantTensor::zeros(layer.output_shape(), out_scale);
        stats.decisions.assign(layer.output_size(), Decision::base);

        std::vector<std::int8_t> window(K);
        PackedSigns window_signs;
        std::vector<std::uint8_t> proxy_zero(lc.clusters.size(), 0);

        auto residual_at = [&](std::size_t idx) { return res ? (*res)[idx] : std::int8_t{0}; };

        auto evaluate = [&](std::size_t n, std::size_t p, Decision d) {
            const std::size_t idx = n * positions + p;
            const Fixed pre = eval.pre_activation(n, eval.accumulate(n, window), residual_at(idx));
            act.pre[idx] = pre;
            act.out[idx] = eval.output_code(pre);
            stats.decisions[idx] = d;
            stats.macs_executed += K;
            stats.neurons_evaluated++;
            return act.out[idx] == 0;
        };

        auto skip = [&](std::size_t n, std::size_t p) {
            stats.decisions[n * positions + p] = Decision::skipped;
            stats.macs_skipped += K;
            stats.neurons_skipped++;
        };

        auto binary_estimate = [&](std::size_t n, std::size_t p) {
            stats.binary_ops += K;
            stats.binary_evals++;
            const std::int32_t pbin = binary_dot(binary_.layers[l][n], window_signs);
            const BnChannel* bn = layer.bn ? &(*layer.bn)[n] : nullptr;
            std::optional<double> r;
            if (layer.has_residual())
                r = static_cast<double>(residual_at(n * positions + p));
            return estimate_base(pbin, params[n], bn, r);
        };

        for (std::size_t p = 0; p < positions; ++p) {
            gather_window(layer, in.data(), p, window);
            if (!predicting) {
                for (std::size_t n = 0; n < layer.out_features; ++n)
                    evaluate(n, p, Decision::base);
                continue;
            }
            window_signs.assign(window);

            if (config.mode == PredictorMode::binary_only) {
                for (std::size_t n = 0; n < layer.out_features; ++n) {
                    if (!params[n].enabled)
                        evaluate(n, p, Decision::unpredicted);
                    else if (binary_estimate(n, p) < 0.0)
                        skip(n, p);
                    else
                        evaluate(n, p, Decision::binary_nonzero);
                }
                continue;
            }

            // Proxies and singletons first; members depend on their proxy.
            for (std::size_t k = 0; k < lc.clusters.size(); ++k)
                proxy_zero[k] = evaluate(lc.clusters[k].proxy, p, Decision::base);
            for (auto s : lc.singletons)
                evaluate(s, p, Decision::base);

            for (std::size_t k = 0; k < lc.clusters.size(); ++k) {
                for (auto m : lc.clusters[k].members) {
                    Decision d;
                    if (config.mode == PredictorMode::cluster_only)
                        d = proxy_zero[k] ? Decision::skipped : Decision::proxy_nonzero;
                    else
                        d = predict_member_zero(params[m], static_cast<bool>(proxy_zero[k]),
                                                [&] { return binary_estimate(m, p); });
                    if (d == Decision::skipped)
                        skip(m, p);
                    else
                        evaluate(m, p, d);
                }
            }
        }

        if (config.oracle) {
            const LayerActivation ref = forward_layer(layer, in, res, out_scale);
            stats.outcomes.resize(layer.output_size());
            for (std::size_t i = 0; i < layer.output_size(); ++i) {
                stats.outcomes[i] = classify(stats.decisions[i], ref.out[i] == 0);
                stats.counts[stats.outcomes[i]]++;
            }
        }
        return act;
    }

    const QuantModel* model_;
    ClusterPlan plan_;
    PredictorTable table_;
    BinaryWeights binary_;
    std::vector<LayerEvaluator> evaluators_;
};

inline HybridResult hybrid_forward(const QuantModel& model, const ClusterPlan& plan, const PredictorTable& table,
                                   const QuantTensor& input, const HybridConfig& config) {
    return HybridEngine(model, plan, table).run(input, config);
}

} // namespace mor
