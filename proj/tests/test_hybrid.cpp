#include <gtest/gtest.h>

#include <thread>

#include "mor/hybrid.hpp"
#include "support/fixtures.hpp"

using namespace mor;
using namespace mor::testing;

namespace {

PredictorParams line(double m, double b) {
    PredictorParams p;
    p.c = 1.0;
    p.m = m;
    p.b = b;
    p.enabled = true;
    p.degenerate = false;
    return p;
}

BnChannel bn(double mu, double sigma, double gamma, double beta) {
    return {Fixed::from_double(mu), Fixed::from_double(sigma), Fixed::from_double(gamma), Fixed::from_double(beta)};
}

struct Calibrated {
    QuantModel model;
    ClusterPlan plan;
    PredictorTable table;
};

Calibrated calibrated_random(Rng& rng, std::size_t max_neurons = 64) {
    Calibrated c;
    c.model = random_model(rng, {.max_neurons = max_neurons});
    c.table = calibrate_model(c.model, random_inputs(rng, c.model.input_shape, 24), 0.5);
    c.plan = cluster_model(c.model);
    return c;
}

} // namespace

TEST(EstimateBase, PlainLine) { EXPECT_DOUBLE_EQ(estimate_base(-10, line(0.5, 2)), -3.0); }

TEST(EstimateBase, BatchNormApplied) {
    const auto ch = bn(0, 2, 1, -1);
    EXPECT_DOUBLE_EQ(estimate_base(4, line(1, 0), &ch), 1.0);
}

TEST(EstimateBase, ResidualFlipsDecision) {
    const auto ch = bn(0, 2, 1, -1);
    EXPECT_DOUBLE_EQ(estimate_base(0, line(1, 0), &ch), -1.0);
    EXPECT_DOUBLE_EQ(estimate_base(0, line(1, 0), &ch, 3.0), 2.0);
}

TEST(EstimateBase, DisabledNeuronIsContractViolation) {
    auto p = line(1, 0);
    p.enabled = false;
    EXPECT_THROW(estimate_base(3, p), ContractViolation);
}

TEST(PredictMemberZero, ProxyNonzeroShortCircuits) {
    int calls = 0;
    const auto d = predict_member_zero(line(1, 0), false, [&] {
        ++calls;
        return -1.0;
    });
    EXPECT_EQ(d, Decision::proxy_nonzero);
    EXPECT_EQ(calls, 0);
}

TEST(PredictMemberZero, DisabledMemberIsEvaluated) {
    auto p = line(1, 0);
    p.enabled = false;
    int calls = 0;
    EXPECT_EQ(predict_member_zero(p, true, [&] { return ++calls, -5.0; }), Decision::unpredicted);
    EXPECT_EQ(calls, 0);
}

TEST(PredictMemberZero, BothVotesZeroSkips) {
    EXPECT_EQ(predict_member_zero(line(1, 0), true, [] { return -0.5; }), Decision::skipped);
    EXPECT_EQ(predict_member_zero(line(1, 0), true, [] { return 0.0; }), Decision::binary_nonzero);
}

TEST(PredictMemberZero, ProxyNotEvaluated) {
    EXPECT_THROW(predict_member_zero(line(1, 0), std::nullopt, [] { return -1.0; }), ContractViolation);
}

TEST(PredictMemberZero, AgreesWithReferenceOnAffineFixture) {
    Rng rng(1);
    auto fx = affine_fixture(rng, 2, 3, 21);
    const auto table = calibrate_model(fx.model, fx.samples(rng, 40), 0.9);
    const auto& layer = fx.model.layers[0];
    for (int s = 0; s < 50; ++s) {
        const auto x = fx.sample(rng);
        const auto ref = forward_reference(fx.model, x).layers[0];
        PackedSigns xs(x.data());
        for (std::size_t n = 1; n < 3; ++n) {
            const bool proxy_zero = ref.out[0] == 0;
            const auto d = predict_member_zero(table.at(0, n), proxy_zero, [&] {
                return estimate_base(binary_dot(PackedSigns(layer.weight_row(n)), xs), table.at(0, n));
            });
            // Group members are parallel to neuron 0, so both votes are exact.
            EXPECT_EQ(d == Decision::skipped, ref.out[n] == 0);
        }
    }
}

TEST(HybridForward, ThresholdOneIsReference) {
    Rng rng(2);
    for (int t = 0; t < 10; ++t) {
        auto c = calibrated_random(rng);
        HybridConfig cfg;
        cfg.threshold = 1.0;
        cfg.oracle = true;
        for (int s = 0; s < 5; ++s) {
            const auto x = random_input(rng, c.model.input_shape);
            const auto r = hybrid_forward(c.model, c.plan, c.table, x, cfg);
            EXPECT_EQ(r.macs_skipped(), 0u);
            const auto ref = forward_reference(c.model, x);
            for (std::size_t l = 0; l < ref.layers.size(); ++l)
                EXPECT_EQ(r.activations.layers[l].out, ref.layers[l].out);
            EXPECT_EQ(r.counts()[Outcome::incorrect_zero], 0u);
        }
    }
}

TEST(HybridForward, PerfectFixtureSkipsExactlyTheZeros) {
    Rng rng(3);
    auto fx = affine_fixture(rng, 4, 6, 41, 0.6, 0.6);
    const auto table = calibrate_model(fx.model, fx.samples(rng, 64), 0.9);
    const auto plan = cluster_model(fx.model);
    const auto roles = check_partition(plan.layers[0]);
    HybridConfig cfg;
    cfg.oracle = true;
    std::uint64_t skipped = 0;
    for (int s = 0; s < 100; ++s) {
        const auto x = fx.sample(rng);
        const auto r = hybrid_forward(fx.model, plan, table, x, cfg);
        const auto ref = forward_reference(fx.model, x).layers[0];
        const auto& lp = r.layers[0];
        EXPECT_EQ(lp.counts[Outcome::incorrect_zero], 0u);
        EXPECT_EQ(lp.counts[Outcome::incorrect_nonzero], 0u);
        for (std::size_t n = 0; n < fx.model.layers[0].out_features; ++n) {
            if (roles.is_member(n)) {
                EXPECT_EQ(lp.decisions[n] == Decision::skipped, ref.out[n] == 0);
            } else {
                EXPECT_EQ(lp.decisions[n], Decision::base);
            }
        }
        skipped += lp.neurons_skipped;
    }
    EXPECT_GT(skipped, 0u);
}

// Every element differing from the reference evaluation of the same layer
// on the same input must be a skipped one; with no incorrect zeros upstream
// the whole activation record matches forward_reference.
TEST(HybridForward, ExactOutsideSkipsOnRandomModels) {
    Rng rng(4);
    for (int t = 0; t < 25; ++t) {
        auto c = calibrated_random(rng);
        HybridEngine engine(c.model, c.plan, c.table);
        HybridConfig cfg;
        cfg.threshold = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        for (int s = 0; s < 10; ++s) {
            const auto x = random_input(rng, c.model.input_shape);
            const auto r = engine.run(x, cfg);
            const auto full_ref = forward_reference(c.model, x);
            bool clean = true;
            for (std::size_t l = 0; l < c.model.layers.size(); ++l) {
                const QuantTensor& in = l == 0 ? x : r.activations.layers[l - 1].out;
                const auto ref = forward_layer(c.model.layers[l], in,
                                               residual_operand(c.model, l, x, r.activations.layers));
                const auto& got = r.activations.layers[l].out;
                for (std::size_t i = 0; i < got.size(); ++i) {
                    if (got[i] != ref.out[i]) {
                        ASSERT_EQ(r.layers[l].decisions[i], Decision::skipped);
                    }
                    if (r.layers[l].decisions[i] == Decision::skipped) {
                        ASSERT_EQ(got[i], 0);
                        clean = clean && ref.out[i] == 0;
                    }
                }
                if (clean) {
                    ASSERT_EQ(got, full_ref.layers[l].out);
                }
            }
        }
    }
}

TEST(HybridForward, ProxiesMatchReference) {
    Rng rng(5);
    for (int t = 0; t < 10; ++t) {
        auto c = calibrated_random(rng);
        HybridConfig cfg;
        cfg.threshold = 0.0;
        cfg.teacher_forcing = true;
        const auto x = random_input(rng, c.model.input_shape);
        const auto r = hybrid_forward(c.model, c.plan, c.table, x, cfg);
        const auto ref = forward_reference(c.model, x);
        for (std::size_t l = 0; l < c.model.layers.size(); ++l) {
            const auto P = c.model.layers[l].positions();
            for (const auto& cl : c.plan.layers[l].clusters)
                for (std::size_t p = 0; p < P; ++p)
                    EXPECT_EQ(r.activations.layers[l].out[cl.proxy * P + p], ref.layers[l].out[cl.proxy * P + p]);
        }
    }
}

TEST(HybridForward, ThresholdMonotonicityAndConjunction) {
    Rng rng(6);
    const std::vector<double> thresholds{0.0, 0.3, 0.6, 0.8, 0.9, 0.95, 1.0};
    for (int t = 0; t < 10; ++t) {
        auto c = calibrated_random(rng);
        HybridEngine engine(c.model, c.plan, c.table);
        for (int s = 0; s < 5; ++s) {
            const auto x = random_input(rng, c.model.input_shape);
            std::vector<HybridResult> runs;
            for (double T : thresholds) {
                HybridConfig cfg;
                cfg.threshold = T;
                cfg.oracle = true;
                cfg.teacher_forcing = true;
                runs.push_back(engine.run(x, cfg));

                cfg.mode = PredictorMode::binary_only;
                const auto bin = engine.run(x, cfg);
                cfg.mode = PredictorMode::cluster_only;
                const auto clu = engine.run(x, cfg);
                for (std::size_t l = 0; l < c.model.layers.size(); ++l)
                    for (std::size_t i = 0; i < runs.back().layers[l].outcomes.size(); ++i) {
                        if (runs.back().layers[l].outcomes[i] != Outcome::incorrect_zero)
                            continue;
                        EXPECT_EQ(bin.layers[l].outcomes[i], Outcome::incorrect_zero);
                        EXPECT_EQ(clu.layers[l].outcomes[i], Outcome::incorrect_zero);
                    }
            }
            for (std::size_t k = 1; k < runs.size(); ++k) {
                for (std::size_t l = 0; l < c.model.layers.size(); ++l) {
                    const auto& hi = runs[k].layers[l].decisions;
                    const auto& lo = runs[k - 1].layers[l].decisions;
                    for (std::size_t i = 0; i < hi.size(); ++i)
                        if (hi[i] == Decision::skipped) {
                            EXPECT_EQ(lo[i], Decision::skipped);
                        }
                }
                EXPECT_LE(runs[k].counts()[Outcome::incorrect_zero], runs[k - 1].counts()[Outcome::incorrect_zero]);
            }
        }
    }
}

TEST(HybridForward, QuadrantsPartitionOutputs) {
    Rng rng(7);
    for (int t = 0; t < 10; ++t) {
        auto c = calibrated_random(rng);
        HybridConfig cfg;
        cfg.threshold = 0.2;
        cfg.oracle = true;
        const auto r = hybrid_forward(c.model, c.plan, c.table, random_input(rng, c.model.input_shape), cfg);
        std::uint64_t total = 0;
        for (const auto& l : c.model.layers)
            total += l.output_size();
        EXPECT_EQ(r.counts().total(), total);
        EXPECT_EQ(r.macs_executed() + r.macs_skipped(), c.model.total_macs());
    }
}

TEST(HybridForward, MissingPartsAreConfigErrors) {
    Rng rng(8);
    auto c = calibrated_random(rng);
    PredictorTable empty;
    EXPECT_THROW(HybridEngine(c.model, c.plan, empty), ConfigError);
    EXPECT_THROW(HybridEngine(c.model, ClusterPlan{}, c.table), ConfigError);
}

TEST(HybridForward, MasterSwitchAndLayerMask) {
    Rng rng(9);
    auto fx = affine_fixture(rng, 2, 8, 25, 0.7, 0.7);
    const auto table = calibrate_model(fx.model, fx.samples(rng, 32));
    const auto plan = cluster_model(fx.model);
    HybridEngine engine(fx.model, plan, table);
    HybridConfig off;
    off.predictor = false;
    HybridConfig masked;
    masked.layer_mask = {false};
    for (int s = 0; s < 10; ++s) {
        const auto x = fx.sample(rng);
        EXPECT_EQ(engine.run(x, off).macs_skipped(), 0u);
        EXPECT_EQ(engine.run(x, masked).macs_skipped(), 0u);
    }
}

TEST(HybridForward, ConcurrentRunsAgree) {
    Rng rng(10);
    auto c = calibrated_random(rng, 128);
    HybridEngine engine(c.model, c.plan, c.table);
    const auto x = random_input(rng, c.model.input_shape);
    HybridConfig cfg;
    cfg.threshold = 0.3;
    const auto expected = engine.run(x, cfg).activations;
    ActivationRecord a, b;
    std::thread t1([&] { a = engine.run(x, cfg).activations; });
    std::thread t2([&] { b = engine.run(x, cfg).activations; });
    t1.join();
    t2.join();
    EXPECT_EQ(a, expected);
    EXPECT_EQ(b, expected);
}
