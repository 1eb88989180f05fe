#include "mmblock/dten.hpp"
#include "mmblock/error.hpp"
#include "mmblock/harness.hpp"
#include "mmblock/linalg.hpp"
#include "mmblock/model_io.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

namespace mmb {
namespace {

std::string dten_bytes(const DenseTensor& t) {
    std::ostringstream out;
    write_dten(out, t);
    return out.str();
}

/// sum_s Z_s x_m U_ms, one element-wise mode product at a time.
DenseTensor brute_block_sum(const BlockFactorModel& model) {
    DenseTensor sum(model.data_shape);
    for (const auto& seg : model.segments) {
        DenseTensor t = seg.core;
        for (std::size_t m = 0; m < seg.modes.size(); ++m) t = testing::brute_mode_product(t, m, seg.modes[m]);
        sum += t;
    }
    return sum;
}

TEST(SynthConfig, JsonRoundTrip) {
    SynthConfig c = default_part_config();
    c.noise = 0.25;
    c.seed = 18446744073709551557ULL;
    c.ranks = {8, 3, 2, 2};
    c.compositional = {Compositionality::full, Compositionality::shared};
    const auto back = synth_config_from_json(synth_config_to_json(c));
    EXPECT_EQ(synth_config_to_json(back), synth_config_to_json(c));
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.compositional, c.compositional);
}

TEST(SynthConfig, RejectsInvalid) {
    EXPECT_THROW(synth_config_from_json(R"({"measurement": 8, "bogus": 1})"), ConfigError);
    EXPECT_THROW(synth_config_from_json(R"({"noise": -1})"), ConfigError);
    EXPECT_THROW(synth_config_from_json(R"({"factors": [2, 0]})"), ConfigError);
    EXPECT_THROW(synth_config_from_json(R"({"factors": [2, 2], "ranks": [4, 3, 1]})"), ConfigError);
    EXPECT_THROW(synth_config_from_json("not json"), ConfigError);
}

TEST(SynthGenerate, DefaultShapeHas64By60Entries) {
    const auto d = synth_generate(SynthConfig{});
    EXPECT_EQ(d.data.shape(), (Shape{64, 5, 4, 3}));
    EXPECT_EQ(d.data.size(), 64u * 60u);
}

TEST(SynthGenerate, NoiselessFullRankIsRecoveredExactly) {
    const auto d = synth_generate(SynthConfig{});
    EXPECT_LT(relative_error(reconstruct(mmode_svd(d.data, RankSpec::full())), d.data), 1e-12);
    // The ground truth itself, rebuilt from the definition.
    DenseTensor t = d.flat_truth->core;
    for (std::size_t m = 0; m < 4; ++m) t = testing::brute_mode_product(t, m, d.flat_truth->modes[m]);
    EXPECT_LT(max_abs_diff(t, d.data), 1e-12);
    for (std::size_t m = 0; m < 4; ++m) EXPECT_LT(orthonormality_residual(d.flat_truth->modes[m]), 1e-12);
}

TEST(SynthGenerate, SingletonFactorsGiveOneObservation) {
    SynthConfig c;
    c.measurement = 7;
    c.factors = {1, 1};
    const auto d = synth_generate(c);
    EXPECT_EQ(d.data.size(), 7u);
    EXPECT_EQ(enumerate_observations(d.data).size(), 1u);
}

TEST(SynthGenerate, SeedFixesBytes) {
    SynthConfig c = default_part_config();
    c.noise = 0.1;
    EXPECT_EQ(dten_bytes(synth_generate(c).data), dten_bytes(synth_generate(c).data));
    SynthConfig other = c;
    other.seed = 2;
    EXPECT_NE(dten_bytes(synth_generate(other).data), dten_bytes(synth_generate(c).data));
}

TEST(SynthGenerate, NoiseHasRequestedSpread) {
    SynthConfig c;
    c.noise = 0.5;
    const auto d = synth_generate(c);
    const double rms = (d.data - d.signal).frobenius_norm() / std::sqrt(static_cast<double>(d.data.size()));
    EXPECT_NEAR(rms, 0.5, 0.05);
}

TEST(SynthGenerate, BlockTruthIsSumOfSegments) {
    SynthConfig c = default_part_config();
    c.compositional = {Compositionality::full, Compositionality::shared};
    const auto d = synth_generate(c);
    ASSERT_TRUE(d.block_truth.has_value());
    const auto& truth = *d.block_truth;
    ASSERT_EQ(truth.segment_count(), 2u);
    EXPECT_LT(max_abs_diff(brute_block_sum(truth), d.data), 1e-12);
    EXPECT_EQ(truth.segments[0].ranks(), (std::vector<std::size_t>{24, 4, 3, 2}));
    EXPECT_EQ(truth.segments[0].modes[2], truth.segments[1].modes[2]);
    EXPECT_NE(truth.segments[0].modes[1], truth.segments[1].modes[1]);
    for (const auto& seg : truth.segments)
        for (Eigen::Index i = 0; i < 64; ++i) {
            const bool inside = std::find(seg.support.begin(), seg.support.end(), std::size_t(i)) != seg.support.end();
            if (!inside) EXPECT_EQ(seg.modes[0].row(i).norm(), 0.0);
        }
}

TEST(Observations, LabelsFollowCanonicalOrder) {
    std::mt19937_64 rng(5);
    const auto t = testing::random_tensor({3, 2, 4}, rng);
    const auto obs = enumerate_observations(t);
    ASSERT_EQ(obs.size(), 8u);
    for (const auto& o : obs)
        for (std::size_t p = 0; p < 3; ++p)
            EXPECT_EQ(o.values(static_cast<Eigen::Index>(p)), testing::element(t, {p, o.labels[0], o.labels[1]}));
    EXPECT_EQ(obs[5].labels, (std::vector<std::size_t>{1, 2}));
}

TEST(Report, Fnv1aKnownValues) {
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Report, JsonRoundTripIsLossless) {
    ExperimentReport r;
    r.id = "x-1";
    r.kind = "flat";
    r.config = R"({"a":1})";
    r.config_hash = fnv1a_hex(r.config);
    r.metrics["third"] = 1.0 / 3.0;
    r.metrics["tiny"] = 4.9406564584124654e-324;
    r.metrics["nan"] = std::numeric_limits<double>::quiet_NaN();
    r.metrics["inf"] = -std::numeric_limits<double>::infinity();
    r.series["trace"] = {3.0, 2.0000000000000004, 0.1};
    r.add_check(make_check("loss", 1e-13, "<", 1e-10));
    r.add_check(make_check("gap", 12.0, "==", 0.0));
    const auto back = ExperimentReport::from_json(r.to_json());
    EXPECT_EQ(back.to_json(), r.to_json());
    EXPECT_EQ(back.metrics.at("third"), 1.0 / 3.0);
    EXPECT_EQ(back.metrics.at("tiny"), 4.9406564584124654e-324);
    EXPECT_TRUE(std::isnan(back.metrics.at("nan")));
    EXPECT_EQ(back.series.at("trace")[1], 2.0000000000000004);
    EXPECT_FALSE(back.all_pass());
    EXPECT_EQ(back.tolerances.at("loss"), 1e-10);
    EXPECT_EQ(r.to_csv().substr(0, r.to_csv().find('\n')), "section,name,value,tolerance,relation,pass");
    EXPECT_NE(r.to_csv().find("check,gap,12,0,==,false"), std::string::npos);
}

TEST(Report, RejectsUnknownRelation) { EXPECT_THROW(make_check("x", 1, "~", 0), ConfigError); }

TEST(Experiment, FlatNoiselessPasses) {
    const auto r = run_experiment("flat", {});
    EXPECT_TRUE(r.all_pass()) << r.to_json();
    EXPECT_LT(r.metrics.at("relative_loss"), 1e-10);
    EXPECT_EQ(r.config_hash, fnv1a_hex(r.config));
    EXPECT_EQ(r.to_json(), run_experiment("flat", {}).to_json());
}

TEST(Experiment, FlatNoisyStaysWithinNoise) {
    ExperimentOptions o;
    o.synth.noise = 0.01;
    o.synth.ranks = {20, 3, 3, 2};
    const auto r = run_experiment("flat", o);
    EXPECT_TRUE(r.all_pass()) << r.to_json();
}

TEST(Experiment, BlockMatchesIndependentParts) {
    ExperimentOptions o;
    o.synth = default_part_config();
    const auto r = run_experiment("block", o);
    EXPECT_TRUE(r.all_pass()) << r.to_json();
    bool found = false;
    for (const auto& c : r.checks) found = found || c.name == "block_vs_independent_parts";
    EXPECT_TRUE(found);
}

TEST(Experiment, IncrementalAnglesPass) {
    ExperimentOptions o;
    o.synth = default_part_config();
    const auto r = run_experiment("incremental", o);
    EXPECT_TRUE(r.all_pass()) << r.to_json();
    const auto flat = run_experiment("incremental", {});
    EXPECT_TRUE(flat.all_pass()) << flat.to_json();
}

TEST(Experiment, OcclusionFavoursBlockModel) {
    ExperimentOptions o;
    o.synth = default_part_config();
    const auto r = run_experiment("occlusion", o);
    EXPECT_TRUE(r.all_pass()) << r.to_json();
    EXPECT_EQ(r.series.at("block_accuracy").size(), 20u);
}

TEST(Experiment, BlockKindsNeedParts) {
    EXPECT_THROW(run_experiment("occlusion", {}), ConfigError);
    EXPECT_THROW(run_experiment("block", {}), ConfigError);
}

TEST(Experiment, UnknownKindIsConfigError) { EXPECT_THROW(run_experiment("nope", {}), ConfigError); }

TEST(Bench, RejectsNonConformingSizes) {
    EXPECT_THROW(bench_cost(2, {16, 32}), ConfigError);
    EXPECT_THROW(bench_cost(3, {16}), ConfigError);
}

TEST(Bench, CsvHasOneRowPerSize) {
    const auto samples = bench_cost(1, {4, 8}, 2, 1);
    const auto csv = bench_csv(samples);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_EQ(csv.rfind("N,M,K,S_predicted,S_measured,wall_time_serial,wall_time_parallel\n", 0), 0u);
    // Binary splitting of 8 entries: 1 + 2 + 4 + 8 boxes.
    EXPECT_EQ(samples[1].s_measured, 15u);
}

class ModelIo : public ::testing::Test {
protected:
    std::filesystem::path dir = std::filesystem::temp_directory_path() / "mmblock_model_io_test";
    void SetUp() override { std::filesystem::remove_all(dir); }
    void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(ModelIo, FlatRoundTrip) {
    const auto d = synth_generate(SynthConfig{});
    MmodeSvdOptions opts;
    opts.center = true;
    const auto model = mmode_svd(d.data, RankSpec::fixed({10, 3, 3, 2}), opts);
    save_model(dir, model);
    const auto loaded = load_model(dir);
    ASSERT_FALSE(loaded.is_block());
    EXPECT_EQ(max_abs_diff(reconstruct(*loaded.flat), reconstruct(model)), 0.0);
    EXPECT_EQ(loaded.flat->mean, model.mean);
    EXPECT_EQ(loaded.flat->sigmas[2], model.sigmas[2]);
}

TEST_F(ModelIo, BlockRoundTrip) {
    auto c = default_part_config();
    c.compositional = {Compositionality::shared};
    const auto d = synth_generate(c);
    save_model(dir, *d.block_truth);
    const auto loaded = load_model(dir);
    ASSERT_TRUE(loaded.is_block());
    const auto& b = *loaded.block;
    EXPECT_EQ(b.segment_count(), 2u);
    EXPECT_TRUE(b.shared(1));
    EXPECT_EQ(b.hierarchy.node_count(), d.block_truth->hierarchy.node_count());
    EXPECT_EQ(max_abs_diff(reconstruct(b), d.data), 0.0);
}

TEST_F(ModelIo, MissingManifestIsConfigError) { EXPECT_THROW(load_model(dir), ConfigError); }

} // namespace
} // namespace mmb
