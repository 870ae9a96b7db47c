#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "catebounds/dataset.hpp"
#include "catebounds/dgp.hpp"

using namespace catebounds;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "catebounds_dataset_test";
    fs::create_directories(dir);
    return dir / name;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

Dataset tiny_dataset(int n, int envs = 2, std::uint64_t seed = 1) {
    std::vector<Sample> samples;
    RandomStream rs(seed);
    for (int i = 0; i < n; ++i) {
        Sample s;
        s.env = static_cast<int>(rs.below(envs));
        s.covariates = {rs.uniform(-1, 1)};
        s.treatment = rs.bernoulli(0.5) ? 1 : 0;
        s.outcome = rs.uniform(0, 1);
        samples.push_back(s);
    }
    // force coverage of every env and both treatments
    for (int e = 0; e < envs; ++e) {
        samples[e].env = e;
        samples[e].treatment = e % 2;
    }
    return Dataset::from_samples(samples);
}

}  // namespace

TEST(LoadCsv, RelabelsEnvironmentsByFirstAppearance) {
    auto p = temp_file("envs.csv");
    write_file(p,
               "env,x,a,y\n"
               "north,0.1,0,1.0\n"
               "south,0.3,1,2.0\n"
               "north,-0.2,1,0.5\n"
               "south,0.9,0,1.5\n");
    Dataset d = load_csv(p.string(), CsvSchema{});
    EXPECT_EQ(d.num_envs(), 2);
    EXPECT_EQ(d.env_labels(), (std::vector<std::string>{"north", "south"}));
    EXPECT_EQ(d.env(0), 0);
    EXPECT_EQ(d.env(1), 1);
    EXPECT_EQ(d.env(2), 0);
    EXPECT_EQ(d.size(), 4);
}

TEST(LoadCsv, NaNOutcomeNamesTheRow) {
    auto p = temp_file("nan.csv");
    write_file(p,
               "env,x,a,y\n"
               "0,0.1,0,1.0\n"
               "1,0.3,1,NaN\n");
    try {
        load_csv(p.string(), CsvSchema{});
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(LoadCsv, TreatmentOutsideDeclaredSetFails) {
    auto p = temp_file("badtreat.csv");
    write_file(p,
               "env,x,a,y\n"
               "0,0.1,0,1.0\n"
               "1,0.3,2,1.0\n");
    EXPECT_THROW(load_csv(p.string(), CsvSchema{}), ValidationError);
}

TEST(LoadCsv, MissingColumnFails) {
    auto p = temp_file("missing.csv");
    write_file(p, "env,x,y\n0,0.1,1.0\n");
    EXPECT_THROW(load_csv(p.string(), CsvSchema{}), ValidationError);
}

TEST(CsvRoundTrip, LoadAfterWriteIsIdentity) {
    DgpConfig cfg;
    cfg.n = 200;
    cfg.seed = 3;
    Dataset d = sample_synthetic(cfg);
    auto p = temp_file("roundtrip.csv");
    write_csv(d, p.string());
    Dataset d2 = load_csv(p.string(), CsvSchema{});
    ASSERT_EQ(d2.size(), d.size());
    for (int i = 0; i < d.size(); ++i) {
        // indices are reassigned by first appearance; labels identify envs
        EXPECT_EQ(d2.env_labels()[d2.env(i)], d.env_labels()[d.env(i)]);
        EXPECT_EQ(d2.treatment(i), d.treatment(i));
        EXPECT_DOUBLE_EQ(d2.outcome(i), d.outcome(i));
        EXPECT_DOUBLE_EQ(d2.covariates()(i, 0), d.covariates()(i, 0));
    }
}

TEST(Split, PaperSizes) {
    Dataset d = tiny_dataset(10000);
    SplitResult r = split(d, SplitSpec{0.7, 0.1, 0.2, 1});
    EXPECT_EQ(r.train.size(), 7000);
    EXPECT_EQ(r.val.size(), 1000);
    EXPECT_EQ(r.test.size(), 2000);
}

TEST(Split, DeterministicForFixedSeed) {
    Dataset d = tiny_dataset(500);
    SplitResult a = split(d, SplitSpec{0.7, 0.1, 0.2, 42});
    SplitResult b = split(d, SplitSpec{0.7, 0.1, 0.2, 42});
    ASSERT_EQ(a.train.size(), b.train.size());
    for (int i = 0; i < a.train.size(); ++i)
        EXPECT_DOUBLE_EQ(a.train.outcome(i), b.train.outcome(i));
    SplitResult c = split(d, SplitSpec{0.7, 0.1, 0.2, 43});
    bool same = true;
    for (int i = 0; i < a.train.size() && same; ++i)
        same = a.train.outcome(i) == c.train.outcome(i);
    EXPECT_FALSE(same);
}

TEST(Split, TooSmallFails) {
    Dataset d = tiny_dataset(5);
    EXPECT_THROW(split(d, SplitSpec{0.7, 0.1, 0.2, 1}), ValidationError);
}

TEST(Split, DisjointCoveringPartitionProperty) {
    RandomStream rs(99);
    for (int rep = 0; rep < 20; ++rep) {
        int n = 10 + static_cast<int>(rs.below(300));
        Dataset d = tiny_dataset(n, 2, rep + 7);
        SplitSpec spec{0.7, 0.1, 0.2, rs.next_u64()};
        SplitResult r = split(d, spec);
        EXPECT_EQ(r.train.size() + r.val.size() + r.test.size(), n);
        // outcomes are continuous draws, so multisets identify rows
        std::multiset<double> seen;
        for (const Dataset* part : {&r.train, &r.val, &r.test})
            for (int i = 0; i < part->size(); ++i) seen.insert(part->outcome(i));
        std::multiset<double> want;
        for (int i = 0; i < n; ++i) want.insert(d.outcome(i));
        EXPECT_EQ(seen, want);
    }
}

TEST(Split, RetainsAllEnvironmentsWithEnoughSamples) {
    // 3 samples in a rare environment; every partition must get one.
    std::vector<Sample> samples;
    RandomStream rs(5);
    for (int i = 0; i < 200; ++i)
        samples.push_back({0, {rs.uniform(-1, 1)}, i % 2, rs.uniform(0, 1)});
    samples[10].env = 1;
    samples[80].env = 1;
    samples[150].env = 1;
    Dataset d = Dataset::from_samples(samples);
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
        SplitResult r = split(d, SplitSpec{0.7, 0.1, 0.2, seed});
        for (const Dataset* part : {&r.train, &r.val, &r.test}) {
            EXPECT_GE(part->count_env(1), 1) << "seed " << seed;
        }
    }
}

TEST(InferSupport, MinMax) {
    std::vector<Sample> samples = {{0, {0.0}, 0, 0.0}, {1, {0.1}, 1, 1.0}, {0, {0.2}, 1, 2.0}};
    Dataset d = Dataset::from_samples(samples);
    Interval iv = infer_support(d, SupportSpec{SupportMode::empirical_minmax});
    EXPECT_DOUBLE_EQ(iv.lo, 0.0);
    EXPECT_DOUBLE_EQ(iv.hi, 2.0);
}

TEST(InferSupport, ExplicitExcludingOutcomesFails) {
    std::vector<Sample> samples = {{0, {0.0}, 0, 0.5}, {1, {0.1}, 1, 1.5}};
    Dataset d = Dataset::from_samples(samples);
    SupportSpec spec;
    spec.mode = SupportMode::explicit_interval;
    spec.lo = 0.0;
    spec.hi = 1.0;
    EXPECT_THROW(infer_support(d, spec), ValidationError);
    spec.hi = 2.0;
    Interval iv = infer_support(d, spec);
    EXPECT_DOUBLE_EQ(iv.lo, 0.0);
    EXPECT_DOUBLE_EQ(iv.hi, 2.0);
}

TEST(InferSupport, QuantileNestsInsideMinMax) {
    DgpConfig cfg;
    cfg.n = 10000;
    cfg.seed = 11;
    Dataset d = sample_synthetic(cfg);
    Interval minmax = infer_support(d, SupportSpec{SupportMode::empirical_minmax});
    SupportSpec spec;
    spec.mode = SupportMode::quantile;
    spec.alpha = 0.001;
    Interval q = infer_support(d, spec);
    EXPECT_GT(q.lo, minmax.lo);
    EXPECT_LT(q.hi, minmax.hi);
    EXPECT_TRUE(std::isfinite(q.lo) && std::isfinite(q.hi));
}

TEST(InferSupport, MinMaxContainsEveryOutcome) {
    Dataset d = tiny_dataset(300, 2, 8);
    Interval iv = infer_support(d, SupportSpec{SupportMode::empirical_minmax});
    for (int i = 0; i < d.size(); ++i) EXPECT_TRUE(iv.contains(d.outcome(i)));
}

TEST(Dataset, RejectsBadRows) {
    std::vector<Sample> bad = {{0, {0.0}, 0, std::nan("")}};
    EXPECT_THROW(Dataset::from_samples(bad), ValidationError);
    std::vector<Sample> bad_treat = {{0, {0.0}, 3, 1.0}};
    EXPECT_THROW(Dataset::from_samples(bad_treat), ValidationError);
}

TEST(Interval, RequiresOrderedFiniteEndpoints) {
    EXPECT_THROW(Interval(1.0, 1.0), ValidationError);
    EXPECT_THROW(Interval(2.0, 1.0), ValidationError);
    EXPECT_THROW(Interval(0.0, std::numeric_limits<double>::infinity()), ValidationError);
    Interval iv(0.0, 2.0);
    EXPECT_DOUBLE_EQ(iv.width(), 2.0);
    EXPECT_DOUBLE_EQ(iv.clamp(3.0), 2.0);
}
