#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "liftkb/errors.hpp"
#include "liftkb/synthetic.hpp"
#include "liftkb/trainer.hpp"

using namespace liftkb;

namespace {

FactStore store_from(std::size_t relations, std::size_t tuples, const std::vector<std::pair<int, int>>& facts) {
    Vocabulary rels, tups;
    for (std::size_t i = 0; i < relations; ++i) rels.intern("r" + std::to_string(i));
    for (std::size_t i = 0; i < tuples; ++i) tups.intern("t" + std::to_string(i));
    std::vector<Fact> fs;
    for (const auto& [r, t] : facts) {
        fs.push_back({RelationId{static_cast<std::uint32_t>(r)}, TupleId{static_cast<std::uint32_t>(t)}});
    }
    return {rels, tups, fs};
}

// Two relation clusters over disjoint halves of the tuples.
FactStore block_store() {
    std::vector<std::pair<int, int>> facts;
    for (int r = 0; r < 4; ++r) {
        for (int t = 0; t < 20; ++t) {
            if ((r < 2) == (t < 10)) facts.emplace_back(r, t);
        }
    }
    return store_from(4, 20, facts);
}

}  // namespace

TEST_CASE("adam first step") {
    ModelParams p(1, 1, 1);
    AdamState state(p);
    GradientBuffer g(1, 1, 1);
    g.relation(RelationId{0})[0] = 1.0;
    TrainOptions o;
    adam_step(p, g, state, o);
    CHECK(state.step == 1);
    CHECK(p.relations.row(0)[0] == doctest::Approx(-0.005 / (1.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("adam with a repeated gradient keeps the step size") {
    // With bias correction m_hat = g and v_hat = g^2 after every step of a
    // constant gradient, so the second step equals the first.
    ModelParams p(1, 1, 1);
    AdamState state(p);
    GradientBuffer g(1, 1, 1);
    TrainOptions o;
    g.relation(RelationId{0})[0] = 0.3;
    adam_step(p, g, state, o);
    const double first = p.relations.row(0)[0];
    adam_step(p, g, state, o);
    const double second = p.relations.row(0)[0] - first;
    CHECK(std::abs(second) == doctest::Approx(std::abs(first)).epsilon(1e-12));
    CHECK(state.step == 2);
}

TEST_CASE("adam leaves untouched and zero-gradient rows alone") {
    ModelParams p(2, 2, 2);
    p.relations.row(1)[0] = 0.7;
    AdamState state(p);
    state.m_relations.row(1)[0] = 0.25;
    state.v_relations.row(1)[0] = 0.5;
    GradientBuffer g(2, 2, 2);
    g.relation(RelationId{0})[0] = 1.0;
    g.relation(RelationId{1});  // touched, but all zero
    adam_step(p, g, state, {});
    CHECK(p.relations.row(1)[0] == 0.7);
    CHECK(state.m_relations.row(1)[0] == 0.25);
    CHECK(state.v_relations.row(1)[0] == 0.5);
    CHECK(p.tuple_pre.row(0)[0] == 0.0);
    CHECK(p.relations.row(0)[0] < 0.0);
}

TEST_CASE("adam refuses non-finite gradients and names the block") {
    ModelParams p(1, 3, 2);
    const auto before = p;
    AdamState state(p);
    GradientBuffer g(1, 3, 2);
    g.relation(RelationId{0})[0] = 1.0;
    g.tuple(TupleId{2})[1] = std::numeric_limits<double>::quiet_NaN();
    try {
        adam_step(p, g, state, {});
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("tuple block #2") != std::string::npos);
    }
    CHECK(p == before);
    CHECK(state.step == 0);
}

TEST_CASE("negative sampling") {
    SUBCASE("forced outcome") {
        std::vector<std::pair<int, int>> facts;
        for (int t = 0; t < 10; ++t) {
            if (t != 6) facts.emplace_back(0, t);
        }
        const auto store = store_from(1, 10, facts);
        Rng rng(1);
        for (int i = 0; i < 50; ++i) CHECK(sample_negative(store, RelationId{0}, rng) == TupleId{6});
    }
    SUBCASE("relation covering every tuple") {
        const auto store = store_from(1, 3, {{0, 0}, {0, 1}, {0, 2}});
        Rng rng(1);
        CHECK_FALSE(sample_negative(store, RelationId{0}, rng).has_value());
    }
    SUBCASE("same seed, same sequence") {
        const auto store = block_store();
        Rng a(99), b(99);
        for (int i = 0; i < 200; ++i) {
            const auto x = sample_negative(store, RelationId{static_cast<std::uint32_t>(i % 4)}, a);
            const auto y = sample_negative(store, RelationId{static_cast<std::uint32_t>(i % 4)}, b);
            REQUIRE(x.has_value());
            CHECK(x == y);
            CHECK_FALSE(store.contains(RelationId{static_cast<std::uint32_t>(i % 4)}, *x));
        }
    }
    SUBCASE("roughly uniform over the unobserved tuples") {
        const auto store = block_store();
        Rng rng(5);
        std::vector<int> counts(20, 0);
        for (int i = 0; i < 20000; ++i) counts[sample_negative(store, RelationId{0}, rng)->value]++;
        for (int t = 0; t < 10; ++t) CHECK(counts[t] == 0);
        for (int t = 10; t < 20; ++t) CHECK(std::abs(counts[t] - 2000) < 200);
    }
}

TEST_CASE("initialisation") {
    ModelConfig c;
    c.k = 10;
    SUBCASE("default range") {
        const auto p = init_params(c, 5, 7, 3);
        for (const double x : p.relations.data()) CHECK((x >= -0.1 && x <= 0.1));
        for (const double x : p.tuple_pre.data()) CHECK((x >= -0.1 && x <= 0.1));
    }
    SUBCASE("overrides") {
        const auto p = init_params(c, 5, 7, 3, {{RelationId{2}, {-8.1, -7.9}}});
        for (const double x : p.relations.row(2)) CHECK((x >= -8.1 && x <= -7.9));
        for (const double x : p.relations.row(1)) CHECK((x >= -0.1 && x <= 0.1));
    }
    SUBCASE("deterministic") {
        CHECK(init_params(c, 5, 7, 3) == init_params(c, 5, 7, 3));
        CHECK_FALSE(init_params(c, 5, 7, 3) == init_params(c, 5, 7, 4));
    }
}

TEST_CASE("zero epochs return the initialisation") {
    const auto store = block_store();
    ModelConfig c;
    c.k = 6;
    TrainOptions o;
    o.seed = 12;
    const auto result = train(store, {}, c, o);
    CHECK(result.params == init_params(c, store.num_relations(), store.num_tuples(), 12));
    CHECK(result.epochs.empty());
    CHECK(result.adam.step == 0);
}

TEST_CASE("reconstruction loss settles on block-structured data") {
    const auto store = block_store();
    ModelConfig c;
    c.k = 10;
    c.variant = Variant::FS;
    TrainOptions o;
    o.epochs = 200;
    o.batch_size = 16;
    o.seed = 4;
    o.learning_rate = 0.05;
    const auto result = train(store, {}, c, o);
    REQUIRE(result.epochs.size() == 200);
    // Per-epoch losses are noisy because negatives are resampled, so compare
    // means of consecutive 10-epoch windows.
    const auto window = [&](std::size_t start) {
        double sum = 0.0;
        for (std::size_t e = start; e < start + 10; ++e) sum += result.epochs[e].mean.reconstruction;
        return sum / 10.0;
    };
    // After a short transient the regulariser and the data balance out and the
    // windows stay in a narrow band far below the starting loss.
    double lo = window(40), hi = window(40);
    for (std::size_t start = 40; start + 10 <= 200; start += 10) {
        lo = std::min(lo, window(start));
        hi = std::max(hi, window(start));
    }
    CHECK(hi - lo < 0.03);
    CHECK(hi < 0.2 * window(0));
    CHECK(result.epochs[99].mean.total < result.epochs[0].mean.total);
    for (const auto& e : result.epochs) {
        CHECK(e.seconds >= 0.0);
        CHECK(e.skipped_pairs == 0);
        CHECK(e.batches == 3);
    }
    for (const double x : result.params.relations.data()) CHECK(std::isfinite(x));
    for (const double x : result.params.tuple_pre.data()) CHECK(std::isfinite(x));
}

TEST_CASE("trained rules hold almost everywhere") {
    const auto store = block_store();
    ModelConfig c;
    c.k = 20;
    c.variant = Variant::FSL;
    TrainOptions o;
    o.epochs = 1000;
    o.batch_size = 64;
    o.seed = 8;
    // r2 => r0 crosses clusters, so the data pull against it
    const std::vector<Rule> rules{{RelationId{0}, RelationId{1}}, {RelationId{2}, RelationId{0}}};
    const auto result = train(store, rules, c, o);
    for (const auto& rule : rules) {
        std::size_t violated = 0;
        for (std::size_t i = 0; i < c.k; ++i) {
            if (result.params.relations.row(rule.antecedent.value)[i] >
                result.params.relations.row(rule.consequent.value)[i]) {
                ++violated;
            }
        }
        CHECK(static_cast<double>(violated) / c.k < 0.05);
    }
}

TEST_CASE("single-threaded training is bitwise reproducible") {
    const auto corpus = generate_corpus({}, 3);
    ModelConfig c;
    c.k = 8;
    c.variant = Variant::FSL;
    TrainOptions o;
    o.epochs = 5;
    o.batch_size = 100;
    o.seed = 21;
    const auto a = train(corpus.store, corpus.rules, c, o);
    const auto b = train(corpus.store, corpus.rules, c, o);
    CHECK(a.params == b.params);
    CHECK(a.adam == b.adam);
    o.seed = 22;
    CHECK_FALSE(train(corpus.store, corpus.rules, c, o).params == a.params);
}

TEST_CASE("worker threads reproduce themselves and stay close to one thread") {
    const auto corpus = generate_corpus({}, 4);
    ModelConfig c;
    c.k = 8;
    TrainOptions o;
    o.epochs = 3;
    o.batch_size = 256;
    o.seed = 2;
    const auto single = train(corpus.store, {}, c, o);
    o.workers = 3;
    const auto a = train(corpus.store, {}, c, o);
    const auto b = train(corpus.store, {}, c, o);
    CHECK(a.params == b.params);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.params.relations.data().size(); ++i) {
        worst = std::max(worst, std::abs(a.params.relations.data()[i] - single.params.relations.data()[i]));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("continuing from a saved state matches an uninterrupted run") {
    const auto store = block_store();
    ModelConfig c;
    c.k = 5;
    TrainOptions o;
    o.batch_size = 16;
    o.seed = 6;
    o.epochs = 4;
    const auto full = train(store, {}, c, o);
    o.epochs = 2;
    const auto half = train(store, {}, c, o);
    // A resumed run draws from a fresh stream, so only the optimizer state
    // bookkeeping is comparable, not the parameters.
    const auto resumed = train_from(half.params, half.adam, store, {}, c, o);
    CHECK(resumed.adam.step == full.adam.step);
}

TEST_CASE("adam sidecar round trip") {
    const auto store = block_store();
    ModelConfig c;
    c.k = 3;
    TrainOptions o;
    o.epochs = 2;
    o.batch_size = 8;
    const auto result = train(store, {}, c, o);
    std::ostringstream out;
    write_adam_state(out, result.adam, store.relations(), store.tuples());
    std::istringstream in(out.str());
    CHECK(read_adam_state(in, store.relations(), store.tuples()) == result.adam);
}

TEST_CASE("metrics rows") {
    std::ostringstream out;
    write_metrics_header(out);
    EpochStats s;
    s.epoch = 3;
    s.mean = LossBreakdown::combine(1.5, 2.0, 0.25, 0.01, 0.1);
    s.seconds = 0.5;
    write_metrics_row(out, s);
    CHECK(out.str() == "epoch,recon,l2,implication,total,seconds\n3,1.5,2,0.25,1.5449999999999999,0.5\n");
}

TEST_CASE("option validation") {
    TrainOptions o;
    CHECK_NOTHROW(o.validate());
    o.learning_rate = 0.0;
    CHECK_THROWS_AS(o.validate(), UsageError);
    o = {};
    o.batch_size = 0;
    CHECK_THROWS_AS(o.validate(), UsageError);
    o = {};
    o.adam_beta2 = 1.0;
    CHECK_THROWS_AS(o.validate(), UsageError);
}

TEST_CASE("derived seeds separate streams") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(5, 1) == derive_seed(5, 1));
}
