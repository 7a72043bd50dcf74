#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "liftkb/errors.hpp"
#include "liftkb/evaluation.hpp"
#include "liftkb/synthetic.hpp"

using namespace liftkb;

namespace {

std::vector<ScoredTuple> ranking(std::initializer_list<double> scores) {
    std::vector<ScoredTuple> out;
    std::uint32_t id = 0;
    for (const double s : scores) out.push_back({TupleId{id++}, s});
    sort_ranking(out);
    return out;
}

// AP from pairwise counts: a positive's rank is one plus the number of tuples
// that beat it (higher score, or equal score and smaller id).
double brute_force_ap(const std::vector<double>& scores, const std::vector<bool>& positive) {
    const auto beats = [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    };
    double sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t p = 0; p < scores.size(); ++p) {
        if (!positive[p]) continue;
        ++n_pos;
        std::size_t rank = 1, pos_at_or_above = 1;
        for (std::size_t o = 0; o < scores.size(); ++o) {
            if (o != p && beats(o, p)) {
                ++rank;
                if (positive[o]) ++pos_at_or_above;
            }
        }
        sum += static_cast<double>(pos_at_or_above) / static_cast<double>(rank);
    }
    return n_pos == 0 ? 0.0 : sum / static_cast<double>(n_pos);
}

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

}  // namespace

TEST_CASE("average precision examples") {
    // scores make the order t0, t1, t2
    const auto ranked = ranking({3.0, 2.0, 1.0});
    const std::vector<TupleId> pos_neg_pos{TupleId{0}, TupleId{2}};
    CHECK(average_precision(ranked, pos_neg_pos) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    const std::vector<TupleId> first_two{TupleId{0}, TupleId{1}};
    CHECK(average_precision(ranked, first_two) == 1.0);
    const std::vector<TupleId> last{TupleId{2}};
    CHECK(average_precision(ranked, last) == doctest::Approx(1.0 / 3.0));
    CHECK(average_precision(ranked, {}) == 0.0);
    const std::vector<TupleId> missing{TupleId{7}};
    CHECK_THROWS_AS(average_precision(ranked, missing), DataError);
}

TEST_CASE("ties break toward the smaller tuple id") {
    const auto ranked = ranking({1.0, 1.0, 1.0, 2.0});
    CHECK(ranked[0].tuple == TupleId{3});
    CHECK(ranked[1].tuple == TupleId{0});
    CHECK(ranked[2].tuple == TupleId{1});
    CHECK(ranked[3].tuple == TupleId{2});
    const std::vector<TupleId> pos{TupleId{2}};
    CHECK(average_precision(ranked, pos) == 0.25);
}

TEST_CASE("average precision against pairwise counting over every positive subset") {
    Rng rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 1 + rng.below(7);
        std::vector<double> scores(n);
        // few distinct values so ties are common
        for (auto& s : scores) s = static_cast<double>(rng.below(3));
        std::vector<ScoredTuple> ranked;
        for (std::uint32_t i = 0; i < n; ++i) ranked.push_back({TupleId{i}, scores[i]});
        sort_ranking(ranked);
        for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
            std::vector<bool> positive(n);
            std::vector<TupleId> pos;
            for (std::uint32_t i = 0; i < n; ++i) {
                positive[i] = (mask >> i) & 1u;
                if (positive[i]) pos.push_back(TupleId{i});
            }
            const double ap = average_precision(ranked, pos);
            CHECK(ap == doctest::Approx(brute_force_ap(scores, positive)).epsilon(1e-14));
            CHECK(ap >= 0.0);
            CHECK(ap <= 1.0);
            // AP is one exactly when no negative outranks a positive
            bool perfect = true;
            for (std::size_t i = 0; i < ranked.size() && !pos.empty(); ++i) {
                const bool is_pos = positive[ranked[i].tuple.value];
                const bool any_pos_after = std::any_of(ranked.begin() + static_cast<std::ptrdiff_t>(i), ranked.end(),
                                                       [&](const ScoredTuple& s) { return positive[s.tuple.value]; });
                if (!is_pos && any_pos_after) perfect = false;
            }
            if (!pos.empty()) CHECK((ap == 1.0) == perfect);
        }
    }
}

TEST_CASE("weighted MAP") {
    // r0 has two test facts and AP 0.5, r1 has one test fact and AP 1.
    ModelParams p(2, 4, 1);
    p.relations.row(0)[0] = 1.0;
    p.relations.row(1)[0] = 1.0;
    for (std::uint32_t t = 0; t < 4; ++t) p.tuple_pre.row(t)[0] = 4.0 - t;  // ranks t0 > t1 > t2 > t3
    std::vector<RankingTask> tasks{
        {RelationId{0}, {TupleId{1}, TupleId{3}}, {TupleId{0}, TupleId{1}, TupleId{2}, TupleId{3}}},
        {RelationId{1}, {TupleId{0}}, {TupleId{0}, TupleId{1}, TupleId{2}, TupleId{3}}},
    };
    const auto report = weighted_map(tasks, p, Variant::F);
    CHECK(report.rows[0].average_precision == doctest::Approx(0.5));
    CHECK(report.rows[1].average_precision == 1.0);
    CHECK(report.weighted_map == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

    std::reverse(tasks.begin(), tasks.end());
    const auto reversed = weighted_map(tasks, p, Variant::F, 2);
    CHECK(reversed.weighted_map == report.weighted_map);
    CHECK(reversed.rows[0].relation == RelationId{0});

    const std::vector<RankingTask> single{tasks[0]};
    CHECK(weighted_map(single, p, Variant::F).weighted_map == 1.0);
    CHECK_THROWS_AS(weighted_map({}, p, Variant::F), DataError);
}

TEST_CASE("weighted MAP on a tiny instance against a brute-force evaluation") {
    Rng rng(404);
    for (int trial = 0; trial < 30; ++trial) {
        ModelParams p(3, 5, 2);
        for (auto& x : p.relations.data()) x = static_cast<double>(rng.below(3)) - 1.0;
        for (auto& x : p.tuple_pre.data()) x = static_cast<double>(rng.below(3));
        std::vector<std::pair<int, int>> train_facts, test_facts;
        for (int r = 0; r < 3; ++r) {
            for (int t = 0; t < 5; ++t) {
                const auto u = rng.below(4);
                if (u == 0) train_facts.emplace_back(r, t);
                if (u == 1) test_facts.emplace_back(r, t);
            }
        }
        if (test_facts.empty() || train_facts.empty()) continue;
        const auto train = store_from(3, 5, train_facts);
        const auto test = store_from(3, 5, test_facts);
        const auto tasks = build_ranking_tasks(train, test);

        double num = 0.0, den = 0.0;
        for (std::uint32_t r = 0; r < 3; ++r) {
            std::vector<double> scores;
            std::vector<bool> positive;
            std::size_t n_test = 0;
            for (std::uint32_t t = 0; t < 5; ++t) {
                if (train.contains(RelationId{r}, TupleId{t})) continue;
                scores.push_back(score(p, RelationId{r}, TupleId{t}, Variant::F));
                positive.push_back(test.contains(RelationId{r}, TupleId{t}));
                n_test += positive.back() ? 1 : 0;
            }
            if (n_test == 0) continue;
            num += static_cast<double>(n_test) * brute_force_ap(scores, positive);
            den += static_cast<double>(n_test);
        }
        CHECK(weighted_map(tasks, p, Variant::F).weighted_map == doctest::Approx(num / den).epsilon(1e-14));
    }
}

TEST_CASE("ranking pools exclude training tuples and contain the positives") {
    const auto train = store_from(2, 6, {{0, 0}, {0, 1}, {1, 5}});
    const auto test = store_from(2, 6, {{0, 3}, {1, 0}, {1, 2}});
    const auto tasks = build_ranking_tasks(train, test);
    REQUIRE(tasks.size() == 2);
    CHECK(tasks[0].pool == std::vector<TupleId>{TupleId{2}, TupleId{3}, TupleId{4}, TupleId{5}});
    CHECK(tasks[0].positives == std::vector<TupleId>{TupleId{3}});
    CHECK(tasks[1].pool.size() == 5);
    const auto only = build_ranking_tasks(train, test, {RelationId{1}});
    REQUIRE(only.size() == 1);
    CHECK(only[0].relation == RelationId{1});
}

TEST_CASE("map csv layout") {
    Vocabulary rels;
    rels.intern("a,b");
    rels.intern("plain");
    MapReport report{0.75, {{RelationId{0}, 2, 0.5}, {RelationId{1}, 2, 1.0}}};
    std::ostringstream out;
    write_map_csv(out, report, rels);
    CHECK(out.str() ==
          "kind,relation,test_facts,average_precision\n"
          "relation,\"a,b\",2,0.5\n"
          "relation,plain,2,1\n"
          "summary,weighted_map,4,0.75\n");
}

TEST_CASE("asymmetry") {
    const auto train = store_from(2, 4, {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {1, 2}, {1, 3}});
    ModelParams p(2, 4, 2);
    Rng rng(1);
    for (auto& x : p.tuple_pre.data()) x = rng.uniform(-2, 2);
    SUBCASE("identical relation vectors") {
        p.relations.row(0)[0] = p.relations.row(1)[0] = 0.7;
        p.relations.row(0)[1] = p.relations.row(1)[1] = -0.3;
        // same tuple sets on both sides makes the comparison exact
        const auto sym = store_from(2, 4, {{0, 0}, {0, 2}, {1, 0}, {1, 2}});
        const std::vector<Rule> rules{{RelationId{0}, RelationId{1}}};
        const auto report = asymmetry_report(p, rules, sym, Variant::FS);
        CHECK(report.rows[0].mean_forward == report.rows[0].mean_backward);
    }
    SUBCASE("means and counts") {
        p.relations.row(0)[0] = -3.0;
        p.relations.row(1)[0] = 3.0;
        const std::vector<Rule> rules{{RelationId{0}, RelationId{1}}};
        const auto report = asymmetry_report(p, rules, train, Variant::FS);
        const auto& row = report.rows[0];
        CHECK(row.forward_tuples == 2);
        CHECK(row.backward_tuples == 4);
        double expected = 0.0;
        for (std::uint32_t t = 0; t < 2; ++t) expected += sigmoid(score(p, RelationId{1}, TupleId{t}, Variant::FS));
        CHECK(row.mean_forward == doctest::Approx(expected / 2));
        CHECK(row.mean_forward > row.mean_backward);
        for (const double v : {row.mean_forward, row.mean_backward}) CHECK((v >= 0.0 && v <= 1.0));
        CHECK(report.counted_rules == 1);
        CHECK(report.grand_forward == row.mean_forward);
    }
    SUBCASE("rules without training tuples are flagged") {
        const auto sparse = store_from(3, 4, {{0, 0}, {1, 1}});
        ModelParams q(3, 4, 2);
        const std::vector<Rule> rules{{RelationId{0}, RelationId{2}}, {RelationId{0}, RelationId{1}}};
        const auto report = asymmetry_report(q, rules, sparse, Variant::FS);
        CHECK(report.rows[0].empty());
        CHECK_FALSE(report.rows[1].empty());
        CHECK(report.counted_rules == 1);
        Vocabulary rels;
        for (const char* n : {"p", "q", "s"}) rels.intern(n);
        std::ostringstream out;
        write_asymmetry_csv(out, report, rels);
        CHECK(out.str() ==
              "antecedent,consequent,mean_forward,mean_backward,forward_tuples,backward_tuples\n"
              "p,s,,,1,0\n"
              "p,q,0.5,0.5,1,1\n"
              "average over 1 rules,,0.5,0.5,,\n");
    }
}

TEST_CASE("relation matrix ordering") {
    ModelParams p(4, 1, 3);
    const double rows[4][3] = {{0.5, -0.5, 0.0}, {0.1, 0.1, 0.1}, {9, 9, 9}, {-2.0, 0.0, 1.0}};
    for (std::uint32_t r = 0; r < 4; ++r) std::copy(rows[r], rows[r] + 3, p.relations.row(r).begin());
    // relation 2 is in no rule
    const std::vector<Rule> rules{{RelationId{0}, RelationId{1}}, {RelationId{3}, RelationId{0}}};
    const auto m = relation_matrix(p, rules);
    CHECK(m.columns == std::vector<RelationId>{RelationId{1}, RelationId{0}, RelationId{3}});
    // dimension L1 norms over the selected columns: 2.6, 0.6, 1.1
    CHECK(m.dimensions == std::vector<std::size_t>{1, 2, 0});
    CHECK(m.values.row(0)[2] == 0.0);
    CHECK(m.values.row(2)[2] == -2.0);
}

TEST_CASE("subsampling is nested and exact at the ends") {
    const auto corpus = generate_corpus({}, 2);
    const auto& s = corpus.store;
    const auto full = subsample_relations(s, corpus.consequents, 1.0, 5);
    CHECK(std::equal(full.facts().begin(), full.facts().end(), s.facts().begin(), s.facts().end()));
    const auto none = subsample_relations(s, corpus.consequents, 0.0, 5);
    for (const auto r : corpus.consequents) CHECK(none.tuples_of(r).empty());
    const auto quarter = subsample_relations(s, corpus.consequents, 0.25, 5);
    const auto half = subsample_relations(s, corpus.consequents, 0.5, 5);
    for (const auto& f : quarter.facts()) CHECK(half.contains(f.relation, f.tuple));
    for (std::uint32_t r = 0; r < s.num_relations(); ++r) {
        if (corpus.consequents.contains(RelationId{r})) continue;
        CHECK(half.tuples_of(RelationId{r}).size() == s.tuples_of(RelationId{r}).size());
    }
    CHECK_THROWS_AS(subsample_relations(s, corpus.consequents, 1.5, 5), UsageError);
}

TEST_CASE("zero-shot sweep") {
    SyntheticSpec spec;
    spec.tuples = 300;
    const auto corpus = generate_corpus(spec, 9);
    const auto split = holdout_split(corpus.store, 0.2, 9, &corpus.targets);
    ModelConfig config;
    config.k = 10;
    config.variant = Variant::FS;
    TrainOptions options;
    options.epochs = 300;
    options.batch_size = 512;
    options.learning_rate = 0.05;
    options.seed = 3;
    ZeroShotOptions sweep;
    sweep.fractions = {0.0, 1.0};

    SUBCASE("no rules and no data leaves the implied relations at the bottom") {
        const auto curve = zero_shot_sweep(split, {}, corpus.consequents, sweep, config, options);
        // every implied score is strongly negative with the same sign pattern; it is
        // not informative, so the MAP should sit far below the trained end point
        CAPTURE(curve[0].weighted_map);
        CAPTURE(curve[1].weighted_map);
        CHECK(curve[0].weighted_map + 0.1 < curve[1].weighted_map);
        CHECK(curve[0].weighted_map < 0.3);
    }
    SUBCASE("the full fraction reproduces an ordinary training run") {
        config.variant = Variant::FSL;
        const auto curve = zero_shot_sweep(split, corpus.rules, corpus.consequents, sweep, config, options);
        InitOverrides overrides;
        for (const auto r : corpus.consequents) overrides[r] = {-8.1, -7.9};
        const auto trained = train(split.train, corpus.rules, config, options, overrides);
        const auto tasks = build_ranking_tasks(split.train, split.test, corpus.consequents);
        CHECK(curve[1].weighted_map == weighted_map(tasks, trained.params, config.variant).weighted_map);
    }
    SUBCASE("fraction checks") {
        sweep.fractions = {0.5, 0.5};
        CHECK_THROWS_AS(zero_shot_sweep(split, {}, corpus.consequents, sweep, config, options), UsageError);
        sweep.fractions = {-0.1};
        CHECK_THROWS_AS(zero_shot_sweep(split, {}, corpus.consequents, sweep, config, options), UsageError);
    }
    SUBCASE("csv") {
        std::ostringstream out;
        const std::vector<ZeroShotPoint> curve{{0.0, 0.25}, {1.0, 0.5}};
        write_zero_shot_csv(out, curve);
        CHECK(out.str() == "fraction,weighted_map\n0,0.25\n1,0.5\n");
    }
}
