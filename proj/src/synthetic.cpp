#include "liftkb/synthetic.hpp"

#include <algorithm>
#include <string>

#include "liftkb/errors.hpp"
#include "liftkb/random.hpp"

namespace liftkb {

SyntheticCorpus generate_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.clusters == 0 || spec.relations_per_cluster == 0 || spec.tuples < spec.clusters ||
        spec.topics_per_cluster == 0) {
        throw UsageError("synthetic corpus needs clusters, relations, topics and at least one tuple per cluster");
    }
    const std::size_t rules_per_cluster = (spec.implications + spec.clusters - 1) / spec.clusters;
    if (2 * rules_per_cluster > spec.relations_per_cluster) {
        throw UsageError("too many planted implications for the relations per cluster");
    }

    Rng rng(seed);
    const std::size_t num_relations = spec.clusters * spec.relations_per_cluster;
    const auto relation_of = [&](std::size_t cluster, std::size_t j) {
        return RelationId{static_cast<std::uint32_t>(cluster * spec.relations_per_cluster + j)};
    };

    SyntheticCorpus corpus;
    std::vector<char> is_antecedent(num_relations, 0);
    std::vector<char> is_consequent(num_relations, 0);
    for (std::size_t i = 0; i < spec.implications; ++i) {
        const std::size_t cluster = i % spec.clusters;
        const std::size_t slot = i / spec.clusters;
        const Rule rule{relation_of(cluster, 2 * slot), relation_of(cluster, 2 * slot + 1)};
        corpus.rules.push_back(rule);
        corpus.antecedents.insert(rule.antecedent);
        corpus.consequents.insert(rule.consequent);
        is_antecedent[rule.antecedent.value] = 1;
        is_consequent[rule.consequent.value] = 1;
    }
    std::sort(corpus.rules.begin(), corpus.rules.end());

    // Latent truth, relation-major.
    std::vector<std::vector<char>> truth(num_relations, std::vector<char>(spec.tuples, 0));
    for (std::size_t t = 0; t < spec.tuples; ++t) {
        const std::size_t cluster = t % spec.clusters;
        std::vector<char> topics(spec.topics_per_cluster);
        for (auto& has : topics) has = rng.uniform() < spec.topic_prob ? 1 : 0;
        for (std::size_t j = 0; j < spec.relations_per_cluster; ++j) {
            const auto r = relation_of(cluster, j);
            const double p = is_antecedent[r.value]            ? spec.antecedent_hit
                             : topics[j % spec.topics_per_cluster] ? spec.topic_hit
                                                                   : spec.stray_hit;
            truth[r.value][t] = rng.uniform() < p ? 1 : 0;
        }
    }
    for (const auto& rule : corpus.rules) {
        for (std::size_t t = 0; t < spec.tuples; ++t) {
            if (truth[rule.antecedent.value][t]) truth[rule.consequent.value][t] = 1;
        }
    }

    Vocabulary relations;
    for (std::size_t c = 0; c < spec.clusters; ++c) {
        for (std::size_t j = 0; j < spec.relations_per_cluster; ++j) {
            relations.intern("c" + std::to_string(c) + "->rel" + std::to_string(j));
        }
    }
    Vocabulary tuples;
    for (std::size_t t = 0; t < spec.tuples; ++t) {
        tuples.intern("a" + std::to_string(t) + "|b" + std::to_string(t));
    }
    std::vector<Fact> facts;
    for (std::uint32_t r = 0; r < num_relations; ++r) {
        const double observe = is_consequent[r] ? spec.consequent_observe : spec.observe;
        for (std::uint32_t t = 0; t < spec.tuples; ++t) {
            if (truth[r][t] && rng.uniform() < observe) facts.push_back({RelationId{r}, TupleId{t}});
        }
    }
    if (facts.empty()) throw DataError("synthetic corpus came out empty");
    for (std::uint32_t r = 0; r < num_relations; ++r) {
        if (!is_antecedent[r]) corpus.targets.insert(RelationId{r});
    }
    corpus.store = FactStore(std::move(relations), std::move(tuples), std::move(facts));
    return corpus;
}

std::vector<Rule> random_rules(std::size_t num_relations, std::size_t count, std::uint64_t seed) {
    if (num_relations < 2 || count > num_relations * (num_relations - 1)) {
        throw UsageError("cannot draw that many distinct rules");
    }
    Rng rng(seed);
    std::set<Rule> rules;
    while (rules.size() < count) {
        const auto p = static_cast<std::uint32_t>(rng.below(num_relations));
        const auto q = static_cast<std::uint32_t>(rng.below(num_relations));
        if (p != q) rules.insert({RelationId{p}, RelationId{q}});
    }
    return {rules.begin(), rules.end()};
}

}  // namespace liftkb
