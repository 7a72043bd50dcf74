#ifndef LIFTKB_SYNTHETIC_HPP
#define LIFTKB_SYNTHETIC_HPP

#include <cstdint>
#include <set>
#include <vector>

#include "liftkb/kb.hpp"

namespace liftkb {

// Generator for block-structured fact corpora with planted implications.
//
// Tuples are split evenly over clusters and carry a random set of latent
// topics. Every relation belongs to one cluster and one topic: a tuple of that
// cluster is true for it with `topic_hit` if it has the topic and `stray_hit`
// otherwise. Antecedents ignore topics and are true with `antecedent_hit` for
// any tuple of their cluster. A planted rule p => q makes q true wherever p is,
// which the topic structure alone cannot predict. Each true fact is observed
// independently with `observe`, or `consequent_observe` for facts of planted
// consequents.
struct SyntheticSpec {
    std::size_t clusters = 4;
    std::size_t relations_per_cluster = 10;
    std::size_t tuples = 500;
    std::size_t implications = 10;
    std::size_t topics_per_cluster = 3;
    double topic_prob = 0.1;
    double topic_hit = 0.9;
    double antecedent_hit = 0.2;
    double stray_hit = 0.01;
    double observe = 0.9;
    double consequent_observe = 0.9;
};

struct SyntheticCorpus {
    FactStore store;
    std::vector<Rule> rules;            // planted, ascending
    std::set<RelationId> consequents;   // right-hand sides of planted rules
    std::set<RelationId> antecedents;   // left-hand sides of planted rules
    // Relations whose facts may be held out for evaluation: everything except
    // the antecedents, which play the part of always-observed surface patterns.
    std::set<RelationId> targets;
};

SyntheticCorpus generate_corpus(const SyntheticSpec& spec, std::uint64_t seed);

// `count` distinct random rules over the store's relations (no self-implications).
std::vector<Rule> random_rules(std::size_t num_relations, std::size_t count, std::uint64_t seed);

}  // namespace liftkb

#endif  // LIFTKB_SYNTHETIC_HPP
