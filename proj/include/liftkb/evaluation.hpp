#ifndef LIFTKB_EVALUATION_HPP
#define LIFTKB_EVALUATION_HPP

#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "liftkb/kb.hpp"
#include "liftkb/model.hpp"
#include "liftkb/trainer.hpp"

namespace liftkb {

struct ScoredTuple {
    TupleId tuple;
    double score = 0.0;
};

// Descending score, ties by ascending tuple id.
void sort_ranking(std::vector<ScoredTuple>& ranked);

// Mean over positives of precision at the positive's rank; 0 without positives.
// `ranked` must already be in sort_ranking order. Throws DataError if a
// positive is missing from the ranking.
double average_precision(std::span<const ScoredTuple> ranked, std::span<const TupleId> positives);

// One relation's test facts ranked against every tuple not observed with it in training.
struct RankingTask {
    RelationId relation;
    std::vector<TupleId> positives;  // ascending
    std::vector<TupleId> pool;       // ascending, contains the positives
};

// Tasks for every relation with test facts (or only for `only`, when non-empty).
std::vector<RankingTask> build_ranking_tasks(const FactStore& train, const FactStore& test,
                                             const std::set<RelationId>& only = {});

struct RelationAp {
    RelationId relation;
    std::size_t test_facts = 0;
    double average_precision = 0.0;
};

struct MapReport {
    double weighted_map = 0.0;
    std::vector<RelationAp> rows;  // ascending relation id
};

// Test-fact-weighted mean of per-relation AP. Independent of task order and of
// the worker count. Throws DataError on an empty task list.
MapReport weighted_map(std::span<const RankingTask> tasks, const ModelParams& params, Variant variant,
                       std::size_t workers = 1);

// kind,relation,test_facts,average_precision ; final row kind=summary
void write_map_csv(std::ostream& out, const MapReport& report, const Vocabulary& relations);

struct AsymmetryRow {
    Rule rule;
    // mean sigmoid(score(r_q, t)) over training tuples t of r_p
    double mean_forward = 0.0;
    // mean sigmoid(score(r_p, t)) over training tuples t of r_q
    double mean_backward = 0.0;
    std::size_t forward_tuples = 0;
    std::size_t backward_tuples = 0;
    bool empty() const { return forward_tuples == 0 || backward_tuples == 0; }
};

struct AsymmetryReport {
    std::vector<AsymmetryRow> rows;
    // Means over non-empty rows.
    double grand_forward = 0.0;
    double grand_backward = 0.0;
    std::size_t counted_rules = 0;
};

AsymmetryReport asymmetry_report(const ModelParams& params, std::span<const Rule> rules, const FactStore& train,
                                 Variant variant);

// antecedent,consequent,mean_forward,mean_backward,forward_tuples,backward_tuples ;
// empty rows leave the means blank; last row averages over the counted rules.
void write_asymmetry_csv(std::ostream& out, const AsymmetryReport& report, const Vocabulary& relations);

// Embeddings of every relation mentioned in a rule, one column per relation
// sorted by ascending L1 norm; dimensions (rows) likewise sorted by ascending
// L1 norm over the selected columns.
struct RelationMatrix {
    std::vector<RelationId> columns;
    std::vector<std::size_t> dimensions;
    Matrix values;  // dimensions.size() x columns.size()
};

RelationMatrix relation_matrix(const ModelParams& params, std::span<const Rule> rules);
// dimension,<relation>...
void write_relation_matrix_csv(std::ostream& out, const RelationMatrix& matrix, const Vocabulary& relations);

struct ZeroShotPoint {
    double fraction = 0.0;
    double weighted_map = 0.0;
};

struct ZeroShotOptions {
    std::vector<double> fractions;  // strictly increasing, within [0,1]
    std::uint64_t subsample_seed = 0;
    std::pair<double, double> implied_init{-8.1, -7.9};
    std::size_t eval_workers = 1;
};

// Training facts of the implied relations reduced to fraction f of their
// original count; the kept facts of a smaller fraction are a subset of those of
// a larger one.
FactStore subsample_relations(const FactStore& train, const std::set<RelationId>& relations, double fraction,
                              std::uint64_t seed);

// For each fraction: subsample the implied relations' training facts, train
// from an init that draws the implied relations from `implied_init`, and score
// weighted MAP on the implied relations' test facts. Ranking pools come from
// the full training set, so the tasks are identical across fractions.
std::vector<ZeroShotPoint> zero_shot_sweep(const DatasetSplit& split, std::span<const Rule> rules,
                                           const std::set<RelationId>& implied, const ZeroShotOptions& sweep,
                                           const ModelConfig& config, const TrainOptions& options);

// fraction,weighted_map
void write_zero_shot_csv(std::ostream& out, std::span<const ZeroShotPoint> curve);

}  // namespace liftkb

#endif  // LIFTKB_EVALUATION_HPP
