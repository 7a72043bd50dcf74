#include "liftkb/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <thread>

#include "liftkb/csv.hpp"
#include "liftkb/errors.hpp"
#include "liftkb/random.hpp"

namespace liftkb {

void sort_ranking(std::vector<ScoredTuple>& ranked) {
    std::sort(ranked.begin(), ranked.end(), [](const ScoredTuple& a, const ScoredTuple& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.tuple < b.tuple;
    });
}

double average_precision(std::span<const ScoredTuple> ranked, std::span<const TupleId> positives) {
    if (positives.empty()) return 0.0;
    std::vector<TupleId> wanted(positives.begin(), positives.end());
    std::sort(wanted.begin(), wanted.end());
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
        if (std::binary_search(wanted.begin(), wanted.end(), ranked[rank].tuple)) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    if (hits != wanted.size()) throw DataError("average precision: positive tuple missing from the ranking");
    return sum / static_cast<double>(hits);
}

std::vector<RankingTask> build_ranking_tasks(const FactStore& train, const FactStore& test,
                                             const std::set<RelationId>& only) {
    if (!(train.relations() == test.relations()) || !(train.tuples() == test.tuples())) {
        throw DataError("train and test stores use different vocabularies");
    }
    std::vector<RankingTask> tasks;
    for (std::uint32_t r = 0; r < test.num_relations(); ++r) {
        const RelationId rel{r};
        const auto positives = test.tuples_of(rel);
        if (positives.empty()) continue;
        if (!only.empty() && !only.contains(rel)) continue;
        RankingTask task;
        task.relation = rel;
        task.positives.assign(positives.begin(), positives.end());
        const auto seen = train.tuples_of(rel);
        task.pool.reserve(train.num_tuples() - seen.size());
        std::size_t s = 0;
        for (std::uint32_t t = 0; t < train.num_tuples(); ++t) {
            if (s < seen.size() && seen[s].value == t) {
                ++s;
                continue;
            }
            task.pool.push_back(TupleId{t});
        }
        for (const auto p : task.positives) {
            if (!std::binary_search(task.pool.begin(), task.pool.end(), p)) {
                throw DataError("test fact also present in training data");
            }
        }
        tasks.push_back(std::move(task));
    }
    return tasks;
}

MapReport weighted_map(std::span<const RankingTask> tasks, const ModelParams& params, Variant variant,
                       std::size_t workers) {
    if (tasks.empty()) throw DataError("weighted MAP over an empty task list");
    const Matrix tuples = effective_tuples(params, variant);

    std::vector<RelationAp> rows(tasks.size());
    const auto run = [&](std::size_t first, std::size_t stride) {
        std::vector<ScoredTuple> ranked;
        for (std::size_t i = first; i < tasks.size(); i += stride) {
            const auto& task = tasks[i];
            const auto rel = params.relations.row(task.relation.value);
            ranked.clear();
            for (const auto t : task.pool) ranked.push_back({t, dot(rel, tuples.row(t.value))});
            sort_ranking(ranked);
            rows[i] = {task.relation, task.positives.size(), average_precision(ranked, task.positives)};
        }
    };
    if (workers <= 1) {
        run(0, 1);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w, workers);
        for (auto& t : threads) t.join();
    }

    std::sort(rows.begin(), rows.end(), [](const RelationAp& a, const RelationAp& b) { return a.relation < b.relation; });
    double weighted = 0.0;
    std::size_t total = 0;
    for (const auto& row : rows) {
        weighted += static_cast<double>(row.test_facts) * row.average_precision;
        total += row.test_facts;
    }
    return {total > 0 ? weighted / static_cast<double>(total) : 0.0, std::move(rows)};
}

void write_map_csv(std::ostream& out, const MapReport& report, const Vocabulary& relations) {
    const std::string header[] = {"kind", "relation", "test_facts", "average_precision"};
    write_csv_row(out, header);
    std::size_t total = 0;
    for (const auto& row : report.rows) {
        const std::string fields[] = {"relation", relations.name(row.relation.value), std::to_string(row.test_facts),
                                      format_real(row.average_precision)};
        write_csv_row(out, fields);
        total += row.test_facts;
    }
    const std::string summary[] = {"summary", "weighted_map", std::to_string(total), format_real(report.weighted_map)};
    write_csv_row(out, summary);
}

AsymmetryReport asymmetry_report(const ModelParams& params, std::span<const Rule> rules, const FactStore& train,
                                 Variant variant) {
    const auto mean_sigmoid = [&](RelationId scorer, RelationId source) {
        double sum = 0.0;
        const auto tuples = train.tuples_of(source);
        for (const auto t : tuples) sum += sigmoid(score(params, scorer, t, variant));
        return std::pair{tuples.empty() ? 0.0 : sum / static_cast<double>(tuples.size()), tuples.size()};
    };

    AsymmetryReport report;
    double sum_forward = 0.0;
    double sum_backward = 0.0;
    for (const auto& rule : rules) {
        AsymmetryRow row;
        row.rule = rule;
        std::tie(row.mean_forward, row.forward_tuples) = mean_sigmoid(rule.consequent, rule.antecedent);
        std::tie(row.mean_backward, row.backward_tuples) = mean_sigmoid(rule.antecedent, rule.consequent);
        if (!row.empty()) {
            sum_forward += row.mean_forward;
            sum_backward += row.mean_backward;
            ++report.counted_rules;
        }
        report.rows.push_back(row);
    }
    if (report.counted_rules > 0) {
        report.grand_forward = sum_forward / static_cast<double>(report.counted_rules);
        report.grand_backward = sum_backward / static_cast<double>(report.counted_rules);
    }
    return report;
}

void write_asymmetry_csv(std::ostream& out, const AsymmetryReport& report, const Vocabulary& relations) {
    const std::string header[] = {"antecedent",     "consequent",    "mean_forward",
                                  "mean_backward", "forward_tuples", "backward_tuples"};
    write_csv_row(out, header);
    for (const auto& row : report.rows) {
        const std::string fields[] = {relations.name(row.rule.antecedent.value),
                                      relations.name(row.rule.consequent.value),
                                      row.empty() ? "" : format_real(row.mean_forward),
                                      row.empty() ? "" : format_real(row.mean_backward),
                                      std::to_string(row.forward_tuples),
                                      std::to_string(row.backward_tuples)};
        write_csv_row(out, fields);
    }
    const std::string summary[] = {"average over " + std::to_string(report.counted_rules) + " rules",
                                   "",
                                   format_real(report.grand_forward),
                                   format_real(report.grand_backward),
                                   "",
                                   ""};
    write_csv_row(out, summary);
}

RelationMatrix relation_matrix(const ModelParams& params, std::span<const Rule> rules) {
    std::set<RelationId> involved;
    for (const auto& rule : rules) {
        involved.insert(rule.antecedent);
        involved.insert(rule.consequent);
    }
    const auto l1 = [](std::span<const double> xs) {
        double s = 0.0;
        for (const double x : xs) s += std::abs(x);
        return s;
    };

    RelationMatrix out;
    out.columns.assign(involved.begin(), involved.end());
    std::vector<double> column_norm(params.relations.rows(), 0.0);
    for (const auto r : out.columns) column_norm[r.value] = l1(params.relations.row(r.value));
    std::stable_sort(out.columns.begin(), out.columns.end(),
                     [&](RelationId a, RelationId b) { return column_norm[a.value] < column_norm[b.value]; });

    const std::size_t k = params.k();
    std::vector<double> dim_norm(k, 0.0);
    for (const auto r : out.columns) {
        const auto row = params.relations.row(r.value);
        for (std::size_t i = 0; i < k; ++i) dim_norm[i] += std::abs(row[i]);
    }
    out.dimensions.resize(k);
    std::iota(out.dimensions.begin(), out.dimensions.end(), std::size_t{0});
    std::stable_sort(out.dimensions.begin(), out.dimensions.end(),
                     [&](std::size_t a, std::size_t b) { return dim_norm[a] < dim_norm[b]; });

    out.values = Matrix(k, out.columns.size());
    for (std::size_t d = 0; d < k; ++d) {
        for (std::size_t c = 0; c < out.columns.size(); ++c) {
            out.values.row(d)[c] = params.relations.row(out.columns[c].value)[out.dimensions[d]];
        }
    }
    return out;
}

void write_relation_matrix_csv(std::ostream& out, const RelationMatrix& matrix, const Vocabulary& relations) {
    std::vector<std::string> fields{"dimension"};
    for (const auto r : matrix.columns) fields.push_back(relations.name(r.value));
    write_csv_row(out, fields);
    for (std::size_t d = 0; d < matrix.dimensions.size(); ++d) {
        fields.assign(1, std::to_string(matrix.dimensions[d]));
        for (const double x : matrix.values.row(d)) fields.push_back(format_real(x));
        write_csv_row(out, fields);
    }
}

FactStore subsample_relations(const FactStore& train, const std::set<RelationId>& relations, double fraction,
                              std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw UsageError("fraction must lie in [0,1]");
    std::vector<std::vector<TupleId>> per_relation(train.num_relations());
    for (const auto& f : train.facts()) {
        if (relations.contains(f.relation)) per_relation[f.relation.value].push_back(f.tuple);
    }
    // Same permutation for every fraction, so kept sets are nested.
    Rng rng(seed);
    std::set<std::pair<std::uint32_t, std::uint32_t>> kept;
    for (const auto r : relations) {
        auto& tuples = per_relation.at(r.value);
        rng.shuffle(std::span<TupleId>(tuples));
        const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(tuples.size()) + 0.5));
        for (std::size_t i = 0; i < n; ++i) kept.emplace(r.value, tuples[i].value);
    }
    std::vector<Fact> facts;
    facts.reserve(train.size());
    for (const auto& f : train.facts()) {
        if (!relations.contains(f.relation) || kept.contains({f.relation.value, f.tuple.value})) facts.push_back(f);
    }
    return train.with_facts(std::move(facts));
}

std::vector<ZeroShotPoint> zero_shot_sweep(const DatasetSplit& split, std::span<const Rule> rules,
                                           const std::set<RelationId>& implied, const ZeroShotOptions& sweep,
                                           const ModelConfig& config, const TrainOptions& options) {
    if (implied.empty()) throw UsageError("zero-shot sweep needs at least one implied relation");
    for (const auto r : implied) {
        if (r.value >= split.train.num_relations()) throw DataError("implied relation outside the vocabulary");
    }
    for (std::size_t i = 0; i < sweep.fractions.size(); ++i) {
        const double f = sweep.fractions[i];
        if (!(f >= 0.0 && f <= 1.0)) throw UsageError("fractions must lie in [0,1]");
        if (i > 0 && !(f > sweep.fractions[i - 1])) throw UsageError("fractions must be strictly increasing");
    }

    const auto tasks = build_ranking_tasks(split.train, split.test, implied);
    if (tasks.empty()) throw DataError("implied relations have no test facts");
    InitOverrides overrides;
    for (const auto r : implied) overrides[r] = sweep.implied_init;

    std::vector<ZeroShotPoint> curve;
    for (const double f : sweep.fractions) {
        const auto reduced = subsample_relations(split.train, implied, f, sweep.subsample_seed);
        const auto trained = train(reduced, rules, config, options, overrides);
        curve.push_back({f, weighted_map(tasks, trained.params, config.variant, sweep.eval_workers).weighted_map});
    }
    return curve;
}

void write_zero_shot_csv(std::ostream& out, std::span<const ZeroShotPoint> curve) {
    const std::string header[] = {"fraction", "weighted_map"};
    write_csv_row(out, header);
    for (const auto& p : curve) {
        const std::string fields[] = {format_real(p.fraction), format_real(p.weighted_map)};
        write_csv_row(out, fields);
    }
}

}  // namespace liftkb
