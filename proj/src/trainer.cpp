#include "liftkb/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "liftkb/errors.hpp"

namespace liftkb {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool all_finite(std::span<const double> xs) {
    return std::ranges::all_of(xs, [](double x) { return std::isfinite(x); });
}

bool all_zero(std::span<const double> xs) {
    return std::ranges::all_of(xs, [](double x) { return x == 0.0; });
}

void adam_row(std::span<double> theta, std::span<const double> g, std::span<double> m, std::span<double> v,
              const TrainOptions& o, double bias1, double bias2) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = o.adam_beta1 * m[i] + (1.0 - o.adam_beta1) * g[i];
        v[i] = o.adam_beta2 * v[i] + (1.0 - o.adam_beta2) * g[i] * g[i];
        const double m_hat = m[i] / bias1;
        const double v_hat = v[i] / bias2;
        theta[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.adam_epsilon);
    }
}

// Reconstruction gradient for one batch, optionally split across threads.
double reconstruction_parallel(const ModelParams& params, std::span<const TrainingPair> pairs, Variant variant,
                               std::size_t workers, std::vector<GradientBuffer>& scratch, GradientBuffer& grads) {
    if (workers <= 1 || pairs.size() < 2 * workers) {
        return accumulate_reconstruction(params, pairs, variant, grads);
    }
    std::vector<double> losses(workers, 0.0);
    std::vector<std::thread> threads;
    const std::size_t chunk = (pairs.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = std::min(pairs.size(), w * chunk);
        const std::size_t end = std::min(pairs.size(), begin + chunk);
        threads.emplace_back([&, w, begin, end] {
            scratch[w].clear();
            losses[w] = accumulate_reconstruction(params, pairs.subspan(begin, end - begin), variant, scratch[w]);
        });
    }
    for (auto& t : threads) t.join();
    double loss = 0.0;
    for (std::size_t w = 0; w < workers; ++w) {
        grads.merge(scratch[w]);
        loss += losses[w];
    }
    return loss;
}

}  // namespace

void TrainOptions::validate() const {
    if (!(learning_rate > 0.0)) throw UsageError("learning rate must be > 0");
    if (batch_size < 1) throw UsageError("batch size must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw UsageError("adam beta1 must lie in [0,1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw UsageError("adam beta2 must lie in [0,1)");
    if (!(adam_epsilon > 0.0)) throw UsageError("adam epsilon must be > 0");
    if (workers < 1) throw UsageError("workers must be >= 1");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finaliser over the combined value
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void adam_step(ModelParams& params, const GradientBuffer& grads, AdamState& state, const TrainOptions& options) {
    for (const auto r : grads.touched_relations()) {
        if (!all_finite(grads.relation(RelationId{r}))) {
            throw NumericalError("non-finite gradient in relation block #" + std::to_string(r));
        }
    }
    for (const auto t : grads.touched_tuples()) {
        if (!all_finite(grads.tuple(TupleId{t}))) {
            throw NumericalError("non-finite gradient in tuple block #" + std::to_string(t));
        }
    }

    ++state.step;
    const double bias1 = 1.0 - std::pow(options.adam_beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(options.adam_beta2, static_cast<double>(state.step));

    for (const auto r : grads.touched_relations()) {
        const auto g = grads.relation(RelationId{r});
        if (all_zero(g)) continue;
        adam_row(params.relations.row(r), g, state.m_relations.row(r), state.v_relations.row(r), options, bias1,
                 bias2);
        if (!all_finite(params.relations.row(r))) {
            throw NumericalError("relation block #" + std::to_string(r) + " became non-finite");
        }
    }
    for (const auto t : grads.touched_tuples()) {
        const auto g = grads.tuple(TupleId{t});
        if (all_zero(g)) continue;
        adam_row(params.tuple_pre.row(t), g, state.m_tuples.row(t), state.v_tuples.row(t), options, bias1, bias2);
        if (!all_finite(params.tuple_pre.row(t))) {
            throw NumericalError("tuple block #" + std::to_string(t) + " became non-finite");
        }
    }
}

std::optional<TupleId> sample_negative(const FactStore& store, RelationId r, Rng& rng, std::size_t* rejections) {
    const std::size_t n = store.num_tuples();
    const auto observed = store.tuples_of(r);
    if (observed.size() >= n) return std::nullopt;
    for (int attempt = 0; attempt < kNegativeSampleAttempts; ++attempt) {
        const TupleId t{static_cast<std::uint32_t>(rng.below(n))};
        if (!store.contains(r, t)) return t;
        if (rejections) ++*rejections;
    }
    // Dense relation: draw the k-th unobserved tuple directly. `observed` is sorted.
    std::uint64_t k = rng.below(n - observed.size());
    std::uint32_t candidate = 0;
    for (const auto t : observed) {
        if (k < t.value - candidate) break;
        k -= t.value - candidate;
        candidate = t.value + 1;
    }
    return TupleId{static_cast<std::uint32_t>(candidate + k)};
}

ModelParams init_params(const ModelConfig& config, std::size_t num_relations, std::size_t num_tuples,
                        std::uint64_t seed, const InitOverrides& overrides) {
    config.validate();
    for (const auto& [r, range] : overrides) {
        if (r.value >= num_relations) throw UsageError("init override for unknown relation");
        if (!(range.first < range.second)) throw UsageError("init override range must have low < high");
    }
    ModelParams params(num_relations, num_tuples, config.k);
    Rng rng(derive_seed(seed, 0));
    for (std::uint32_t r = 0; r < num_relations; ++r) {
        auto [low, high] = std::pair{config.init_low, config.init_high};
        if (auto it = overrides.find(RelationId{r}); it != overrides.end()) std::tie(low, high) = it->second;
        for (double& x : params.relations.row(r)) x = rng.uniform(low, high);
    }
    for (double& x : params.tuple_pre.data()) x = rng.uniform(config.init_low, config.init_high);
    return params;
}

TrainResult train(const FactStore& store, std::span<const Rule> rules, const ModelConfig& config,
                  const TrainOptions& options, const InitOverrides& overrides, const EpochCallback& on_epoch) {
    auto params = init_params(config, store.num_relations(), store.num_tuples(), options.seed, overrides);
    AdamState adam(params);
    return train_from(std::move(params), std::move(adam), store, rules, config, options, on_epoch);
}

TrainResult train_from(ModelParams params, AdamState adam, const FactStore& store, std::span<const Rule> rules,
                       const ModelConfig& config, const TrainOptions& options, const EpochCallback& on_epoch) {
    config.validate();
    options.validate();
    if (store.empty()) throw DataError("cannot train on an empty fact store");
    if (params.relations.rows() != store.num_relations() || params.tuple_pre.rows() != store.num_tuples() ||
        params.k() != config.k) {
        throw DataError("parameter shapes do not match the fact store");
    }
    for (const auto& rule : rules) {
        if (rule.antecedent.value >= store.num_relations() || rule.consequent.value >= store.num_relations()) {
            throw DataError("rule references a relation outside the vocabulary");
        }
    }
    const std::span<const Rule> active_rules = config.variant == Variant::FSL ? rules : std::span<const Rule>{};

    TrainResult result;
    Rng rng(derive_seed(options.seed, 1));
    std::vector<Fact> order(store.facts().begin(), store.facts().end());
    GradientBuffer grads(store.num_relations(), store.num_tuples(), config.k);
    std::vector<GradientBuffer> scratch;
    if (options.workers > 1) {
        scratch.assign(options.workers, GradientBuffer(store.num_relations(), store.num_tuples(), config.k));
    }
    std::vector<TrainingPair> pairs;
    pairs.reserve(std::min(options.batch_size, order.size()));

    const auto name_block = [&](const NumericalError& e) {
        std::string msg = e.what();
        const auto hash = msg.find('#');
        if (hash == std::string::npos) return msg;
        const auto id = static_cast<std::uint32_t>(std::stoul(msg.substr(hash + 1)));
        const bool is_relation = msg.find("relation") != std::string::npos;
        const auto& vocab = is_relation ? store.relations() : store.tuples();
        return msg + " ('" + vocab.name(id) + "')";
    };

    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        const auto start = Clock::now();
        EpochStats stats;
        stats.epoch = epoch;
        std::size_t draws = 0;
        std::size_t rejections = 0;
        double sum_recon = 0.0, sum_l2 = 0.0, sum_impl = 0.0;

        rng.shuffle(std::span<Fact>(order));
        for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size) {
            const std::size_t end = std::min(order.size(), begin + options.batch_size);
            pairs.clear();
            for (std::size_t i = begin; i < end; ++i) {
                const auto& f = order[i];
                std::size_t rejected = 0;
                const auto negative = sample_negative(store, f.relation, rng, &rejected);
                rejections += rejected;
                draws += rejected + (negative ? 1 : 0);
                if (!negative) {
                    ++stats.skipped_pairs;
                    continue;
                }
                pairs.push_back({f.relation, f.tuple, *negative});
            }

            grads.clear();
            const double recon =
                reconstruction_parallel(params, pairs, config.variant, options.workers, scratch, grads);
            const auto rule_start = Clock::now();
            for (const auto& rule : active_rules) {
                grads.relation(rule.antecedent);
                grads.relation(rule.consequent);
            }
            stats.rule_seconds += seconds_since(rule_start);
            const double l2 = accumulate_l2(params, config.alpha, grads);
            const auto impl_start = Clock::now();
            const double impl = active_rules.empty()
                                    ? 0.0
                                    : accumulate_implication(params, active_rules, config.delta, config.beta_tilde,
                                                             grads);
            stats.rule_seconds += seconds_since(impl_start);

            const auto batch = LossBreakdown::combine(recon, l2, impl, config.alpha, config.beta_tilde);
            if (!std::isfinite(batch.total)) {
                throw NumericalError("non-finite loss in epoch " + std::to_string(epoch));
            }
            try {
                adam_step(params, grads, adam, options);
            } catch (const NumericalError& e) {
                throw NumericalError(name_block(e) + " in epoch " + std::to_string(epoch));
            }
            sum_recon += batch.reconstruction;
            sum_l2 += batch.l2;
            sum_impl += batch.implication;
            ++stats.batches;
        }

        if (stats.batches > 0) {
            const auto n = static_cast<double>(stats.batches);
            stats.mean = LossBreakdown::combine(sum_recon / n, sum_l2 / n, sum_impl / n, config.alpha,
                                                config.beta_tilde);
        }
        stats.collision_rate = draws > 0 ? static_cast<double>(rejections) / static_cast<double>(draws) : 0.0;
        stats.seconds = seconds_since(start);
        result.epochs.push_back(stats);
        if (on_epoch) on_epoch(stats, params);
    }

    result.params = std::move(params);
    result.adam = std::move(adam);
    return result;
}

void write_metrics_header(std::ostream& out) { out << "epoch,recon,l2,implication,total,seconds\n"; }

void write_metrics_row(std::ostream& out, const EpochStats& s) {
    out << s.epoch << ',' << format_real(s.mean.reconstruction) << ',' << format_real(s.mean.l2) << ','
        << format_real(s.mean.implication) << ',' << format_real(s.mean.total) << ',' << format_real(s.seconds)
        << '\n';
}

void write_adam_state(std::ostream& out, const AdamState& state, const Vocabulary& relations,
                      const Vocabulary& tuples) {
    out << "k " << state.m_relations.cols() << '\n';
    out << "step " << state.step << '\n';
    const auto block = [&](const char* tag, const Vocabulary& vocab, const Matrix& m) {
        for (std::uint32_t i = 0; i < m.rows(); ++i) {
            out << tag << ' ' << escape_name(vocab.name(i));
            for (const double x : m.row(i)) out << ' ' << format_real(x);
            out << '\n';
        }
    };
    block("MR", relations, state.m_relations);
    block("VR", relations, state.v_relations);
    block("ME", tuples, state.m_tuples);
    block("VE", tuples, state.v_tuples);
}

AdamState read_adam_state(std::istream& in, const Vocabulary& relations, const Vocabulary& tuples,
                          const std::string& source) {
    std::string line;
    std::size_t k = 0;
    std::uint64_t step = 0;
    std::string tag;
    if (!std::getline(in, line) || !(std::istringstream(line) >> tag >> k) || tag != "k" || k == 0) {
        throw ParseError(source, 1, "expected 'k <dim>' header");
    }
    if (!std::getline(in, line) || !(std::istringstream(line) >> tag >> step) || tag != "step") {
        throw ParseError(source, 2, "expected 'step <n>' line");
    }
    ModelParams shape(relations.size(), tuples.size(), k);
    AdamState state(shape);
    state.step = step;
    std::size_t line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string name;
        fields >> tag >> name;
        name = unescape_name(name);
        Matrix* target = nullptr;
        std::optional<std::uint32_t> row;
        if (tag == "MR" || tag == "VR") {
            target = tag == "MR" ? &state.m_relations : &state.v_relations;
            row = relations.find(name);
        } else if (tag == "ME" || tag == "VE") {
            target = tag == "ME" ? &state.m_tuples : &state.v_tuples;
            row = tuples.find(name);
        } else {
            throw ParseError(source, line_no, "unknown line tag '" + tag + "'");
        }
        if (!row) throw ParseError(source, line_no, "unknown name '" + name + "'");
        for (double& x : target->row(*row)) {
            std::string field;
            if (!(fields >> field)) throw ParseError(source, line_no, "expected " + std::to_string(k) + " reals");
            x = parse_real(field);
        }
    }
    return state;
}

}  // namespace liftkb
