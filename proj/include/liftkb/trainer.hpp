#ifndef LIFTKB_TRAINER_HPP
#define LIFTKB_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "liftkb/kb.hpp"
#include "liftkb/model.hpp"
#include "liftkb/random.hpp"

namespace liftkb {

struct TrainOptions {
    double learning_rate = 0.005;
    std::size_t batch_size = 8192;
    std::size_t epochs = 0;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    // >1 splits the reconstruction gradient of each batch across threads. The
    // per-thread buffers are merged in thread order, so results are reproducible
    // for a fixed worker count but differ from the single-threaded run in
    // floating-point summation order.
    std::size_t workers = 1;

    void validate() const;
};

// First/second moments with the same shapes as ModelParams.
struct AdamState {
    Matrix m_relations;
    Matrix v_relations;
    Matrix m_tuples;
    Matrix v_tuples;
    std::uint64_t step = 0;

    AdamState() = default;
    explicit AdamState(const ModelParams& like)
        : m_relations(like.relations.rows(), like.k()),
          v_relations(like.relations.rows(), like.k()),
          m_tuples(like.tuple_pre.rows(), like.k()),
          v_tuples(like.tuple_pre.rows(), like.k()) {}

    bool operator==(const AdamState&) const = default;
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    LossBreakdown mean;     // per-batch means; total recombined from the means
    double seconds = 0.0;
    double rule_seconds = 0.0;  // time spent evaluating lifted rule losses and gradients
    std::size_t batches = 0;
    std::size_t skipped_pairs = 0;  // positives whose relation had no unobserved tuple
    double collision_rate = 0.0;    // rejected negative draws / all draws
};

// Lazy Adam: only rows touched in `grads` with a nonzero gradient move, and
// only their moments are updated. The step counter advances once per call.
// Throws NumericalError naming the block if a gradient is not finite; in that
// case nothing is modified.
void adam_step(ModelParams& params, const GradientBuffer& grads, AdamState& state, const TrainOptions& options);

// Uniform draw over tuples not observed with r, by rejection (at most 100
// tries). If every try collides, falls back to an exact draw from the
// complement; returns nullopt when r is observed with every tuple.
// `rejections`, when given, is incremented per collided draw.
std::optional<TupleId> sample_negative(const FactStore& store, RelationId r, Rng& rng,
                                       std::size_t* rejections = nullptr);

inline constexpr int kNegativeSampleAttempts = 100;

// Per-relation uniform init ranges that replace config.init_low/high.
using InitOverrides = std::map<RelationId, std::pair<double, double>>;

ModelParams init_params(const ModelConfig& config, std::size_t num_relations, std::size_t num_tuples,
                        std::uint64_t seed, const InitOverrides& overrides = {});

struct TrainResult {
    ModelParams params;
    AdamState adam;
    std::vector<EpochStats> epochs;
};

using EpochCallback = std::function<void(const EpochStats&, const ModelParams&)>;

// One epoch is a shuffled pass over the positive facts, each paired with a
// freshly sampled negative tuple for its relation. Under FSL every batch also
// carries the lifted loss of every rule.
TrainResult train(const FactStore& store, std::span<const Rule> rules, const ModelConfig& config,
                  const TrainOptions& options, const InitOverrides& overrides = {},
                  const EpochCallback& on_epoch = {});

// Continues from given parameters and optimizer state.
TrainResult train_from(ModelParams params, AdamState adam, const FactStore& store, std::span<const Rule> rules,
                       const ModelConfig& config, const TrainOptions& options,
                       const EpochCallback& on_epoch = {});

// epoch,recon,l2,implication,total,seconds
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const EpochStats& stats);

// Adam sidecar in the checkpoint text scheme: `k <dim>`, `step <n>`, then
// `MR|VR <name> <k reals>` and `ME|VE <name> <k reals>` lines.
void write_adam_state(std::ostream& out, const AdamState& state, const Vocabulary& relations,
                      const Vocabulary& tuples);
AdamState read_adam_state(std::istream& in, const Vocabulary& relations, const Vocabulary& tuples,
                          const std::string& source = "<stream>");

// Mixes a user seed with a stream index into an independent seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace liftkb

#endif  // LIFTKB_TRAINER_HPP
