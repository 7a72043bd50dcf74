#ifndef LIFTKB_MODEL_HPP
#define LIFTKB_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "liftkb/kb.hpp"

namespace liftkb {

// F: real-valued tuple embeddings. FS: tuple embeddings squashed through a
// component-wise sigmoid. FSL: FS plus lifted implication losses.
enum class Variant { F, FS, FSL };

std::string_view to_string(Variant variant);
std::optional<Variant> parse_variant(std::string_view text);
inline bool uses_sigmoid(Variant v) { return v != Variant::F; }

struct ModelConfig {
    std::size_t k = 100;
    double alpha = 0.01;       // L2 weight
    double beta_tilde = 0.1;   // weight of the summed lifted rule losses
    double delta = 0.01;       // implication hinge margin
    Variant variant = Variant::FS;
    double init_low = -0.1;
    double init_high = 0.1;

    // Throws UsageError on an invalid combination.
    void validate() const;
};

// Row-major dense matrix, one k-vector per row.
class Matrix {
   public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool operator==(const Matrix&) const = default;

   private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct ModelParams {
    Matrix relations;  // |R| x k
    Matrix tuple_pre;  // |T| x k, pre-activations e; FS/FSL tuples are sigmoid(e)

    ModelParams() = default;
    ModelParams(std::size_t num_relations, std::size_t num_tuples, std::size_t k)
        : relations(num_relations, k), tuple_pre(num_tuples, k) {}

    std::size_t k() const { return relations.cols(); }
    bool operator==(const ModelParams&) const = default;
};

struct LossBreakdown {
    double reconstruction = 0.0;
    double l2 = 0.0;           // unweighted sum of squared norms
    double implication = 0.0;  // unweighted sum of lifted rule losses
    double total = 0.0;

    static LossBreakdown combine(double reconstruction, double l2, double implication, double alpha,
                                 double beta_tilde) {
        return {reconstruction, l2, implication, reconstruction + alpha * l2 + beta_tilde * implication};
    }
};

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double z = std::exp(x);
    return z / (1.0 + z);
}

// log(1 + e^x) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Logistic ranking loss -log sigmoid(-s) for s = r . (t_neg - t_pos).
inline double recon_pair_loss(double s) { return softplus(s); }

// max(0, s + delta)
inline double implication_pair_loss(double s, double delta) { return std::max(0.0, s + delta); }

double dot(std::span<const double> a, std::span<const double> b);

void tuple_embedding_into(const ModelParams& params, TupleId tuple, Variant variant, std::span<double> out);
std::vector<double> tuple_embedding(const ModelParams& params, TupleId tuple, Variant variant);

// Effective embeddings of every tuple, |T| x k.
Matrix effective_tuples(const ModelParams& params, Variant variant);

double score(const ModelParams& params, RelationId r, TupleId t, Variant variant);

// Sum over dimensions of max(0, r_p,i - r_q,i + delta).
double lifted_rule_loss(const ModelParams& params, const Rule& rule, double delta);

// Per-tuple hinge on L1-normalised effective embeddings. Verification oracle for
// the lifted bound; never used in training. Throws DataError if an effective
// embedding has a negative component or zero L1 norm.
double grounded_rule_loss(const ModelParams& params, const Rule& rule, std::span<const TupleId> tuples,
                          double delta, Variant variant);

// One BPR comparison: `positive` is observed with `relation`, `negative` is not.
struct TrainingPair {
    RelationId relation;
    TupleId positive;
    TupleId negative;
};

// Dense gradient storage that remembers which rows were written, so clearing
// and optimizer updates cost O(touched rows).
class GradientBuffer {
   public:
    GradientBuffer() = default;
    GradientBuffer(std::size_t num_relations, std::size_t num_tuples, std::size_t k);

    std::span<double> relation(RelationId r);
    std::span<double> tuple(TupleId t);
    std::span<const double> relation(RelationId r) const { return relations_.row(r.value); }
    std::span<const double> tuple(TupleId t) const { return tuples_.row(t.value); }

    // First-touch order.
    std::span<const std::uint32_t> touched_relations() const { return touched_relations_; }
    std::span<const std::uint32_t> touched_tuples() const { return touched_tuples_; }

    // Zeroes touched rows and forgets them.
    void clear();
    // Adds other's touched rows into this buffer, in other's first-touch order.
    void merge(const GradientBuffer& other);

   private:
    Matrix relations_;
    Matrix tuples_;
    std::vector<std::uint32_t> touched_relations_;
    std::vector<std::uint32_t> touched_tuples_;
    std::vector<char> relation_marked_;
    std::vector<char> tuple_marked_;
};

// Sum of recon_pair_loss over the pairs; adds its gradient into `grads`.
double accumulate_reconstruction(const ModelParams& params, std::span<const TrainingPair> pairs,
                                 Variant variant, GradientBuffer& grads);

// Sum of squared norms of the rows touched in `grads`; adds alpha * gradient.
double accumulate_l2(const ModelParams& params, double alpha, GradientBuffer& grads);

// Sum of lifted rule losses; adds beta_tilde * subgradient (zero at the kink).
double accumulate_implication(const ModelParams& params, std::span<const Rule> rules, double delta,
                              double beta_tilde, GradientBuffer& grads);

// Full mini-batch objective: reconstruction over the pairs, L2 over every
// embedding the batch touches (rule relations included), and under FSL the
// lifted losses of all rules. Rules are ignored for F and FS.
LossBreakdown accumulate_gradients(const ModelParams& params, std::span<const TrainingPair> pairs,
                                   std::span<const Rule> rules, const ModelConfig& config,
                                   GradientBuffer& grads);

// Same objective without keeping gradients.
LossBreakdown batch_loss(const ModelParams& params, std::span<const TrainingPair> pairs,
                         std::span<const Rule> rules, const ModelConfig& config);

// Text persistence: `k <dim>`, then `R <name> <k reals>` and `E <name> <k reals>`
// lines. Names escape whitespace and '%' as %XX.
struct Checkpoint {
    ModelParams params;
    Vocabulary relations;
    Vocabulary tuples;
};

std::string escape_name(std::string_view name);
std::string unescape_name(std::string_view name);
std::string format_real(double value);
// Exact inverse of format_real; throws ParseError on malformed input.
double parse_real(std::string_view text);

void write_checkpoint(std::ostream& out, const ModelParams& params, const Vocabulary& relations,
                      const Vocabulary& tuples);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const Vocabulary& relations, const Vocabulary& tuples);
Checkpoint read_checkpoint(std::istream& in, const std::string& source = "<stream>");
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace liftkb

#endif  // LIFTKB_MODEL_HPP
