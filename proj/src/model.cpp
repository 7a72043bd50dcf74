#include "liftkb/model.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "liftkb/errors.hpp"

namespace liftkb {

std::string_view to_string(Variant variant) {
    switch (variant) {
        case Variant::F:
            return "f";
        case Variant::FS:
            return "fs";
        case Variant::FSL:
            return "fsl";
    }
    return "?";
}

std::optional<Variant> parse_variant(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "f") return Variant::F;
    if (lower == "fs") return Variant::FS;
    if (lower == "fsl") return Variant::FSL;
    return std::nullopt;
}

void ModelConfig::validate() const {
    if (k < 1) throw UsageError("k must be >= 1");
    if (!(alpha >= 0.0)) throw UsageError("alpha must be >= 0");
    if (!(beta_tilde >= 0.0)) throw UsageError("beta_tilde must be >= 0");
    if (!(delta >= 0.0)) throw UsageError("delta must be >= 0");
    if (!(init_low < init_high)) throw UsageError("init_low must be < init_high");
}

double dot(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

void tuple_embedding_into(const ModelParams& params, TupleId tuple, Variant variant, std::span<double> out) {
    const auto e = params.tuple_pre.row(tuple.value);
    if (uses_sigmoid(variant)) {
        for (std::size_t i = 0; i < e.size(); ++i) out[i] = sigmoid(e[i]);
    } else {
        std::copy(e.begin(), e.end(), out.begin());
    }
}

std::vector<double> tuple_embedding(const ModelParams& params, TupleId tuple, Variant variant) {
    std::vector<double> out(params.k());
    tuple_embedding_into(params, tuple, variant, out);
    return out;
}

Matrix effective_tuples(const ModelParams& params, Variant variant) {
    Matrix out(params.tuple_pre.rows(), params.k());
    for (std::uint32_t t = 0; t < out.rows(); ++t) tuple_embedding_into(params, TupleId{t}, variant, out.row(t));
    return out;
}

double score(const ModelParams& params, RelationId r, TupleId t, Variant variant) {
    const auto rel = params.relations.row(r.value);
    const auto e = params.tuple_pre.row(t.value);
    double sum = 0.0;
    if (uses_sigmoid(variant)) {
        for (std::size_t i = 0; i < rel.size(); ++i) sum += rel[i] * sigmoid(e[i]);
    } else {
        for (std::size_t i = 0; i < rel.size(); ++i) sum += rel[i] * e[i];
    }
    return sum;
}

double lifted_rule_loss(const ModelParams& params, const Rule& rule, double delta) {
    const auto p = params.relations.row(rule.antecedent.value);
    const auto q = params.relations.row(rule.consequent.value);
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) loss += implication_pair_loss(p[i] - q[i], delta);
    return loss;
}

double grounded_rule_loss(const ModelParams& params, const Rule& rule, std::span<const TupleId> tuples,
                          double delta, Variant variant) {
    const auto p = params.relations.row(rule.antecedent.value);
    const auto q = params.relations.row(rule.consequent.value);
    std::vector<double> t(params.k());
    double loss = 0.0;
    for (const auto tuple : tuples) {
        tuple_embedding_into(params, tuple, variant, t);
        double l1 = 0.0;
        for (const double x : t) {
            if (x < 0.0) throw DataError("grounded rule loss needs non-negative tuple embeddings");
            l1 += x;
        }
        if (!(l1 > 0.0)) throw DataError("grounded rule loss needs tuple embeddings with positive L1 norm");
        double s = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) s += (p[i] - q[i]) * (t[i] / l1);
        loss += implication_pair_loss(s, delta);
    }
    return loss;
}

GradientBuffer::GradientBuffer(std::size_t num_relations, std::size_t num_tuples, std::size_t k)
    : relations_(num_relations, k),
      tuples_(num_tuples, k),
      relation_marked_(num_relations, 0),
      tuple_marked_(num_tuples, 0) {}

std::span<double> GradientBuffer::relation(RelationId r) {
    if (!relation_marked_[r.value]) {
        relation_marked_[r.value] = 1;
        touched_relations_.push_back(r.value);
    }
    return relations_.row(r.value);
}

std::span<double> GradientBuffer::tuple(TupleId t) {
    if (!tuple_marked_[t.value]) {
        tuple_marked_[t.value] = 1;
        touched_tuples_.push_back(t.value);
    }
    return tuples_.row(t.value);
}

void GradientBuffer::clear() {
    for (const auto r : touched_relations_) {
        std::ranges::fill(relations_.row(r), 0.0);
        relation_marked_[r] = 0;
    }
    for (const auto t : touched_tuples_) {
        std::ranges::fill(tuples_.row(t), 0.0);
        tuple_marked_[t] = 0;
    }
    touched_relations_.clear();
    touched_tuples_.clear();
}

void GradientBuffer::merge(const GradientBuffer& other) {
    for (const auto r : other.touched_relations_) {
        auto dst = relation(RelationId{r});
        const auto src = other.relations_.row(r);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    for (const auto t : other.touched_tuples_) {
        auto dst = tuple(TupleId{t});
        const auto src = other.tuples_.row(t);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
}

double accumulate_reconstruction(const ModelParams& params, std::span<const TrainingPair> pairs,
                                 Variant variant, GradientBuffer& grads) {
    const std::size_t k = params.k();
    const bool squash = uses_sigmoid(variant);
    std::vector<double> pos(k);
    std::vector<double> neg(k);
    double loss = 0.0;
    for (const auto& pair : pairs) {
        tuple_embedding_into(params, pair.positive, variant, pos);
        tuple_embedding_into(params, pair.negative, variant, neg);
        const auto r = params.relations.row(pair.relation.value);
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += r[i] * (neg[i] - pos[i]);
        loss += recon_pair_loss(s);

        // d softplus(s) / ds
        const double g = sigmoid(s);
        auto gr = grads.relation(pair.relation);
        for (std::size_t i = 0; i < k; ++i) gr[i] += g * (neg[i] - pos[i]);
        auto gn = grads.tuple(pair.negative);
        for (std::size_t i = 0; i < k; ++i) gn[i] += g * r[i] * (squash ? neg[i] * (1.0 - neg[i]) : 1.0);
        auto gp = grads.tuple(pair.positive);
        for (std::size_t i = 0; i < k; ++i) gp[i] -= g * r[i] * (squash ? pos[i] * (1.0 - pos[i]) : 1.0);
    }
    return loss;
}

double accumulate_l2(const ModelParams& params, double alpha, GradientBuffer& grads) {
    double l2 = 0.0;
    const auto relations = grads.touched_relations();
    for (std::size_t n = 0; n < relations.size(); ++n) {
        const RelationId r{relations[n]};
        const auto x = params.relations.row(r.value);
        auto g = grads.relation(r);
        for (std::size_t i = 0; i < x.size(); ++i) {
            l2 += x[i] * x[i];
            g[i] += 2.0 * alpha * x[i];
        }
    }
    const auto tuples = grads.touched_tuples();
    for (std::size_t n = 0; n < tuples.size(); ++n) {
        const TupleId t{tuples[n]};
        const auto x = params.tuple_pre.row(t.value);
        auto g = grads.tuple(t);
        for (std::size_t i = 0; i < x.size(); ++i) {
            l2 += x[i] * x[i];
            g[i] += 2.0 * alpha * x[i];
        }
    }
    return l2;
}

double accumulate_implication(const ModelParams& params, std::span<const Rule> rules, double delta,
                              double beta_tilde, GradientBuffer& grads) {
    double loss = 0.0;
    for (const auto& rule : rules) {
        const auto p = params.relations.row(rule.antecedent.value);
        const auto q = params.relations.row(rule.consequent.value);
        auto gp = grads.relation(rule.antecedent);
        auto gq = grads.relation(rule.consequent);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double slack = p[i] - q[i] + delta;
            if (slack > 0.0) {
                loss += slack;
                gp[i] += beta_tilde;
                gq[i] -= beta_tilde;
            }
        }
    }
    return loss;
}

LossBreakdown accumulate_gradients(const ModelParams& params, std::span<const TrainingPair> pairs,
                                   std::span<const Rule> rules, const ModelConfig& config,
                                   GradientBuffer& grads) {
    const double recon = accumulate_reconstruction(params, pairs, config.variant, grads);
    const bool with_rules = config.variant == Variant::FSL && !rules.empty();
    if (with_rules) {
        // Rule relations are part of every batch, so they are regularised too.
        for (const auto& rule : rules) {
            grads.relation(rule.antecedent);
            grads.relation(rule.consequent);
        }
    }
    const double l2 = accumulate_l2(params, config.alpha, grads);
    const double implication =
        with_rules ? accumulate_implication(params, rules, config.delta, config.beta_tilde, grads) : 0.0;
    return LossBreakdown::combine(recon, l2, implication, config.alpha, config.beta_tilde);
}

LossBreakdown batch_loss(const ModelParams& params, std::span<const TrainingPair> pairs,
                         std::span<const Rule> rules, const ModelConfig& config) {
    GradientBuffer scratch(params.relations.rows(), params.tuple_pre.rows(), params.k());
    return accumulate_gradients(params, pairs, rules, config, scratch);
}

std::string escape_name(std::string_view name) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    out.reserve(name.size());
    for (const char c : name) {
        const auto u = static_cast<unsigned char>(c);
        if (c == '%' || u <= 0x20 || u == 0x7F) {
            out += '%';
            out += hex[u >> 4];
            out += hex[u & 0xF];
        } else {
            out += c;
        }
    }
    return out;
}

std::string unescape_name(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    for (std::size_t i = 0; i < name.size(); ++i) {
        if (name[i] == '%') {
            if (i + 2 >= name.size()) throw ParseError("truncated escape in '" + std::string(name) + "'");
            unsigned value = 0;
            const auto* first = name.data() + i + 1;
            const auto [ptr, ec] = std::from_chars(first, first + 2, value, 16);
            if (ec != std::errc() || ptr != first + 2) throw ParseError("bad escape in '" + std::string(name) + "'");
            out += static_cast<char>(value);
            i += 2;
        } else {
            out += name[i];
        }
    }
    return out;
}

std::string format_real(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

double parse_real(std::string_view text) {
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw ParseError("malformed real '" + std::string(text) + "'");
    }
    return x;
}

void write_checkpoint(std::ostream& out, const ModelParams& params, const Vocabulary& relations,
                      const Vocabulary& tuples) {
    if (relations.size() != params.relations.rows() || tuples.size() != params.tuple_pre.rows()) {
        throw DataError("vocabulary sizes do not match parameter shapes");
    }
    out << "k " << params.k() << '\n';
    const auto write_block = [&](char tag, const Vocabulary& vocab, const Matrix& m) {
        for (std::uint32_t i = 0; i < m.rows(); ++i) {
            out << tag << ' ' << escape_name(vocab.name(i));
            for (const double x : m.row(i)) out << ' ' << format_real(x);
            out << '\n';
        }
    };
    write_block('R', relations, params.relations);
    write_block('E', tuples, params.tuple_pre);
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const Vocabulary& relations,
                     const Vocabulary& tuples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_checkpoint(out, params, relations, tuples);
}

Checkpoint read_checkpoint(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ParseError(source, 1, "empty checkpoint");
    std::size_t k = 0;
    {
        std::istringstream header(line);
        std::string tag;
        if (!(header >> tag >> k) || tag != "k" || k == 0) throw ParseError(source, 1, "expected 'k <dim>' header");
    }

    Checkpoint cp;
    std::vector<double> relation_values;
    std::vector<double> tuple_values;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::string_view rest(line);
        const auto next_field = [&]() -> std::string_view {
            const auto end = rest.find(' ');
            auto field = rest.substr(0, end);
            rest = end == std::string_view::npos ? std::string_view{} : rest.substr(end + 1);
            return field;
        };
        const auto tag = next_field();
        const auto name = unescape_name(next_field());
        if (name.empty()) throw ParseError(source, line_no, "missing name");
        std::vector<double>* values = nullptr;
        if (tag == "R") {
            if (cp.relations.find(name)) throw ParseError(source, line_no, "duplicate relation '" + name + "'");
            cp.relations.intern(name);
            values = &relation_values;
        } else if (tag == "E") {
            if (cp.tuples.find(name)) throw ParseError(source, line_no, "duplicate tuple '" + name + "'");
            cp.tuples.intern(name);
            values = &tuple_values;
        } else {
            throw ParseError(source, line_no, "unknown line tag '" + std::string(tag) + "'");
        }
        for (std::size_t i = 0; i < k; ++i) {
            const auto field = next_field();
            try {
                values->push_back(parse_real(field));
            } catch (const ParseError&) {
                throw ParseError(source, line_no, "expected " + std::to_string(k) + " reals");
            }
        }
        if (!rest.empty()) throw ParseError(source, line_no, "trailing fields");
    }

    cp.params = ModelParams(cp.relations.size(), cp.tuples.size(), k);
    std::ranges::copy(relation_values, cp.params.relations.data().begin());
    std::ranges::copy(tuple_values, cp.params.tuple_pre.data().begin());
    return cp;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return read_checkpoint(in, path.string());
}

}  // namespace liftkb
