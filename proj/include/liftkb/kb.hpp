#ifndef LIFTKB_KB_HPP
#define LIFTKB_KB_HPP

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace liftkb {

struct RelationId {
    std::uint32_t value = 0;
    auto operator<=>(const RelationId&) const = default;
};

struct TupleId {
    std::uint32_t value = 0;
    auto operator<=>(const TupleId&) const = default;
};

struct Fact {
    RelationId relation;
    TupleId tuple;
    auto operator<=>(const Fact&) const = default;
};

// Bijection between names and dense ids, ids handed out in insertion order.
class Vocabulary {
   public:
    std::uint32_t intern(std::string_view name);
    std::optional<std::uint32_t> find(std::string_view name) const;
    const std::string& name(std::uint32_t id) const { return names_.at(id); }
    std::size_t size() const { return names_.size(); }
    std::span<const std::string> names() const { return names_; }

    bool operator==(const Vocabulary& other) const { return names_ == other.names_; }

   private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

// Immutable set of observed facts over fixed relation and tuple vocabularies.
// Stores derived from one another (splits, subsamples) share the vocabularies,
// so ids stay comparable across them.
class FactStore {
   public:
    FactStore() = default;
    FactStore(Vocabulary relations, Vocabulary tuples, std::vector<Fact> facts);

    const Vocabulary& relations() const { return relations_; }
    const Vocabulary& tuples() const { return tuples_; }
    std::size_t num_relations() const { return relations_.size(); }
    std::size_t num_tuples() const { return tuples_.size(); }

    // Facts in first-insertion order, without duplicates.
    std::span<const Fact> facts() const { return facts_; }
    std::size_t size() const { return facts_.size(); }
    bool empty() const { return facts_.empty(); }

    bool contains(RelationId r, TupleId t) const;
    // Tuples observed with r, ascending.
    std::span<const TupleId> tuples_of(RelationId r) const { return by_relation_.at(r.value); }
    // Relations observed with t, ascending.
    std::span<const RelationId> relations_of(TupleId t) const { return by_tuple_.at(t.value); }

    // New store with the same vocabularies and the given facts.
    FactStore with_facts(std::vector<Fact> facts) const;

   private:
    static std::uint64_t key(RelationId r, TupleId t) {
        return (static_cast<std::uint64_t>(r.value) << 32) | t.value;
    }

    Vocabulary relations_;
    Vocabulary tuples_;
    std::vector<Fact> facts_;
    std::unordered_set<std::uint64_t> index_;
    std::vector<std::vector<TupleId>> by_relation_;
    std::vector<std::vector<RelationId>> by_tuple_;
};

// r_p => r_q: every tuple true for the antecedent is true for the consequent.
struct Rule {
    RelationId antecedent;
    RelationId consequent;
    auto operator<=>(const Rule&) const = default;
};

struct RuleLoadResult {
    std::vector<Rule> rules;
    std::size_t skipped_unknown = 0;
    std::size_t rejected_self = 0;
    std::vector<std::string> warnings;
};

struct DatasetSplit {
    FactStore train;
    FactStore test;
    // Relations with at least one test fact, ascending, with their test-fact counts.
    std::vector<std::pair<RelationId, std::size_t>> test_relations;
};

// `relation<TAB>tuple` per line. Duplicates collapse; ids follow first appearance.
FactStore load_facts(const std::filesystem::path& path);
FactStore read_facts(std::istream& in, const std::string& source = "<stream>");

// Reads facts whose names must all resolve in the given vocabularies. Unknown
// names raise a DataError listing them.
FactStore load_facts_with_vocab(const std::filesystem::path& path, const Vocabulary& relations,
                                const Vocabulary& tuples);

void write_facts(std::ostream& out, const FactStore& store);
void save_facts(const std::filesystem::path& path, const FactStore& store);

// Parses one `antecedent => consequent` line into trimmed names. Returns
// nullopt for blank lines; throws ParseError when `=>` is missing.
std::optional<std::pair<std::string, std::string>> parse_rule_line(std::string_view line);

RuleLoadResult load_rules(const std::filesystem::path& path, const Vocabulary& relations);
RuleLoadResult read_rules(std::istream& in, const Vocabulary& relations,
                          const std::string& source = "<stream>");

std::string format_rule(const Rule& rule, const Vocabulary& relations);
void write_rules(std::ostream& out, std::span<const Rule> rules, const Vocabulary& relations);

// Per-relation stratified holdout. Relations with a single fact stay in train,
// and so do relations outside `only` when it is given.
DatasetSplit holdout_split(const FactStore& store, double test_fraction, std::uint64_t seed,
                           const std::set<RelationId>* only = nullptr);

}  // namespace liftkb

template <>
struct std::hash<liftkb::RelationId> {
    std::size_t operator()(const liftkb::RelationId& id) const noexcept { return id.value; }
};
template <>
struct std::hash<liftkb::TupleId> {
    std::size_t operator()(const liftkb::TupleId& id) const noexcept { return id.value; }
};

#endif  // LIFTKB_KB_HPP
