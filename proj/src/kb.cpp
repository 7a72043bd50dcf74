#include "liftkb/kb.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "liftkb/errors.hpp"
#include "liftkb/random.hpp"

namespace liftkb {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

// Splits a fact line at its single TAB.
std::pair<std::string_view, std::string_view> split_fact_line(std::string_view line,
                                                              const std::string& source,
                                                              std::size_t line_no) {
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
        throw ParseError(source, line_no, "expected 2 TAB-separated fields, found 1");
    }
    if (line.find('\t', tab + 1) != std::string_view::npos) {
        const auto fields = std::count(line.begin(), line.end(), '\t') + 1;
        throw ParseError(source, line_no,
                         "expected 2 TAB-separated fields, found " + std::to_string(fields));
    }
    auto relation = line.substr(0, tab);
    auto tuple = line.substr(tab + 1);
    if (relation.empty() || tuple.empty()) throw ParseError(source, line_no, "empty field");
    return {relation, tuple};
}

}  // namespace

std::uint32_t Vocabulary::intern(std::string_view name) {
    std::string key(name);
    if (auto it = index_.find(key); it != index_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(names_.size());
    names_.push_back(key);
    index_.emplace(std::move(key), id);
    return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view name) const {
    if (auto it = index_.find(std::string(name)); it != index_.end()) return it->second;
    return std::nullopt;
}

FactStore::FactStore(Vocabulary relations, Vocabulary tuples, std::vector<Fact> facts)
    : relations_(std::move(relations)),
      tuples_(std::move(tuples)),
      by_relation_(relations_.size()),
      by_tuple_(tuples_.size()) {
    facts_.reserve(facts.size());
    index_.reserve(facts.size());
    for (const auto& f : facts) {
        if (f.relation.value >= relations_.size() || f.tuple.value >= tuples_.size()) {
            throw DataError("fact id out of vocabulary range");
        }
        if (!index_.insert(key(f.relation, f.tuple)).second) continue;
        facts_.push_back(f);
        by_relation_[f.relation.value].push_back(f.tuple);
        by_tuple_[f.tuple.value].push_back(f.relation);
    }
    for (auto& list : by_relation_) std::sort(list.begin(), list.end());
    for (auto& list : by_tuple_) std::sort(list.begin(), list.end());
}

bool FactStore::contains(RelationId r, TupleId t) const { return index_.contains(key(r, t)); }

FactStore FactStore::with_facts(std::vector<Fact> facts) const {
    return FactStore(relations_, tuples_, std::move(facts));
}

FactStore read_facts(std::istream& in, const std::string& source) {
    Vocabulary relations;
    Vocabulary tuples;
    std::vector<Fact> facts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto [relation, tuple] = split_fact_line(line, source, line_no);
        facts.push_back({RelationId{relations.intern(relation)}, TupleId{tuples.intern(tuple)}});
    }
    if (facts.empty()) throw DataError(source + ": no facts");
    return FactStore(std::move(relations), std::move(tuples), std::move(facts));
}

FactStore load_facts(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_facts(in, path.string());
}

FactStore load_facts_with_vocab(const std::filesystem::path& path, const Vocabulary& relations,
                                const Vocabulary& tuples) {
    auto in = open_input(path);
    const std::string source = path.string();
    std::vector<Fact> facts;
    std::vector<std::string> unknown;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto [relation, tuple] = split_fact_line(line, source, line_no);
        const auto r = relations.find(relation);
        const auto t = tuples.find(tuple);
        if (!r) unknown.push_back("relation '" + std::string(relation) + "'");
        if (!t) unknown.push_back("tuple '" + std::string(tuple) + "'");
        if (r && t) facts.push_back({RelationId{*r}, TupleId{*t}});
    }
    if (!unknown.empty()) {
        std::sort(unknown.begin(), unknown.end());
        unknown.erase(std::unique(unknown.begin(), unknown.end()), unknown.end());
        std::string msg = source + ": names not in checkpoint vocabulary:";
        for (const auto& u : unknown) msg += " " + u;
        throw DataError(msg);
    }
    if (facts.empty()) throw DataError(source + ": no facts");
    return FactStore(relations, tuples, std::move(facts));
}

void write_facts(std::ostream& out, const FactStore& store) {
    for (const auto& f : store.facts()) {
        out << store.relations().name(f.relation.value) << '\t' << store.tuples().name(f.tuple.value)
            << '\n';
    }
}

void save_facts(const std::filesystem::path& path, const FactStore& store) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_facts(out, store);
}

std::optional<std::pair<std::string, std::string>> parse_rule_line(std::string_view line) {
    if (trim(line).empty()) return std::nullopt;
    const auto arrow = line.find("=>");
    if (arrow == std::string_view::npos) throw ParseError("missing '=>' token");
    const auto lhs = trim(line.substr(0, arrow));
    const auto rhs = trim(line.substr(arrow + 2));
    if (lhs.empty() || rhs.empty()) throw ParseError("rule side is empty");
    return std::pair{std::string(lhs), std::string(rhs)};
}

RuleLoadResult read_rules(std::istream& in, const Vocabulary& relations, const std::string& source) {
    RuleLoadResult result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::optional<std::pair<std::string, std::string>> parsed;
        try {
            parsed = parse_rule_line(line);
        } catch (const ParseError& e) {
            throw ParseError(source, line_no, e.what());
        }
        if (!parsed) continue;
        const auto& [lhs, rhs] = *parsed;
        const auto where = source + ":" + std::to_string(line_no) + ": ";
        if (lhs == rhs) {
            ++result.rejected_self;
            result.warnings.push_back(where + "self-implication '" + lhs + "' rejected");
            continue;
        }
        const auto p = relations.find(lhs);
        const auto q = relations.find(rhs);
        if (!p || !q) {
            ++result.skipped_unknown;
            result.warnings.push_back(where + "unknown relation '" + (p ? rhs : lhs) +
                                      "', rule skipped");
            continue;
        }
        result.rules.push_back({RelationId{*p}, RelationId{*q}});
    }
    return result;
}

RuleLoadResult load_rules(const std::filesystem::path& path, const Vocabulary& relations) {
    auto in = open_input(path);
    return read_rules(in, relations, path.string());
}

std::string format_rule(const Rule& rule, const Vocabulary& relations) {
    return relations.name(rule.antecedent.value) + " => " + relations.name(rule.consequent.value);
}

void write_rules(std::ostream& out, std::span<const Rule> rules, const Vocabulary& relations) {
    for (const auto& r : rules) {
        out << relations.name(r.antecedent.value) << "\t=>\t" << relations.name(r.consequent.value)
            << '\n';
    }
}

DatasetSplit holdout_split(const FactStore& store, double test_fraction, std::uint64_t seed,
                           const std::set<RelationId>* only) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw UsageError("test fraction must lie in (0,1), got " + std::to_string(test_fraction));
    }
    if (store.empty()) throw DataError("cannot split an empty fact store");

    // Facts grouped per relation in file order, so the split does not depend on
    // the sorted adjacency lists.
    std::vector<std::vector<Fact>> per_relation(store.num_relations());
    for (const auto& f : store.facts()) per_relation[f.relation.value].push_back(f);

    Rng rng(seed);
    std::unordered_set<std::uint64_t> held_out;
    DatasetSplit split;
    for (std::uint32_t r = 0; r < per_relation.size(); ++r) {
        auto& facts = per_relation[r];
        const auto n = facts.size();
        if (n < 2 || (only && !only->contains(RelationId{r}))) continue;
        const auto wanted = static_cast<std::size_t>(std::floor(static_cast<double>(n) * test_fraction + 0.5));
        const auto n_test = std::min(n - 1, wanted);
        if (n_test == 0) continue;
        rng.shuffle(std::span<Fact>(facts));
        for (std::size_t i = 0; i < n_test; ++i) {
            held_out.insert((static_cast<std::uint64_t>(facts[i].relation.value) << 32) |
                            facts[i].tuple.value);
        }
        split.test_relations.emplace_back(RelationId{r}, n_test);
    }

    std::vector<Fact> train;
    std::vector<Fact> test;
    for (const auto& f : store.facts()) {
        const auto k = (static_cast<std::uint64_t>(f.relation.value) << 32) | f.tuple.value;
        (held_out.contains(k) ? test : train).push_back(f);
    }
    split.train = store.with_facts(std::move(train));
    split.test = store.with_facts(std::move(test));
    return split;
}

}  // namespace liftkb
