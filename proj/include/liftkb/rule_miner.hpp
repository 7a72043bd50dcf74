#ifndef LIFTKB_RULE_MINER_HPP
#define LIFTKB_RULE_MINER_HPP

#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "liftkb/kb.hpp"

namespace liftkb {

// word -> direct hypernyms. Self-loops are dropped at load.
class HypernymLexicon {
   public:
    // Returns false (and ignores the pair) for a self-loop.
    bool add(std::string word, std::string hypernym);
    const std::set<std::string>* hypernyms(std::string_view word) const;
    bool empty() const { return entries_.empty(); }
    std::size_t size() const;

   private:
    std::map<std::string, std::set<std::string>, std::less<>> entries_;
};

struct LexiconLoadResult {
    HypernymLexicon lexicon;
    std::size_t rejected_self = 0;
    std::vector<std::string> warnings;
};

// `word<TAB>hypernym` per line.
LexiconLoadResult read_lexicon(std::istream& in, const std::string& source = "<stream>");
LexiconLoadResult load_lexicon(const std::filesystem::path& path);

// Splits a dependency-path pattern on `->` and `<-`, keeping the delimiters as
// tokens. Concatenating the tokens gives back the input. Throws ParseError on
// an empty pattern.
std::vector<std::string> tokenize_pattern(std::string_view pattern);
bool is_delimiter(std::string_view token);

struct Substitution {
    std::size_t position = 0;  // token index
    std::string original;
    std::string hypernym;
};

struct MinedRule {
    Rule rule;
    Substitution substitution;
};

// Every single-word hypernym substitution whose result is itself a relation in
// the vocabulary yields original => substituted. Deduplicated on the rule, first
// substitution kept, ordered by (antecedent id, consequent id).
std::vector<MinedRule> mine_rules(const Vocabulary& patterns, const HypernymLexicon& lexicon);

struct FilterResult {
    std::vector<Rule> accepted;
    std::vector<std::string> warnings;
};

// Decision lines `accept|reject<TAB>antecedent => consequent`. Mined rules
// without an accept line are dropped; decisions for rules that were not mined
// are ignored with a warning. Output keeps the mined order.
FilterResult filter_rules(std::span<const MinedRule> mined, std::istream& decisions, const Vocabulary& patterns,
                          const std::string& source = "<stream>");

}  // namespace liftkb

#endif  // LIFTKB_RULE_MINER_HPP
