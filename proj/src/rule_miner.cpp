#include "liftkb/rule_miner.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>

#include "liftkb/errors.hpp"

namespace liftkb {

bool HypernymLexicon::add(std::string word, std::string hypernym) {
    if (word == hypernym) return false;
    entries_[std::move(word)].insert(std::move(hypernym));
    return true;
}

const std::set<std::string>* HypernymLexicon::hypernyms(std::string_view word) const {
    const auto it = entries_.find(word);
    return it == entries_.end() ? nullptr : &it->second;
}

std::size_t HypernymLexicon::size() const {
    std::size_t n = 0;
    for (const auto& [word, hypernyms] : entries_) n += hypernyms.size();
    return n;
}

LexiconLoadResult read_lexicon(std::istream& in, const std::string& source) {
    LexiconLoadResult result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw ParseError(source, line_no, "expected 'word<TAB>hypernym'");
        }
        auto word = line.substr(0, tab);
        auto hypernym = line.substr(tab + 1);
        if (word.empty() || hypernym.empty()) throw ParseError(source, line_no, "empty field");
        if (!result.lexicon.add(word, hypernym)) {
            ++result.rejected_self;
            result.warnings.push_back(source + ":" + std::to_string(line_no) + ": '" + word +
                                      "' listed as its own hypernym, ignored");
        }
    }
    return result;
}

LexiconLoadResult load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return read_lexicon(in, path.string());
}

bool is_delimiter(std::string_view token) { return token == "->" || token == "<-"; }

std::vector<std::string> tokenize_pattern(std::string_view pattern) {
    if (pattern.empty()) throw ParseError("empty pattern");
    std::vector<std::string> tokens;
    std::string word;
    for (std::size_t i = 0; i < pattern.size();) {
        const auto two = pattern.substr(i, 2);
        if (is_delimiter(two)) {
            if (!word.empty()) tokens.push_back(std::move(word));
            word.clear();
            tokens.emplace_back(two);
            i += 2;
        } else {
            word += pattern[i++];
        }
    }
    if (!word.empty()) tokens.push_back(std::move(word));
    return tokens;
}

std::vector<MinedRule> mine_rules(const Vocabulary& patterns, const HypernymLexicon& lexicon) {
    std::vector<MinedRule> mined;
    std::set<Rule> seen;
    for (std::uint32_t id = 0; id < patterns.size(); ++id) {
        const auto& pattern = patterns.name(id);
        if (pattern.empty()) continue;
        auto tokens = tokenize_pattern(pattern);
        for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
            if (is_delimiter(tokens[pos])) continue;
            const auto* hypernyms = lexicon.hypernyms(tokens[pos]);
            if (!hypernyms) continue;
            const std::string original = tokens[pos];
            for (const auto& hypernym : *hypernyms) {
                tokens[pos] = hypernym;
                const auto substituted = std::accumulate(tokens.begin(), tokens.end(), std::string{});
                tokens[pos] = original;
                const auto target = patterns.find(substituted);
                if (!target || *target == id) continue;
                const Rule rule{RelationId{id}, RelationId{*target}};
                if (!seen.insert(rule).second) continue;
                mined.push_back({rule, {pos, original, hypernym}});
            }
        }
    }
    std::stable_sort(mined.begin(), mined.end(), [](const MinedRule& a, const MinedRule& b) { return a.rule < b.rule; });
    return mined;
}

FilterResult filter_rules(std::span<const MinedRule> mined, std::istream& decisions, const Vocabulary& patterns,
                          const std::string& source) {
    std::map<std::string, std::size_t> by_text;
    for (std::size_t i = 0; i < mined.size(); ++i) by_text.emplace(format_rule(mined[i].rule, patterns), i);

    FilterResult result;
    std::vector<char> accepted(mined.size(), 0);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(decisions, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(source, line_no, "expected 'accept|reject<TAB>rule'");
        const auto verdict = line.substr(0, tab);
        if (verdict != "accept" && verdict != "reject") {
            throw ParseError(source, line_no, "decision must be 'accept' or 'reject', got '" + verdict + "'");
        }
        std::optional<std::pair<std::string, std::string>> parsed;
        try {
            parsed = parse_rule_line(std::string_view(line).substr(tab + 1));
        } catch (const ParseError& e) {
            throw ParseError(source, line_no, e.what());
        }
        if (!parsed) throw ParseError(source, line_no, "missing rule");
        const auto text = parsed->first + " => " + parsed->second;
        const auto it = by_text.find(text);
        if (it == by_text.end()) {
            result.warnings.push_back(source + ":" + std::to_string(line_no) + ": '" + text +
                                      "' was not mined, decision ignored");
            continue;
        }
        accepted[it->second] = verdict == "accept" ? 1 : 0;
    }
    for (std::size_t i = 0; i < mined.size(); ++i) {
        if (accepted[i]) result.accepted.push_back(mined[i].rule);
    }
    return result;
}

}  // namespace liftkb
