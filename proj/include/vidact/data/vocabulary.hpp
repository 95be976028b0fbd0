#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vidact/core/error.hpp"

namespace vidact {

// Special token ids shared by the caption and action vocabularies.
inline constexpr int kPad = 0;
inline constexpr int kSos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kNumSpecials = 4;

inline const std::vector<std::string>& special_tokens() {
    static const std::vector<std::string> tokens{"<pad>", "<sos>", "<eos>", "<unk>"};
    return tokens;
}

/// Closed token inventory with the four specials at fixed ids.
class Vocabulary {
public:
    Vocabulary() : tokens_(special_tokens()) { reindex(); }

    explicit Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
        for (const auto& w : words) add(w);
    }

    int add(const std::string& token) {
        if (auto it = index_.find(token); it != index_.end()) return it->second;
        tokens_.push_back(token);
        const int id = static_cast<int>(tokens_.size()) - 1;
        index_[token] = id;
        return id;
    }

    std::size_t size() const { return tokens_.size(); }
    bool contains(const std::string& token) const { return index_.count(token) > 0; }

    /// Unknown tokens map to <unk>.
    int id(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnk : it->second;
    }

    const std::string& token(int id) const {
        require(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(), ErrorKind::Index,
                "token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tokens_.size()));
        return tokens_[static_cast<std::size_t>(id)];
    }

    std::vector<int> encode(const std::vector<std::string>& words) const {
        std::vector<int> ids;
        ids.reserve(words.size());
        for (const auto& w : words) ids.push_back(id(w));
        return ids;
    }

    std::vector<std::string> decode(const std::vector<int>& ids) const {
        std::vector<std::string> out;
        for (int i : ids) out.push_back(token(i));
        return out;
    }

    /// Non-special tokens in id order.
    std::vector<std::string> words() const {
        return {tokens_.begin() + kNumSpecials, tokens_.end()};
    }

private:
    void reindex() {
        index_.clear();
        for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<int>(i);
    }

    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
};

/// One short-horizon step: a verb class plus zero or more noun classes.
struct ActionStep {
    std::string verb;
    std::vector<std::string> nouns;

    /// Steps match when verbs agree and noun sets agree (order-insensitive).
    bool matches(const ActionStep& other) const {
        if (verb != other.verb) return false;
        std::multiset<std::string> a(nouns.begin(), nouns.end()), b(other.nouns.begin(), other.nouns.end());
        return a == b;
    }

    bool operator==(const ActionStep&) const = default;
};

using ActionSequence = std::vector<ActionStep>;

/// Verb-first serialization, steps concatenated in order.
inline std::vector<std::string> serialize_actions(const ActionSequence& seq) {
    std::vector<std::string> tokens;
    for (const auto& step : seq) {
        tokens.push_back(step.verb);
        tokens.insert(tokens.end(), step.nouns.begin(), step.nouns.end());
    }
    return tokens;
}

/// Action vocabulary: specials, then verb classes, then noun classes.
class ActionVocabulary {
public:
    ActionVocabulary() = default;
    ActionVocabulary(std::vector<std::string> verbs, std::vector<std::string> nouns)
        : verbs_(std::move(verbs)), nouns_(std::move(nouns)) {
        for (const auto& v : verbs_) {
            require(!vocab_.contains(v), ErrorKind::Config, "duplicate action token '" + v + "'");
            vocab_.add(v);
        }
        for (const auto& n : nouns_) {
            require(!vocab_.contains(n), ErrorKind::Config, "duplicate action token '" + n + "'");
            vocab_.add(n);
        }
    }

    const Vocabulary& tokens() const { return vocab_; }
    std::size_t size() const { return vocab_.size(); }
    const std::vector<std::string>& verbs() const { return verbs_; }
    const std::vector<std::string>& nouns() const { return nouns_; }

    bool is_verb(int id) const { return id >= kNumSpecials && id < first_noun(); }
    bool is_noun(int id) const { return id >= first_noun() && id < static_cast<int>(vocab_.size()); }
    int first_noun() const { return kNumSpecials + static_cast<int>(verbs_.size()); }

    int id(const std::string& token) const { return vocab_.id(token); }
    const std::string& token(int id) const { return vocab_.token(id); }

    std::vector<int> encode(const ActionSequence& seq) const {
        return vocab_.encode(serialize_actions(seq));
    }

private:
    std::vector<std::string> verbs_, nouns_;
    Vocabulary vocab_;
};

}  // namespace vidact
