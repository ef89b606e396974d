#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace xtroll {

// Appraisal tag set. O is the null tag; the others mark evaluative-language
// marker categories.
inline constexpr std::array<const char*, 5> kAppraisalLabels = {
    "O", "IDEATIONAL", "SENT_POS", "SENT_NEG", "PERSONA"};

// Propaganda strategy classes.
inline constexpr std::array<const char*, 3> kStrategyLabels = {
    "LOADED_LANGUAGE", "APPEAL_TO_COMMONALITY", "DOUBT"};

int appraisal_label_id(const std::string& label);
int strategy_label_id(const std::string& label);

/// Token string <-> id bijection with fixed reserved ids.
class Vocab {
  public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kRat = 3;

    Vocab();

    // Adds a token if absent; returns its id.
    int add(const std::string& token);
    // Lookup; unknown tokens map to UNK.
    int id(const std::string& token) const;
    const std::string& token(int id) const;
    std::size_t size() const { return tokens_.size(); }

    const std::vector<std::string>& tokens() const { return tokens_; }

    // Deterministic vocabulary: reserved ids then all distinct corpus tokens
    // in lexicographic order.
    static Vocab build(const std::vector<struct UserTimeline>& corpus);
    static Vocab from_tokens(const std::vector<std::string>& tokens);

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

/// Half-open token span [begin, end) inside one post.
struct Span {
    int begin = 0;
    int end = 0;
};

struct Post {
    std::vector<std::string> tokens;
    int propaganda = 0;                      // post-level binary flag
    std::optional<std::string> strategy;     // set iff propaganda-strategy span planted
    std::vector<std::string> appraisal_tags; // one per token, "O" when unmarked
    std::vector<Span> gold_spans;            // planted rationale spans
};

struct UserTimeline {
    std::string user_id;
    int troll = 0;
    std::optional<std::string> campaign;  // present iff troll
    std::vector<Post> posts;

    std::size_t total_tokens() const;
};

// One user per line; keys in schema order; LF line endings.
void write_corpus_jsonl(const std::vector<UserTimeline>& corpus, const std::string& path);
std::vector<UserTimeline> read_corpus_jsonl(const std::string& path);

// Distinct campaign names, sorted.
std::vector<std::string> campaign_names(const std::vector<UserTimeline>& corpus);

}  // namespace xtroll
