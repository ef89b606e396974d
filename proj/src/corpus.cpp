#include "xtroll/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "xtroll/error.hpp"

namespace xtroll {

using ordered_json = nlohmann::ordered_json;

int appraisal_label_id(const std::string& label) {
    for (std::size_t i = 0; i < kAppraisalLabels.size(); ++i) {
        if (label == kAppraisalLabels[i]) return static_cast<int>(i);
    }
    throw DomainError("unknown appraisal label: " + label);
}

int strategy_label_id(const std::string& label) {
    for (std::size_t i = 0; i < kStrategyLabels.size(); ++i) {
        if (label == kStrategyLabels[i]) return static_cast<int>(i);
    }
    throw DomainError("unknown strategy label: " + label);
}

Vocab::Vocab() {
    add("[PAD]");
    add("[UNK]");
    add("[CLS]");
    add("[RAT]");
}

int Vocab::add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
}

int Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw DomainError("vocab: id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

Vocab Vocab::build(const std::vector<UserTimeline>& corpus) {
    std::set<std::string> distinct;
    for (const auto& user : corpus) {
        for (const auto& post : user.posts) {
            distinct.insert(post.tokens.begin(), post.tokens.end());
        }
    }
    Vocab v;
    for (const auto& t : distinct) v.add(t);
    return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    if (tokens.size() < 4 || tokens[0] != "[PAD]" || tokens[1] != "[UNK]" ||
        tokens[2] != "[CLS]" || tokens[3] != "[RAT]") {
        throw VersionError("vocab list does not start with the reserved tokens");
    }
    for (std::size_t i = 4; i < tokens.size(); ++i) v.add(tokens[i]);
    return v;
}

std::size_t UserTimeline::total_tokens() const {
    std::size_t n = 0;
    for (const auto& p : posts) n += p.tokens.size();
    return n;
}

void write_corpus_jsonl(const std::vector<UserTimeline>& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot open for writing: " + path);
    for (const auto& user : corpus) {
        ordered_json j;
        j["user_id"] = user.user_id;
        j["troll"] = user.troll;
        if (user.campaign) j["campaign"] = *user.campaign;
        else j["campaign"] = nullptr;
        ordered_json posts = ordered_json::array();
        for (const auto& post : user.posts) {
            ordered_json pj;
            pj["tokens"] = post.tokens;
            pj["propaganda"] = post.propaganda;
            if (post.strategy) pj["strategy"] = *post.strategy;
            else pj["strategy"] = nullptr;
            pj["appraisal_tags"] = post.appraisal_tags;
            ordered_json spans = ordered_json::array();
            for (const auto& s : post.gold_spans) spans.push_back({s.begin, s.end});
            pj["gold_spans"] = spans;
            posts.push_back(std::move(pj));
        }
        j["posts"] = std::move(posts);
        out << j.dump() << "\n";
    }
}

std::vector<UserTimeline> read_corpus_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open corpus: " + path);
    std::vector<UserTimeline> corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw FileError("corpus " + path + " line " + std::to_string(lineno) +
                            ": invalid JSON: " + e.what());
        }
        UserTimeline user;
        user.user_id = j.at("user_id").get<std::string>();
        user.troll = j.at("troll").get<int>();
        if (!j.at("campaign").is_null()) user.campaign = j.at("campaign").get<std::string>();
        if (user.troll == 1 && !user.campaign) {
            throw FileError("corpus line " + std::to_string(lineno) +
                            ": troll user without campaign label");
        }
        if (user.troll == 0 && user.campaign) {
            throw FileError("corpus line " + std::to_string(lineno) +
                            ": non-troll user with campaign label");
        }
        for (const auto& pj : j.at("posts")) {
            Post post;
            post.tokens = pj.at("tokens").get<std::vector<std::string>>();
            post.propaganda = pj.at("propaganda").get<int>();
            if (!pj.at("strategy").is_null()) post.strategy = pj.at("strategy").get<std::string>();
            post.appraisal_tags = pj.at("appraisal_tags").get<std::vector<std::string>>();
            if (post.appraisal_tags.size() != post.tokens.size()) {
                throw FileError("corpus line " + std::to_string(lineno) +
                                ": appraisal_tags length mismatch");
            }
            for (const auto& sj : pj.at("gold_spans")) {
                Span s{sj.at(0).get<int>(), sj.at(1).get<int>()};
                if (s.begin < 0 || s.end > static_cast<int>(post.tokens.size()) ||
                    s.begin >= s.end) {
                    throw FileError("corpus line " + std::to_string(lineno) +
                                    ": gold span out of post range");
                }
                post.gold_spans.push_back(s);
            }
            user.posts.push_back(std::move(post));
        }
        if (user.posts.empty()) {
            throw FileError("corpus line " + std::to_string(lineno) + ": user has no posts");
        }
        corpus.push_back(std::move(user));
    }
    return corpus;
}

std::vector<std::string> campaign_names(const std::vector<UserTimeline>& corpus) {
    std::set<std::string> names;
    for (const auto& u : corpus) {
        if (u.campaign) names.insert(*u.campaign);
    }
    return {names.begin(), names.end()};
}

}  // namespace xtroll
