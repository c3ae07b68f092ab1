#include "omni/text_codec.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "omni/common.hpp"

namespace omni {

std::vector<std::string> tokenize_caption(const std::string& caption) {
    std::vector<std::string> out;
    std::string word;
    for (char ch : caption) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!word.empty()) {
                out.push_back(word);
                word.clear();
            }
        } else {
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!word.empty()) out.push_back(word);
    return out;
}

Vocab build_vocab(const std::vector<std::string>& captions, int max_size) {
    require(max_size > kNumReservedIds, ErrorCode::config, "build_vocab: max_size too small");
    // std::map keys are sorted, which pins the tie order for equal counts.
    std::map<std::string, int64_t> counts;
    for (const auto& c : captions)
        for (const auto& w : tokenize_caption(c)) ++counts[w];

    std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocab v;
    v.words = {"<pad>", "<unk>", "<null>"};
    for (const auto& [word, count] : ranked) {
        if (v.size() >= max_size) break;
        v.words.push_back(word);
    }
    for (int i = 0; i < v.size(); ++i) v.index[v.words[i]] = i;
    return v;
}

TextTokens encode_text(const std::string& caption, const Vocab& vocab, int Lmax) {
    require(Lmax >= 1, ErrorCode::config, "encode_text: Lmax must be >= 1");
    TextTokens t;
    t.ids.assign(static_cast<size_t>(Lmax), kPadId);
    auto words = tokenize_caption(caption);
    for (size_t i = 0; i < words.size() && i < static_cast<size_t>(Lmax); ++i)
        t.ids[i] = vocab.id_of(words[i]);
    return t;
}

TextTokens null_caption_tokens(int Lmax) {
    require(Lmax >= 1, ErrorCode::config, "null_caption_tokens: Lmax must be >= 1");
    TextTokens t;
    t.ids.assign(static_cast<size_t>(Lmax), kPadId);
    t.ids[0] = kNullCaptionId;
    return t;
}

std::string vocab_to_string(const Vocab& v) {
    std::string out;
    for (const auto& w : v.words) {
        out += w;
        out += '\n';
    }
    return out;
}

Vocab vocab_from_string(const std::string& s) {
    Vocab v;
    std::istringstream is(s);
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) v.words.push_back(line);
    require(v.size() >= kNumReservedIds, ErrorCode::io, "vocab_from_string: missing reserved ids");
    for (int i = 0; i < v.size(); ++i) v.index[v.words[i]] = i;
    return v;
}

}  // namespace omni
