// Toy text front end: lowercase whitespace tokenizer over a vocabulary built
// from dataset captions. Three reserved ids: PAD (empty slots), UNK (words
// outside the vocabulary), and NULL_CAPTION (the dropped-text condition) —
// so an empty caption ("" -> all PAD) is distinct from a dropped one.
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace omni {

constexpr int kPadId = 0;
constexpr int kUnkId = 1;
constexpr int kNullCaptionId = 2;
constexpr int kNumReservedIds = 3;

struct Vocab {
    std::vector<std::string> words;  // index = id; reserved ids hold markers
    std::unordered_map<std::string, int> index;

    int size() const { return static_cast<int>(words.size()); }
    int id_of(const std::string& w) const {
        auto it = index.find(w);
        return it == index.end() ? kUnkId : it->second;
    }
};

struct TextTokens {
    std::vector<int> ids;  // length Lmax, padded/truncated
};

std::vector<std::string> tokenize_caption(const std::string& caption);

// Frequency-then-lexicographic vocabulary, capped at max_size including the
// reserved ids. Deterministic for a given caption multiset.
Vocab build_vocab(const std::vector<std::string>& captions, int max_size = 1024);

TextTokens encode_text(const std::string& caption, const Vocab& vocab, int Lmax);

// The reserved NULL-caption sequence representing the dropped-text condition.
TextTokens null_caption_tokens(int Lmax);

// Vocab (de)serialization for embedding in checkpoints: newline-joined words.
std::string vocab_to_string(const Vocab& v);
Vocab vocab_from_string(const std::string& s);

}  // namespace omni
