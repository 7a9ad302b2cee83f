#pragma once
// Tokenization and hashed word n-gram features.
//
// Tokenizer: split on Unicode whitespace, lowercase ASCII letters, strip
// leading/trailing ASCII punctuation from each token, drop tokens that end up
// empty. Non-ASCII text passes through byte-for-byte.
//
// Feature ids: FNV-1a 64 over the n-gram's tokens joined by U+001F, reduced
// modulo the bucket count.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ctxprobe/hashing.hpp"

namespace ctxprobe {

inline constexpr char kNgramSeparator = '\x1f';

namespace detail {

// Decodes one code point starting at s[i]; advances i. Invalid sequences are
// consumed one byte at a time and reported as U+FFFD.
inline char32_t next_code_point(std::string_view s, std::size_t& i) {
    auto b0 = static_cast<unsigned char>(s[i]);
    int extra = b0 < 0x80 ? 0 : (b0 >> 5) == 0x6 ? 1 : (b0 >> 4) == 0xe ? 2 : (b0 >> 3) == 0x1e ? 3 : -1;
    if (extra == 0) {
        ++i;
        return b0;
    }
    if (extra < 0 || i + static_cast<std::size_t>(extra) >= s.size()) {
        ++i;
        return 0xfffd;
    }
    char32_t cp = b0 & (0x3f >> extra);
    for (int k = 1; k <= extra; ++k) {
        auto b = static_cast<unsigned char>(s[i + k]);
        if ((b >> 6) != 0x2) {
            ++i;
            return 0xfffd;
        }
        cp = (cp << 6) | (b & 0x3f);
    }
    i += static_cast<std::size_t>(extra) + 1;
    return cp;
}

constexpr bool is_unicode_space(char32_t c) {
    return (c >= 0x09 && c <= 0x0d) || c == 0x20 || c == 0x85 || c == 0xa0 || c == 0x1680 ||
           (c >= 0x2000 && c <= 0x200a) || c == 0x2028 || c == 0x2029 || c == 0x202f ||
           c == 0x205f || c == 0x3000;
}

constexpr bool is_ascii_punct(char c) {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
           (c >= '{' && c <= '~');
}

}  // namespace detail

inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        std::size_t b = 0, e = cur.size();
        while (b < e && detail::is_ascii_punct(cur[b])) ++b;
        while (e > b && detail::is_ascii_punct(cur[e - 1])) --e;
        if (e > b) tokens.emplace_back(cur.substr(b, e - b));
        cur.clear();
    };
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t start = i;
        char32_t cp = detail::next_code_point(text, i);
        if (detail::is_unicode_space(cp)) {
            flush();
            continue;
        }
        for (std::size_t k = start; k < i; ++k) {
            char c = text[k];
            cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
        }
    }
    flush();
    return tokens;
}

inline std::uint32_t ngram_bucket(std::string_view joined, std::uint64_t bucket_count) {
    return static_cast<std::uint32_t>(fnv1a64(joined) % bucket_count);
}

// All contiguous word n-grams of length 1..max_n, hashed into
// [0, bucket_count). Order: all unigrams, then bigrams, and so on.
inline std::vector<std::uint32_t> featurize_tokens(const std::vector<std::string>& tokens,
                                                   unsigned max_n, std::uint64_t bucket_count) {
    std::vector<std::uint32_t> ids;
    const std::size_t n_tok = tokens.size();
    std::string joined;
    for (std::size_t n = 1; n <= max_n && n <= n_tok; ++n) {
        for (std::size_t start = 0; start + n <= n_tok; ++start) {
            joined.clear();
            for (std::size_t k = 0; k < n; ++k) {
                if (k) joined.push_back(kNgramSeparator);
                joined += tokens[start + k];
            }
            ids.push_back(ngram_bucket(joined, bucket_count));
        }
    }
    return ids;
}

inline std::vector<std::uint32_t> featurize(std::string_view text, unsigned max_n,
                                            std::uint64_t bucket_count) {
    return featurize_tokens(tokenize(text), max_n, bucket_count);
}

}  // namespace ctxprobe
