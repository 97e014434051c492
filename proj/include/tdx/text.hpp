#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tdx {

// Lowercases ASCII letters and splits on Unicode whitespace and ASCII
// punctuation. Non-ASCII codepoints are kept verbatim inside tokens.
std::vector<std::string> tokenize(std::string_view text);

// Decodes UTF-8 into codepoints. Throws std::invalid_argument on malformed input.
std::vector<char32_t> decode_utf8(std::string_view text);

bool is_valid_utf8(std::string_view text);

// Longest prefix of `text` of at most `max_bytes` bytes that does not split a
// UTF-8 sequence.
std::string_view utf8_prefix(std::string_view text, std::size_t max_bytes);

// 64-bit FNV-1a with a seed folded into the offset basis.
std::uint64_t hash64(std::string_view data, std::uint64_t seed = 0);

std::string trim(std::string_view s);
std::string ascii_lower(std::string_view s);

}  // namespace tdx
