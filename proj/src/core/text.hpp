#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace taxclass {

std::string trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);

// Lookup normalization: case-fold, collapse internal whitespace, strip
// trailing punctuation. Codes are never normalized.
std::string normalize_title(std::string_view title);

std::string lowercase_first(std::string_view text);

std::vector<std::string> split(std::string_view text, char delim);
std::vector<std::string> split_words(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool contains(std::string_view haystack, std::string_view needle);

}  // namespace taxclass
