#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Small text helpers shared by the CSV readers, the DSL serializer and the
// report writers.
namespace trialx::text {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

/// Split one CSV line. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv(std::string_view line);
/// Quote a field when it contains a comma, quote or newline.
std::string csv_field(std::string_view s);

std::string_view trim(std::string_view s);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace trialx::text
